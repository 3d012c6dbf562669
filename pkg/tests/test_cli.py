import csv
import json
import logging
import time

import pytest

from conftest import DATA
from wakesize.cli import FRONTIER_COLUMNS, main
from wakesize.evaluation import SWEEP_COLUMNS, TABLE_COLUMNS
from wakesize.geometry import FacetSet, select_facets, upper_hull_facets
from wakesize.grid import load_case
from wakesize.wake import sweep


@pytest.fixture(autouse=True)
def no_env_cache(monkeypatch):
    monkeypatch.delenv("WAKESIZE_CACHE", raising=False)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_missing_case_exits_with_validation_error(tmp_path, capsys):
    missing = tmp_path / "nowhere.json"
    assert main(["wake", "--case", str(missing), "--out", str(tmp_path / "o")]) == 2
    assert str(missing) in capsys.readouterr().err


def test_missing_scenario_file_exits_with_validation_error(tmp_path, capsys):
    code = main(["size", "--case", "bus1", "--scenarios", str(tmp_path / "s.csv"), "--out", str(tmp_path)])
    assert code == 2 and "s.csv" in capsys.readouterr().err


def test_unbundled_case_needs_scenarios(tmp_path):
    assert main(["size", "--case", str(DATA / "bus1.json"), "--out", str(tmp_path)]) == 2


def test_wake_outputs_are_deterministic_and_reload(tmp_path):
    for run in ("a", "b"):
        assert main(["wake", "--case", "bus3", "--out", str(tmp_path / run)]) == 0
    a, b = tmp_path / "a" / "facets_bus3.csv", tmp_path / "b" / "facets_bus3.csv"
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a" / "wake_sweep_bus3.csv").read_bytes() == (tmp_path / "b" / "wake_sweep_bus3.csv").read_bytes()
    site = load_case(DATA / "bus3.json").wind_sites[0]
    in_memory = select_facets(upper_hull_facets(sweep(site.turbine, site.layout)))
    assert FacetSet.read_csv(a) == in_memory
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["command"] == "wake" and manifest["inputs"]


def test_zero_radius_size_run_is_quick(tmp_path):
    t0 = time.perf_counter()
    code = main(["size", "--case", "bus3", "--eps0", "0", "--budgets", "1e8,3e8", "--jobs", "1",
                 "--out", str(tmp_path)])
    assert code == 0 and time.perf_counter() - t0 < 10.0
    report = json.loads((tmp_path / "report.json").read_text())
    assert [p["status"] for p in report["frontier"]] == ["optimal", "optimal"]
    rows = read_csv(tmp_path / "frontier.csv")
    assert list(rows[0]) == FRONTIER_COLUMNS and len(rows) == 2
    assert float(rows[0]["fuel_objective_cny"]) >= float(rows[1]["fuel_objective_cny"])
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert set(manifest) == {"command", "config", "config_hash", "inputs", "versions"}


def test_infeasible_budget_reported(tmp_path):
    assert main(["size", "--case", "bus6", "--budgets", "0", "--g-cap", "0", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["frontier"][0]["status"] == "infeasible"
    assert read_csv(tmp_path / "frontier.csv")[0]["status"] == "infeasible"


def test_size_rerun_is_identical(tmp_path):
    args = ["size", "--case", "bus1", "--budgets", "1e8,2e8", "--seed", "3"]
    for run in ("a", "b"):
        assert main(args + ["--out", str(tmp_path / run)]) == 0
    for name in ("report.json", "frontier.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_eval_without_baselines_reports_dro_only(tmp_path):
    code = main(["eval", "--case", "bus1", "--baselines", "", "--budgets", "1e8", "--out", str(tmp_path)])
    assert code == 0
    rows = read_csv(tmp_path / "comparison.csv")
    assert [r["method"] for r in rows] == ["DRO"]
    assert rows[0]["tested_g_extreme_mwh"] != ""


def test_eval_without_held_out_leaves_tested_fields_empty(tmp_path, caplog):
    with caplog.at_level(logging.WARNING):
        code = main(["eval", "--case", str(DATA / "bus1.json"), "--scenarios", str(DATA / "bus1_scenarios.csv"),
                     "--baselines", "SP2", "--out", str(tmp_path)])
    assert code == 0
    assert any("no held-out scenarios" in r.getMessage() for r in caplog.records)
    report = json.loads((tmp_path / "eval_report.json").read_text())
    assert all(m["tested_g_extreme"] is None and m["tested_g_normal"] is None for m in report["methods"])


def test_eval_tables_parse_back(tmp_path):
    code = main(["eval", "--case", "bus3", "--budgets", "2e8", "--sweep-eps0", "0,0.1",
                 "--sweep-g-cap", "20,40", "--out", str(tmp_path)])
    assert code == 0
    rows = read_csv(tmp_path / "comparison.csv")
    assert list(rows[0]) == TABLE_COLUMNS
    assert [r["method"] for r in rows] == ["DRO", "SP1", "SP2", "RO"]
    for r in rows:
        if r["status"] == "optimal":
            float(r["investment_cny"])
            [float(v) for v in r["wind_mw"].split(";")]
    for knob in ("eps0", "g_cap"):
        sweep_rows = read_csv(tmp_path / f"sweep_{knob}.csv")
        assert list(sweep_rows[0]) == SWEEP_COLUMNS and len(sweep_rows) == 2
        assert {r["knob"] for r in sweep_rows} == {knob}
    assert (tmp_path / "manifest.json").is_file()


def test_bad_number_list_rejected(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["size", "--case", "bus1", "--budgets", "1e8,lots", "--out", str(tmp_path)])
    assert exc.value.code == 2


def test_oracle_command_passes_on_bundled_case(tmp_path):
    assert main(["oracle", "--case", "bus1", "--probes", "20", "--out", str(tmp_path)]) == 0
    result = json.loads((tmp_path / "oracle.json").read_text())
    assert result["extreme_bounds_dominate"] and result["expectation_bound_holds"]
    assert result["vertex_check_max_error"] <= 1e-6
