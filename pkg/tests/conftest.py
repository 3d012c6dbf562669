from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import pytest
from hypothesis import settings

import wakesize
from wakesize.grid import GridCase, load_case
from wakesize.lipschitz import LipschitzBounds, extreme_bounds
from wakesize.uncertainty import ScenarioSet, load_scenarios

sys.path.insert(0, str(Path(__file__).parent))

DATA = Path(wakesize.__file__).resolve().parent / "data"
BUNDLED = ("bus1", "bus3", "bus6")

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@dataclass
class Bundle:
    case: GridCase
    scenarios: ScenarioSet
    heldout: ScenarioSet
    bounds: LipschitzBounds


@pytest.fixture(scope="session")
def bounds_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("bounds")


@pytest.fixture(scope="session")
def bundled(bounds_dir):
    """Loader for the bundled cases with their uniform shedding bounds, computed once per session."""
    loaded = {}

    def get(name: str) -> Bundle:
        if name not in loaded:
            case = load_case(DATA / f"{name}.json")
            loaded[name] = Bundle(
                case,
                load_scenarios(DATA / f"{name}_scenarios.csv", case),
                load_scenarios(DATA / f"{name}_heldout.csv", case),
                extreme_bounds(case, cache_dir=bounds_dir),
            )
        return loaded[name]

    return get
