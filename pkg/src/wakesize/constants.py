"""Numerical tolerances shared across the package."""

FEAS_TOL = 1e-7
OPT_TOL = 1e-7

# strong-duality acceptance: |primal - dual| <= DUALITY_RTOL * (1 + |obj|)
DUALITY_RTOL = 1e-6

# orientation test for the 3-D hull, applied to unit-box scaled coordinates
HULL_EPS = 1e-10

# vertex deduplication radius
VERTEX_DEDUP = 1e-8

# multiplier/variable box used to probe unbounded LPCC relaxations
LPCC_BOX = 1e6

# relative width of the margin used to keep Lipschitz probes inside the support
INTERIOR_MARGIN = 1e-4

DEFAULT_LP_BACKEND = "highs"
