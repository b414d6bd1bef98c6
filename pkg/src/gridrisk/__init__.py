"""Power-grid operational risk: scenario sampling, a DC-OPF oracle, a GCN
surrogate and Monte Carlo probability/risk metrics."""

from .grid import GridTopology, load_bundled_grid, load_grid, save_grid
from .oracle import OracleConfig, solve_dc_opf, solve_multiperiod
from .risk import FailureSpec, assess, compare_reports
from .scenarios import DEFAULT_CORRELATION, DEFAULT_MARGINALS, sample_scenarios

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_CORRELATION",
    "DEFAULT_MARGINALS",
    "FailureSpec",
    "GridTopology",
    "OracleConfig",
    "assess",
    "compare_reports",
    "load_bundled_grid",
    "load_grid",
    "sample_scenarios",
    "save_grid",
    "solve_dc_opf",
    "solve_multiperiod",
]
