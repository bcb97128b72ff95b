"""Cochran's Q homogeneity test with corrected null distributions for SMD meta-analyses."""
__version__ = "0.1.0"

from .datasets import InputDataset, load_example, parse_csv  # noqa: E402
from .errors import DataError, DegenerateFitError, MetaQError, NumericalError  # noqa: E402
from .pipeline import QTestReport, run_homogeneity_test  # noqa: E402
from .simlab import SimConfig, SimResult, bootstrap_p_value, simulate  # noqa: E402
from .smd import StudySummary  # noqa: E402

__all__ = [
    "DataError", "DegenerateFitError", "InputDataset", "MetaQError", "NumericalError",
    "QTestReport", "SimConfig", "SimResult", "StudySummary", "bootstrap_p_value",
    "load_example", "parse_csv", "run_homogeneity_test", "simulate",
]
