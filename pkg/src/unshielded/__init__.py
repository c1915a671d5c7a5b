"""Viscous Picard solver and diagnostics for the reduced harmonic Einstein
system with singular, Lorentzian initial data."""

from .config import RunConfig, load_config
from .data import DataList, SingularProfileParams, build_singular_data, check_admissible, flat_data, gauge_wave
from .diagnostics import BlowupFitter, fit_blowup_exponent, gap_length
from .exceptions import (
    ConfigurationError,
    ContractionError,
    DegenerateMetricError,
    InadmissibleDataError,
    SignatureLossError,
    UnshieldedError,
)
from .grid import GridSpec, TimeGrid, make_grid
from .kernel import HeatKernelSmoother, verify_uniform_l1
from .picard import HarmonicPicardSolver, SchemeConfig, ViscositySweep, harmonic_residual, run_fixed_point
from .report import Pipeline, RunReport, emit_report
from .tensor import christoffel, harmonic_source, ricci, unknown_count

__version__ = "0.1.0"

__all__ = [
    "BlowupFitter", "ConfigurationError", "ContractionError", "DataList", "DegenerateMetricError", "GridSpec",
    "HarmonicPicardSolver", "HeatKernelSmoother", "InadmissibleDataError", "Pipeline", "RunConfig", "RunReport",
    "SchemeConfig", "SignatureLossError", "SingularProfileParams", "TimeGrid", "UnshieldedError", "ViscositySweep",
    "build_singular_data", "check_admissible", "christoffel", "emit_report", "fit_blowup_exponent", "flat_data",
    "gap_length", "gauge_wave", "harmonic_residual", "harmonic_source", "load_config", "make_grid", "ricci",
    "run_fixed_point", "unknown_count", "verify_uniform_l1",
]
