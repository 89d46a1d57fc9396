"""Desk-scale laboratory for the characteristic polynomial of Haar unitary matrices."""

from .extremes import field_max, free_energy, high_points, max_trend, rigidity
from .field import (
    FieldGrid,
    TraceVector,
    compute_traces,
    eval_full_field,
    eval_truncated_field,
    traces_from_verblunsky,
)
from .montecarlo import ExperimentConfig, SummaryStats, derive_stream, ks_statistic, run_experiment
from .multiscale import count_exceedances, decompose, exact_cov_W, exact_cov_Y, second_moment_ratio
from .sampler import (
    STREAM_LAYOUT_VERSION,
    EigenangleSample,
    InvalidDimension,
    VerblunskyCoeffs,
    sample_eigenangles,
    sample_haar_cmv,
    sample_haar_qr,
)
from .toeplitz import (
    SymbolSpec,
    barnes_log_g,
    fh_prediction,
    gaussian_laplace_check,
    selberg_logdet,
    sigma2_v,
    toeplitz_logdet,
    wiener_hopf_b,
)

__version__ = "0.1.0"

__all__ = [
    "STREAM_LAYOUT_VERSION", "EigenangleSample", "ExperimentConfig", "FieldGrid", "InvalidDimension",
    "SummaryStats", "SymbolSpec", "TraceVector", "VerblunskyCoeffs", "barnes_log_g", "compute_traces",
    "count_exceedances", "decompose", "derive_stream", "eval_full_field", "eval_truncated_field",
    "exact_cov_W", "exact_cov_Y", "fh_prediction", "field_max", "free_energy", "gaussian_laplace_check",
    "high_points", "ks_statistic", "max_trend", "rigidity", "run_experiment", "sample_eigenangles",
    "sample_haar_cmv", "sample_haar_qr", "second_moment_ratio", "selberg_logdet", "sigma2_v",
    "toeplitz_logdet", "traces_from_verblunsky", "wiener_hopf_b",
]
