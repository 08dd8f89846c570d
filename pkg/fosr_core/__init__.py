"""
FOSR Core Library

Function-on-scalar regression in a reproducing kernel Hilbert space:
Mercer eigensystems, the truncated-basis penalized solver, GCV tuning and
the simulation study that back the command-line interface.
"""

from fosr_core.errors import (
    BesselSaturationWarning,
    ConfigError,
    DomainError,
    FormatError,
    FosrError,
    InputError,
    NumericalError,
    TuningError,
)
from fosr_core.ingest import ObservationTable, load_covariates, load_dataset, load_observations
from fosr_core.kernels import bessel_k, distance, gram_matrix, kernel_matrix, matern, matern_eval
from fosr_core.models import Dataset, Domain, DomainKind, KernelFamily, KernelSpec, Subject
from fosr_core.persistence import load_model, save_model
from fosr_core.simulate import (
    ErrorRow,
    RateReport,
    SimProgress,
    SimSetting,
    TuningMode,
    gen_beta,
    gen_dataset,
    minimax_rate,
    rate_report,
    run_grid,
    transition_density,
)
from fosr_core.solver import (
    DiagnosticsReport,
    FittedModel,
    diagnostics,
    fit,
    objective,
    predict,
    recommended_truncation,
    representer_oracle_fit,
)
from fosr_core.spectra import (
    ManifoldSpectrum,
    MercerBasis,
    Quadrature,
    analytic_laplacian_spectrum,
    build_basis,
    build_quadrature,
    decay_slope,
    mercer_tail_diagnostic,
    nystrom_decompose,
    nystrom_extend,
    sobolev_kernel_from_spectrum,
)
from fosr_core.tuning import TuneGrid, TuneProgress, gcv_score, tune_kernel, tune_lambda_cyclic

__version__ = "0.1.0"

__all__ = [
    # Errors
    "FosrError",
    "DomainError",
    "InputError",
    "FormatError",
    "ConfigError",
    "NumericalError",
    "TuningError",
    "BesselSaturationWarning",
    # Models
    "Domain",
    "DomainKind",
    "KernelFamily",
    "KernelSpec",
    "Subject",
    "Dataset",
    # Kernels
    "bessel_k",
    "matern",
    "matern_eval",
    "distance",
    "kernel_matrix",
    "gram_matrix",
    # Spectra
    "Quadrature",
    "ManifoldSpectrum",
    "MercerBasis",
    "build_quadrature",
    "build_basis",
    "nystrom_decompose",
    "nystrom_extend",
    "analytic_laplacian_spectrum",
    "sobolev_kernel_from_spectrum",
    "decay_slope",
    "mercer_tail_diagnostic",
    # Solver
    "FittedModel",
    "DiagnosticsReport",
    "diagnostics",
    "fit",
    "objective",
    "predict",
    "recommended_truncation",
    "representer_oracle_fit",
    # Tuning
    "TuneGrid",
    "TuneProgress",
    "gcv_score",
    "tune_lambda_cyclic",
    "tune_kernel",
    # Simulation
    "SimSetting",
    "SimProgress",
    "TuningMode",
    "ErrorRow",
    "RateReport",
    "gen_beta",
    "gen_dataset",
    "run_grid",
    "rate_report",
    "minimax_rate",
    "transition_density",
    # Files
    "ObservationTable",
    "load_observations",
    "load_covariates",
    "load_dataset",
    "save_model",
    "load_model",
]
