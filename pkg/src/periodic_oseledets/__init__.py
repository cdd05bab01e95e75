"""Linear cocycles over subshifts of finite type, their Lyapunov spectra and
Oseledets splittings, and approximation of both by periodic orbits."""

__version__ = "0.1.0"

from .base_dynamics import (
    ClosingParams,
    MarkovMeasure,
    PeriodicOrbit,
    ShiftPoint,
    SubshiftSpec,
    anosov_close,
    enumerate_periodic,
    periodic_count,
    sample_point,
    sample_points,
    weak_star_distance,
)
from .errors import CocycleError, NumericalFailure, ValidationError
from .linear_core import (
    AdjointGenerator,
    CocycleGenerator,
    CoordinateSeries,
    ExteriorPowerGenerator,
    LocallyConstant,
    Subspace,
    cocycle_product,
)
from .oseledets import (
    NEG_INFINITY,
    LyapunovSpectrum,
    PeriodicData,
    SplittingEstimate,
    ergodic_spectrum,
    finite_time_spectrum,
    oseledets_splitting,
    periodic_data,
    top_exponent_projective,
)
from .periodic_approx import (
    ApproximationReport,
    ExperimentConfig,
    best_periodic_orbit,
    closing_experiment,
    holder_audit,
    splitting_report,
)

__all__ = [
    "AdjointGenerator",
    "ApproximationReport",
    "ClosingParams",
    "CocycleError",
    "CocycleGenerator",
    "CoordinateSeries",
    "ExperimentConfig",
    "ExteriorPowerGenerator",
    "LocallyConstant",
    "LyapunovSpectrum",
    "MarkovMeasure",
    "NEG_INFINITY",
    "NumericalFailure",
    "PeriodicData",
    "PeriodicOrbit",
    "ShiftPoint",
    "SplittingEstimate",
    "SubshiftSpec",
    "Subspace",
    "ValidationError",
    "anosov_close",
    "best_periodic_orbit",
    "closing_experiment",
    "cocycle_product",
    "enumerate_periodic",
    "ergodic_spectrum",
    "finite_time_spectrum",
    "holder_audit",
    "oseledets_splitting",
    "periodic_count",
    "periodic_data",
    "sample_point",
    "sample_points",
    "splitting_report",
    "top_exponent_projective",
    "weak_star_distance",
]
