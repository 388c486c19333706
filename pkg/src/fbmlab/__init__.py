"""fbmlab: fractional-noise SPDE simulation and verification laboratory.

Subpackages by theme:

- ``fbm``: exact fractional Gaussian noise samplers and cylindrical fields
- ``volterra``: singular kernel machinery and Wiener-integral moments
- ``galerkin``: spectral solver, bounded solutions, Picard fixed point
- ``bounds``: closed-form stability constants and Monte-Carlo bound checks
- ``recurrence``: path metrics, almost periods, law-distance diagnostics
- ``heat``: the stochastic heat-equation example wired end to end
- ``cli``: command-line front end
"""

from .errors import (
    CovarianceNotPD,
    DomainError,
    EmbeddingNotNonnegative,
    FbmlabError,
    GridMismatch,
    NoContraction,
    ThresholdViolated,
)
from .fbm import (
    CovarianceOperatorSpec,
    CylindricalFbmField,
    FgnPath,
    TimeGrid,
    fbm_covariance,
    fgn_autocovariance,
    generate_cylindrical_fbm,
    generate_fbm_cholesky,
    generate_fgn_circulant,
)
from .volterra import (
    StepFunction,
    isometry_second_moment,
    kernel_constant,
    moment_inequality_check,
    volterra_kernel,
    volterra_kernel_dt,
    wiener_integral,
)

__version__ = "0.1.0"

__all__ = [
    "CovarianceNotPD",
    "CovarianceOperatorSpec",
    "CylindricalFbmField",
    "DomainError",
    "EmbeddingNotNonnegative",
    "FbmlabError",
    "FgnPath",
    "GridMismatch",
    "NoContraction",
    "StepFunction",
    "ThresholdViolated",
    "TimeGrid",
    "fbm_covariance",
    "fgn_autocovariance",
    "generate_cylindrical_fbm",
    "generate_fbm_cholesky",
    "generate_fgn_circulant",
    "isometry_second_moment",
    "kernel_constant",
    "moment_inequality_check",
    "volterra_kernel",
    "volterra_kernel_dt",
    "wiener_integral",
    "__version__",
]
