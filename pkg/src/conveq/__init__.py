"""conveq: numerical lab for directional convolution equivalence of densities."""

__version__ = "0.1.0"

from .densities import (
    DIVERGENT,
    ConstantAngular,
    ConveqError,
    CosineBumpAngular,
    DimensionMismatchError,
    Direction,
    DirectionalDensity,
    NonIntegrableError,
    PolynomialProfile,
    TabulatedProfile,
    TemperedExponentialProfile,
    comparability_constants,
    density_from_json,
    evaluate,
    exp_moment,
    l1_norm,
)

__all__ = [
    "DIVERGENT",
    "ConstantAngular",
    "ConveqError",
    "CosineBumpAngular",
    "DimensionMismatchError",
    "Direction",
    "DirectionalDensity",
    "NonIntegrableError",
    "PolynomialProfile",
    "TabulatedProfile",
    "TemperedExponentialProfile",
    "comparability_constants",
    "density_from_json",
    "evaluate",
    "exp_moment",
    "l1_norm",
    "__version__",
]
