"""Adhering oscillators: linear stability, 1D PDE solver, Fourier-mode
reduction and a hexagonal lattice-gas automaton."""

__version__ = "0.1.0"

from .params import (  # noqa: E402
    DimensionlessParams,
    ModelParams,
    ParameterError,
    SigmaKind,
    check_admissible,
    nondimensionalize,
)

__all__ = [
    "DimensionlessParams",
    "ModelParams",
    "ParameterError",
    "SigmaKind",
    "check_admissible",
    "nondimensionalize",
    "__version__",
]
