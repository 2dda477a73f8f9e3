"""Numerical toolkit for a three-band tensor-monopole model.

Submodules: ``model`` (Hamiltonian, symmetries), ``spectral`` (eigensystems,
nodal scans), ``geometry`` (quantum geometric tensor, 3-form curvature),
``invariants`` (Dixmier-Douady integrals and sweeps), ``dynamics``
(parametric-modulation experiment emulation) and ``cli``.
"""

from .errors import (
    DegenerateSpectrumError,
    FitError,
    GaugeError,
    IncompleteDataError,
    SingularityError,
    TensorpoleError,
    UnsupportedRegimeError,
)
from .model import CartesianPoint, ParamPoint, build_hamiltonian, mhz_to_angular

__version__ = "0.1.0"

__all__ = [
    "CartesianPoint", "DegenerateSpectrumError", "FitError", "GaugeError",
    "IncompleteDataError", "ParamPoint", "SingularityError", "TensorpoleError",
    "UnsupportedRegimeError", "__version__", "build_hamiltonian", "mhz_to_angular",
]
