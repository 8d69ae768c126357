"""Gouy-phase simulation for radial Laguerre-Gaussian modes and N00N states.

Submodules: ``beamgeom`` (mode fields), ``propagation`` (angular spectrum
method), ``coupling`` (fiber overlaps), ``interference`` (classical and N00N
coupling curves), ``metrology`` (Fisher information) and ``analysis``
(focal-scan fitting).
"""

__version__ = "0.1.0"

from .beamgeom import BeamParams, FiberMode, HGModeSpec, LGModeSpec
from .coupling import OverlapConfig, overlap, overlap_analytic, overlap_numeric
from .interference import NoonConfig, classical_signal, noon_signal

__all__ = [
    "BeamParams",
    "FiberMode",
    "HGModeSpec",
    "LGModeSpec",
    "NoonConfig",
    "OverlapConfig",
    "classical_signal",
    "noon_signal",
    "overlap",
    "overlap_analytic",
    "overlap_numeric",
]
