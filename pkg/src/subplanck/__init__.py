"""Photon-added Gaussian superpositions, compass states and their
displacement sensitivity in a truncated Fock space."""

from .fock import DimensionError, FockVector, TruncationError
from .loci import LocusConfig, LocusPoint, fidelity_sweep, solve_equal_qfi
from .metrics import fidelity, qfi_displacement
from .states import PairSpec, StateSpec, make_state

__all__ = [
    "DimensionError",
    "FockVector",
    "LocusConfig",
    "LocusPoint",
    "PairSpec",
    "StateSpec",
    "TruncationError",
    "fidelity",
    "fidelity_sweep",
    "make_state",
    "qfi_displacement",
    "solve_equal_qfi",
]

__version__ = "0.1.0"
