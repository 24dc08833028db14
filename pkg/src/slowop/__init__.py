"""Slowest local operators of the mixed-field Ising chain: exact and DMRG solvers, probes and dynamics."""

__version__ = "0.1.0"

from .exact import LOCAL, TI, SlowestResult, evaluate_lambda, find_local, find_ti
from .ising import IsingParams, build_h_loc, build_hamiltonian
from .pauli import PauliSum, commutator, hs_inner

__all__ = [
    "LOCAL",
    "TI",
    "IsingParams",
    "PauliSum",
    "SlowestResult",
    "build_h_loc",
    "build_hamiltonian",
    "commutator",
    "evaluate_lambda",
    "find_local",
    "find_ti",
    "hs_inner",
]
