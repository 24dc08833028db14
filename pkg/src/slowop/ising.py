"""Ising chain in mixed fields, ``H = -sum Z_i Z_{i+1} + h sum Z_i + g sum X_i``."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pauli import PauliSum

_PAULI_MATS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True)
class IsingParams:
    """Transverse field ``g`` and longitudinal field ``h``; the ZZ coupling is fixed to -1."""

    g: float
    h: float
    zz_coupling: float = -1.0

    def __post_init__(self):
        for name in ("g", "h"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")

    @property
    def integrable(self) -> bool:
        return self.g == 0 or self.h == 0


def build_hamiltonian(params: IsingParams, L: int, periodic: bool = True) -> PauliSum:
    """Chain Hamiltonian on ``L`` sites; terms with zero coupling are omitted."""
    if L < 1:
        raise ValueError(f"chain needs at least one site, got L={L}")
    terms = []
    n_bonds = 0 if L == 1 else (L if periodic else L - 1)
    for i in range(n_bonds):
        j = (i + 1) % L
        word = ["I"] * L
        word[i] = word[j] = "Z"
        terms.append((params.zz_coupling, "".join(word)))
    for i in range(L):
        for letter, coupling in (("Z", params.h), ("X", params.g)):
            if coupling != 0:
                word = ["I"] * L
                word[i] = letter
                terms.append((coupling, "".join(word)))
    return PauliSum.from_terms(L, terms)


def build_h_loc(params: IsingParams, N: int) -> PauliSum:
    """Hamiltonian terms fully supported on an open window of ``N`` sites."""
    return build_hamiltonian(params, N, periodic=False)


@dataclass(frozen=True)
class HamiltonianMPO:
    """Bond-dimension-3 MPO.  ``sites[i][a, b]`` is the 2x2 operator in block (a, b)."""

    sites: tuple[np.ndarray, ...]
    vL: np.ndarray
    vR: np.ndarray

    @property
    def bond_dims(self) -> list[int]:
        return [w.shape[1] for w in self.sites[:-1]]

    def contract(self) -> np.ndarray:
        """Dense ``2**N x 2**N`` matrix ``vL . M(0) ... M(N-1) . vR``."""
        acc = np.einsum("a,abij->bij", self.vL, self.sites[0])
        for w in self.sites[1:]:
            # (bond, I, J) x (bond, bond', i, j) -> (bond', I i, J j)
            acc = np.einsum("aIJ,abij->bIiJj", acc, w)
            b, d1, _, d2, _ = acc.shape
            acc = acc.reshape(b, d1 * 2, d2 * 2)
        return np.einsum("bij,b->ij", acc, self.vR)


def hamiltonian_mpo(params: IsingParams, N: int) -> HamiltonianMPO:
    """The window Hamiltonian as the lower-triangular finite-automaton MPO.

    Block rows/columns: 0 = completed, 1 = ZZ bond opened, 2 = nothing placed yet.
    """
    if N < 1:
        raise ValueError(f"window needs at least one site, got N={N}")
    P = _PAULI_MATS
    w = np.zeros((3, 3, 2, 2), dtype=complex)
    w[0, 0] = P["I"]
    w[1, 0] = P["Z"]
    w[2, 0] = params.h * P["Z"] + params.g * P["X"]
    w[2, 1] = params.zz_coupling * P["Z"]
    w[2, 2] = P["I"]
    vL = np.array([0.0, 0.0, 1.0])
    vR = np.array([1.0, 0.0, 0.0])
    return HamiltonianMPO(tuple(w.copy() for _ in range(N)), vL, vR)
