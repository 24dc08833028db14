"""Operator-valued matrix product states over the Pauli index.

Site tensors have shape ``(left bond, k, right bond)`` with ``k`` labelling
``I, X, Y, Z`` (``k = 0..3``).  In the translation-invariant gauge the first site
carries only ``X, Y, Z`` and its tensor has physical dimension 3.  Tensors are
real, so the represented operator is Hermitian, and because Pauli strings are
orthonormal under the normalized trace the MPS norm equals ``sqrt(ntr(O^2))``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .pauli import OperatorVector, PauliSum

LOCAL_GAUGE = "local"
TI_GAUGE = "ti_first_site"
SVD_REL_CUTOFF = 1e-14


class MPSError(ValueError):
    pass


@dataclass(frozen=True)
class OperatorMPS:
    tensors: tuple[np.ndarray, ...]
    gauge: str = LOCAL_GAUGE

    def __post_init__(self):
        ts = tuple(np.asarray(t, dtype=float) for t in self.tensors)
        if not ts:
            raise MPSError("an MPS needs at least one site")
        if ts[0].shape[0] != 1 or ts[-1].shape[2] != 1:
            raise MPSError("boundary bonds must have dimension 1")
        for i, (a, b) in enumerate(zip(ts[:-1], ts[1:])):
            if a.shape[2] != b.shape[0]:
                raise MPSError(f"bond mismatch between sites {i} and {i + 1}")
        first_dim = 3 if self.gauge == TI_GAUGE else 4
        if ts[0].shape[1] != first_dim or any(t.shape[1] != 4 for t in ts[1:]):
            raise MPSError(f"unexpected physical dimensions for gauge {self.gauge!r}")
        object.__setattr__(self, "tensors", ts)

    @property
    def N(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[2] for t in self.tensors[:-1]]

    @property
    def phys_dims(self) -> list[int]:
        return [t.shape[1] for t in self.tensors]

    def padded_tensors(self) -> list[np.ndarray]:
        """Tensors with the gauge-fixed first site promoted to a 4-dim leg (zero identity slot)."""
        ts = list(self.tensors)
        if self.gauge == TI_GAUGE:
            first = np.zeros((1, 4, ts[0].shape[2]))
            first[:, 1:, :] = ts[0]
            ts[0] = first
        return ts

    def norm(self) -> float:
        return float(np.sqrt(max(overlap_mps(self, self), 0.0)))

    def scaled(self, factor: float) -> "OperatorMPS":
        ts = list(self.tensors)
        ts[-1] = ts[-1] * factor
        return OperatorMPS(tuple(ts), self.gauge)

    def normalized(self) -> "OperatorMPS":
        return self.scaled(1.0 / self.norm())

    def to_vector(self) -> OperatorVector:
        acc = np.ones((1, 1))
        for t in self.padded_tensors():
            acc = np.einsum("pa,akb->pkb", acc, t).reshape(-1, t.shape[2])
        return OperatorVector(self.N, acc[:, 0])

    def to_pauli_sum(self) -> PauliSum:
        return self.to_vector().to_pauli_sum()

    def to_json(self) -> str:
        return json.dumps(
            {
                "gauge": self.gauge,
                "sites": [{"shape": list(t.shape), "data": t.ravel().tolist()} for t in self.tensors],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "OperatorMPS":
        data = json.loads(text)
        ts = tuple(np.asarray(s["data"], dtype=float).reshape(s["shape"]) for s in data["sites"])
        return cls(ts, data["gauge"])


@dataclass(frozen=True)
class EntropyProfile:
    cuts: np.ndarray
    entropy: np.ndarray
    max_bound: np.ndarray
    log_D: float

    def bound(self) -> np.ndarray:
        return np.minimum(self.max_bound, self.log_D)


def max_bond_dims(N: int, D: int, gauge: str = LOCAL_GAUGE) -> list[int]:
    """Largest useful bond dimension at each internal cut, capped at ``D``."""
    first = 3 if gauge == TI_GAUGE else 4
    dims = []
    for cut in range(1, N):
        left = first * 4 ** (cut - 1)
        right = 4 ** (N - cut)
        dims.append(int(min(left, right, D)))
    return dims


def random_mps(N: int, D: int, rng: np.random.Generator, gauge: str = LOCAL_GAUGE) -> OperatorMPS:
    """Gaussian tensors at the maximal bond dims, right-canonical and normalized."""
    bonds = [1] + max_bond_dims(N, D, gauge) + [1]
    ts = []
    for i in range(N):
        d = 3 if (i == 0 and gauge == TI_GAUGE) else 4
        ts.append(rng.standard_normal((bonds[i], d, bonds[i + 1])))
    m = canonicalize(OperatorMPS(tuple(ts), gauge), 0)
    return m.scaled(1.0 / np.linalg.norm(m.tensors[0]))


def _truncated_svd(mat: np.ndarray, D_max: int | None):
    u, s, vt = np.linalg.svd(mat, full_matrices=False)
    keep = int(np.sum(s > SVD_REL_CUTOFF * (s[0] if len(s) else 0.0)))
    keep = max(keep, 1)
    if D_max is not None:
        keep = min(keep, D_max)
    discarded = float(np.sum(s[keep:] ** 2))
    return u[:, :keep], s[:keep], vt[:keep], discarded


def from_vector(v: OperatorVector, D_max: int | None = None, gauge: str = LOCAL_GAUGE) -> OperatorMPS:
    """Successive SVD factorization, truncated to ``D_max`` (exact when it is large enough)."""
    N = v.window_size
    coeffs = v.coeffs
    if gauge == TI_GAUGE:
        if np.any(coeffs[: 4 ** (N - 1)] != 0):
            raise MPSError("TI gauge requires a non-identity first letter on every string")
        coeffs = coeffs[4 ** (N - 1):]
    rest = coeffs.reshape(1, -1)
    ts = []
    for i in range(N - 1):
        d = 3 if (i == 0 and gauge == TI_GAUGE) else 4
        left = rest.shape[0]
        mat = rest.reshape(left * d, -1)
        u, s, vt, _ = _truncated_svd(mat, D_max)
        ts.append(u.reshape(left, d, -1))
        rest = s[:, None] * vt
    d_last = 3 if (N == 1 and gauge == TI_GAUGE) else 4
    ts.append(rest.reshape(rest.shape[0], d_last, 1))
    return OperatorMPS(tuple(ts), gauge)


def canonicalize(m: OperatorMPS, center: int) -> OperatorMPS:
    """Mixed canonical form: left-orthogonal before ``center``, right-orthogonal after."""
    if not 0 <= center < m.N:
        raise MPSError(f"center {center} outside 0..{m.N - 1}")
    ts = [t.copy() for t in m.tensors]
    for i in range(center):
        a, d, b = ts[i].shape
        q, r = np.linalg.qr(ts[i].reshape(a * d, b))
        ts[i] = q.reshape(a, d, -1)
        ts[i + 1] = np.einsum("ab,bkc->akc", r, ts[i + 1])
    for i in range(m.N - 1, center, -1):
        a, d, b = ts[i].shape
        q, r = np.linalg.qr(ts[i].reshape(a, d * b).T)
        ts[i] = q.T.reshape(-1, d, b)
        ts[i - 1] = np.einsum("akb,cb->akc", ts[i - 1], r)
    return OperatorMPS(tuple(ts), m.gauge)


def schmidt_values(m: OperatorMPS) -> list[np.ndarray]:
    """Singular values across each internal cut (cut ``i`` separates sites ``< i`` from ``>= i``)."""
    ts = list(canonicalize(m, m.N - 1).tensors)
    out = [None] * (m.N - 1)
    for i in range(m.N - 1, 0, -1):
        a, d, b = ts[i].shape
        u, s, vt = np.linalg.svd(ts[i].reshape(a, d * b), full_matrices=False)
        out[i - 1] = s
        ts[i] = vt.reshape(-1, d, b)
        ts[i - 1] = np.einsum("akb,bc->akc", ts[i - 1], u * s)
    return out


def entropy_profile(m: OperatorMPS, D: int | None = None, tol: float = 1e-8) -> EntropyProfile:
    """Operator entanglement entropy (nats) at every cut of a unit-norm MPS."""
    nrm = m.norm()
    if abs(nrm - 1.0) > tol:
        raise MPSError(f"entropy profile needs a normalized MPS, norm is {nrm}")
    ents = []
    for s in schmidt_values(m):
        p = s**2
        p = p[p > 0]
        ents.append(float(-np.sum(p * np.log(p))))
    N = m.N
    cuts = np.arange(1, N)
    max_bound = np.array([np.log(min(4.0**i, 4.0 ** (N - i))) for i in cuts])
    D = D if D is not None else max([1] + m.bond_dims)
    return EntropyProfile(cuts, np.array(ents), max_bound, float(np.log(D)))


def truncate(m: OperatorMPS, D_max: int) -> tuple[OperatorMPS, float]:
    """Compress to bond dimension ``D_max``; returns the MPS and the discarded weight."""
    ts = list(canonicalize(m, m.N - 1).tensors)
    discarded = 0.0
    for i in range(m.N - 1, 0, -1):
        a, d, b = ts[i].shape
        u, s, vt, disc = _truncated_svd(ts[i].reshape(a, d * b), D_max)
        discarded += disc
        ts[i] = vt.reshape(-1, d, b)
        ts[i - 1] = np.einsum("akb,bc->akc", ts[i - 1], u * s)
    return OperatorMPS(tuple(ts), m.gauge), discarded


def overlap_mps(a: OperatorMPS, b: OperatorMPS) -> float:
    """``ntr(a b)`` by transfer-matrix contraction."""
    if a.N != b.N:
        raise MPSError(f"length mismatch: {a.N} vs {b.N}")
    ta = a.tensors if a.gauge == b.gauge else a.padded_tensors()
    tb = b.tensors if a.gauge == b.gauge else b.padded_tensors()
    env = np.ones((1, 1))
    for x, y in zip(ta, tb):
        env = np.einsum("ab,akc,bkd->cd", env, x, y)
    return float(env[0, 0])
