"""Real-time dynamics: Chebyshev propagation, infinite-temperature correlators and OTOCs."""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.special import jv

from .ising import IsingParams, build_hamiltonian
from .pauli import PauliSum, embed

log = logging.getLogger(__name__)

DYNAMICS_CAP = 14
EXACT_CAP = 12


class DynamicsError(RuntimeError):
    pass


@dataclass(frozen=True)
class ChebyshevConfig:
    """``e_bar`` rescales ``H`` to ``H / (2 e_bar)``; ``"auto"`` uses ``1.1 * sum|coeffs|``."""

    e_bar: float | str = 1000.0
    trunc_tol: float = 1e-13
    max_terms: int = 2_000_000

    def __post_init__(self):
        if self.e_bar != "auto" and not (isinstance(self.e_bar, (int, float)) and self.e_bar > 0):
            raise ValueError(f"e_bar must be positive or 'auto', got {self.e_bar!r}")
        if self.trunc_tol <= 0:
            raise ValueError("trunc_tol must be positive")

    def resolve(self, H: PauliSum | None) -> float:
        if self.e_bar == "auto":
            if H is None:
                raise ValueError("auto e_bar needs the Hamiltonian as a PauliSum")
            return 1.1 * float(np.sum(np.abs(H.coeffs)))
        return float(self.e_bar)


@dataclass
class TimeSeries:
    times: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)
    imag: np.ndarray | None = None
    stderr: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape:
            raise ValueError("times and values differ in length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite values")

    def to_csv(self) -> str:
        buf = io.StringIO()
        for k in sorted(self.meta):
            buf.write(f"# {k}={self.meta[k]}\n")
        cols = ["t", "value"]
        data = [self.times, self.values]
        if self.imag is not None:
            cols.append("imag")
            data.append(self.imag)
        if self.stderr is not None:
            cols.append("stderr")
            data.append(self.stderr)
        buf.write(",".join(cols) + "\n")
        for row in zip(*data):
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TimeSeries":
        meta = {}
        lines = []
        for line in text.splitlines():
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key] = value
            elif line.strip():
                lines.append(line)
        cols = lines[0].split(",")
        arr = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]]).reshape(-1, len(cols))
        get = {c: arr[:, i] for i, c in enumerate(cols)}
        return cls(get["t"], get["value"], meta, get.get("imag"), get.get("stderr"))


# -- Chebyshev ------------------------------------------------------------------------


def _applier(H):
    if callable(H):
        return H
    return lambda v: H @ v


def chebyshev_evolve(state: np.ndarray, H, t: float, cfg: ChebyshevConfig = ChebyshevConfig(), e_bar: float | None = None) -> np.ndarray:
    """``exp(-iHt) state`` by a Chebyshev series in ``H / (2 e_bar)``.

    ``state`` may hold several vectors as columns.  Terms are added until the
    order exceeds the Bessel argument and the squared norm of the partial sum is
    within ``trunc_tol`` of the input norm; the truncated sum is returned as is.
    """
    if e_bar is None:
        e_bar = cfg.resolve(H if isinstance(H, PauliSum) else None)
    apply = _applier(H.to_sparse(DYNAMICS_CAP) if isinstance(H, PauliSum) else H)
    psi = np.asarray(state, dtype=complex)
    if t == 0:
        return psi.copy()
    tau = 2.0 * e_bar * t
    norm0 = np.sum(np.abs(psi) ** 2, axis=0)

    def x_apply(v):
        return apply(v) / (2.0 * e_bar)

    t_prev = psi
    t_cur = x_apply(psi)
    out = jv(0, tau) * t_prev + 2 * (-1j) * jv(1, tau) * t_cur
    n = 1
    defect = np.inf
    while True:
        if n >= abs(tau):
            defect = float(np.max(np.abs(np.sum(np.abs(out) ** 2, axis=0) - norm0)))
            if defect < cfg.trunc_tol:
                break
            if abs(jv(n, tau)) < 1e-18 * abs(tau):
                # series exhausted; what remains of the defect is rounding
                log.debug("norm defect %.2e at roundoff after %d terms", defect, n)
                break
        if n >= cfg.max_terms:
            raise DynamicsError(f"Chebyshev series hit {n} terms with norm defect {defect:.3e}")
        n += 1
        t_next = 2 * x_apply(t_cur) - t_prev
        t_prev, t_cur = t_cur, t_next
        out = out + 2 * (-1j) ** (n % 4) * jv(n, tau) * t_cur
    return out


def evolve_series(state: np.ndarray, H, times, cfg: ChebyshevConfig = ChebyshevConfig(), e_bar: float | None = None):
    """Yield ``(t, exp(-iHt) state)`` for increasing ``times`` by incremental steps."""
    if e_bar is None:
        e_bar = cfg.resolve(H if isinstance(H, PauliSum) else None)
    if isinstance(H, PauliSum):
        H = H.to_sparse(DYNAMICS_CAP)
    cur, t_cur = np.asarray(state, dtype=complex), 0.0
    for t in times:
        cur = chebyshev_evolve(cur, H, t - t_cur, cfg, e_bar)
        t_cur = t
        yield t, cur


# -- exact diagonalization ----------------------------------------------------------------


@dataclass(frozen=True)
class EigenSystem:
    energies: np.ndarray
    vectors: np.ndarray
    L: int

    def residual(self, H: np.ndarray) -> float:
        return float(np.max(np.linalg.norm(H @ self.vectors - self.vectors * self.energies, axis=0)))

    def to_eigenbasis(self, A: np.ndarray) -> np.ndarray:
        return self.vectors.conj().T @ A @ self.vectors


@lru_cache(maxsize=4)
def eigensystem(params: IsingParams, L: int) -> EigenSystem:
    if L > EXACT_CAP:
        raise DynamicsError(f"exact diagonalization capped at L={EXACT_CAP}, got {L}")
    H = build_hamiltonian(params, L, periodic=True).to_dense()
    if np.allclose(H.imag, 0):
        H = H.real
    E, V = sla.eigh(H)
    return EigenSystem(E, np.ascontiguousarray(V), L)


def _on_chain(O: PauliSum, L: int) -> PauliSum:
    if O.n > L:
        raise DynamicsError(f"operator on {O.n} sites does not fit a chain of {L}")
    return O if O.n == L else embed(O, L, 0)


def _dense(O: PauliSum, L: int) -> np.ndarray:
    M = _on_chain(O, L).to_dense(EXACT_CAP)
    # .real is a strided view; BLAS needs a contiguous copy
    return np.ascontiguousarray(M.real) if np.allclose(M.imag, 0) else M


def exact_correlator(O: PauliSum, params: IsingParams, L: int, times) -> TimeSeries:
    """``ntr(O(t) O(0))`` from the spectral decomposition of the periodic chain."""
    es = eigensystem(params, L)
    W = es.to_eigenbasis(_dense(O, L))
    W2 = np.abs(W) ** 2
    times = np.asarray(times, dtype=float)
    vals = np.empty(len(times))
    imag = np.empty(len(times))
    for k, t in enumerate(times):
        p = np.exp(1j * es.energies * t)
        c = (p @ W2 @ p.conj()) / 2**L
        vals[k], imag[k] = c.real, c.imag
    meta = {"L": L, "N": O.n, "g": params.g, "h": params.h, "observable": "exact_correlator"}
    return TimeSeries(times, vals, meta, imag=imag)


def _random_states(dim: int, K: int, rng: np.random.Generator) -> np.ndarray:
    psi = rng.standard_normal((dim, K)) + 1j * rng.standard_normal((dim, K))
    return psi / np.linalg.norm(psi, axis=0)


def two_point_correlator(
    O: PauliSum,
    params: IsingParams,
    L: int,
    times,
    K: int = 50,
    seed: int = 0,
    cfg: ChebyshevConfig = ChebyshevConfig(),
    cap: int = DYNAMICS_CAP,
) -> TimeSeries:
    """Random-vector estimate of ``ntr(O(t) O(0))``.

    With ``chi = e^{iHt} psi`` and ``phi = e^{iHt} O psi`` the average of
    ``<phi|O|chi>`` over normalized Gaussian vectors ``psi`` approaches the trace.
    """
    if L > cap:
        raise DynamicsError(f"stochastic dynamics capped at L={cap}, got {L}")
    if K < 1:
        raise DynamicsError("K must be >= 1")
    Hp = build_hamiltonian(params, L, periodic=True)
    H = Hp.to_sparse(cap)
    Om = _on_chain(O, L).to_sparse(cap)
    e_bar = cfg.resolve(Hp)
    rng = np.random.default_rng(seed)
    psi = _random_states(2**L, K, rng)
    both = np.hstack([psi, Om @ psi])
    times = np.asarray(times, dtype=float)
    vals, imag, err = [], [], []
    # e^{+iHt} is the forward propagator at -t
    for _, states in evolve_series(both, H, -times, cfg, e_bar):
        chi, phi = states[:, :K], states[:, K:]
        samples = np.sum(phi.conj() * (Om @ chi), axis=0)
        vals.append(samples.real.mean())
        imag.append(samples.imag.mean())
        err.append(samples.real.std(ddof=1) / math.sqrt(K) if K > 1 else np.nan)
    meta = {
        "L": L,
        "N": O.n,
        "g": params.g,
        "h": params.h,
        "K": K,
        "seed": seed,
        "e_bar": e_bar,
        "observable": "two_point_correlator",
    }
    return TimeSeries(times, np.array(vals), meta, imag=np.array(imag), stderr=np.array(err))


# -- OTOC ------------------------------------------------------------------------------


def resolve_sites(site, N: int, L: int) -> list[int]:
    """Sites probed by ``site``: an int, ``"center"`` or ``"center+k"``.

    A window ``0..N-1`` with even ``N`` has two central sites; offsets are applied
    outward from each (mirrored) and wrap around the ring.
    """
    if isinstance(site, (int, np.integer)):
        if not 0 <= site < L:
            raise DynamicsError(f"site {site} outside chain of {L}")
        return [int(site)]
    text = str(site).replace(" ", "")
    if not text.startswith("center"):
        raise DynamicsError(f"cannot parse site {site!r}")
    k = int(text[len("center") :] or 0)
    if k < 0:
        raise DynamicsError("center offsets are distances and must be >= 0")
    if N % 2:
        c = (N - 1) // 2
        return sorted({(c + k) % L, (c - k) % L})
    return sorted({(N // 2 + k) % L, (N // 2 - 1 - k) % L})


def otoc(
    O: PauliSum,
    axis: str,
    site,
    params: IsingParams,
    L: int,
    times,
    N: int | None = None,
) -> TimeSeries:
    """``2 - 2 ntr(O(t) s O(t) s)`` with ``s`` a single-site Pauli, averaged over resolved sites."""
    axis = axis.lower()
    if axis not in ("x", "y", "z"):
        raise DynamicsError(f"axis must be x, y or z, got {axis!r}")
    N = O.n if N is None else N
    sites = resolve_sites(site, N, L)
    es = eigensystem(params, L)
    W = es.to_eigenbasis(_dense(O, L))
    Ss = [es.to_eigenbasis(_dense(PauliSum.site_op(axis.upper(), s, L), L)) for s in sites]
    times = np.asarray(times, dtype=float)
    vals = np.zeros(len(times))
    dim = 2**L
    for k, t in enumerate(times):
        p = np.exp(1j * es.energies * t)
        Wt = (p[:, None] * W) * p.conj()[None, :]
        for S in Ss:
            A = Wt @ S
            vals[k] += 2 - 2 * np.real(np.sum(A * A.T)) / dim
    vals /= len(Ss)
    meta = {"L": L, "N": N, "g": params.g, "h": params.h, "axis": axis, "site": str(site), "observable": "otoc"}
    return TimeSeries(times, vals, meta)


def gaussian_envelope(lam: float, times) -> TimeSeries:
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    times = np.asarray(times, dtype=float)
    return TimeSeries(times, np.exp(-lam * times**2 / 2), {"lambda": lam, "observable": "gaussian_envelope"})


def dense_propagate(state: np.ndarray, es: EigenSystem, t: float) -> np.ndarray:
    """Reference ``exp(-iHt) state`` from an eigensystem."""
    c = es.vectors.conj().T @ state
    return es.vectors @ (np.exp(-1j * es.energies * t)[:, None] * c.reshape(len(es.energies), -1)).reshape(c.shape)
