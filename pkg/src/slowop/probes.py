"""Probe operators, overlaps with slow operators, scaling slopes and the h* transition."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
import scipy.linalg as sla

from .ising import IsingParams, build_h_loc, build_hamiltonian
from .pauli import PauliSum, commutator, embed, hs_inner

PROBE_TAGS = ("diffusion_mode", "energy_flux", "magnetization_x", "magnetization_y", "magnetization_z")
LOCAL_WINDOW = "local_window"
TRANSLATION_INVARIANT = "translation_invariant"
VARIANTS = (LOCAL_WINDOW, TRANSLATION_INVARIANT)


class ProbeError(ValueError):
    pass


@dataclass(frozen=True)
class ProbeKind:
    tag: str
    variant: str = LOCAL_WINDOW

    def __post_init__(self):
        if self.tag not in PROBE_TAGS:
            raise ProbeError(f"unknown probe {self.tag!r}")
        if self.variant not in VARIANTS:
            raise ProbeError(f"unknown variant {self.variant!r}")


@dataclass(frozen=True)
class OverlapRecord:
    g: float
    h: float
    N: int
    probe: ProbeKind
    value: float


@dataclass(frozen=True)
class SlopeRecord:
    N_pair: tuple[int, int]
    instant_slope: float


@dataclass(frozen=True)
class OptimizedMode:
    """Coefficients of the cos-weighted bond (``a``), h-field (``b``) and g-field (``c``) terms.

    Entries for excluded (identically zero) basis terms are ``nan``.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    lam: float
    operator: PauliSum


def _word(N: int, sites: dict[int, str]) -> str:
    return "".join(sites.get(i, "I") for i in range(N))


def _bond_weight(i: int, N: int) -> float:
    return math.cos(-math.pi / 2 + (i + 0.5) * math.pi / N)


def _field_weight(i: int, N: int) -> float:
    return math.cos(-math.pi / 2 + i * math.pi / N)


def _mode_terms(params: IsingParams, N: int) -> list[tuple[str, int, PauliSum]]:
    """``(family, site, operator)`` for each weighted bond, h-field and g-field term."""
    out = []
    for i in range(N - 1):
        op = PauliSum.from_terms(N, [(params.zz_coupling * _bond_weight(i, N), _word(N, {i: "Z", i + 1: "Z"}))])
        out.append(("a", i, op))
    for fam, letter, coupling in (("b", "Z", params.h), ("c", "X", params.g)):
        for i in range(N):
            op = PauliSum.from_terms(N, [(coupling * _field_weight(i, N), _word(N, {i: letter}))])
            out.append((fam, i, op))
    return out


def diffusion_mode(params: IsingParams, N: int) -> PauliSum:
    """Energy density on ``N`` sites with a cosine bell envelope, unit norm."""
    if N < 2:
        raise ProbeError("diffusion mode needs N >= 2")
    total = PauliSum(N)
    for _, _, op in _mode_terms(params, N):
        total = total + op
    return total.normalized()


def energy_flux(params: IsingParams, N: int) -> PauliSum:
    """Window Hamiltonian plus the wrap bond ``Z_{N-1} Z_0``, unit norm."""
    if N < 2:
        raise ProbeError("energy flux needs N >= 2")
    wrap = PauliSum.from_terms(N, [(params.zz_coupling, _word(N, {0: "Z", N - 1: "Z"}))])
    return (build_h_loc(params, N) + wrap).normalized()


def magnetization(axis: str, N: int) -> PauliSum:
    axis = axis.lower()
    if axis not in ("x", "y", "z"):
        raise ProbeError(f"axis must be x, y or z, got {axis!r}")
    if N < 1:
        raise ProbeError("magnetization needs N >= 1")
    letter = axis.upper()
    return PauliSum.from_terms(N, [(1.0, _word(N, {i: letter})) for i in range(N)]).normalized()


def window_probe(tag: str, params: IsingParams, N: int) -> PauliSum:
    ProbeKind(tag)
    if tag == "diffusion_mode":
        return diffusion_mode(params, N)
    if tag == "energy_flux":
        return energy_flux(params, N)
    return magnetization(tag[-1], N)


def ti_probe(tag: str, params: IsingParams, N: int, L: int) -> PauliSum:
    """Cyclic sum of the window probe over an ``L``-site ring, unit norm."""
    if L < 2 * N + 3:
        raise ProbeError(f"ring of {L} sites too short for window {N} (need {2 * N + 3})")
    if tag == "energy_flux":
        return build_hamiltonian(params, L, periodic=True).normalized()
    cell = embed(window_probe(tag, params, N), L, 0, periodic=True)
    total = PauliSum(L)
    for i in range(L):
        total = total + cell.shift(i)
    return total.normalized()


def probe(kind: ProbeKind, params: IsingParams, N: int, L: int | None = None) -> PauliSum:
    if kind.variant == LOCAL_WINDOW:
        return window_probe(kind.tag, params, N)
    return ti_probe(kind.tag, params, N, L if L is not None else 2 * N + 3)


def overlap(O: PauliSum, P: PauliSum) -> float:
    """Normalized ``ntr(O P)`` of two Hermitian operators on the same sites."""
    if O.n != P.n:
        raise ProbeError(f"size mismatch: {O.n} vs {P.n} sites")
    no, np_ = O.norm(), P.norm()
    if no == 0 or np_ == 0:
        raise ProbeError("overlap with a zero operator")
    return float(hs_inner(O, P).real / (no * np_))


def _lambda_matrix(ops: list[PauliSum], params: IsingParams, N: int) -> np.ndarray:
    """``ntr([H,A_i]^dagger [H,A_j])`` on a ring long enough to avoid wrapping."""
    L = N + 2
    H = build_hamiltonian(params, L, periodic=True)
    comms = [commutator(H, embed(op, L, 0)) for op in ops]
    M = np.array([[hs_inner(a, b).real for b in comms] for a in comms])
    return 0.5 * (M + M.T)


def form_lambda(O: PauliSum, params: IsingParams) -> float:
    """``ntr([H,O]^dagger [H,O]) / ntr(O^2)`` for a window operator (local definition)."""
    return float(_lambda_matrix([O], params, O.n)[0, 0] / O.norm() ** 2)


def optimized_diffusion_mode(params: IsingParams, N: int) -> OptimizedMode:
    """Minimize the local form over the span of the cos-weighted energy-density terms."""
    if N < 2:
        raise ProbeError("optimized diffusion mode needs N >= 2")
    terms = [t for t in _mode_terms(params, N) if t[2].norm() > 1e-14]
    ops = [t[2] for t in terms]
    G = np.array([[hs_inner(a, b).real for b in ops] for a in ops])
    M = _lambda_matrix(ops, params, N)
    try:
        w, V = sla.eigh(M, G)
    except np.linalg.LinAlgError as exc:
        raise ProbeError(f"singular Gram matrix: {exc}") from exc
    v = V[:, 0]
    v = v / np.sqrt(v @ G @ v)
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    coeffs = {f: np.full(N - 1 if f == "a" else N, np.nan) for f in "abc"}
    total = PauliSum(N)
    for (fam, i, op), x in zip(terms, v):
        coeffs[fam][i] = x
        total = total + op * x
    return OptimizedMode(coeffs["a"], coeffs["b"], coeffs["c"], float(w[0]), total)


def instant_slopes(lambdas: Mapping[int, float]) -> list[SlopeRecord]:
    """Two-point log-log slopes between consecutive ``N`` values."""
    Ns = sorted(lambdas)
    out = []
    for a, b in zip(Ns, Ns[1:]):
        la, lb = lambdas[a], lambdas[b]
        if la <= 0 or lb <= 0:
            raise ProbeError(f"lambda must be positive, got {la} at N={a} and {lb} at N={b}")
        out.append(SlopeRecord((a, b), (math.log(lb) - math.log(la)) / (math.log(b) - math.log(a))))
    return out


def detect_transition(
    overlaps: Mapping[float, list[OverlapRecord]],
    threshold: float = 0.05,
    interpolate: bool = True,
) -> float | None:
    """First ``h`` where ``max(|overlap_x|, |overlap_z|)`` reaches ``threshold``.

    With ``interpolate`` the crossing is placed linearly between the bracketing grid
    points; otherwise the first grid point at or above the threshold is returned.
    ``None`` if the grid never reaches the threshold.
    """
    hs = sorted(overlaps)
    vals = []
    for h in hs:
        mags = [abs(r.value) for r in overlaps[h] if r.probe.tag in ("magnetization_x", "magnetization_z")]
        if not mags:
            raise ProbeError(f"no magnetization overlaps at h={h}")
        vals.append(max(mags))
    for i, (h, v) in enumerate(zip(hs, vals)):
        if v >= threshold:
            if i == 0 or not interpolate:
                return float(h)
            h0, v0 = hs[i - 1], vals[i - 1]
            return float(h0 + (threshold - v0) / (v - v0) * (h - h0))
    return None


# -- CSV ----------------------------------------------------------------------------


def _csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def overlaps_csv(records: list[OverlapRecord]) -> str:
    return _csv(
        ["g", "h", "N", "probe", "variant", "value"],
        [(r.g, r.h, r.N, r.probe.tag, r.probe.variant, repr(r.value)) for r in records],
    )


def slopes_csv(records: list[SlopeRecord]) -> str:
    return _csv(["N_low", "N_high", "slope"], [(*r.N_pair, repr(r.instant_slope)) for r in records])


def transition_csv(N: int, g: float, threshold: float, h_star: float | None) -> str:
    return _csv(["N", "g", "threshold", "h_star"], [(N, g, threshold, "" if h_star is None else repr(h_star))])
