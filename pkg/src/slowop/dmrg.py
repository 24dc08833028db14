"""One-site DMRG for the slowest-operator quadratic form.

The superoperator ``K = i ad_H`` is real on the Pauli basis and has an MPO of
bond dimension 4 built from the symmetrized and antisymmetrized single-site
products ``S_s = (s P + P s)/2`` and ``A_s = i(s P - P s)/2``::

    i(L_Z L_Z - R_Z R_Z) = 2 (S_Z (x) A_Z + A_Z (x) S_Z),   i(L_f - R_f) = 2 A_f

The form is ``lambda = <v| K^T K |v>``.  For the translation-invariant operator
the cell ``v`` is placed on a window together with shifted copies of itself and
``lambda = sum_d <v_0| K^T K |v_d>``; the local definition is the single term
``d = 0`` plus the boundary bonds.  Side conditions enter as rank-one penalties
``weight * <f|v>^2``.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .exact import LOCAL, TI, SlowestResult
from .ising import IsingParams
from .opmps import LOCAL_GAUGE, TI_GAUGE, OperatorMPS, canonicalize, max_bond_dims
from .pauli import LETTERS, pauli_multiply

log = logging.getLogger(__name__)


DENSE_VECTOR_MAX = 10


class DMRGError(RuntimeError):
    pass


def site_superoperators() -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """``{letter: (S, A)}``, real 4x4 matrices acting on the Pauli index."""
    out = {}
    for s in LETTERS:
        S = np.zeros((4, 4))
        A = np.zeros((4, 4))
        for k, p in enumerate(LETTERS):
            ph1, w1 = pauli_multiply(s, p)
            ph2, w2 = pauli_multiply(p, s)
            assert w1 == w2
            out_k = LETTERS.index(w1)
            S[out_k, k] = ((ph1 + ph2) / 2).real
            A[out_k, k] = (1j * (ph1 - ph2) / 2).real
        out[s] = (S, A)
    return out


_SUPER = site_superoperators()
_EYE4 = np.eye(4)


def commutator_mpo(params: IsingParams, n: int) -> list[np.ndarray]:
    """MPO of ``O -> i[H_open(n), O]``; tensors ``(w_left, w_right, k_out, k_in)``.

    States: 0 completed, 1 bond opened with S, 2 bond opened with A, 3 nothing placed.
    """
    S_z, A_z = _SUPER["Z"]
    A_f = params.h * _SUPER["Z"][1] + params.g * _SUPER["X"][1]
    J = params.zz_coupling
    w = np.zeros((4, 4, 4, 4))
    w[0, 0] = _EYE4
    w[3, 3] = _EYE4
    w[3, 0] = 2 * A_f
    w[3, 1] = 2 * J * S_z
    w[1, 0] = A_z
    w[3, 2] = 2 * J * A_z
    w[2, 0] = S_z
    sites = [w.copy() for _ in range(n)]
    sites[0] = sites[0][3:4]
    sites[-1] = sites[-1][:, 0:1]
    return sites


def mpo_gram(mpo: list[np.ndarray]) -> list[np.ndarray]:
    """``K^T K`` as an MPO (bond dimension squared)."""
    out = []
    for w in mpo:
        a, b = w.shape[:2]
        q = np.einsum("abmk,cdmq->acbdkq", w, w).reshape(a * a, b * b, 4, 4)
        out.append(q)
    return out


def mpo_sum(terms: list[list[np.ndarray]]) -> list[np.ndarray]:
    """Block-diagonal sum of MPOs of equal length with unit boundary bonds."""
    n = len(terms[0])
    if n == 1:
        return [sum(t[0] for t in terms)]
    out = []
    for i in range(n):
        blocks = [t[i] for t in terms]
        if i == 0:
            out.append(np.concatenate(blocks, axis=1))
        elif i == n - 1:
            out.append(np.concatenate(blocks, axis=0))
        else:
            wl = sum(b.shape[0] for b in blocks)
            wr = sum(b.shape[1] for b in blocks)
            w = np.zeros((wl, wr, 4, 4))
            ol = orr = 0
            for b in blocks:
                w[ol : ol + b.shape[0], orr : orr + b.shape[1]] = b
                ol += b.shape[0]
                orr += b.shape[1]
            out.append(w)
    return out


def _single_site_mpo(n: int, site: int, op: np.ndarray) -> list[np.ndarray]:
    out = [_EYE4[None, None].copy() for _ in range(n)]
    out[site] = op[None, None].copy()
    return out


def mpo_to_dense(mpo: list[np.ndarray]) -> np.ndarray:
    acc = mpo[0][0]  # (w, k, q)
    for w in mpo[1:]:
        acc = np.einsum("aKQ,abkq->bKkQq", acc, w)
        b, d1, d2, d3, d4 = acc.shape
        acc = acc.reshape(b, d1 * d2, d3 * d4)
    return acc[0]


@dataclass
class EffectiveForm:
    """Window MPO plus the placement of the cell and its shifted copies.

    The bra cell sits at window positions ``base .. base + N - 1``; the ket cell of
    the shift ``d`` at ``base + d ..``.
    """

    kind: str
    params: IsingParams
    N: int
    mpo: list[np.ndarray]
    base: int
    shifts: list[int]
    gauge: str
    functionals: list[OperatorMPS] = field(default_factory=list)
    weights: list[float] = field(default_factory=list)
    labels: list[str] = field(default_factory=list)

    @property
    def window(self) -> int:
        return len(self.mpo)


def _identity_functional(N: int) -> OperatorMPS:
    t = np.zeros((1, 4, 1))
    t[0, 0, 0] = 1.0
    return OperatorMPS(tuple(t.copy() for _ in range(N)), LOCAL_GAUGE)


def _ti_energy_functional(params: IsingParams, N: int) -> OperatorMPS:
    """Cell functional proportional to ``ntr(H O)``: ``J ZZ.. + h Z.. + g X..``."""
    first = np.zeros((1, 3, 2))
    first[0, 2, 0] = params.h  # Z
    first[0, 0, 0] = params.g  # X
    first[0, 2, 1] = params.zz_coupling
    ts = [first]
    for i in range(1, N):
        t = np.zeros((2, 4, 2 if i < N - 1 else 1))
        t[0, 0, 0] = 1.0
        if i == 1:
            t[1, 3, 0] = 1.0
        ts.append(t)
    if N == 1:
        ts = [first[:, :, :1]]
    return OperatorMPS(tuple(ts), TI_GAUGE)


def build_local_effective(params: IsingParams, N: int, penalty: float = 1.0) -> EffectiveForm:
    if N < 2:
        raise ValueError("DMRG needs N >= 2")
    K = commutator_mpo(params, N)
    _, A_z = _SUPER["Z"]
    boundary = 4 * A_z.T @ A_z
    mpo = mpo_sum([mpo_gram(K), _single_site_mpo(N, 0, boundary), _single_site_mpo(N, N - 1, boundary)])
    return EffectiveForm(
        LOCAL, params, N, mpo, 0, [0], LOCAL_GAUGE, [_identity_functional(N)], [penalty], ["ntr_O"]
    )


def build_ti_effective(params: IsingParams, N: int, penalty: float = 1.0) -> EffectiveForm:
    if N < 2:
        raise ValueError("DMRG needs N >= 2")
    W = 3 * N + 4
    mpo = mpo_gram(commutator_mpo(params, W))
    shifts = list(range(-(N + 1), N + 2))
    func = _ti_energy_functional(params, N)
    return EffectiveForm(TI, params, N, mpo, N + 2, shifts, TI_GAUGE, [func], [penalty], ["ntr_HO"])


# -- contractions -------------------------------------------------------------

_E0 = np.zeros((1, 4, 1))
_E0[0, 0, 0] = 1.0


def _pad(t: np.ndarray) -> np.ndarray:
    if t.shape[1] == 4:
        return t
    out = np.zeros((t.shape[0], 4, t.shape[2]))
    out[:, 1:, :] = t
    return out


def _left_step(L, A, W, B):
    t = np.tensordot(L, A, axes=([0], [0]))  # w c k a2
    t = np.tensordot(t, W, axes=([0, 2], [0, 2]))  # c a2 w2 q
    return np.tensordot(t, B, axes=([0, 3], [0, 1]))  # a2 w2 c2


def _right_step(R, A, W, B):
    t = np.tensordot(B, R, axes=([2], [2]))  # c q a2 w2
    t = np.tensordot(W, t, axes=([1, 3], [3, 1]))  # w k c a2
    return np.tensordot(A, t, axes=([1, 2], [1, 3]))  # a w c


def _hole(L, W, B, R):
    t = np.tensordot(L, B, axes=([2], [0]))  # a w q c2
    t = np.tensordot(t, W, axes=([1, 2], [0, 3]))  # a c2 w2 k
    return np.tensordot(t, R, axes=([1, 2], [2, 1]))  # a k a2


class _Sandwich:
    """Cached environments of ``<bra| MPO |ket_d>`` for every shift ``d``."""

    def __init__(self, form: EffectiveForm, cell: list[np.ndarray]):
        self.form = form
        self.cell = [_pad(t) for t in cell]
        self.left = {d: [np.ones((1, 1, 1))] for d in form.shifts}
        self.right = {d: {form.window - 1: np.ones((1, 1, 1))} for d in form.shifts}

    def bra(self, p):
        i = p - self.form.base
        return self.cell[i] if 0 <= i < self.form.N else _E0

    def ket(self, p, d):
        i = p - self.form.base - d
        return self.cell[i] if 0 <= i < self.form.N else _E0

    def update(self, j: int, tensor: np.ndarray):
        self.cell[j] = _pad(tensor)
        b = self.form.base
        for d in self.form.shifts:
            lo = min(b + j, b + j + d)
            del self.left[d][lo + 1 :]
            hi = max(b + j, b + j + d)
            for p in [p for p in self.right[d] if p < hi]:
                del self.right[d][p]

    def get_left(self, d, p):
        envs = self.left[d]
        while len(envs) <= p:
            q = len(envs) - 1
            envs.append(_left_step(envs[q], self.bra(q), self.form.mpo[q], self.ket(q, d)))
        return envs[p]

    def get_right(self, d, p):
        envs = self.right[d]
        if p in envs:
            return envs[p]
        q = min(k for k in envs if k > p)
        R = envs[q]
        while q > p:
            R = _right_step(R, self.bra(q), self.form.mpo[q], self.ket(q, d))
            q -= 1
            envs[q] = R
        return R

    def matvec(self, j: int, x: np.ndarray) -> np.ndarray:
        """``Phi_j^T M Phi_j x`` (without penalties), ``x`` padded to 4 legs."""
        form = self.form
        pb = form.base + j
        y = np.zeros_like(x)
        for d in form.shifts:
            pk = pb + d
            if pk == pb:
                y += _hole(self.get_left(d, pb), form.mpo[pb], x, self.get_right(d, pb))
            elif pk > pb:
                R = self.get_right(d, pk)
                R = _right_step(R, self.bra(pk), form.mpo[pk], x)
                for q in range(pk - 1, pb, -1):
                    R = _right_step(R, self.bra(q), form.mpo[q], self.ket(q, d))
                y += _hole(self.get_left(d, pb), form.mpo[pb], self.ket(pb, d), R)
            else:
                L = self.get_left(d, pk)
                L = _left_step(L, self.bra(pk), form.mpo[pk], x)
                for q in range(pk + 1, pb):
                    L = _left_step(L, self.bra(q), form.mpo[q], self.ket(q, d))
                y += _hole(L, form.mpo[pb], self.ket(pb, d), self.get_right(d, pb))
        return y

    def value(self) -> float:
        """Full contraction with the current cell (bra == ket)."""
        total = 0.0
        for d in self.form.shifts:
            L = np.ones((1, 1, 1))
            for p in range(self.form.window):
                L = _left_step(L, self.bra(p), self.form.mpo[p], self.ket(p, d))
            total += float(L[0, 0, 0])
        return total


def _functional_hole(cell: list[np.ndarray], f: OperatorMPS, j: int) -> np.ndarray:
    """``Phi_j^T f``: the overlap of ``f`` with the cell, site ``j`` left open."""
    ft = f.padded_tensors()
    cell = [_pad(t) for t in cell]
    L = np.ones((1, 1))
    for i in range(j):
        L = np.einsum("ab,akc,bkd->cd", L, cell[i], ft[i])
    R = np.ones((1, 1))
    for i in range(len(cell) - 1, j, -1):
        R = np.einsum("akc,bkd,cd->ab", cell[i], ft[i], R)
    return np.einsum("ab,bkd,cd->akc", L, ft[j], R)


def form_value(form: EffectiveForm, m: OperatorMPS, with_penalty: bool = False) -> float:
    """Quadratic form on an MPS (not assumed normalized)."""
    sw = _Sandwich(form, list(m.tensors))
    val = sw.value()
    if with_penalty:
        for wgt, f in zip(form.weights, form.functionals):
            val += wgt * _overlap_padded(m, f) ** 2
    return val


def _overlap_padded(m: OperatorMPS, f: OperatorMPS) -> float:
    env = np.ones((1, 1))
    for x, y in zip(m.padded_tensors(), f.padded_tensors()):
        env = np.einsum("ab,akc,bkd->cd", env, x, y)
    return float(env[0, 0])


# -- sweeping -------------------------------------------------------------------


@dataclass
class SweepSchedule:
    bond_dims: list[int]
    inner_tol: float = 1e-7
    outer_tol: float = 5e-3
    max_sweeps: int = 100
    abs_floor: float = 1e-10
    noise: float = 1e-3
    max_restarts: int = 50  # Lanczos restarts (24 vectors each) per local solve

    def __post_init__(self):
        if not self.bond_dims or any(b <= a for a, b in zip(self.bond_dims, self.bond_dims[1:])):
            raise ValueError("bond_dims must be a non-empty strictly increasing list")
        if self.inner_tol <= 0 or self.outer_tol <= 0:
            raise ValueError("tolerances must be positive")

    @classmethod
    def local_default(cls) -> "SweepSchedule":
        return cls([8, 16, 32, 64, 128, 256, 512, 1024], inner_tol=1e-7)

    @classmethod
    def ti_default(cls) -> "SweepSchedule":
        return cls([64, 128, 256, 512, 1024], inner_tol=1e-4)


@dataclass
class DMRGRun:
    result: SlowestResult
    mps: OperatorMPS
    log_rows: list[dict] = field(default_factory=list)
    converged: bool = True

    def log_csv(self) -> str:
        buf = io.StringIO()
        if self.log_rows:
            writer = csv.DictWriter(buf, fieldnames=list(self.log_rows[0]))
            writer.writeheader()
            writer.writerows(self.log_rows)
        return buf.getvalue()


def _local_eigh(matvec, x0: np.ndarray, tol: float, krylov: int = 24, restarts: int = 50):
    """Lowest eigenpair by restarted Lanczos from the warm start ``x0``."""
    n = x0.size
    if n <= 16:
        H = np.column_stack([matvec(e) for e in np.eye(n)])
        w, V = sla.eigh(0.5 * (H + H.T), subset_by_index=[0, 0])
        return float(w[0]), V[:, 0]
    x = x0 / np.linalg.norm(x0)
    theta = np.nan
    for _ in range(restarts):
        basis = [x]
        alphas, betas = [], []
        w = matvec(x)
        converged = False
        for k in range(min(krylov, n)):
            alpha = float(basis[k] @ w)
            alphas.append(alpha)
            w = w - alpha * basis[k] - (betas[-1] * basis[k - 1] if k else 0.0)
            Q = np.array(basis)
            w = w - Q.T @ (Q @ w)
            beta = float(np.linalg.norm(w))
            T = np.diag(alphas) + np.diag(betas, 1) + np.diag(betas, -1)
            evals, evecs = np.linalg.eigh(T)
            theta = float(evals[0])
            resid = abs(beta * evecs[-1, 0])
            if resid <= tol * max(1.0, abs(theta)) or beta < 1e-14 or k == n - 1:
                converged = True
                break
            betas.append(beta)
            basis.append(w / beta)
            w = matvec(basis[-1])
        x = np.array(basis[: len(alphas)]).T @ evecs[:, 0]
        x /= np.linalg.norm(x)
        if converged:
            break
    return theta, x


def _grow(m: OperatorMPS, D: int, rng: np.random.Generator, noise: float) -> OperatorMPS:
    """Pad bonds up to ``min(D, max useful)`` with small random entries."""
    target = [1] + max_bond_dims(m.N, D, m.gauge) + [1]
    ts = []
    for i, t in enumerate(m.tensors):
        a, d, b = t.shape
        new = noise * rng.standard_normal((max(a, target[i]), d, max(b, target[i + 1])))
        new[:a, :, :b] += t
        ts.append(new)
    out = canonicalize(OperatorMPS(tuple(ts), m.gauge), 0)
    first = out.tensors[0]
    return out.scaled(1.0 / np.linalg.norm(first))


class _Engine:
    def __init__(self, form: EffectiveForm, mps: OperatorMPS, eig_tol: float, restarts: int = 50):
        self.form = form
        self.mps = mps
        self.eig_tol = eig_tol
        self.restarts = restarts
        self.sandwich = _Sandwich(form, list(mps.tensors))

    def _local_step(self, ts: list[np.ndarray], j: int) -> tuple[float, np.ndarray]:
        shape = ts[j].shape
        first_ti = shape[1] == 3
        fholes = [_functional_hole(ts, f, j) for f in self.form.functionals]

        def matvec(xflat):
            x = xflat.reshape(shape)
            y = self.sandwich.matvec(j, _pad(x))
            if first_ti:
                y = y[:, 1:, :]
            for wgt, F in zip(self.form.weights, fholes):
                F = F[:, 1:, :] if first_ti and F.shape[1] == 4 else F
                y = y + wgt * np.sum(F * x) * F
            return y.ravel()

        x0 = ts[j].ravel()
        x0 = x0 / np.linalg.norm(x0)
        e, v = _local_eigh(matvec, x0, self.eig_tol, restarts=self.restarts)
        return e, v.reshape(shape)

    def sweep(self) -> float:
        ts = list(self.mps.tensors)
        N = len(ts)
        e = np.nan
        order = list(range(N - 1)) + list(range(N - 1, 0, -1))
        direction = [+1] * (N - 1) + [-1] * (N - 1)
        if N == 1:
            order, direction = [0], [0]
        for j, step in zip(order, direction):
            e, x = self._local_step(ts, j)
            a, d, b = x.shape
            if step > 0:
                q, r = np.linalg.qr(x.reshape(a * d, b))
                ts[j] = q.reshape(a, d, -1)
                ts[j + 1] = np.einsum("ab,bkc->akc", r, ts[j + 1])
                self.sandwich.update(j, ts[j])
                self.sandwich.update(j + 1, ts[j + 1])
            elif step < 0:
                q, r = np.linalg.qr(x.reshape(a, d * b).T)
                ts[j] = q.T.reshape(-1, d, b)
                ts[j - 1] = np.einsum("akb,cb->akc", ts[j - 1], r)
                self.sandwich.update(j, ts[j])
                self.sandwich.update(j - 1, ts[j - 1])
            else:
                ts[j] = x
                self.sandwich.update(j, x)
        self.mps = OperatorMPS(tuple(ts), self.mps.gauge)
        return e


def minimize(
    form: EffectiveForm,
    schedule: SweepSchedule,
    seed: int = 0,
    adaptive_penalty: bool = True,
    penalty_tol: float | None = None,
    initial: OperatorMPS | None = None,
) -> DMRGRun:
    """Grow the bond dimension along ``schedule`` and sweep until converged at each step."""
    from .opmps import random_mps

    rng = np.random.default_rng(seed)
    gauge = form.gauge
    D0 = schedule.bond_dims[0]
    mps = initial if initial is not None else random_mps(form.N, D0, rng, gauge)
    penalty_tol = penalty_tol if penalty_tol is not None else (1e-8 if form.kind == LOCAL else 1e-6)
    rows = []
    start = time.perf_counter()
    prev_final = None
    lam = np.nan
    converged = True
    sweep_no = 0
    saturation = max(max_bond_dims(form.N, 10**9, gauge) or [1])
    eig_tol = min(1e-6, np.sqrt(schedule.inner_tol) * 1e-2)
    for D in schedule.bond_dims:
        mps = _grow(mps, D, rng, schedule.noise) if D != D0 or initial is not None else mps
        for attempt in range(4):
            if adaptive_penalty:
                est = form_value(form, mps) / max(mps.norm() ** 2, 1e-300)
                form.weights = [max(w, 10.0 * (est + 1.0)) for w in form.weights]
            engine = _Engine(form, mps, 1e-2, schedule.max_restarts)
            last = None
            ok = False
            for _ in range(schedule.max_sweeps):
                engine.sweep()
                sweep_no += 1
                mps = engine.mps
                nrm2 = mps.norm() ** 2
                lam = form_value(form, mps) / nrm2
                res = {lab: abs(_overlap_padded(mps, f)) / np.sqrt(nrm2) for lab, f in zip(form.labels, form.functionals)}
                rows.append({"sweep": sweep_no, "bond_dim": D, "lambda": lam, **res})
                log.debug("D=%d sweep %d lambda=%.12g %s", D, sweep_no, lam, res)
                if last is not None and last - lam < -10 * schedule.inner_tol * max(abs(lam), schedule.abs_floor):
                    log.warning("lambda increased across a sweep: %.3e -> %.3e", last, lam)
                if last is not None and abs(last - lam) <= schedule.inner_tol * max(abs(lam), schedule.abs_floor):
                    if engine.eig_tol <= eig_tol:
                        ok = True
                        break
                # local solves only need to be as tight as the sweep-to-sweep change
                change = abs(last - lam) / max(abs(lam), schedule.abs_floor) if last is not None else 1.0
                engine.eig_tol = max(eig_tol, min(engine.eig_tol, 0.1 * change))
                last = lam
            if not ok:
                converged = False
                log.warning("no convergence at D=%d within %d sweeps", D, schedule.max_sweeps)
            worst = max(res.values()) if res else 0.0
            if worst <= penalty_tol or not adaptive_penalty:
                break
            form.weights = [10 * w for w in form.weights]
            log.info("penalty residual %.2e above %.1e, weights -> %s", worst, penalty_tol, form.weights)
        if prev_final is not None:
            rel = abs(prev_final - lam) / max(abs(lam), schedule.abs_floor)
            if rel < schedule.outer_tol:
                break
        prev_final = lam
        if D >= saturation:
            break
    mps = mps.scaled(1.0 / mps.norm())
    lam = form_value(form, mps)
    residuals = {lab: abs(_overlap_padded(mps, f)) for lab, f in zip(form.labels, form.functionals)}
    residuals["wall_time"] = time.perf_counter() - start
    vec = mps.to_vector() if mps.N <= DENSE_VECTOR_MAX else None
    if vec is not None and vec.coeffs[np.argmax(np.abs(vec.coeffs))] < 0:
        mps = mps.scaled(-1.0)
        vec = mps.to_vector()
    result = SlowestResult(
        lam=lam,
        vector=vec,
        definition=form.kind,
        params=form.params,
        N=form.N,
        residuals=residuals,
    )
    return DMRGRun(result, mps, rows, converged)
