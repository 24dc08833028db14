"""Exact minimization of ``lambda(O) = ntr([H,O]^dagger [H,O])`` over Pauli coefficients.

The functional is a real quadratic form on the coefficient vector of a Hermitian
operator.  It is assembled column by column from ``i[A, P]`` (real for Hermitian
``A`` and Pauli string ``P``) and minimized on the constrained subspace.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .ising import IsingParams, build_h_loc, build_hamiltonian
from .pauli import (
    OperatorVector,
    PauliSum,
    commutator,
    embed,
    index_to_letters,
    letters_from_xz,
    letters_to_index,
    product_arrays,
    xz_from_letters,
)

log = logging.getLogger(__name__)

LOCAL_CAP = 8
TI_CAP = 7
DENSE_EIGH_MAX = 1024

LOCAL = "local"
TI = "translation_invariant"


class SolverError(RuntimeError):
    pass


@dataclass
class QuadraticForm:
    """``v^T matrix v`` over the basis strings ``basis`` (canonical indices on ``N`` sites).

    ``constraints`` are unit vectors (in basis coordinates) whose directions are
    projected out before the eigensolve.
    """

    N: int
    params: IsingParams
    definition: str
    basis: np.ndarray
    matrix: sp.csr_matrix
    constraints: list[np.ndarray] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return len(self.basis)

    def value(self, v: np.ndarray) -> float:
        return float(v @ (self.matrix @ v))

    def full_vector(self, v: np.ndarray) -> OperatorVector:
        full = np.zeros(4**self.N)
        full[self.basis] = v
        return OperatorVector(self.N, full)

    def basis_vector(self, ov: OperatorVector) -> np.ndarray:
        return ov.coeffs[self.basis]


@dataclass
class SlowestResult:
    lam: float
    vector: OperatorVector
    definition: str
    params: IsingParams
    N: int
    residuals: dict[str, float] = field(default_factory=dict)
    gap: float = float("nan")
    degenerate: bool = False

    def operator(self) -> PauliSum:
        """The ``N``-site operator (local) or the single cell ``O_0`` (TI)."""
        return self.vector.to_pauli_sum()

    def on_chain(self, L: int) -> PauliSum:
        """Unit-norm operator on a periodic ``L``-site chain, window starting at site 0."""
        cell = embed(self.operator(), L, 0, periodic=True)
        if self.definition == LOCAL:
            return cell
        total = PauliSum(L)
        for i in range(L):
            total = total + cell.shift(i)
        return total / np.sqrt(L)

    def to_json(self) -> str:
        ps = self.operator()
        coeffs = [(w, float(c.real)) for w, c in ps.terms().items() if abs(c) > 1e-12]
        return json.dumps(
            {
                "definition": self.definition,
                "g": self.params.g,
                "h": self.params.h,
                "N": self.N,
                "lambda": self.lam,
                "residuals": self.residuals,
                "gap": self.gap,
                "degenerate": self.degenerate,
                "coeffs": coeffs,
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "SlowestResult":
        data = json.loads(text)
        N = data["N"]
        ps = PauliSum.from_terms(N, [(c, w) for w, c in data["coeffs"]])
        return cls(
            lam=data["lambda"],
            vector=ps.to_vector(),
            definition=data["definition"],
            params=IsingParams(data["g"], data["h"]),
            N=N,
            residuals=data.get("residuals", {}),
            gap=data.get("gap", float("nan")),
            degenerate=data.get("degenerate", False),
        )


def commutator_matrix(A: PauliSum, basis: np.ndarray, N: int, offset: int) -> sp.csr_matrix:
    """Real matrix of ``P -> i[A, P]`` from ``N``-site basis strings to ``A.n``-site strings.

    Basis strings are embedded at ``offset``; rows are canonical indices on ``A.n`` sites.
    """
    n_out = A.n
    bx, bz = xz_from_letters(index_to_letters(basis, N))
    bx = bx << np.uint64(offset)
    bz = bz << np.uint64(offset)
    rows, cols, vals = [], [], []
    col_ids = np.arange(len(basis))
    for ax, az, ac in zip(A.x, A.z, A.coeffs):
        anti = (np.bitwise_count(ax & bz) + np.bitwise_count(az & bx)) & 1
        sel = np.nonzero(anti)[0]
        if len(sel) == 0:
            continue
        e, x, z = product_arrays(ax, az, bx[sel], bz[sel])
        # i * (AP - PA) = 2i * AP for anticommuting strings; i * 2 * ac * i**e
        val = (2j * ac * (1j ** e)).real
        rows.append(letters_to_index(letters_from_xz(x, z, n_out)))
        cols.append(col_ids[sel])
        vals.append(val)
    if not rows:
        return sp.csr_matrix((4**n_out, len(basis)))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(4**n_out, len(basis)),
    )


def local_form(params: IsingParams, N: int, cap: int = LOCAL_CAP) -> QuadraticForm:
    """Window term ``[H_loc, O]`` plus the two boundary bonds, reduced to ``[Z_0, O]`` and ``[Z_{N-1}, O]``.

    The identity string is a zero mode and is left out of the basis.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if N > cap:
        raise SolverError(f"local exact solver capped at N={cap}, got {N}")
    basis = np.arange(1, 4**N)
    mats = [commutator_matrix(build_h_loc(params, N), basis, N, 0)]
    for site in sorted({0, N - 1}):
        z_site = PauliSum.site_op("Z", site, N)
        c = commutator_matrix(z_site, basis, N, 0)
        mats.append(c)
        if N == 1:
            mats.append(c)  # both boundary bonds act on the single site
    matrix = sum((c.T @ c for c in mats), sp.csr_matrix((len(basis), len(basis))))
    return QuadraticForm(N, params, LOCAL, basis, sp.csr_matrix(matrix))


def ti_form(params: IsingParams, N: int, cap: int = TI_CAP) -> QuadraticForm:
    """Form for ``O = sum_i shift_i(O_0)`` per unit cell norm, on an infinite chain.

    ``O_0`` has a non-identity first letter.  Contributions
    ``ntr(X_0 X_d)`` with ``X = i[H, O_0]`` are summed over relative shifts
    ``|d| <= N + 1``; each ``X`` lives on the ``N + 2`` sites around the cell.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if N > cap:
        raise SolverError(f"TI exact solver capped at N={cap}, got {N}")
    basis = np.arange(4 ** (N - 1), 4**N)
    W = N + 2
    C = commutator_matrix(build_hamiltonian(params, W, periodic=False), basis, N, 1).tocsr()
    matrix = (C.T @ C).tocsr()
    nz = np.unique(C.nonzero()[0])
    for d in range(1, N + 2):
        step = 4**d
        s = nz[nz % step == 0]
        if len(s) == 0:
            continue
        md = C[s // step].T @ C[s]
        matrix = matrix + md + md.T
    constraint = _ti_energy_functional(params, N, basis)
    constraints = [constraint / np.linalg.norm(constraint)] if np.any(constraint) else []
    return QuadraticForm(N, params, TI, basis, sp.csr_matrix(matrix), constraints)


def _ti_energy_functional(params: IsingParams, N: int, basis: np.ndarray) -> np.ndarray:
    """Coefficients ``c`` with ``c @ v`` proportional to ``ntr(H O)`` for a TI operator."""
    cell_h = PauliSum.from_terms(
        N,
        [(params.h, "Z" + "I" * (N - 1)), (params.g, "X" + "I" * (N - 1))]
        + ([(params.zz_coupling, "ZZ" + "I" * (N - 2))] if N >= 2 else []),
    )
    full = cell_h.to_vector().coeffs
    return full[basis]


def _householder(c: np.ndarray) -> np.ndarray:
    """Unit ``u`` such that ``I - 2uu^T`` maps ``c`` to ``+-e_0``."""
    u = c.copy()
    u[0] += np.copysign(1.0, c[0] if c[0] != 0 else 1.0)
    return u / np.linalg.norm(u)


def _reduced_operator(form: QuadraticForm):
    """Operator on the constraint complement, with maps in and out of basis coordinates."""
    M = form.matrix
    n = form.dim
    us = [_householder(c) for c in form.constraints]
    if len(us) > 1:
        raise SolverError("at most one linear constraint is supported")
    if not us:
        return n, (lambda x: M @ x), (lambda y: y), M
    u = us[0]

    def lift(y):
        y = np.atleast_1d(y)
        x = np.concatenate([np.zeros((1,) + y.shape[1:]), y])
        return x - 2 * np.outer(u, u @ x).reshape(x.shape)

    def drop(x):
        x = x - 2 * np.outer(u, u @ x).reshape(x.shape)
        return x[1:]

    return n - 1, (lambda y: drop(M @ lift(y))), lift, None


def solve(form: QuadraticForm, seed: int = 0, tol: float = 1e-12) -> SlowestResult:
    """Smallest eigenpair of the form on its constrained subspace."""
    n, matvec, lift, M = _reduced_operator(form)
    if n <= DENSE_EIGH_MAX:
        if M is not None:
            dense = M.toarray()
        else:
            dense = matvec(np.eye(n))
        dense = 0.5 * (dense + dense.T)
        k = min(2, n)
        w, V = sla.eigh(dense, subset_by_index=[0, k - 1])
    else:
        op = spla.LinearOperator((n, n), matvec=matvec, dtype=float)
        rng = np.random.default_rng(seed)
        w, V = _smallest_sparse(op, n, rng, tol)
    y = V[:, 0]
    v = lift(y)
    v = v / np.linalg.norm(v)
    v = _fix_sign(v)
    lam = form.value(v)
    resid = float(np.linalg.norm(form.matrix @ v - lam * v - _constraint_part(form, v, lam)))
    gap = float(w[1] - w[0]) if len(w) > 1 else float("inf")
    scale = max(1.0, abs(float(w[-1])))
    residuals = {"eigen": resid}
    if form.definition == TI and form.constraints:
        residuals["ntr_HO"] = float(abs(form.constraints[0] @ v))
    else:
        residuals["ntr_O"] = 0.0
    return SlowestResult(
        lam=max(lam, 0.0) if lam > -1e-10 else lam,
        vector=form.full_vector(v),
        definition=form.definition,
        params=form.params,
        N=form.N,
        residuals=residuals,
        gap=gap,
        degenerate=gap < 1e-10 * scale,
    )


def _constraint_part(form: QuadraticForm, v: np.ndarray, lam: float) -> np.ndarray:
    """Component of ``Mv - lam v`` along the constraint directions (a Lagrange term)."""
    r = form.matrix @ v - lam * v
    out = np.zeros_like(v)
    for c in form.constraints:
        out += c * (c @ r)
    return out


def _smallest_sparse(op, n: int, rng, tol: float):
    v0 = rng.standard_normal(n)
    try:
        w, V = spla.eigsh(op, k=2, which="SA", v0=v0, tol=tol, maxiter=20 * n)
    except spla.ArpackNoConvergence as exc:
        raise SolverError(f"eigensolver did not converge: {exc}") from exc
    order = np.argsort(w)
    return w[order], V[:, order]


def _fix_sign(v: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(v)))
    return -v if v[i] < 0 else v


def find_local(params: IsingParams, N: int, **kw) -> SlowestResult:
    return solve(local_form(params, N), **kw)


def find_ti(params: IsingParams, N: int, **kw) -> SlowestResult:
    return solve(ti_form(params, N), **kw)


def evaluate_lambda(O: PauliSum, params: IsingParams, L: int | None = None) -> float:
    """``ntr([H,O]^dagger [H,O])`` on a periodic ``L``-site chain by direct expansion.

    ``O`` must already live on ``L`` sites (or ``L`` is taken as ``O.n``).
    """
    L = O.n if L is None else L
    if O.n != L:
        raise ValueError(f"operator has {O.n} sites, chain has {L}")
    X = commutator(build_hamiltonian(params, L, periodic=True), O)
    return float(hs_norm2(X))


def hs_norm2(X: PauliSum) -> float:
    return float(np.sum(np.abs(X.coeffs) ** 2))
