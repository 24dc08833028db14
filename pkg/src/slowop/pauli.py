"""Pauli-string algebra on finite windows of a spin-1/2 chain.

Strings are held in symplectic form: an ``x`` bitmask and a ``z`` bitmask,
bit ``i`` referring to site ``i``.  The represented string is
``i**popcount(x & z) * X**x Z**z``, so ``Y = i X Z`` and every string is
Hermitian.  Externally strings are spelled as words over ``IXYZ``, site 0 first.

All inner products use the normalized trace ``ntr(A) = Tr(A) / 2**n`` under
which Pauli strings are orthonormal and identity padding is an isometry.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

LETTERS = "IXYZ"
MAX_SITES = 32
DENSE_CAP = 14
_ZERO_TOL = 1e-14

# letter code (I=0, X=1, Y=2, Z=3) <-> symplectic bits
_LETTER_X = np.array([0, 1, 1, 0], dtype=np.uint64)
_LETTER_Z = np.array([0, 0, 1, 1], dtype=np.uint64)
_BITS_TO_LETTER = np.array([0, 1, 3, 2], dtype=np.int64)  # index x + 2z

_I_POW = np.array([1, 1j, -1, -1j], dtype=complex)


class PauliError(ValueError):
    """Raised for malformed words, size mismatches and out-of-range embeddings."""


def word_to_xz(word: str) -> tuple[int, int]:
    x = z = 0
    for i, ch in enumerate(word):
        try:
            code = LETTERS.index(ch)
        except ValueError:
            raise PauliError(f"invalid Pauli letter {ch!r} in {word!r}") from None
        x |= int(_LETTER_X[code]) << i
        z |= int(_LETTER_Z[code]) << i
    return x, z


def xz_to_word(x: int, z: int, n: int) -> str:
    return "".join(LETTERS[_BITS_TO_LETTER[((x >> i) & 1) + 2 * ((z >> i) & 1)]] for i in range(n))


def letters_from_xz(x: np.ndarray, z: np.ndarray, n: int) -> np.ndarray:
    """Letter codes, shape ``(len(x), n)``, column ``i`` being site ``i``."""
    x = np.asarray(x, dtype=np.uint64)
    z = np.asarray(z, dtype=np.uint64)
    shifts = np.arange(n, dtype=np.uint64)
    xb = (x[:, None] >> shifts) & np.uint64(1)
    zb = (z[:, None] >> shifts) & np.uint64(1)
    return _BITS_TO_LETTER[(xb + 2 * zb).astype(np.int64)]


def xz_from_letters(letters: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    letters = np.atleast_2d(np.asarray(letters, dtype=np.int64))
    n = letters.shape[1]
    weights = np.left_shift(np.uint64(1), np.arange(n, dtype=np.uint64))
    x = (_LETTER_X[letters] * weights).sum(axis=1, dtype=np.uint64)
    z = (_LETTER_Z[letters] * weights).sum(axis=1, dtype=np.uint64)
    return x, z


def index_to_letters(index: np.ndarray, n: int) -> np.ndarray:
    """Canonical index -> letter codes; site 0 is the most significant base-4 digit."""
    index = np.asarray(index, dtype=np.int64)
    powers = 4 ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return (index[:, None] // powers) % 4


def letters_to_index(letters: np.ndarray) -> np.ndarray:
    letters = np.atleast_2d(np.asarray(letters, dtype=np.int64))
    n = letters.shape[1]
    powers = 4 ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return letters @ powers


def _popcount(a: np.ndarray) -> np.ndarray:
    return np.bitwise_count(a).astype(np.int64)


def product_arrays(x1, z1, x2, z2):
    """Elementwise string products: returns ``(phase_exponent, x, z)`` with phase ``i**e``."""
    x = x1 ^ x2
    z = z1 ^ z2
    e = _popcount(x1 & z1) + _popcount(x2 & z2) - _popcount(x & z) + 2 * _popcount(z1 & x2)
    return e % 4, x, z


def pauli_multiply(a: str, b: str) -> tuple[complex, str]:
    """Product of two Pauli words as ``(phase, word)`` with ``phase`` in {1, -1, i, -i}.

    >>> pauli_multiply("X", "Y")
    (1j, 'Z')
    """
    if len(a) != len(b):
        raise PauliError(f"length mismatch: {len(a)} vs {len(b)}")
    xa, za = word_to_xz(a)
    xb, zb = word_to_xz(b)
    arr = lambda v: np.array([v], dtype=np.uint64)  # noqa: E731
    e, x, z = product_arrays(arr(xa), arr(za), arr(xb), arr(zb))
    return complex(_I_POW[e[0]]), xz_to_word(int(x[0]), int(z[0]), len(a))


def _aggregate(x: np.ndarray, z: np.ndarray, c: np.ndarray):
    """Sum coefficients of repeated strings and drop (numerical) zeros."""
    if len(c) == 0:
        return x, z, c
    key = (x.astype(np.uint64) << np.uint64(32)) | z.astype(np.uint64)
    uniq, inv = np.unique(key, return_inverse=True)
    summed = np.zeros(len(uniq), dtype=complex)
    np.add.at(summed, inv, c)
    keep = np.abs(summed) > _ZERO_TOL
    uniq = uniq[keep]
    return uniq >> np.uint64(32), uniq & np.uint64(0xFFFFFFFF), summed[keep]


class PauliSum:
    """A linear combination of Pauli strings on ``n`` sites.

    Values are immutable; arithmetic returns new sums.  Terms are kept sorted by
    their packed key, which makes equal sums compare and serialize identically.
    """

    __slots__ = ("n", "_x", "_z", "_c")

    def __init__(self, n: int, x=(), z=(), coeffs=(), *, _clean: bool = False):
        if not 0 <= n <= MAX_SITES:
            raise PauliError(f"window size {n} outside 0..{MAX_SITES}")
        self.n = int(n)
        x = np.asarray(x, dtype=np.uint64).ravel()
        z = np.asarray(z, dtype=np.uint64).ravel()
        c = np.asarray(coeffs, dtype=complex).ravel()
        if not _clean:
            x, z, c = _aggregate(x, z, c)
        self._x, self._z, self._c = x, z, c
        for arr in (self._x, self._z, self._c):
            arr.setflags(write=False)

    # -- construction -------------------------------------------------------
    @classmethod
    def from_terms(cls, n: int, terms: Iterable[tuple[complex, str]]) -> "PauliSum":
        xs, zs, cs = [], [], []
        for coeff, word in terms:
            if len(word) != n:
                raise PauliError(f"word {word!r} does not have length {n}")
            x, z = word_to_xz(word)
            xs.append(x)
            zs.append(z)
            cs.append(coeff)
        return cls(n, xs, zs, cs)

    @classmethod
    def from_dict(cls, terms: Mapping[str, complex]) -> "PauliSum":
        words = list(terms)
        if not words:
            raise PauliError("cannot infer window size from an empty mapping")
        return cls.from_terms(len(words[0]), ((terms[w], w) for w in words))

    @classmethod
    def single(cls, word: str, coeff: complex = 1.0) -> "PauliSum":
        return cls.from_terms(len(word), [(coeff, word)])

    @classmethod
    def zero(cls, n: int) -> "PauliSum":
        return cls(n)

    @classmethod
    def identity(cls, n: int) -> "PauliSum":
        return cls(n, [0], [0], [1.0])

    @classmethod
    def site_op(cls, letter: str, site: int, n: int, coeff: complex = 1.0) -> "PauliSum":
        word = ["I"] * n
        word[site] = letter
        return cls.single("".join(word), coeff)

    # -- accessors ----------------------------------------------------------
    @property
    def x(self) -> np.ndarray:
        return self._x

    @property
    def z(self) -> np.ndarray:
        return self._z

    @property
    def coeffs(self) -> np.ndarray:
        return self._c

    def __len__(self) -> int:
        return len(self._c)

    def words(self) -> list[str]:
        return [xz_to_word(int(a), int(b), self.n) for a, b in zip(self._x, self._z)]

    def terms(self) -> dict[str, complex]:
        return dict(zip(self.words(), (complex(c) for c in self._c)))

    def coeff(self, word: str) -> complex:
        x, z = word_to_xz(word)
        hit = (self._x == x) & (self._z == z)
        return complex(self._c[hit][0]) if hit.any() else 0.0

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self._c.imag) <= tol))

    def support(self) -> list[int]:
        mask = int(np.bitwise_or.reduce(self._x | self._z)) if len(self) else 0
        return [i for i in range(self.n) if (mask >> i) & 1]

    def __repr__(self) -> str:
        body = " + ".join(f"({c:.6g}){w}" for w, c in list(self.terms().items())[:6])
        more = "" if len(self) <= 6 else f" + ... ({len(self)} terms)"
        return f"PauliSum(n={self.n}: {body or '0'}{more})"

    # -- arithmetic ---------------------------------------------------------
    def _check(self, other: "PauliSum") -> None:
        if not isinstance(other, PauliSum):
            raise TypeError(f"expected PauliSum, got {type(other).__name__}")
        if other.n != self.n:
            raise PauliError(f"window size mismatch: {self.n} vs {other.n}")

    def __add__(self, other: "PauliSum") -> "PauliSum":
        self._check(other)
        return PauliSum(
            self.n,
            np.concatenate([self._x, other._x]),
            np.concatenate([self._z, other._z]),
            np.concatenate([self._c, other._c]),
        )

    def __neg__(self) -> "PauliSum":
        return PauliSum(self.n, self._x, self._z, -self._c, _clean=True)

    def __sub__(self, other: "PauliSum") -> "PauliSum":
        return self + (-other)

    def __mul__(self, scalar) -> "PauliSum":
        if isinstance(scalar, PauliSum):
            return self @ scalar
        if scalar == 0:
            return PauliSum(self.n)
        return PauliSum(self.n, self._x, self._z, self._c * scalar, _clean=True)

    __rmul__ = __mul__

    def __truediv__(self, scalar) -> "PauliSum":
        return self * (1.0 / scalar)

    def __matmul__(self, other: "PauliSum") -> "PauliSum":
        """Operator product, expanded term by term."""
        self._check(other)
        return _product(self, other, commutator=False)

    def dagger(self) -> "PauliSum":
        return PauliSum(self.n, self._x, self._z, self._c.conj(), _clean=True)

    def real(self) -> "PauliSum":
        return PauliSum(self.n, self._x, self._z, self._c.real)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self._c) ** 2)))

    def normalized(self) -> "PauliSum":
        nrm = self.norm()
        if nrm == 0:
            raise PauliError("cannot normalize the zero operator")
        return self / nrm

    def ntr(self) -> complex:
        """Normalized trace: the identity coefficient."""
        hit = (self._x == 0) & (self._z == 0)
        return complex(self._c[hit][0]) if hit.any() else 0.0

    def allclose(self, other: "PauliSum", atol: float = 1e-12) -> bool:
        diff = self - other
        return bool(np.all(np.abs(diff.coeffs) <= atol))

    def shift(self, k: int) -> "PauliSum":
        """Cyclic translation by ``k`` sites on an ``n``-site ring."""
        n = self.n
        k %= n
        if k == 0 or n == 0:
            return self
        full = np.uint64((1 << n) - 1)
        rot = lambda m: ((m << np.uint64(k)) | (m >> np.uint64(n - k))) & full  # noqa: E731
        return PauliSum(n, rot(self._x), rot(self._z), self._c)

    # -- conversions --------------------------------------------------------
    def to_dense(self, cap: int = DENSE_CAP) -> np.ndarray:
        return self.to_sparse(cap).toarray()

    def to_sparse(self, cap: int = DENSE_CAP) -> sp.csr_matrix:
        """Matrix in the computational basis, site 0 as the most significant bit."""
        n = self.n
        if n > cap:
            raise PauliError(f"{n} sites exceeds the dense cap of {cap}")
        dim = 1 << n
        if len(self) == 0:
            return sp.csr_matrix((dim, dim), dtype=complex)
        xm = _reverse_bits(self._x, n)
        zm = _reverse_bits(self._z, n)
        pref = self._c * _I_POW[_popcount(self._x & self._z) % 4]
        basis = np.arange(dim, dtype=np.uint64)
        rows, cols, vals = [], [], []
        for xval in np.unique(xm):
            sel = np.nonzero(xm == xval)[0]
            diag = np.zeros(dim, dtype=complex)
            for chunk in np.array_split(sel, max(1, len(sel) * dim // 4_000_000 + 1)):
                if len(chunk) == 0:
                    continue
                signs = 1 - 2 * (_popcount(zm[chunk][:, None] & basis[None, :]) & 1)
                diag += pref[chunk] @ signs
            rows.append((basis ^ xval).astype(np.int64))
            cols.append(basis.astype(np.int64))
            vals.append(diag)
        mat = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
        )
        return mat.tocsr()

    def to_vector(self) -> "OperatorVector":
        if not self.is_hermitian():
            raise PauliError("only Hermitian sums have a real coefficient vector")
        coeffs = np.zeros(4**self.n)
        idx = letters_to_index(letters_from_xz(self._x, self._z, self.n)) if len(self) else []
        coeffs[idx] = self._c.real
        return OperatorVector(self.n, coeffs)

    def to_text(self) -> str:
        lines = []
        for w, c in self.terms().items():
            if c.imag == 0:
                lines.append(f"{c.real!r} {w}")
            else:
                lines.append(f"{c.real!r}{c.imag:+.17g}i {w}")
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_text(cls, text: str, n: int | None = None) -> "PauliSum":
        terms = []
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                num, word = line.split()
            except ValueError:
                raise PauliError(f"malformed term line {raw!r}") from None
            terms.append((_parse_complex(num), word))
        if n is None:
            if not terms:
                raise PauliError("empty Pauli-sum text needs an explicit window size")
            n = len(terms[0][1])
        return cls.from_terms(n, terms)


_NUM = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_COMPLEX_RE = re.compile(rf"^({_NUM})(?:([+-](?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)i)?$")


def _parse_complex(text: str) -> complex:
    m = _COMPLEX_RE.match(text)
    if not m:
        raise PauliError(f"malformed coefficient {text!r}")
    return complex(float(m.group(1)), float(m.group(2) or 0.0))


def _reverse_bits(m: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros_like(m)
    for i in range(n):
        out |= ((m >> np.uint64(i)) & np.uint64(1)) << np.uint64(n - 1 - i)
    return out


def _product(a: PauliSum, b: PauliSum, commutator: bool) -> PauliSum:
    if len(a) == 0 or len(b) == 0:
        return PauliSum(a.n)
    xs, zs, cs = [], [], []
    step = max(1, 2_000_000 // len(b))
    for start in range(0, len(a), step):
        sl = slice(start, start + step)
        x1, z1, c1 = a.x[sl, None], a.z[sl, None], a.coeffs[sl, None]
        e, x, z = product_arrays(x1, z1, b.x[None, :], b.z[None, :])
        c = c1 * b.coeffs[None, :] * _I_POW[e]
        if commutator:
            # strings either commute (ab - ba = 0) or anticommute (ab - ba = 2ab)
            anti = ((_popcount(x1 & b.z[None, :]) + _popcount(z1 & b.x[None, :])) & 1).astype(bool)
            x, z, c = x[anti], z[anti], 2 * c[anti]
        xs.append(x.ravel())
        zs.append(z.ravel())
        cs.append(c.ravel())
    return PauliSum(a.n, np.concatenate(xs), np.concatenate(zs), np.concatenate(cs))


def commutator(a: PauliSum, b: PauliSum) -> PauliSum:
    """``[a, b] = ab - ba``."""
    a._check(b)
    return _product(a, b, commutator=True)


def hs_inner(a: PauliSum, b: PauliSum) -> complex:
    """``ntr(a^dagger b)``."""
    a._check(b)
    if len(a) == 0 or len(b) == 0:
        return 0.0
    ka = (a.x << np.uint64(32)) | a.z
    kb = (b.x << np.uint64(32)) | b.z
    _, ia, ib = np.intersect1d(ka, kb, assume_unique=True, return_indices=True)
    return complex(np.sum(a.coeffs[ia].conj() * b.coeffs[ib]))


def embed(a: PauliSum, n: int, offset: int, periodic: bool = False) -> PauliSum:
    """Pad ``a`` with identities so that its site 0 lands on site ``offset`` of ``n``."""
    if a.n > n:
        raise PauliError(f"cannot embed {a.n} sites into {n}")
    if periodic:
        if n > MAX_SITES:
            raise PauliError(f"{n} sites exceeds {MAX_SITES}")
        return PauliSum(n, a.x, a.z, a.coeffs, _clean=True).shift(offset)
    if offset < 0 or offset + a.n > n:
        raise PauliError(f"offset {offset} puts {a.n} sites outside an open window of {n}")
    k = np.uint64(offset)
    return PauliSum(n, a.x << k, a.z << k, a.coeffs, _clean=True)


def restrict(a: PauliSum, start: int, size: int) -> PauliSum:
    """Inverse of an open ``embed``; every string must be supported inside the window."""
    mask = np.uint64(((1 << size) - 1) << start)
    inside = ((a.x | a.z) & ~mask) == 0
    if not np.all(inside):
        raise PauliError("operator has support outside the requested window")
    k = np.uint64(start)
    return PauliSum(size, a.x >> k, a.z >> k, a.coeffs, _clean=True)


@dataclass(frozen=True)
class OperatorVector:
    """Real coefficients over the ``4**window_size`` Pauli strings, identity first.

    With the normalized trace, ``coeffs @ coeffs == ntr(O @ O)``.
    """

    window_size: int
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.shape != (4**self.window_size,):
            raise PauliError(f"expected {4**self.window_size} coefficients, got {coeffs.shape}")
        object.__setattr__(self, "coeffs", coeffs)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def to_pauli_sum(self) -> PauliSum:
        idx = np.nonzero(self.coeffs)[0]
        x, z = xz_from_letters(index_to_letters(idx, self.window_size)) if len(idx) else ([], [])
        return PauliSum(self.window_size, x, z, self.coeffs[idx])
