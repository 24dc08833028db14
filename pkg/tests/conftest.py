import numpy as np
import pytest

from slowop.pauli import PauliSum

DENSE = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def dense_word(word: str) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for ch in word:
        out = np.kron(out, DENSE[ch])
    return out


def random_sum(rng: np.random.Generator, n: int, terms: int = 6, hermitian: bool = True) -> PauliSum:
    words = ["".join(rng.choice(list("IXYZ"), size=n)) for _ in range(terms)]
    coeffs = rng.standard_normal(terms)
    if not hermitian:
        coeffs = coeffs + 1j * rng.standard_normal(terms)
    return PauliSum.from_terms(n, list(zip(coeffs, words)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
