import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slowop.pauli import (
    OperatorVector,
    PauliError,
    PauliSum,
    commutator,
    embed,
    hs_inner,
    pauli_multiply,
    restrict,
)

from .conftest import dense_word, random_sum

words = st.integers(1, 6).flatmap(lambda n: st.tuples(st.text("IXYZ", min_size=n, max_size=n), st.text("IXYZ", min_size=n, max_size=n)))


class TestMultiply:
    def test_x_times_y(self):
        assert pauli_multiply("X", "Y") == (1j, "Z")

    def test_identity_left(self):
        assert pauli_multiply("III", "XYZ") == (1, "XYZ")

    def test_involution(self):
        assert pauli_multiply("XZ", "XZ") == (1, "II")

    def test_length_mismatch(self):
        with pytest.raises(PauliError):
            pauli_multiply("X", "XX")

    @given(words)
    def test_matches_dense(self, pair):
        a, b = pair
        phase, w = pauli_multiply(a, b)
        np.testing.assert_allclose(dense_word(a) @ dense_word(b), phase * dense_word(w), atol=1e-12)

    @given(words)
    def test_reversed_phase_ratio(self, pair):
        a, b = pair
        p1, w1 = pauli_multiply(a, b)
        p2, w2 = pauli_multiply(b, a)
        assert w1 == w2
        assert p1 * np.conj(p2) in (1, -1)
        anti = sum(x != "I" and y != "I" and x != y for x, y in zip(a, b)) % 2
        comm = commutator(PauliSum.single(a), PauliSum.single(b))
        assert (len(comm) == 0) == (anti == 0)


class TestCommutator:
    def test_z_x(self):
        c = commutator(PauliSum.single("Z"), PauliSum.single("X"))
        assert c.terms() == {"Y": 2j}

    def test_identity_commutes(self, rng):
        H = random_sum(rng, 3)
        assert len(commutator(H, PauliSum.identity(3))) == 0

    def test_zz_with_x0(self):
        # dense oracle: [Z0 Z1, X0] = 2i Y0 Z1
        c = commutator(PauliSum.single("ZZ"), PauliSum.single("XI"))
        dense = dense_word("ZZ") @ dense_word("XI") - dense_word("XI") @ dense_word("ZZ")
        np.testing.assert_allclose(c.to_dense(), dense, atol=1e-14)
        assert c.terms() == {"YZ": 2j}

    def test_dense_oracle_random(self, rng):
        for _ in range(10):
            a = random_sum(rng, 3, hermitian=False)
            b = random_sum(rng, 3, hermitian=False)
            A, B = a.to_dense(), b.to_dense()
            np.testing.assert_allclose(commutator(a, b).to_dense(), A @ B - B @ A, atol=1e-12)

    def test_hermitian_inputs_give_imaginary(self, rng):
        c = commutator(random_sum(rng, 4), random_sum(rng, 4))
        assert np.all(np.abs(c.coeffs.real) < 1e-14)

    def test_size_mismatch(self):
        with pytest.raises(PauliError):
            commutator(PauliSum.single("X"), PauliSum.single("XX"))


class TestInner:
    def test_examples(self):
        X, Z = PauliSum.single("X"), PauliSum.single("Z")
        assert hs_inner(X, X) == 1
        assert hs_inner(X, Z) == 0
        s = X * 2 + Z * 3
        assert hs_inner(s, s) == pytest.approx(13)

    def test_dense_agreement(self, rng):
        a, b = random_sum(rng, 3, hermitian=False), random_sum(rng, 3, hermitian=False)
        dense = np.trace(a.to_dense().conj().T @ b.to_dense()) / 8
        assert hs_inner(a, b) == pytest.approx(dense)

    def test_positive_definite(self, rng):
        a = random_sum(rng, 4)
        assert hs_inner(a, a).real > 0
        assert hs_inner(PauliSum(4), PauliSum(4)) == 0

    def test_ntr(self):
        assert PauliSum.identity(3).ntr() == 1
        assert PauliSum.single("XIZ").ntr() == 0
        np.testing.assert_allclose(np.trace(dense_word("III")) / 8, 1)


class TestEmbed:
    def test_open(self):
        assert embed(PauliSum.single("X"), 3, 1).terms() == {"IXI": 1}

    def test_periodic_wrap(self):
        assert embed(PauliSum.single("XZ"), 3, 2, periodic=True).terms() == {"ZIX": 1}

    def test_out_of_range(self):
        with pytest.raises(PauliError):
            embed(PauliSum.single("XZ"), 3, 2)

    def test_inner_preserved(self, rng):
        a, b = random_sum(rng, 3), random_sum(rng, 3)
        assert hs_inner(embed(a, 6, 2), embed(b, 6, 2)) == pytest.approx(hs_inner(a, b))

    def test_restrict_inverts(self, rng):
        a = random_sum(rng, 3)
        assert restrict(embed(a, 7, 3), 3, 3).allclose(a)


class TestConversions:
    def test_dense_examples(self):
        np.testing.assert_array_equal(PauliSum.single("Z").to_dense(), np.diag([1, -1]))
        np.testing.assert_array_equal(PauliSum.single("XX").to_dense(), np.fliplr(np.eye(4)))

    def test_dense_cap(self):
        with pytest.raises(PauliError):
            PauliSum.single("X" * 15).to_dense()

    def test_round_trip_preserves_inner(self, rng):
        for n in range(1, 7):
            a, b = random_sum(rng, n), random_sum(rng, n)
            va, vb = a.to_vector(), b.to_vector()
            assert va.coeffs @ vb.coeffs == pytest.approx(hs_inner(a, b).real, abs=1e-12)
            back = va.to_pauli_sum()
            assert back.allclose(a)
            if n <= 5:
                dense = np.trace(a.to_dense() @ b.to_dense()).real / 2**n
                assert dense == pytest.approx(hs_inner(a, b).real, abs=1e-12)

    def test_vector_identity_first(self):
        v = PauliSum.single("II", 2.0).to_vector()
        assert v.coeffs[0] == 2.0 and v.norm() == 2.0
        assert PauliSum.single("IX").to_vector().coeffs[1] == 1.0
        assert PauliSum.single("XI").to_vector().coeffs[4] == 1.0

    def test_vector_shape_checked(self):
        with pytest.raises(PauliError):
            OperatorVector(2, np.zeros(5))

    def test_text_round_trip(self, rng):
        a = random_sum(rng, 4, hermitian=False)
        assert PauliSum.from_text(a.to_text()).allclose(a, atol=1e-15)

    def test_text_example(self):
        s = PauliSum.from_text("-1.0 ZZI\n0.5+2i XIY\n")
        assert s.terms() == {"ZZI": -1.0, "XIY": 0.5 + 2j}

    def test_malformed_text(self):
        with pytest.raises(PauliError):
            PauliSum.from_text("abc XX")

    def test_zero_terms_dropped(self):
        s = PauliSum.from_terms(2, [(1.0, "XX"), (-1.0, "XX"), (0.0, "ZZ")])
        assert len(s) == 0

    def test_shift(self):
        assert PauliSum.single("XYI").shift(1).terms() == {"IXY": 1}
        assert PauliSum.single("XYI").shift(3).terms() == {"XYI": 1}


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_commutator_antisymmetric_property(seed):
    r = np.random.default_rng(seed)
    a, b = random_sum(r, 3, 4), random_sum(r, 3, 4)
    assert (commutator(a, b) + commutator(b, a)).allclose(PauliSum(3))
