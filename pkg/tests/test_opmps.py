import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slowop.opmps import (
    TI_GAUGE,
    MPSError,
    OperatorMPS,
    canonicalize,
    entropy_profile,
    from_vector,
    max_bond_dims,
    overlap_mps,
    random_mps,
    schmidt_values,
    truncate,
)
from slowop.pauli import OperatorVector, PauliSum, hs_inner


def bell_pair() -> OperatorVector:
    return PauliSum.from_terms(2, [(2**-0.5, "XX"), (2**-0.5, "ZZ")]).to_vector()


def random_vector(rng, N):
    v = rng.standard_normal(4**N)
    return OperatorVector(N, v / np.linalg.norm(v))


def test_product_string_bond_one():
    m = from_vector(PauliSum.single("XZY").to_vector())
    assert m.bond_dims == [1, 1]
    np.testing.assert_allclose(entropy_profile(m).entropy, 0, atol=1e-14)


def test_bell_pair_schmidt():
    m = from_vector(bell_pair())
    assert m.bond_dims == [2]
    np.testing.assert_allclose(schmidt_values(m)[0], [2**-0.5, 2**-0.5], atol=1e-14)
    assert entropy_profile(m).entropy[0] == pytest.approx(np.log(2))


@pytest.mark.parametrize("N", [1, 2, 3, 5])
def test_round_trip(N, rng):
    v = random_vector(rng, N)
    np.testing.assert_allclose(from_vector(v).to_vector().coeffs, v.coeffs, atol=1e-12)


def test_round_trip_ti_gauge(rng):
    c = rng.standard_normal(4**3)
    c[:16] = 0
    v = OperatorVector(3, c)
    m = from_vector(v, gauge=TI_GAUGE)
    assert m.phys_dims == [3, 4, 4]
    np.testing.assert_allclose(m.to_vector().coeffs, c, atol=1e-12)
    with pytest.raises(MPSError):
        from_vector(random_vector(rng, 3), gauge=TI_GAUGE)


def test_bond_dims_follow_growth(rng):
    m = random_mps(6, 100, rng)
    assert m.bond_dims == [4, 16, 64, 16, 4]
    assert max_bond_dims(6, 10) == [4, 10, 10, 10, 4]
    assert max_bond_dims(4, 100, TI_GAUGE) == [3, 12, 4]


class TestCanonical:
    def test_operator_unchanged(self, rng):
        m = random_mps(4, 8, rng).scaled(1.7)
        for c in range(4):
            np.testing.assert_allclose(canonicalize(m, c).to_vector().coeffs, m.to_vector().coeffs, atol=1e-11)

    def test_norm_at_center(self, rng):
        m = random_mps(5, 8, rng).scaled(3.0)
        c = canonicalize(m, 2)
        assert np.linalg.norm(c.tensors[2]) == pytest.approx(m.norm(), rel=1e-12)
        assert c.normalized().norm() == pytest.approx(1, abs=1e-12)
        for t in c.tensors[:2]:
            a, d, b = t.shape
            np.testing.assert_allclose(t.reshape(a * d, b).T @ t.reshape(a * d, b), np.eye(b), atol=1e-12)
        for t in c.tensors[3:]:
            a, d, b = t.shape
            np.testing.assert_allclose(t.reshape(a, d * b) @ t.reshape(a, d * b).T, np.eye(a), atol=1e-12)

    def test_idempotent(self, rng):
        c = canonicalize(random_mps(4, 8, rng), 1)
        c2 = canonicalize(c, 1)
        for a, b in zip(c.tensors, c2.tensors):
            np.testing.assert_allclose(np.abs(a), np.abs(b), atol=1e-12)

    def test_bad_center(self, rng):
        with pytest.raises(MPSError):
            canonicalize(random_mps(3, 4, rng), 3)


class TestEntropy:
    def test_bounds(self, rng):
        for D in (2, 5, 16):
            prof = entropy_profile(random_mps(6, D, rng))
            assert np.all(prof.entropy <= prof.bound() + 1e-9)
            assert np.all(prof.entropy >= -1e-12)
            np.testing.assert_allclose(prof.max_bound, np.log([4, 16, 64, 16, 4]))

    def test_needs_normalized(self, rng):
        with pytest.raises(MPSError):
            entropy_profile(random_mps(3, 4, rng).scaled(2.0))


class TestTruncate:
    def test_error_equals_discarded(self, rng):
        v = random_vector(rng, 5)
        m = from_vector(v)
        for D in (1, 3, 8):
            t, disc = truncate(m, D)
            assert max(t.bond_dims) <= D
            err = np.sum((t.to_vector().coeffs - v.coeffs) ** 2)
            assert err == pytest.approx(disc, abs=1e-10)

    def test_no_loss_at_full_rank(self, rng):
        m = from_vector(random_vector(rng, 4))
        _, disc = truncate(m, 64)
        assert disc < 1e-20


class TestOverlap:
    def test_self_overlap(self, rng):
        assert overlap_mps(random_mps(4, 6, rng), random_mps(4, 6, rng)) != 1
        m = random_mps(4, 6, rng)
        assert overlap_mps(m, m) == pytest.approx(1, abs=1e-12)

    def test_matches_hs_inner(self, rng):
        for _ in range(5):
            a, b = random_mps(4, 5, rng), random_mps(4, 5, rng)
            ref = hs_inner(a.to_pauli_sum(), b.to_pauli_sum()).real
            assert overlap_mps(a, b) == pytest.approx(ref, abs=1e-11)

    def test_orthogonal_strings(self):
        a = from_vector(PauliSum.single("XI").to_vector())
        b = from_vector(PauliSum.single("ZI").to_vector())
        assert overlap_mps(a, b) == 0

    def test_mixed_gauges(self, rng):
        a = random_mps(3, 4, rng, TI_GAUGE)
        b = random_mps(3, 4, rng)
        assert overlap_mps(a, b) == pytest.approx(a.to_vector().coeffs @ b.to_vector().coeffs, abs=1e-12)


def test_json_round_trip(rng):
    m = random_mps(4, 5, rng, TI_GAUGE)
    back = OperatorMPS.from_json(m.to_json())
    assert back.gauge == TI_GAUGE
    np.testing.assert_allclose(back.to_vector().coeffs, m.to_vector().coeffs)


def test_boundary_checked():
    with pytest.raises(MPSError):
        OperatorMPS((np.zeros((2, 4, 1)),))


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 5), st.integers(1, 20), st.integers(0, 2**31))
def test_entropy_never_exceeds_bound(N, D, seed):
    m = random_mps(N, D, np.random.default_rng(seed))
    prof = entropy_profile(m, D=D)
    assert np.all(prof.entropy <= np.minimum(prof.max_bound, np.log(D)) + 1e-9)
