import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from currentkit import algebra as alg
from currentkit.algebra import KCovector, KVector, basis


def random_kvector(d, k, rng):
    return KVector(d, k, rng.standard_normal(math.comb(d, k)))


def test_multi_indices_lexicographic():
    assert alg.multi_indices(4, 2) == ((1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4))
    assert alg.multi_indices(3, 0) == ((),)
    assert len(alg.multi_indices(16, 8)) == 12870


def test_dimension_cap():
    with pytest.raises(alg.DimensionMismatch):
        KVector.zeros(17, 1)


def test_wedge_basis_and_anticommutation():
    e1, e2, e3 = (basis(3, (i,)) for i in (1, 2, 3))
    assert alg.wedge(e1, e2).allclose(basis(3, (1, 2)))
    assert alg.wedge(e2, e1).allclose(-basis(3, (1, 2)))
    assert alg.wedge(e1, e1).allclose(KVector.zeros(3, 2))
    assert alg.wedge_all([e3, e1, e2]).allclose(basis(3, (1, 2, 3)))


def test_wedge_grade_overflow():
    with pytest.raises(alg.DimensionMismatch):
        alg.wedge(basis(2, (1, 2)), basis(2, (1,)))


@given(st.integers(0, 2**32 - 1), st.integers(2, 6))
def test_wedge_associative_and_graded_commutative(seed, d):
    rng = np.random.default_rng(seed)
    j, k, m = rng.integers(0, 3, 3)
    if j + k + m > d:
        return
    a, b, c = (random_kvector(d, g, rng) for g in (j, k, m))
    left = alg.wedge(alg.wedge(a, b), c)
    right = alg.wedge(a, alg.wedge(b, c))
    assert left.allclose(right, atol=1e-10)
    assert alg.wedge(a, b).allclose(alg.wedge(b, a) * (-1) ** (j * k), atol=1e-10)


def test_wedge_of_vectors_is_plucker_minors(rng):
    # oracle: determinant of the selected rows
    V = rng.standard_normal((5, 3))
    xi = alg.wedge_all([KVector(5, 1, V[:, i]) for i in range(3)])
    for n, I in enumerate(alg.multi_indices(5, 3)):
        assert xi.coeffs[n] == pytest.approx(np.linalg.det(V[np.array(I) - 1]), abs=1e-12)


def test_inner_is_gram_determinant(rng):
    W = rng.standard_normal((5, 3))
    V = rng.standard_normal((5, 3))
    lhs = alg.inner(alg.frame_to_kvector(alg.Frame(W)), alg.frame_to_kvector(alg.Frame(V)))
    assert lhs == pytest.approx(np.linalg.det(W.T @ V), rel=1e-12)


def test_mass_comass_classic_example():
    v = basis(4, (1, 2)) + basis(4, (3, 4))
    lo, hi = alg.mass(v)
    assert lo == hi == pytest.approx(2.0, abs=1e-12)
    assert alg.euclidean_norm(v) == pytest.approx(math.sqrt(2), abs=1e-12)
    val, frame = alg.comass(v.dual())
    assert val == pytest.approx(1.0, abs=1e-12)
    assert alg.inner(alg.frame_to_kvector(frame), v.dual()) == pytest.approx(1.0, abs=1e-12)


def test_mass_unequal_blocks():
    v = basis(4, (1, 2)) * 2.0 + basis(4, (3, 4))
    assert alg.mass(v)[1] == pytest.approx(3.0, abs=1e-12)


def test_mass_simple_equals_euclidean(rng):
    for d, k in [(3, 1), (5, 4), (4, 2), (6, 3)]:
        xi = alg.frame_to_kvector(alg.Frame(rng.standard_normal((d, k))))
        lo, hi = alg.mass(xi, mode="bounds" if (d, k) == (6, 3) else "exact")
        assert hi == pytest.approx(alg.euclidean_norm(xi), rel=1e-9)


def test_unsupported_exact_mode():
    v = KVector(6, 3, np.ones(20))
    with pytest.raises(alg.UnsupportedExactMode):
        alg.mass(v)
    with pytest.raises(alg.UnsupportedExactMode):
        alg.comass(v)


def test_spectral_decomposition_reconstructs(rng):
    v = random_kvector(6, 2, rng)
    pieces = alg.spectral_decompose_2vector(v)
    total = sum((alg.frame_to_kvector(f) * s for s, f in pieces), KVector.zeros(6, 2))
    assert total.allclose(v, atol=1e-10)
    sigmas = [s for s, _ in pieces]
    assert sigmas == sorted(sigmas, reverse=True)
    for _, f in pieces:
        assert np.allclose(f.columns.T @ f.columns, np.eye(2), atol=1e-10)


def test_2vector_mass_matches_singular_values(rng):
    # oracle: nuclear norm of the antisymmetric matrix is twice the mass
    v = random_kvector(5, 2, rng)
    A = np.zeros((5, 5))
    for c, (i, j) in zip(v.coeffs, alg.multi_indices(5, 2)):
        A[i - 1, j - 1], A[j - 1, i - 1] = c, -c
    nuc = np.linalg.svd(A, compute_uv=False).sum()
    assert alg.mass(v)[1] == pytest.approx(nuc / 2, rel=1e-10)
    assert alg.comass(v.dual())[0] == pytest.approx(np.linalg.norm(A, 2), rel=1e-10)


def test_comass_estimate_matches_exact_on_2covectors(rng):
    for _ in range(5):
        w = KCovector(5, 2, rng.standard_normal(10))
        exact, _ = alg.comass(w)
        est, frame = alg.comass(w, mode="estimate", restarts=64)
        assert est == pytest.approx(exact, abs=1e-6)
        assert est <= exact + 1e-10


def test_comass_hyperplane_certificate(rng):
    w = KCovector(5, 4, rng.standard_normal(5))
    val, frame = alg.comass(w)
    assert val == pytest.approx(alg.euclidean_norm(w))
    assert alg.inner(alg.frame_to_kvector(frame), w) == pytest.approx(val, rel=1e-10)


def test_mass_bounds_bracket_exact(rng):
    for _ in range(3):
        v = random_kvector(5, 2, rng)
        exact = alg.mass(v)[1]
        lo, hi = alg.mass(v, mode="bounds")
        assert lo <= exact + 1e-9
        assert hi >= exact - 1e-9


def test_mass_comass_duality_inequality(rng):
    v = random_kvector(5, 2, rng)
    w = KCovector(5, 2, rng.standard_normal(10))
    assert abs(alg.inner(v, w)) <= alg.mass(v)[1] * alg.comass(w)[0] + 1e-10


def test_haar_frames_orthonormal_and_centered():
    rng = np.random.default_rng(0)
    for d, k in [(3, 3), (5, 2), (4, 1)]:
        f = alg.haar_frame_sample(d, k, rng)
        assert np.abs(f.columns.T @ f.columns - np.eye(k)).max() < 1e-10


def test_json_round_trip():
    v = basis(4, (1, 2)) * 1.5 - basis(4, (2, 4))
    obj = alg.kvector_to_json(v)
    assert obj == {"d": 4, "k": 2, "coeffs": {"1,2": 1.5, "2,4": -1.0}}
    assert alg.kvector_from_json(obj).allclose(v)
    with pytest.raises(ValueError):
        alg.kvector_from_json({"d": 3, "k": 2, "coeffs": {"1": 1.0}})


def test_grade_mismatch_arithmetic():
    with pytest.raises(alg.DimensionMismatch):
        basis(3, (1,)) + basis(3, (1, 2))
