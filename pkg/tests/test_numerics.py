import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fadingctl.numerics import (ToleranceProfile, is_psd, numeric_rank, psd_sqrt, spectral_norm, spectral_radius,
                                svd_descending, symmetrize)

from conftest import FIG3_A, FIG3_B

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def matrices(max_side=8):
    shapes = st.tuples(st.integers(1, max_side), st.integers(1, max_side))
    return shapes.flatmap(lambda s: arrays(float, s, elements=finite))


def test_tolerances_must_be_positive():
    with pytest.raises(ValueError):
        ToleranceProfile(rank_rel_tol=0.0)
    with pytest.raises(ValueError):
        ToleranceProfile(psd_eig_tol=-1e-9)


def test_svd_identity_and_reorder():
    assert np.allclose(svd_descending(np.eye(3))[1], [1, 1, 1])
    assert np.allclose(svd_descending(np.diag([2.0, 0.0, 1.0]))[1], [2, 1, 0])


def test_svd_random_reconstruction(rng):
    m = rng.standard_normal((4, 3))
    U, s, V = svd_descending(m)
    assert np.linalg.norm(U @ np.diag(s) @ V.T - m) < 1e-12


@given(matrices())
def test_svd_reconstructs_and_sorts(m):
    U, s, V = svd_descending(m)
    assert np.all(np.diff(s) <= 0)
    assert np.linalg.norm(U @ np.diag(s) @ V.T - m, 2) <= 1e-12 * max(1.0, np.linalg.norm(m, 2))


def test_svd_rejects_nonfinite():
    with pytest.raises(ValueError):
        svd_descending(np.array([[1.0, np.nan]]))


def test_numeric_rank_examples():
    assert numeric_rank(np.zeros((2, 2))) == 0
    assert numeric_rank(FIG3_B) == 2
    assert numeric_rank(np.eye(5)) == 5


@given(matrices(6), st.data())
def test_rank_never_drops_when_appending_a_column(m, data):
    col = data.draw(arrays(float, (m.shape[0], 1), elements=finite))
    assert numeric_rank(np.hstack([m, col])) >= numeric_rank(m)


def test_is_psd_examples():
    assert is_psd(np.eye(3))
    assert not is_psd(np.diag([1.0, -1.0]))
    with pytest.raises(ValueError):
        is_psd(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_spectral_examples():
    assert spectral_radius(np.diag([0.5, -1.2])) == pytest.approx(1.2)
    assert spectral_radius(FIG3_A) > 1
    rot = np.array([[0.0, -1.0], [1.0, 0.0]])
    assert spectral_radius(rot) == pytest.approx(1.0)
    assert spectral_norm(rot) == pytest.approx(1.0)


@given(st.integers(1, 7).flatmap(lambda n: arrays(float, (n, n), elements=finite)))
def test_norm_bounds_radius(a):
    assert spectral_norm(a) >= spectral_radius(a) * (1 - 1e-9) - 1e-12


def test_psd_sqrt_roundtrip(rng):
    G = rng.standard_normal((4, 4))
    m = G @ G.T + np.eye(4)
    r = psd_sqrt(m)
    assert np.allclose(r @ r, m, atol=1e-10)
    ri = psd_sqrt(m, inverse=True)
    assert np.allclose(ri @ m @ ri, np.eye(4), atol=1e-10)
    assert np.allclose(symmetrize(r), r)
