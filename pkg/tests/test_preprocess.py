import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dojoba.errors import DataError
from dojoba.preprocess import Projection, RankError, whiten_apply, whiten_fit


def test_two_dimensional_hand_case():
    s6, s2 = np.sqrt(6.0), np.sqrt(2.0)
    X = np.array([[s6, 0], [-s6, 0], [0, s2], [0, -s2]])
    # 1/n covariance is diag(3, 1): eigenvectors e1, e2, scales 1/sqrt(3), 1
    p = whiten_fit(X, 2)
    np.testing.assert_allclose(p.basis, np.eye(2), atol=1e-15)
    np.testing.assert_allclose(p.scales, [1 / np.sqrt(3), 1.0], atol=1e-15)
    y = whiten_apply(p, [1.0, 1.0])
    assert float(y @ y) == pytest.approx(4 / 3, abs=1e-14)


def test_512_to_100():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((1200, 512)) * rng.uniform(0.5, 2.0, 512)
    p = whiten_fit(X, 100)
    assert (p.d_in, p.d_out) == (512, 100)
    assert whiten_apply(p, X[:3]).shape == (3, 100)


def test_white_data_full_dimension():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((500, 6))
    Y = whiten_apply(whiten_fit(X, 6), X)
    np.testing.assert_allclose(np.cov(Y.T, bias=True), np.eye(6), atol=1e-8)


def test_projected_covariance_near_identity():
    rng = np.random.default_rng(2)
    D = 20
    A = rng.standard_normal((D, D))
    X = rng.standard_normal((10 * D, D)) @ A.T + 5.0
    Y = whiten_apply(whiten_fit(X, 8), X)
    C = np.cov(Y.T, bias=True)
    assert np.max(np.abs(C - np.eye(8))) < 0.05


def test_fit_set_has_zero_mean():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((300, 7)) * 3 + rng.standard_normal(7) * 10
    Y = whiten_apply(whiten_fit(X, 4), X)
    assert np.max(np.abs(Y.mean(axis=0))) < 1e-10


def test_mean_maps_to_zero():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((50, 5)) + 2.0
    p = whiten_fit(X, 3)
    np.testing.assert_allclose(whiten_apply(p, p.mean), np.zeros(3), atol=1e-15)


def test_identity_projection():
    x = np.array([1.5, -2.0, 0.25])
    np.testing.assert_array_equal(whiten_apply(Projection.identity(3), x), x)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.integers(0, 2 ** 32 - 1))
def test_affine(alpha, seed):
    rng = np.random.default_rng(seed)
    p = whiten_fit(rng.standard_normal((40, 5)), 3)
    x, y = rng.standard_normal((2, 5))
    lhs = whiten_apply(p, alpha * x + (1 - alpha) * y)
    rhs = alpha * whiten_apply(p, x) + (1 - alpha) * whiten_apply(p, y)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_sign_convention():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((200, 6)) @ rng.standard_normal((6, 6))
    p = whiten_fit(X, 6)
    rows = np.arange(6)
    assert np.all(p.basis[rows, np.argmax(np.abs(p.basis), axis=1)] > 0)
    np.testing.assert_allclose(p.basis @ p.basis.T, np.eye(6), atol=1e-12)
    # flipping the data sign leaves the basis unchanged
    q = whiten_fit(-X, 6)
    np.testing.assert_allclose(q.basis, p.basis, atol=1e-10)


def test_rank_deficiency_reports_rank():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((100, 3)) @ rng.standard_normal((3, 5))
    with pytest.raises(RankError) as info:
        whiten_fit(X, 4)
    assert info.value.rank == 3
    assert "at most 3" in str(info.value)
    assert whiten_fit(X, 3).d_out == 3


def test_errors():
    rng = np.random.default_rng(7)
    X = rng.standard_normal((10, 4))
    with pytest.raises(DataError):
        whiten_fit(X, 0)
    with pytest.raises(DataError):
        whiten_fit(X, 5)
    with pytest.raises(DataError):
        whiten_fit(X[:3], 3)
    with pytest.raises(DataError):
        whiten_apply(whiten_fit(X, 2), np.zeros(3))
