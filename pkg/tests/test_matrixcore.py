import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from fscore.errors import NotPositiveDefinite, ZeroDirection
from fscore.matrixcore import (
    check_pd,
    cholesky,
    inverse_and_logdet,
    is_psd,
    make_direction,
    project_psd,
    random_directions,
    symmetrize,
)


def test_cholesky_examples():
    np.testing.assert_allclose(cholesky(np.eye(2)), np.eye(2))
    np.testing.assert_allclose(cholesky(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))
    S = np.array([[2.0, 1.0], [1.0, 2.0]])
    L = cholesky(S)
    assert np.max(np.abs(L @ L.T - S)) < 1e-12
    assert np.allclose(L, np.tril(L))


def test_cholesky_rejects_indefinite():
    with pytest.raises(NotPositiveDefinite):
        cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_inverse_and_logdet_examples():
    P, ld = inverse_and_logdet(np.eye(3))
    np.testing.assert_allclose(P, np.eye(3))
    assert ld == 0.0
    P, ld = inverse_and_logdet(np.diag([2.0, 2.0]))
    np.testing.assert_allclose(P, np.diag([0.5, 0.5]))
    assert ld == pytest.approx(1.3862943611198906, abs=1e-14)
    _, ld = inverse_and_logdet(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert ld == pytest.approx(np.log(3.0), abs=1e-14)


def test_project_psd_examples():
    np.testing.assert_allclose(project_psd(np.diag([1.0, -0.5]), 1e-8), np.diag([1.0, 1e-8]))
    np.testing.assert_allclose(
        project_psd(np.array([[0.0, 1.0], [1.0, 0.0]]), 0.0), np.full((2, 2), 0.5), atol=1e-15
    )
    S = np.array([[2.0, 0.3], [0.3, 1.0]])
    assert np.max(np.abs(project_psd(S, 1e-8) - S)) < 1e-12


def test_make_direction_examples():
    np.testing.assert_allclose(make_direction(np.eye(2)), np.eye(2) / np.sqrt(2))
    np.testing.assert_allclose(make_direction([[0.0, 2.0], [0.0, 0.0]]), [[0, 1], [1, 0]] / np.sqrt(2))
    with pytest.raises(ZeroDirection):
        make_direction([[0.0, 1.0], [-1.0, 0.0]])


def test_check_pd_floor():
    with pytest.raises(NotPositiveDefinite):
        check_pd(np.diag([1.0, 1e-9]), floor=1e-8)
    check_pd(np.diag([1.0, 1e-7]), floor=1e-8)


def test_random_directions_reproducible_and_unit():
    a = random_directions(3, 4, seed=11)
    b = random_directions(3, 4, seed=11)
    assert len(a) == 4
    for V, W in zip(a, b):
        np.testing.assert_array_equal(V, W)
        np.testing.assert_allclose(V, V.T)
        assert np.linalg.norm(V) == pytest.approx(1.0)
    for V in random_directions(2, 3, seed=1, positive=True):
        assert np.linalg.eigvalsh(V).min() > 0


square = arrays(np.float64, (3, 3), elements=st.floats(-10, 10))


@settings(max_examples=60, deadline=None)
@given(square, st.floats(0.0, 1.0))
def test_project_psd_properties(M, floor):
    P = project_psd(M, floor)
    np.testing.assert_allclose(P, P.T, atol=1e-12)
    assert np.linalg.eigvalsh(P).min() >= floor - 1e-9 * max(1.0, np.abs(M).max())
    # idempotent
    np.testing.assert_allclose(project_psd(P, floor), P, atol=1e-9 * max(1.0, np.abs(M).max()))


@settings(max_examples=60, deadline=None)
@given(square)
def test_symmetrize_and_direction(M):
    S = symmetrize(M)
    np.testing.assert_array_equal(S, S.T)
    if np.linalg.norm(S) > 1e-6:
        V = make_direction(M)
        assert np.linalg.norm(V) == pytest.approx(1.0)
        assert is_psd(V @ V)
