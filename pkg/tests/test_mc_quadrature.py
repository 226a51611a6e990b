import numpy as np
import pytest

from fscore import _mc
from fscore.errors import DimensionTooHigh
from fscore.mixtures import GaussianMixture
from fscore.quadrature import check_dim, envelope, hermite_grid


def test_batches_cover_n():
    sizes = _mc.batch_sizes(10_000)
    assert sum(sizes) == 10_000
    assert all(s == _mc.BATCH_SIZE for s in sizes[:-1])


def test_reduce_matches_direct_moments():
    def batch(rng, size):
        x = rng.normal(size=size)
        return (x, x * x)

    (m1, se1), (m2, _) = _mc.mc_reduce(batch, 20_000, seed=3, workers=1)
    xs = np.concatenate([
        _mc.batch_rng(3, b).normal(size=s) for b, s in enumerate(_mc.batch_sizes(20_000))
    ])
    assert m1 == pytest.approx(xs.mean(), abs=1e-14)
    assert se1 == pytest.approx(xs.std(ddof=1) / np.sqrt(xs.size), rel=1e-10)
    assert m2 == pytest.approx(np.mean(xs * xs), rel=1e-12)


def test_reduce_is_thread_count_invariant():
    def batch(rng, size):
        return (np.exp(rng.normal(size=size)),)

    runs = [_mc.mc_reduce(batch, 50_000, seed=1, workers=w) for w in (1, 2, 7)]
    assert runs[0] == runs[1] == runs[2]


def test_default_workers_env(monkeypatch):
    monkeypatch.setenv("FSL_THREADS", "3")
    assert _mc.default_workers() == 3
    monkeypatch.setenv("FSL_THREADS", "0")
    with pytest.raises(ValueError):
        _mc.default_workers()
    monkeypatch.delenv("FSL_THREADS")
    assert _mc.default_workers() == 1


def test_hermite_grid_integrates_moments():
    mean = np.array([0.5, -1.0])
    cov = np.array([[2.0, 0.4], [0.4, 0.7]])
    Y, logw = hermite_grid(mean, cov, 16)
    # weights integrate against Lebesgue measure; fold the envelope density back in
    P, logdet = np.linalg.inv(cov), np.linalg.slogdet(cov)[1]
    D = Y - mean
    logpdf = -0.5 * (np.einsum("ni,ij,nj->n", D, P, D) + 2 * np.log(2 * np.pi) + logdet)
    w = np.exp(logw + logpdf)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(w @ Y, mean, atol=1e-12)
    np.testing.assert_allclose((w[:, None] * D).T @ D, cov, atol=1e-12)


def test_envelope_covers_all_mixtures():
    a = GaussianMixture.single([0.0], [[1.0]])
    b = GaussianMixture.single([2.0], [[3.0]])
    mean, cov = envelope(a, b)
    np.testing.assert_allclose(mean, [1.0])
    assert cov[0, 0] >= 6.0


def test_dimension_limit():
    g = GaussianMixture.single(np.zeros(4), np.eye(4))
    with pytest.raises(DimensionTooHigh):
        check_dim(g)
