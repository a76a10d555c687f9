from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bdd.bands import confidence_band, corr_from_cov, sup_abs_gaussian_quantile
from bdd.errors import ConfigError, NumericalError
from bdd.parallel import ordered_map, worker_count
from bdd.biv import normal_quantile


def test_corr_examples():
    np.testing.assert_array_equal(corr_from_cov(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(corr_from_cov([[4.0, 2.0], [2.0, 4.0]]), [[1, 0.5], [0.5, 1]])
    np.testing.assert_allclose(corr_from_cov([[4.0, 4.0], [4.0, 4.0]]), np.ones((2, 2)))
    with pytest.raises(NumericalError, match="grid point 1"):
        corr_from_cov([[1.0, 0.0], [0.0, 0.0]])


def test_corr_repairs_indefinite_input():
    r = corr_from_cov([[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]])
    assert np.linalg.eigvalsh(r).min() >= -1e-12
    np.testing.assert_allclose(np.diag(r), 1.0)
    assert np.all(np.abs(r) <= 1.0)


def test_quantile_single_point():
    q = sup_abs_gaussian_quantile(np.eye(1), 0.05, 100_000, 7)
    assert q == pytest.approx(1.95996, abs=0.03)


def test_quantile_perfectly_correlated():
    q1 = sup_abs_gaussian_quantile(np.eye(1), 0.05, 100_000, 7)
    q2 = sup_abs_gaussian_quantile(np.ones((2, 2)), 0.05, 100_000, 7)
    assert q2 == pytest.approx(q1, abs=0.03)


def test_quantile_independent_pair():
    target = normal_quantile((1 + math.sqrt(0.95)) / 2)
    assert target == pytest.approx(2.2365, abs=1e-4)
    assert sup_abs_gaussian_quantile(np.eye(2), 0.05, 100_000, 7) == pytest.approx(target, abs=0.03)


def test_quantile_is_deterministic_and_seed_dependent():
    r = corr_from_cov(np.array([[1.0, 0.3, 0.1], [0.3, 1.0, 0.3], [0.1, 0.3, 1.0]]))
    a = sup_abs_gaussian_quantile(r, 0.1, 5000, 3)
    assert a == sup_abs_gaussian_quantile(r, 0.1, 5000, 3)
    assert a != sup_abs_gaussian_quantile(r, 0.1, 5000, 4)


def test_quantile_independent_of_worker_count(monkeypatch):
    r = np.eye(5) * 0.5 + 0.5
    values = []
    for threads in ("1", "2", "8"):
        monkeypatch.setenv("BDD_THREADS", threads)
        values.append(sup_abs_gaussian_quantile(r, 0.05, 5000, 11))
    assert len(set(values)) == 1


def test_quantile_argument_checks():
    with pytest.raises(ConfigError):
        sup_abs_gaussian_quantile(np.eye(2), 0.05, 999)
    with pytest.raises(ConfigError):
        sup_abs_gaussian_quantile(np.eye(2), 0.0, 1000)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 8))
def test_band_quantile_dominates_pointwise(seed, M):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(M, M + 2))
    r = corr_from_cov(a @ a.T)
    q = sup_abs_gaussian_quantile(r, 0.05, 4000, seed)
    # MC tolerance for the pointwise quantile at 4000 draws
    assert q >= normal_quantile(0.975) - 0.1


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_quantile_monotone_in_alpha(seed):
    r = np.eye(3) * 0.6 + 0.4
    qs = [sup_abs_gaussian_quantile(r, a, 3000, seed) for a in (0.01, 0.05, 0.1, 0.2)]
    assert qs == sorted(qs, reverse=True)


def test_confidence_band_examples():
    b = confidence_band([0.0, 0.0], [1.0, 1.0], 2.0)
    assert b.lower == [-2.0, -2.0] and b.upper == [2.0, 2.0]
    z = normal_quantile(0.975)
    b = confidence_band([1.5], [0.5], z)
    assert (b.lower[0], b.upper[0]) == pytest.approx((1.5 - z * 0.5, 1.5 + z * 0.5))
    b = confidence_band([1.0, None, 3.0], [1.0, None, 1.0], 2.0)
    assert b.lower == [-1.0, None, 1.0] and b.upper == [3.0, None, 5.0]
    with pytest.raises(ConfigError):
        confidence_band([1.0], [1.0, 2.0], 2.0)


def test_worker_count(monkeypatch):
    monkeypatch.setenv("BDD_THREADS", "1")
    assert worker_count() == 1
    monkeypatch.setenv("BDD_THREADS", "zero")
    with pytest.raises(ConfigError):
        worker_count()
    monkeypatch.setenv("BDD_THREADS", "0")
    with pytest.raises(ConfigError):
        worker_count()
    monkeypatch.setenv("BDD_THREADS", "4")
    assert ordered_map(lambda i: i * i, range(10)) == [i * i for i in range(10)]
