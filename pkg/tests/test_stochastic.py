import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from coopmc.stochastic import (LOG_ZERO, SeededStream, logsumexp, poisson_cdf_below, poisson_cdf_below_sum,
                               poisson_log_pmf, poisson_sample)


def test_log_pmf_examples():
    assert poisson_log_pmf(1.0, 0) == pytest.approx(-1.0)
    assert poisson_log_pmf(0.0, 0) == 0.0
    assert poisson_log_pmf(0.0, 3) == LOG_ZERO
    assert poisson_log_pmf(5.0, 5) == pytest.approx(-1.7403021806115441, rel=1e-14)
    with pytest.raises(ValueError):
        poisson_log_pmf(-1.0, 2)


@given(st.floats(0.01, 300.0))
def test_pmf_sums_to_one(mean):
    top = int(mean + 40 * math.sqrt(mean) + 40)
    total = math.fsum(math.exp(x) for x in poisson_log_pmf(mean, np.arange(top)))
    assert total == pytest.approx(1.0, abs=1e-10)


def test_cdf_examples():
    assert poisson_cdf_below(1.0, 1) == pytest.approx(math.exp(-1), rel=1e-14)
    assert poisson_cdf_below(3.0, 0) == 0.0
    assert poisson_cdf_below(0.0, 1) == 1.0


@given(st.floats(0.0, 500.0), st.integers(0, 800))
def test_cdf_matches_fsum_oracle(mean, th):
    assert poisson_cdf_below(mean, th) == pytest.approx(poisson_cdf_below_sum(mean, th), abs=1e-11)


@given(st.floats(0.1, 200.0), st.integers(1, 400))
def test_cdf_difference_is_pmf(mean, th):
    diff = poisson_cdf_below(mean, th + 1) - poisson_cdf_below(mean, th)
    assert diff == pytest.approx(math.exp(poisson_log_pmf(mean, th)), abs=1e-12)


def test_sample_mean_and_determinism():
    assert poisson_sample(SeededStream(1), 0.0) == 0
    x = poisson_sample(SeededStream(7), 10.0, size=10 ** 6)
    assert abs(x.mean() - 10.0) <= 4 * math.sqrt(10.0) / 1e3
    y = poisson_sample(SeededStream(7), 10.0, size=10 ** 6)
    assert np.array_equal(x, y)
    z = poisson_sample(SeededStream(7).fork(1), 10.0, size=10)
    assert not np.array_equal(x[:10], z)


def test_poisson_goodness_of_fit():
    x = poisson_sample(SeededStream(3), 4.0, size=200_000)
    counts = np.bincount(x, minlength=16)[:16].astype(float)
    counts[15] += (x >= 16).sum()
    probs = np.exp(poisson_log_pmf(4.0, np.arange(16)))
    probs[15] = 1.0 - poisson_cdf_below(4.0, 15)
    _, p = stats.chisquare(counts, probs * x.size)
    assert p > 1e-3


def test_logsumexp():
    a = np.array([1000.0, 1000.0])
    assert logsumexp(a) == pytest.approx(1000.0 + math.log(2))
    assert logsumexp(np.array([LOG_ZERO, LOG_ZERO])) == LOG_ZERO
    b = np.log(np.array([[0.2, 0.3], [0.5, 0.5]]))
    assert np.allclose(logsumexp(b, axis=1), np.log([0.5, 1.0]))


def test_stream_fork_independent_ids():
    s = SeededStream(5, (1, 2))
    assert s.fork(3).stream_id == (1, 2, 3)
    assert SeededStream(5, 4).rng.random() == SeededStream(5, (4,)).rng.random()
