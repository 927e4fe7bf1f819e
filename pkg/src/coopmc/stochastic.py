"""Poisson utilities in the log domain and the seeded random-stream contract."""
from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln, pdtr

# finite stand-in for log(0); keeps a total order under comparisons and sums
LOG_ZERO = -1.0e300


class SeededStream:
    """A reproducible random stream identified by (seed, stream_id).

    ``stream_id`` may be an int or a tuple of ints; distinct ids give
    independent streams (numpy SeedSequence spawn keys).
    """

    def __init__(self, seed: int, stream_id=0):
        self.seed = int(seed)
        sid = stream_id if isinstance(stream_id, tuple) else (stream_id,)
        self.stream_id = tuple(int(s) & 0xFFFFFFFFFFFFFFFF for s in sid)
        ss = np.random.SeedSequence(entropy=self.seed & 0xFFFFFFFFFFFFFFFF, spawn_key=self.stream_id)
        self.rng = np.random.Generator(np.random.PCG64(ss))

    def fork(self, *sub_ids: int) -> "SeededStream":
        return SeededStream(self.seed, self.stream_id + tuple(sub_ids))

    def __repr__(self):
        return f"SeededStream(seed={self.seed}, stream_id={self.stream_id})"


def _check_mean(mean):
    m = np.asarray(mean, dtype=float)
    if np.any(m < 0) or np.any(np.isnan(m)):
        raise ValueError("Poisson mean must be >= 0")
    return m


def poisson_log_pmf(mean, count):
    """log Pr(X = count) for X ~ Poisson(mean); LOG_ZERO when the mass is zero."""
    m = _check_mean(mean)
    c = np.asarray(count, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = c * np.log(m) - m - gammaln(c + 1.0)
    zero_mean = m == 0
    out = np.where(zero_mean, np.where(c == 0, 0.0, LOG_ZERO), out)
    out = np.where(c < 0, LOG_ZERO, out)
    return float(out) if out.ndim == 0 else out


def poisson_cdf_below(mean, threshold):
    """Pr(X < threshold) for X ~ Poisson(mean), threshold an integer (array ok)."""
    m = _check_mean(mean)
    th = np.asarray(threshold)
    k = np.ceil(th).astype(np.int64) - 1
    out = np.where(k < 0, 0.0, pdtr(np.maximum(k, 0), m))
    return float(out) if out.ndim == 0 else out


def poisson_cdf_below_sum(mean: float, threshold: int) -> float:
    """Reference partial sum of the Poisson pmf, accumulated with math.fsum."""
    if mean < 0:
        raise ValueError("Poisson mean must be >= 0")
    if threshold <= 0:
        return 0.0
    if mean == 0:
        return 1.0
    lm = math.log(mean)
    terms = [math.exp(k * lm - mean - math.lgamma(k + 1)) for k in range(int(threshold))]
    return min(1.0, math.fsum(terms))


def poisson_sample(stream: SeededStream, mean, size=None):
    m = np.asarray(mean, dtype=float)
    if not np.all(np.isfinite(m)):
        raise ValueError("Poisson mean must be finite")
    _check_mean(m)
    out = stream.rng.poisson(m, size=size)
    return int(out) if np.ndim(out) == 0 else out


def logsumexp(a, axis=None):
    """log(sum(exp(a))) that tolerates LOG_ZERO entries."""
    a = np.asarray(a, dtype=float)
    amax = np.max(a, axis=axis, keepdims=True)
    amax = np.where(np.isfinite(amax), amax, 0.0)
    with np.errstate(under="ignore"):
        s = np.sum(np.exp(a - amax), axis=axis, keepdims=True)
    with np.errstate(divide="ignore"):
        out = np.log(s) + amax
    out = np.where(s > 0, out, LOG_ZERO)
    out = np.maximum(out, LOG_ZERO)
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)
