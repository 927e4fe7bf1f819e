"""Deterministic diffusion-channel mathematics.

Hitting probabilities of passive spherical observers, per-lag link profiles,
Poisson observation means, and ISI/signal decompositions at the FC.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import erfc

from .config import SystemConfig, TimingConfig

TX_TO_RX = "tx_to_rx"
RX_TO_FC = "rx_to_fc"


def hitting_probability(r_obs, d, diff_coef, t):
    """Probability that a molecule released at distance ``d`` from the centre of a
    passive sphere of radius ``r_obs`` is inside the sphere at time ``t``.

    Accepts scalars or broadcastable arrays; returns a float for scalar input.
    """
    r_obs, d, diff_coef, t = (np.asarray(x, dtype=float) for x in (r_obs, d, diff_coef, t))
    for name, x in (("r_obs", r_obs), ("d", d), ("diff_coef", diff_coef), ("t", t)):
        if not np.all(np.isfinite(x)) or np.any(x <= 0):
            raise ValueError(f"{name} must be finite and > 0")
    root = np.sqrt(diff_coef * t)
    tau1 = (r_obs + d) / (2 * root)
    tau2 = (r_obs - d) / (2 * root)
    # 0.5*(erf(tau1) + erf(tau2)) written with erfc to keep small values accurate
    p = 0.5 * (erfc(-tau2) - erfc(tau1))
    p = p + root / (d * np.sqrt(np.pi)) * (np.exp(-tau1 ** 2) - np.exp(-tau2 ** 2))
    p = np.clip(p, 0.0, 1.0)
    return float(p) if p.ndim == 0 else p


@dataclass(frozen=True)
class LinkProfile:
    """Hitting probabilities of one link on its sample grid.

    ``per_sample_probs[lag, m]`` is evaluated at ``lag*T + (m+1)*dt``.
    """
    per_sample_probs: np.ndarray
    summed_by_lag: np.ndarray

    def __post_init__(self):
        for arr in (self.per_sample_probs, self.summed_by_lag):
            arr.setflags(write=False)

    @property
    def n_lags(self) -> int:
        return self.summed_by_lag.shape[0]


def build_link_profile(r_obs, d, diff_coef, timing: TimingConfig, phase: str,
                       n_lags: int | None = None) -> LinkProfile:
    if phase == TX_TO_RX:
        dt, m = timing.dt_rx, timing.m_rx
    elif phase == RX_TO_FC:
        dt, m = timing.dt_fc, timing.m_fc
    else:
        raise ValueError(f"unknown phase {phase!r}")
    n_lags = timing.L if n_lags is None else n_lags
    if m == 0:
        probs = np.zeros((n_lags, 0))
    else:
        times = np.arange(n_lags)[:, None] * timing.T + dt * np.arange(1, m + 1)[None, :]
        probs = np.asarray(hitting_probability(r_obs, d, diff_coef, times)).reshape(n_lags, m)
    return LinkProfile(per_sample_probs=probs, summed_by_lag=probs.sum(axis=1))


def causal_sum(history, summed, include_current: bool = False) -> np.ndarray:
    """Lagged sums over a sequence axis (the last axis).

    out[..., j] = sum_{l>=1} history[..., j-l] * summed[l]  (0-based j); with
    ``include_current`` the l = 0 term is added.
    """
    h = np.asarray(history, dtype=float)
    n = h.shape[-1]
    out = np.zeros_like(h)
    start = 0 if include_current else 1
    for lag in range(start, min(n, len(summed))):
        if lag == 0:
            out += h * summed[0]
        else:
            out[..., lag:] += h[..., :-lag] * summed[lag]
    return out


def mean_rx_count(profile: LinkProfile, tx_symbols: Sequence[int], j: int, s0: float) -> float:
    """Expected RX sample-sum in interval ``j`` (1-based)."""
    if not 1 <= j <= len(tx_symbols):
        raise IndexError("interval index out of range")
    w = np.asarray(tx_symbols[:j], dtype=float)
    lags = profile.summed_by_lag[j - 1::-1] if j <= profile.n_lags else None
    if lags is None:
        raise IndexError("profile has too few lags")
    return float(s0 * np.dot(w, lags))


def _lagged_dot(history, summed) -> float:
    # sum_{i<j} h[i] * summed[j - i] with j = len(history) + 1
    h = np.asarray(history, dtype=float)
    n = h.size
    if n == 0:
        return 0.0
    return float(np.dot(h, summed[n:0:-1]))


def sd_fc_isi_and_signal(profiles: Sequence[LinkProfile], rx_history, rx_current, s_k):
    """FC ISI mean from past RX decisions and signal mean for one current decision vector."""
    K = len(profiles)
    if len(rx_history) != K or len(rx_current) != K or len(s_k) != K:
        raise ValueError("mismatched K")
    isi = 0.0
    sig = 0.0
    for k in range(K):
        isi += s_k[k] * _lagged_dot(rx_history[k], profiles[k].summed_by_lag)
        sig += s_k[k] * rx_current[k] * profiles[k].summed_by_lag[0]
    return isi, sig


def sd_fc_mean_direct(profiles, rx_history, rx_current, s_k) -> float:
    """Conditional FC mean written as one double sum over links and samples."""
    total = 0.0
    j = len(rx_history[0]) + 1
    for k, prof in enumerate(profiles):
        for m in range(prof.per_sample_probs.shape[1]):
            acc = rx_current[k] * prof.per_sample_probs[0, m]
            for i in range(1, j):
                acc += rx_history[k][i - 1] * prof.per_sample_probs[j - i, m]
            total += s_k[k] * acc
    return total


def sa_fc_isi_and_signal(fc_profiles, tx_history, alpha_k, s0, rx_profiles):
    """Mean-path ISI and signal at the FC for amplify-and-forward relaying."""
    K = len(fc_profiles)
    if len(alpha_k) != K or len(rx_profiles) != K:
        raise ValueError("mismatched K")
    w = np.asarray(tx_history, dtype=float)
    n = w.size
    isi = 0.0
    sig = 0.0
    for k in range(K):
        rx = rx_profiles[k].summed_by_lag
        fc = fc_profiles[k].summed_by_lag
        if n:
            # expected RX sums of the past intervals, each given its own prefix
            rx_means = s0 * causal_sum(w, rx, include_current=True)
            isi += alpha_k[k] * float(np.dot(rx_means, fc[n:0:-1]))
            isi += alpha_k[k] * s0 * _lagged_dot(w, rx) * fc[0]
        sig += alpha_k[k] * s0 * rx[0] * fc[0]
    return isi, sig


def nu_sigma(profile_k: LinkProfile, rx_history_k) -> tuple:
    return float(profile_k.summed_by_lag[0]), _lagged_dot(rx_history_k, profile_k.summed_by_lag)


class ChannelModel:
    """Link profiles of every TX->RX and RX->FC link of a system, cached as arrays."""

    def __init__(self, cfg: SystemConfig, n_lags: int | None = None):
        self.cfg = cfg
        sp, tm, rel = cfg.spatial, cfg.timing, cfg.release
        n_lags = tm.L if n_lags is None else n_lags
        self.rx_profiles = [build_link_profile(sp.rx_radius[k], sp.d_tx[k], rel.d0, tm, TX_TO_RX, n_lags)
                            for k in range(cfg.K)]
        self.fc_profiles = [build_link_profile(sp.fc_radius, sp.d_fc[k], rel.d_k[k], tm, RX_TO_FC, n_lags)
                            for k in range(cfg.K)]
        self.rx_sum = np.array([p.summed_by_lag for p in self.rx_profiles])  # (K, lags)
        self.fc_sum = np.array([p.summed_by_lag for p in self.fc_profiles])
        self.rx_sum.setflags(write=False)
        self.fc_sum.setflags(write=False)

    @property
    def K(self) -> int:
        return self.cfg.K

    @property
    def nu(self) -> np.ndarray:
        return self.fc_sum[:, 0].copy()

    def rx_means(self, tx_symbols) -> np.ndarray:
        """Expected RX sums for every interval: shape (..., K, L) from symbols (..., L)."""
        w = np.asarray(tx_symbols, dtype=float)
        s0 = self.cfg.release.s0
        return np.stack([s0 * causal_sum(w, self.rx_sum[k], include_current=True)
                         for k in range(self.K)], axis=-2)

    def rx_isi_means(self, tx_symbols) -> np.ndarray:
        """RX means excluding the current symbol: shape (..., K, L)."""
        w = np.asarray(tx_symbols, dtype=float)
        s0 = self.cfg.release.s0
        return np.stack([s0 * causal_sum(w, self.rx_sum[k]) for k in range(self.K)], axis=-2)

    def fc_isi_per_rx(self, rx_decisions) -> np.ndarray:
        """Per-RX unweighted FC ISI sums sigma_k[j] from past decisions (..., K, L)."""
        d = np.asarray(rx_decisions, dtype=float)
        return np.stack([causal_sum(d[..., k, :], self.fc_sum[k]) for k in range(self.K)], axis=-2)
