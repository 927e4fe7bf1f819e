"""Genie-aided error probabilities of SD-ML and SA-ML, the constant-threshold
approximation used for allocation, and the RX-history coin-toss model."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import gammaincc

from .channel import ChannelModel
from .detectors import (GENIE, SA_CONST, SA_ML, SD_CONST, SD_ML, DetectorVariant, lagged, mixture_threshold,
                        patterns, rx_one_probs, sa_means, sd_parts, two_point_threshold)
from .stochastic import SeededStream, poisson_cdf_below

log = logging.getLogger(__name__)

SUPPORTED = (SD_ML, SA_ML, SD_CONST, SA_CONST)


class UnsupportedVariantError(ValueError):
    pass


@dataclass(frozen=True)
class ErrorQuery:
    variant: str
    tx_prefix: tuple = ()
    p1: float = 0.5
    draws: int = 1000
    fc_constant_threshold: Optional[int] = None

    def __post_init__(self):
        if self.variant not in SUPPORTED:
            raise UnsupportedVariantError(f"no analytical error path for {self.variant}")
        if self.variant in (SD_CONST, SA_CONST) and self.fc_constant_threshold is None:
            raise ValueError("constant variants need fc_constant_threshold")
        if self.draws < 1:
            raise ValueError("draws must be >= 1")
        object.__setattr__(self, "tx_prefix", tuple(int(b) for b in self.tx_prefix))

    @property
    def j(self) -> int:
        return len(self.tx_prefix) + 1


@dataclass
class ErrorReport:
    variant: str
    history_mode: str
    q_bar: float
    std_err: float
    per_interval: np.ndarray
    per_interval_se: np.ndarray
    source: str
    seed: Optional[int] = None
    realizations: int = 0
    extra: dict = field(default_factory=dict)


@dataclass
class RxDecisionProbs:
    """Joint RX decision tables given the current TX bit (0 -> alpha, 1 -> beta)."""
    patterns: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    p_one: np.ndarray          # (2, K) Pr(RX k decides 1 | b)
    sigma: np.ndarray
    nu: np.ndarray
    tx_bit: int = 1

    def table(self, b: Optional[int] = None) -> np.ndarray:
        b = self.tx_bit if b is None else b
        return self.beta if b else self.alpha

    def joint(self, b: int, bits) -> float:
        idx = np.flatnonzero((self.patterns == np.asarray(bits)).all(axis=1))[0]
        return float(self.table(b)[idx])

    @property
    def alpha_sym(self) -> float:
        return self.joint(0, (1, 0))

    @property
    def beta_sym(self) -> float:
        return self.joint(1, (1, 0))


def _variant_kind(variant) -> str:
    return variant.kind if isinstance(variant, DetectorVariant) else str(variant)


# ---------------------------------------------------------------- RX history model

def link_error_probs(model: ChannelModel, tx_prefix) -> np.ndarray:
    """Per-interval RX decision error probabilities given the TX sequence: shape (..., K, n)."""
    w = np.asarray(tx_prefix, dtype=float)
    if w.shape[-1] == 0:
        return np.zeros(w.shape[:-1] + (model.K, 0))
    means = model.rx_means(w)
    xi = np.asarray(model.cfg.rx_thresholds)[:, None]
    miss = poisson_cdf_below(means, xi)
    return np.where(w[..., None, :] == 1, miss, 1.0 - miss)


def coin_toss_rx_history(stream: SeededStream, tx_prefix, link_error_probs, coupled: bool = False) -> np.ndarray:
    """RX decisions modelled as the TX symbol flipped with the link error probability.

    ``coupled`` uses one uniform per interval for all RXs, so RXs with equal
    error probabilities get identical histories.
    """
    w = np.asarray(tx_prefix, dtype=np.int64)
    p = np.asarray(link_error_probs, dtype=float)
    shape = p.shape
    if coupled:
        u = stream.rng.random(shape[:-2] + (1, shape[-1]))
    else:
        u = stream.rng.random(shape)
    flip = (u < p).astype(np.int64)
    return np.abs(flip - w[..., None, :])


def rx_decision_probs(model: ChannelModel, tx_bit: int, tx_prefix, rx_history=None) -> RxDecisionProbs:
    """Joint RX decision probabilities for the current interval, RXs independent given the TX sequence."""
    w = np.asarray(tx_prefix, dtype=float)
    K = model.K
    pats = patterns(K)
    p_one = np.stack([rx_one_probs(model, w, b) for b in (0, 1)])
    tables = []
    for b in (0, 1):
        p = p_one[b]
        tables.append(np.prod(np.where(pats == 1, p, 1.0 - p), axis=1))
    if rx_history is None:
        sigma = np.zeros(K)
    else:
        rxh = np.asarray(rx_history, dtype=float)
        sigma = np.array([lagged(rxh[k], model.fc_sum[k]) for k in range(K)])
    return RxDecisionProbs(patterns=pats, alpha=tables[0], beta=tables[1], p_one=p_one,
                           sigma=sigma, nu=model.nu, tx_bit=int(tx_bit))


# ---------------------------------------------------------------- SD-ML

def _mixture_error(p1, logp, lam, below) -> np.ndarray:
    """P1 * sum_h Pr(h|1) * below_h + (1-P1) * sum_h Pr(h|0) * (1 - below_h)."""
    pr1 = np.exp(logp[1])
    pr0 = np.exp(logp[0])
    q = p1 * np.sum(pr1 * below, axis=-1) + (1.0 - p1) * np.sum(pr0 * (1.0 - below), axis=-1)
    return np.clip(q, 0.0, 1.0)


def sd_conditional_error(model: ChannelModel, tx_prefix, rx_histories, p1: float = 0.5, s_k=None,
                         xi=None) -> np.ndarray:
    """Error probability of SD detection for each drawn RX history.

    ``rx_histories`` has shape (..., K, j-1) and broadcasts against
    ``tx_prefix`` (..., j-1).  Without ``xi`` the adaptive ML threshold is used
    (count > 0 rule when the ISI vanishes).
    """
    parts = sd_parts(model, tx_prefix, rx_histories, s_k=s_k)
    logp = parts.logp
    while logp.ndim < parts.isi.ndim + 2:  # unbatched TX prefix against batched RX histories
        logp = logp[:, None]
    logp = np.broadcast_to(logp, (2,) + parts.isi.shape + parts.logp.shape[-1:])
    if xi is None:
        xi = mixture_threshold(parts.isi, parts.sig, logp[1], logp[0])
    xi = np.broadcast_to(np.asarray(xi), parts.isi.shape)
    lam = parts.isi[..., None] + parts.sig
    below = poisson_cdf_below(lam, xi[..., None])
    return _mixture_error(p1, logp, lam, below)


def adaptive_threshold(model: ChannelModel, tx_prefix, rx_history, s_k=None) -> int:
    parts = sd_parts(model, tx_prefix, rx_history, s_k=s_k)
    return int(mixture_threshold(parts.isi, parts.sig, parts.logp[1], parts.logp[0]))


def q_sharp(s_alloc, xi, tx_prefix, rx_history, model: ChannelModel, p1: float = 0.5,
            continuous: bool = False) -> float:
    """Constant-threshold SD error probability for allocation ``s_alloc`` and one RX history.

    Discrete form: Poisson CDF below ceil(xi).  Continuous form: regularized
    upper incomplete Gamma Q(xi, mean), which interpolates it in xi.
    """
    s = np.asarray(s_alloc, dtype=float)
    if np.any(s < 0):
        raise ValueError("allocation entries must be >= 0")
    if xi < 0:
        raise ValueError("threshold must be >= 0")
    parts = sd_parts(model, tx_prefix, rx_history, s_k=s)
    lam = parts.isi[..., None] + parts.sig
    if continuous:
        below = gammaincc(xi, lam) if xi > 0 else np.zeros_like(lam)
    else:
        below = poisson_cdf_below(lam, np.full(lam.shape, xi))
    return float(_mixture_error(p1, parts.logp, lam, below))


def draw_rx_histories(model: ChannelModel, tx_prefix, draws: int, stream: SeededStream,
                      coupled: bool = False) -> np.ndarray:
    w = np.asarray(tx_prefix, dtype=np.int64)
    p = link_error_probs(model, w)
    p = np.broadcast_to(p, (draws,) + p.shape)
    return coin_toss_rx_history(stream, w, p, coupled=coupled)


def q_fc_sd_draws(query: ErrorQuery, model: ChannelModel, stream: Optional[SeededStream] = None,
                  rx_histories=None) -> np.ndarray:
    if query.variant not in (SD_ML, SD_CONST):
        raise UnsupportedVariantError(query.variant)
    if model.K < 1:
        raise ValueError("empty model")
    w = np.asarray(query.tx_prefix, dtype=float)
    if rx_histories is None:
        stream = stream or SeededStream(0)
        rx_histories = draw_rx_histories(model, w, query.draws, stream)
    xi = query.fc_constant_threshold if query.variant == SD_CONST else None
    return sd_conditional_error(model, w, rx_histories, query.p1, xi=xi)


def q_fc_sd(query: ErrorQuery, model: ChannelModel, stream: Optional[SeededStream] = None,
            rx_histories=None) -> float:
    """Genie-aided SD-ML error probability in interval j for a given TX prefix.

    Averages the conditional error over coin-toss RX histories; draws with
    zero ISI fall into the count > 0 rule automatically.
    """
    return float(np.mean(q_fc_sd_draws(query, model, stream, rx_histories)))


# ---------------------------------------------------------------- SA-ML

def calibrate_amplification(model: ChannelModel, target_release: float = 1000.0, p1: Optional[float] = None,
                            L: Optional[int] = None) -> float:
    """Common amplification factor giving ``target_release`` total RX molecules per symbol on average."""
    rel = model.cfg.release
    p1 = rel.p1 if p1 is None else p1
    L = model.cfg.timing.L if L is None else L
    cum = np.cumsum(model.rx_sum[:, :L], axis=1)  # expected RX sum at interval j per unit P1*S0
    mean_total = rel.s0 * p1 * float(cum.mean(axis=1).sum())
    if mean_total <= 0:
        raise ValueError("no signal reaches the RXs")
    return target_release / mean_total


def _sa_error_from_counts(model: ChannelModel, counts_past, counts_now, xi, p1) -> np.ndarray:
    """counts_past (..., K, j-1); counts_now (2, ..., K) for b = 0, 1."""
    alpha = np.asarray(model.cfg.release.alpha_k)
    rel_past = np.floor(alpha[:, None] * counts_past + 0.5)
    base = np.zeros(rel_past.shape[:-2])
    for k in range(model.K):
        base = base + lagged(rel_past[..., k, :], model.fc_sum[k])
    rel_now = np.floor(alpha * counts_now + 0.5)
    means = base + np.sum(rel_now * model.fc_sum[:, 0], axis=-1)  # (2, ...)
    below = poisson_cdf_below(means, np.broadcast_to(xi, means.shape))
    return np.clip(p1 * below[1] + (1 - p1) * (1 - below[0]), 0.0, 1.0)


def q_fc_sa_draws(query: ErrorQuery, model: ChannelModel, stream: Optional[SeededStream] = None) -> np.ndarray:
    if query.variant not in (SA_ML, SA_CONST):
        raise UnsupportedVariantError(query.variant)
    if model.K < 1:
        raise ValueError("empty model")
    stream = stream or SeededStream(0)
    w = np.asarray(query.tx_prefix, dtype=float)
    s0 = model.cfg.release.s0
    if query.variant == SA_CONST:
        xi = query.fc_constant_threshold
    else:
        isi, sig = sa_means(model, w)
        xi = int(two_point_threshold(isi, sig))
    D = query.draws
    past_means = model.rx_means(w) if w.size else np.zeros((model.K, 0))
    counts_past = stream.rng.poisson(np.broadcast_to(past_means, (D,) + past_means.shape))
    isi_now = s0 * np.array([lagged(w, model.rx_sum[k]) for k in range(model.K)])
    now = np.stack([stream.rng.poisson(np.broadcast_to(isi_now + b * s0 * model.rx_sum[:, 0], (D, model.K)))
                    for b in (0, 1)])
    return _sa_error_from_counts(model, counts_past, now, xi, query.p1)


def q_fc_sa(query: ErrorQuery, model: ChannelModel, stream: Optional[SeededStream] = None) -> float:
    """Genie-aided SA error probability in interval j, averaged over RX count realizations.

    The threshold is the mean-path ML crossing; the FC count is Poisson given
    the realized RX releases, so release randomness is kept.
    """
    return float(np.mean(q_fc_sa_draws(query, model, stream)))


# ---------------------------------------------------------------- symmetric-case sign condition

def upsilon(xi, N, nu, sigma, alpha, beta, p1) -> float:
    if N < 0 or nu < 0 or sigma < 0:
        raise ValueError("N, nu and sigma must be >= 0")
    return float((alpha * (p1 - 1) + beta * p1) * (2 + N * (nu + 2 * sigma) - 2 * np.ceil(xi)))


# ---------------------------------------------------------------- averaged error

def averaged_error(variant, model: ChannelModel, realizations: int, stream: SeededStream,
                   fc_constant_threshold: Optional[int] = None, L: Optional[int] = None,
                   tx_symbols=None) -> ErrorReport:
    """Average genie-aided error probability over intervals 1..L and random TX sequences.

    One RX history (SD) or RX count realization (SA) is drawn per sequence and
    shared by all its intervals; the standard error is taken across sequences.
    """
    kind = _variant_kind(variant)
    if isinstance(variant, DetectorVariant) and variant.fc_constant_threshold is not None:
        fc_constant_threshold = variant.fc_constant_threshold
    if kind not in SUPPORTED:
        raise UnsupportedVariantError(f"no analytical error path for {kind}")
    if realizations < 1:
        raise ValueError("realizations must be >= 1")
    rel = model.cfg.release
    L = model.cfg.timing.L if L is None else L
    R = realizations
    p1 = rel.p1
    if tx_symbols is None:
        tx = (stream.fork(1).rng.random((R, L)) < p1).astype(np.int64)
    else:
        tx = np.asarray(tx_symbols, dtype=np.int64).reshape(R, L)
    q = np.zeros((R, L))
    hist_stream = stream.fork(2)
    if kind in (SD_ML, SD_CONST):
        p = link_error_probs(model, tx)
        rxh = coin_toss_rx_history(hist_stream, tx, p)
        xi = fc_constant_threshold if kind == SD_CONST else None
        for j in range(1, L + 1):
            q[:, j - 1] = sd_conditional_error(model, tx[:, :j - 1], rxh[:, :, :j - 1], p1, xi=xi)
    else:
        counts = hist_stream.rng.poisson(model.rx_means(tx))  # (R, K, L)
        s0 = rel.s0
        for j in range(1, L + 1):
            w = tx[:, :j - 1].astype(float)
            if kind == SA_CONST:
                xi = np.full(R, fc_constant_threshold)
            else:
                isi, sig = sa_means(model, w)
                xi = two_point_threshold(isi, sig)
            isi_now = s0 * np.stack([lagged(w, model.rx_sum[k]) for k in range(model.K)], axis=-1)
            now = np.stack([hist_stream.rng.poisson(isi_now + b * s0 * model.rx_sum[:, 0]) for b in (0, 1)])
            q[:, j - 1] = _sa_error_from_counts(model, counts[:, :, :j - 1], now, xi, p1)
    per_seq = q.mean(axis=1)
    se = float(per_seq.std(ddof=1) / np.sqrt(R)) if R > 1 else 0.0
    per_int_se = q.std(axis=0, ddof=1) / np.sqrt(R) if R > 1 else np.zeros(L)
    return ErrorReport(variant=kind, history_mode=GENIE, q_bar=float(per_seq.mean()), std_err=se,
                       per_interval=q.mean(axis=0), per_interval_se=per_int_se, source="analytic",
                       seed=stream.seed, realizations=R)
