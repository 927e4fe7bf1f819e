"""RX energy detection and FC decision rules.

Every ML rule has two routes: a reduced form (adaptive count threshold) used
for speed, and the direct likelihood comparison it must agree with.  The
numerical cores are vectorized over a leading batch axis so that the same
code serves single frames, the batch runner and the analytics.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .channel import ChannelModel, causal_sum
from .stochastic import LOG_ZERO, SeededStream, logsumexp, poisson_cdf_below, poisson_log_pmf

MD_ML = "MD_ML"
SD_ML = "SD_ML"
SA_ML = "SA_ML"
MAJORITY = "MAJORITY"
SD_CONST = "SD_CONST"
SA_CONST = "SA_CONST"
KINDS = (MD_ML, SD_ML, SA_ML, MAJORITY, SD_CONST, SA_CONST)
ML_KINDS = (MD_ML, SD_ML, SA_ML)
CONST_KINDS = (MAJORITY, SD_CONST, SA_CONST)
AF_KINDS = (SA_ML, SA_CONST)
PER_SPECIES_KINDS = (MD_ML, MAJORITY)

LOCAL = "local"
GENIE = "genie"


@dataclass(frozen=True)
class DetectorVariant:
    kind: str
    history_mode: str = GENIE
    fc_constant_threshold: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown detector kind {self.kind!r}")
        if self.history_mode not in (LOCAL, GENIE):
            raise ValueError(f"unknown history mode {self.history_mode!r}")
        has_const = self.fc_constant_threshold is not None
        if has_const != (self.kind in CONST_KINDS):
            raise ValueError("a constant FC threshold is required exactly for constant-threshold kinds")

    @property
    def relay(self) -> str:
        return "AF" if self.kind in AF_KINDS else "DF"

    @property
    def label(self) -> str:
        if self.kind in CONST_KINDS:
            return self.kind
        return f"{self.kind}/{self.history_mode}"


# ---------------------------------------------------------------- patterns

def patterns(K: int) -> np.ndarray:
    """All 2^K RX decision vectors, rows ordered by (number of ones, lexicographic)."""
    rows = sorted(itertools.product((0, 1), repeat=K), key=lambda r: (sum(r), r))
    return np.array(rows, dtype=np.int64)


def _safe_log(p):
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(p > 0, np.log(np.where(p > 0, p, 1.0)), LOG_ZERO)


def pattern_log_probs(p_one, pats: np.ndarray) -> np.ndarray:
    """log Pr(pattern) for independent RX decisions with Pr(bit k = 1) = p_one[..., k]."""
    p = np.asarray(p_one, dtype=float)[..., None, :]
    lp1 = _safe_log(p)
    lp0 = _safe_log(1.0 - p)
    terms = np.where(pats == 1, lp1, lp0)
    return np.maximum(terms.sum(axis=-1), LOG_ZERO)


def rx_energy_decide(sum_count: int, threshold: int) -> int:
    if sum_count < 0 or threshold < 0:
        raise ValueError("nonnegative inputs required")
    return int(sum_count >= threshold)


def rx_one_probs(model: ChannelModel, tx_history, b) -> np.ndarray:
    """Pr(RX k decides 1 | current TX bit b, TX history) for every RX; shape (..., K).

    ``tx_history`` has shape (..., j-1); ``b`` broadcasts against the batch shape.
    """
    w = np.asarray(tx_history, dtype=float)
    n = w.shape[-1]
    s0 = model.cfg.release.s0
    rx = model.rx_sum
    isi = np.einsum("...i,ki->...k", w, rx[:, n:0:-1]) * s0 if n else np.zeros(w.shape[:-1] + (model.K,))
    mean = isi + np.asarray(b, dtype=float)[..., None] * s0 * rx[:, 0]
    xi = np.asarray(model.cfg.rx_thresholds)
    return 1.0 - poisson_cdf_below(mean, xi)


def lagged(history, summed) -> np.ndarray:
    """sum_{i<j} h[..., i] * summed[j - i] along the last axis (length j-1)."""
    h = np.asarray(history, dtype=float)
    n = h.shape[-1]
    if n == 0:
        return np.zeros(h.shape[:-1])
    return h @ np.asarray(summed)[n:0:-1]


# ---------------------------------------------------------------- SD-ML

@dataclass
class SDParts:
    isi: np.ndarray          # (...,)
    sig: np.ndarray          # (2^K,)
    logp: np.ndarray         # (2, ..., 2^K) log Pr(pattern | b)
    pats: np.ndarray


def sd_parts(model: ChannelModel, tx_history, rx_history, s_k=None) -> SDParts:
    """Likelihood ingredients of SD-ML.

    tx_history (..., j-1) drives the RX decision probabilities; rx_history
    (..., K, j-1) drives the FC ISI.
    """
    s_k = np.asarray(model.cfg.release.s_k if s_k is None else s_k, dtype=float)
    K = model.K
    pats = patterns(K)
    rxh = np.asarray(rx_history, dtype=float)
    isi = np.zeros(rxh.shape[:-2])
    for k in range(K):
        isi = isi + s_k[k] * lagged(rxh[..., k, :], model.fc_sum[k])
    sig = pats @ (s_k * model.fc_sum[:, 0])
    w = np.asarray(tx_history, dtype=float)
    logp = np.stack([pattern_log_probs(rx_one_probs(model, w, np.full(w.shape[:-1], b)), pats)
                     for b in (0, 1)])
    return SDParts(isi=isi, sig=sig, logp=logp, pats=pats)


def mixture_llr(s, isi, sig, logp1, logp0) -> np.ndarray:
    """log L1 - log L0 for Poisson mixtures with means isi + sig[h]."""
    s = np.asarray(s, dtype=float)[..., None]
    mean = np.asarray(isi, dtype=float)[..., None] + sig
    lp = poisson_log_pmf(mean, s)
    l1 = logsumexp(logp1 + lp, axis=-1)
    l0 = logsumexp(logp0 + lp, axis=-1)
    return l1 - l0


def search_limit(isi, sig) -> np.ndarray:
    mmax = np.asarray(isi, dtype=float) + np.max(sig)
    return np.ceil(mmax + 12.0 * np.sqrt(mmax)).astype(np.int64) + 1


def mixture_threshold(isi, sig, logp1, logp0) -> np.ndarray:
    """Smallest count with log L1 >= log L0 (binary search, monotone ratio assumed).

    Zero ISI uses the "decide 1 iff count > 0" rule, i.e. threshold 1.
    """
    isi = np.asarray(isi, dtype=float)
    lo = np.zeros(isi.shape, dtype=np.int64)
    hi = search_limit(isi, sig) + 1  # hi may mean "never within range"
    while True:
        active = lo < hi
        if not np.any(active):
            break
        mid = (lo + hi) // 2
        ok = mixture_llr(mid, isi, sig, logp1, logp0) >= 0
        hi = np.where(active & ok, mid, hi)
        lo = np.where(active & ~ok, mid + 1, lo)
    return np.where(isi > 0, lo, 1)


def sd_estimate_pattern(s, isi, sig, pats) -> np.ndarray:
    """Most likely current RX vector given the FC count; ties to fewest ones, then lexicographic."""
    mean = np.asarray(isi, dtype=float)[..., None] + sig
    lp = poisson_log_pmf(mean, np.asarray(s, dtype=float)[..., None])
    return pats[np.argmax(lp, axis=-1)]


# ---------------------------------------------------------------- SA-ML

def sa_means(model: ChannelModel, tx_history, alpha=None):
    """Mean-path ISI and signal at the FC, batched over (..., j-1) histories."""
    rel = model.cfg.release
    alpha = np.asarray(rel.alpha_k if alpha is None else alpha, dtype=float)
    w = np.asarray(tx_history, dtype=float)
    n = w.shape[-1]
    isi = np.zeros(w.shape[:-1])
    for k in range(model.K):
        rx, fc = model.rx_sum[k], model.fc_sum[k]
        if n:
            past = rel.s0 * causal_sum(w, rx, include_current=True)
            isi = isi + alpha[k] * (past @ fc[n:0:-1])
            isi = isi + alpha[k] * rel.s0 * lagged(w, rx) * fc[0]
    sig = float(np.sum(alpha * rel.s0 * model.rx_sum[:, 0] * model.fc_sum[:, 0]))
    return isi, sig


def two_point_llr(s, lam_i, lam_s):
    """log Pois(s; lam_i + lam_s) - log Pois(s; lam_i) without the shared factorial."""
    s = np.asarray(s, dtype=float)
    lam_i = np.asarray(lam_i, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(lam_i > 0, np.log1p(lam_s / np.where(lam_i > 0, lam_i, 1.0)), np.inf)
        out = np.where(s > 0, s * r, 0.0) - lam_s
    return out


def two_point_threshold(lam_i, lam_s) -> np.ndarray:
    """Exact integer crossing of the two-Poisson likelihood ratio (ties decide 1).

    Zero ISI gives threshold 1; zero signal gives a threshold no count reaches.
    """
    lam_i = np.asarray(lam_i, dtype=float)
    lam_s = float(lam_s) if np.ndim(lam_s) == 0 else np.asarray(lam_s, dtype=float)
    safe_i = np.where(lam_i > 0, lam_i, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(np.asarray(lam_s) > 0, lam_s / np.log1p(lam_s / safe_i), np.inf)
    big = np.iinfo(np.int64).max // 4
    th = np.where(np.isfinite(x), np.ceil(np.minimum(x, 1e15)), big).astype(np.int64)
    # settle floating-point edge cases against the comparison itself
    for _ in range(2):
        fin = th < big
        down = fin & (th > 0) & (two_point_llr(th - 1, safe_i, lam_s) >= 0)
        th = np.where(down, th - 1, th)
        up = fin & (two_point_llr(th, safe_i, lam_s) < 0)
        th = np.where(up, th + 1, th)
    return np.where(lam_i > 0, th, 1)


def closed_form_threshold(lambda_s: float, lambda_i: float, rounding: str = "nearest") -> int:
    """Count threshold of the two-Poisson test, lambda_s / ln((lambda_i + lambda_s) / lambda_i).

    ``rounding="nearest"`` rounds half up; ``"ceil"`` gives the exact ML crossing.
    """
    if lambda_i <= 0:
        raise ValueError("lambda_i must be > 0; use the zero-ISI rule instead")
    if lambda_s <= 0:
        raise ValueError("lambda_s must be > 0")
    x = lambda_s / math.log1p(lambda_s / lambda_i)
    if rounding == "nearest":
        return int(math.floor(x + 0.5))
    if rounding == "ceil":
        return int(two_point_threshold(lambda_i, lambda_s))
    raise ValueError(f"unknown rounding {rounding!r}")


# ---------------------------------------------------------------- MD-ML

def md_llr_parts(model: ChannelModel, tx_history, rx_est_history, s_k=None):
    """Per-RX (sigma-scaled ISI, signal, log Pr(w=1|b), log Pr(w=0|b))."""
    s_k = np.asarray(model.cfg.release.s_k if s_k is None else s_k, dtype=float)
    rxh = np.asarray(rx_est_history, dtype=float)
    isi = np.stack([s_k[k] * lagged(rxh[..., k, :], model.fc_sum[k]) for k in range(model.K)], axis=-1)
    sig = s_k * model.fc_sum[:, 0]
    w = np.asarray(tx_history, dtype=float)
    p = np.stack([rx_one_probs(model, w, np.full(w.shape[:-1], b)) for b in (0, 1)])  # (2, ..., K)
    return isi, sig, _safe_log(p), _safe_log(1.0 - p)


def md_llr(counts, isi, sig, lp1, lp0) -> np.ndarray:
    c = np.asarray(counts, dtype=float)
    f1 = poisson_log_pmf(isi + sig, c)
    f0 = poisson_log_pmf(isi, c)
    ll = []
    for b in (0, 1):
        pair = np.stack([lp1[b] + f1, lp0[b] + f0], axis=-1)
        ll.append(logsumexp(pair, axis=-1).sum(axis=-1))
    return ll[1] - ll[0]


def md_estimates(counts, isi, sig) -> np.ndarray:
    c = np.asarray(counts, dtype=float)
    return (poisson_log_pmf(isi + sig, c) >= poisson_log_pmf(isi, c)).astype(np.int64)


# ---------------------------------------------------------------- frame API

@dataclass
class SymbolFrame:
    """Everything observed and decided in one symbol interval."""
    j: int
    tx_symbol: int
    rx_sums: tuple
    fc_sums: object               # per-species tuple (MD, majority) or pooled int
    fc_decision: int
    rx_decisions: Optional[tuple] = None   # DF
    rx_releases: Optional[tuple] = None    # AF
    fc_rx_estimates: Optional[tuple] = None

    @property
    def pooled_fc(self) -> int:
        return int(np.sum(self.fc_sums))


@dataclass(frozen=True)
class LikelihoodContext:
    j: int
    fc_tx_history: tuple = ()
    fc_rx_histories: tuple = ()
    history_mode: str = LOCAL

    def __post_init__(self):
        if len(self.fc_tx_history) != self.j - 1:
            raise ValueError("TX history length must equal j - 1")
        if any(len(h) != self.j - 1 for h in self.fc_rx_histories):
            raise ValueError("RX history lengths must equal j - 1")

    @classmethod
    def initial(cls, K: int, history_mode: str = LOCAL) -> "LikelihoodContext":
        return cls(j=1, fc_tx_history=(), fc_rx_histories=tuple(() for _ in range(K)),
                   history_mode=history_mode)

    def rx_array(self) -> np.ndarray:
        K = len(self.fc_rx_histories)
        return np.asarray(self.fc_rx_histories, dtype=float).reshape(K, self.j - 1)


def update_local_history(ctx: LikelihoodContext, fc_decision: int, rx_estimates=None,
                         true_tx: Optional[int] = None, true_rx=None) -> LikelihoodContext:
    """Append this interval's entries; genie mode appends the true symbols instead."""
    if ctx.history_mode == GENIE:
        if true_tx is None:
            raise ValueError("genie mode needs the true symbols")
        tx_bit = int(true_tx)
        rx_bits = true_rx
    else:
        tx_bit = int(fc_decision)
        rx_bits = rx_estimates
    if rx_bits is None:
        rx_bits = [0] * len(ctx.fc_rx_histories)
    rx_hist = tuple(tuple(h) + (int(b),) for h, b in zip(ctx.fc_rx_histories, rx_bits))
    return replace(ctx, j=ctx.j + 1, fc_tx_history=ctx.fc_tx_history + (tx_bit,), fc_rx_histories=rx_hist)


def _check_ctx(ctx: LikelihoodContext, model: ChannelModel):
    if len(ctx.fc_rx_histories) not in (0, model.K):
        raise ValueError("mismatched K")
    if ctx.j - 1 >= model.rx_sum.shape[1]:
        raise ValueError("interval index beyond the cached link profiles")


def sd_ml_decide(ctx: LikelihoodContext, fc_sum: int, model: ChannelModel):
    """Adaptive-threshold SD-ML decision and the estimated current RX vector."""
    _check_ctx(ctx, model)
    parts = sd_parts(model, np.asarray(ctx.fc_tx_history, dtype=float), ctx.rx_array())
    xi = int(mixture_threshold(parts.isi, parts.sig, parts.logp[1], parts.logp[0]))
    bit = int(fc_sum >= xi)
    est = sd_estimate_pattern(fc_sum, parts.isi, parts.sig, parts.pats)
    return bit, tuple(int(x) for x in est)


def sd_ml_direct(ctx: LikelihoodContext, fc_sum: int, model: ChannelModel) -> int:
    """Direct argmax of the SD-ML mixture likelihood (ties decide 1)."""
    _check_ctx(ctx, model)
    parts = sd_parts(model, np.asarray(ctx.fc_tx_history, dtype=float), ctx.rx_array())
    return int(mixture_llr(fc_sum, parts.isi, parts.sig, parts.logp[1], parts.logp[0]) >= 0)


def md_ml_decide(ctx: LikelihoodContext, fc_sums: Sequence[int], model: ChannelModel):
    _check_ctx(ctx, model)
    if len(fc_sums) != model.K:
        raise ValueError("need one count per RX species")
    isi, sig, lp1, lp0 = md_llr_parts(model, np.asarray(ctx.fc_tx_history, dtype=float), ctx.rx_array())
    bit = int(md_llr(fc_sums, isi, sig, lp1, lp0) >= 0)
    est = md_estimates(fc_sums, isi, sig)
    return bit, tuple(int(x) for x in est)


def sa_ml_decide(ctx: LikelihoodContext, fc_sum: int, model: ChannelModel, realization_budget: int = 5000,
                 path: str = "mean", stream: Optional[SeededStream] = None, window: int = 10) -> int:
    if realization_budget < 1:
        raise ValueError("realization budget must be >= 1")
    _check_ctx(ctx, model)
    tx = np.asarray(ctx.fc_tx_history, dtype=float)
    if path == "mean":
        isi, sig = sa_means(model, tx)
        return int(fc_sum >= int(two_point_threshold(isi, sig)))
    if path == "mixture":
        stream = stream or SeededStream(0, (ctx.j,))
        l0 = sa_mixture_loglik(model, tx, 0, fc_sum, realization_budget, stream.fork(0), window)
        l1 = sa_mixture_loglik(model, tx, 1, fc_sum, realization_budget, stream.fork(1), window)
        return int(l1 >= l0)
    raise ValueError(f"unknown path {path!r}")


def sa_mixture_loglik(model: ChannelModel, tx_history, b: int, fc_sum: int, budget: int,
                      stream: SeededStream, window: int = 10) -> float:
    """Monte Carlo log-likelihood of an AF FC count, sampling RX counts of recent intervals.

    RX counts of the last ``window`` intervals (and the current one) are drawn
    from their Poisson laws; older intervals contribute their mean releases.
    """
    rel = model.cfg.release
    alpha = np.asarray(rel.alpha_k, dtype=float)
    w = np.concatenate([np.asarray(tx_history, dtype=float), [float(b)]])
    j = w.size
    means = np.stack([rel.s0 * causal_sum(w, model.rx_sum[k], include_current=True) for k in range(model.K)])
    lags = j - 1 - np.arange(j)  # lag of interval i relative to j
    sampled = lags <= window
    fc_lag = model.fc_sum[:, lags]  # (K, j)
    base = float(np.sum(alpha[:, None] * means[:, ~sampled] * fc_lag[:, ~sampled]))
    counts = stream.rng.poisson(np.broadcast_to(means[:, sampled], (budget,) + means[:, sampled].shape))
    releases = np.floor(alpha[None, :, None] * counts + 0.5)
    fc_mean = base + np.einsum("rki,ki->r", releases, fc_lag[:, sampled])
    lp = poisson_log_pmf(fc_mean, fc_sum)
    return logsumexp(lp) - math.log(budget)


def constant_or_majority_decide(variant: DetectorVariant, counts, K: Optional[int] = None):
    """SD/SA constant threshold on the pooled count, or majority vote over species."""
    if variant.fc_constant_threshold is None:
        raise ValueError("missing constant threshold")
    xi = variant.fc_constant_threshold
    if variant.kind in (SD_CONST, SA_CONST):
        return int(np.asarray(counts).sum() >= xi)
    if variant.kind == MAJORITY:
        est = np.asarray(counts) >= xi
        K = est.size if K is None else K
        return int(est.sum() >= math.ceil(K / 2))
    raise ValueError("not a constant-threshold variant")


def majority_vote(estimates) -> int:
    est = np.asarray(estimates)
    return int(est.sum() >= math.ceil(est.size / 2))


# ---------------------------------------------------------------- batch runner

@dataclass
class BatchResult:
    decisions: np.ndarray                 # (R, L)
    rx_estimates: Optional[np.ndarray] = None   # (R, K, L)
    thresholds: Optional[np.ndarray] = None     # (R, L)


def run_fc_detector(model: ChannelModel, variant: DetectorVariant, fc_counts, tx_symbols,
                    rx_decisions=None, stream: Optional[SeededStream] = None,
                    sa_path: str = "mean", realization_budget: int = 5000) -> BatchResult:
    """Run one FC detector over R recorded sequences, interval by interval.

    fc_counts: (R, L) pooled counts, or (R, K, L) per-species counts for
    MD-ML and the majority rule.  tx_symbols (R, L) and rx_decisions
    (R, K, L) are the true symbols, used only in genie mode.
    """
    counts = np.asarray(fc_counts)
    tx = np.asarray(tx_symbols)
    R, L = tx.shape
    K = model.K
    kind = variant.kind
    genie = variant.history_mode == GENIE
    dec = np.zeros((R, L), dtype=np.int64)
    est = np.zeros((R, K, L), dtype=np.int64)
    ths = np.zeros((R, L), dtype=np.int64)
    per_species = kind in PER_SPECIES_KINDS
    if per_species and counts.ndim != 3:
        raise ValueError("per-species counts required")
    pooled = counts.sum(axis=1) if counts.ndim == 3 else counts
    for j in range(1, L + 1):
        c = j - 1
        tx_hist = (tx if genie else dec)[:, :c].astype(float)
        if kind in (SD_ML, MD_ML):
            rx_hist = (np.asarray(rx_decisions) if genie else est)[:, :, :c].astype(float)
        if kind == SD_ML:
            parts = sd_parts(model, tx_hist, rx_hist)
            xi = mixture_threshold(parts.isi, parts.sig, parts.logp[1], parts.logp[0])
            dec[:, c] = pooled[:, c] >= xi
            ths[:, c] = xi
            est[:, :, c] = sd_estimate_pattern(pooled[:, c], parts.isi, parts.sig, parts.pats)
        elif kind == MD_ML:
            isi, sig, lp1, lp0 = md_llr_parts(model, tx_hist, rx_hist)
            dec[:, c] = md_llr(counts[:, :, c], isi, sig, lp1, lp0) >= 0
            est[:, :, c] = md_estimates(counts[:, :, c], isi, sig)
        elif kind == SA_ML:
            if sa_path == "mean":
                isi, sig = sa_means(model, tx_hist)
                xi = two_point_threshold(isi, sig)
                dec[:, c] = pooled[:, c] >= xi
                ths[:, c] = xi
            else:
                stream = stream or SeededStream(0)
                for r in range(R):
                    ctx = LikelihoodContext(j=j, fc_tx_history=tuple(int(x) for x in tx_hist[r]),
                                            fc_rx_histories=tuple((0,) * c for _ in range(K)))
                    dec[r, c] = sa_ml_decide(ctx, int(pooled[r, c]), model, realization_budget,
                                             "mixture", stream.fork(r, j))
        elif kind in (SD_CONST, SA_CONST):
            dec[:, c] = pooled[:, c] >= variant.fc_constant_threshold
            ths[:, c] = variant.fc_constant_threshold
        elif kind == MAJORITY:
            e = counts[:, :, c] >= variant.fc_constant_threshold
            est[:, :, c] = e
            dec[:, c] = e.sum(axis=1) >= math.ceil(K / 2)
    return BatchResult(decisions=dec, rx_estimates=est, thresholds=ths)
