"""Independent reference computations: plain loops, scipy.stats distributions, no package likelihood code."""
import itertools
import math

import numpy as np
from scipy import stats


def rx_one_prob(model, tx_hist, b, k):
    s0 = model.cfg.release.s0
    n = len(tx_hist)
    mean = s0 * (b * model.rx_sum[k][0] + sum(tx_hist[i] * model.rx_sum[k][n - i] for i in range(n)))
    xi = model.cfg.rx_thresholds[k]
    return float(stats.poisson.sf(xi - 1, mean)) if mean > 0 else float(xi <= 0)


def sd_likelihoods(model, tx_hist, rx_hist, count, s_k=None):
    """(L0, L1) of a pooled FC count by explicit enumeration of the 2^K RX decision vectors."""
    K = model.K
    s_k = model.cfg.release.s_k if s_k is None else s_k
    n = len(tx_hist)
    isi = sum(s_k[k] * rx_hist[k][i] * model.fc_sum[k][n - i] for k in range(K) for i in range(n))
    out = []
    for b in (0, 1):
        p = [rx_one_prob(model, tx_hist, b, k) for k in range(K)]
        tot = 0.0
        for bits in itertools.product((0, 1), repeat=K):
            pr = math.prod(p[k] if bits[k] else 1 - p[k] for k in range(K))
            mean = isi + sum(s_k[k] * bits[k] * model.fc_sum[k][0] for k in range(K))
            tot += pr * (stats.poisson.pmf(count, mean) if mean > 0 else float(count == 0))
        out.append(tot)
    return out[0], out[1], isi


def sd_direct_decision(model, tx_hist, rx_hist, count):
    """Direct argmax decision; zero FC ISI uses the count > 0 rule."""
    l0, l1, isi = sd_likelihoods(model, tx_hist, rx_hist, count)
    if isi == 0:
        return int(count > 0)
    return int(l1 >= l0)


def two_poisson_search(lam_s, lam_i, limit=None):
    """Smallest integer s with Pois(s; lam_i + lam_s) >= Pois(s; lam_i), by linear scan of log pmfs."""
    limit = limit or int(lam_i + lam_s + 20 * math.sqrt(lam_i + lam_s) + 50)
    for s in range(limit):
        if stats.poisson.logpmf(s, lam_i + lam_s) >= stats.poisson.logpmf(s, lam_i):
            return s
    return None


def md_direct_decision(model, tx_hist, rx_hist, counts):
    K = model.K
    s_k = model.cfg.release.s_k
    n = len(tx_hist)
    ll = []
    for b in (0, 1):
        tot = 0.0
        for k in range(K):
            p = rx_one_prob(model, tx_hist, b, k)
            isi = s_k[k] * sum(rx_hist[k][i] * model.fc_sum[k][n - i] for i in range(n))
            sig = s_k[k] * model.fc_sum[k][0]
            f1 = stats.poisson.pmf(counts[k], isi + sig)
            f0 = stats.poisson.pmf(counts[k], isi) if isi > 0 else float(counts[k] == 0)
            tot += math.log(max(p * f1 + (1 - p) * f0, 1e-320))
        ll.append(tot)
    return int(ll[1] >= ll[0])
