"""Particle-based Monte Carlo of the two-phase system.

Two engines share one physical model (free 3-D Brownian motion, passive
spherical observers, closed-ball counting):

* a fast event-driven engine that jumps each molecule across protective
  spheres (exit time from the tabulated first-passage law, exit point uniform
  on the sphere) and only takes exact Gaussian steps when close to an
  observer; distributionally exact at every sample instant;
* a plain stepping engine (exact Gaussian increments on a schedule that lands
  on every event) used as an oracle for the fast one.

Observers never act on molecules and FC decisions never feed back into the
physics, so one physics realization can be scored by every FC detector.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numba import njit, uint64

from .analytics import ErrorReport
from .channel import ChannelModel
from .config import SystemConfig
from .detectors import (GENIE, LOCAL, MAJORITY, MD_ML, SA_CONST, SA_ML, SD_CONST, SD_ML, DetectorVariant,
                        LikelihoodContext, SymbolFrame, constant_or_majority_decide, md_ml_decide,
                        rx_energy_decide, run_fc_detector, sa_ml_decide, sd_ml_decide, update_local_history)
from .stochastic import SeededStream

log = logging.getLogger(__name__)

DEFAULT_RHO_MIN = 0.3e-6
_EXIT_TABLE: Optional[np.ndarray] = None


# ---------------------------------------------------------------- first-passage table

def exit_time_table(size: int = 1 << 16, grid: int = 200001) -> np.ndarray:
    """Inverse CDF of the exit time of 3-D Brownian motion from the centre of a unit ball (D = 1).

    Survival function 2 * sum_n (-1)^(n+1) exp(-n^2 pi^2 u); the table maps
    a uniform quantile grid of ``size + 1`` points to u.
    """
    u = np.linspace(0.0, 6.0, grid)
    n = np.arange(1, 120)[:, None]
    uu = np.maximum(u, 2e-3)[None, :]
    surv = 2.0 * np.sum(((-1.0) ** (n + 1)) * np.exp(-(n ** 2) * np.pi ** 2 * uu), axis=0)
    surv[u < 4e-3] = 1.0
    surv = np.minimum.accumulate(np.clip(surv, 0.0, 1.0))
    cdf = 1.0 - surv
    q = np.arange(size + 1) / size
    return np.interp(q, cdf, u)


def get_exit_table() -> np.ndarray:
    global _EXIT_TABLE
    if _EXIT_TABLE is None:
        _EXIT_TABLE = exit_time_table()
    return _EXIT_TABLE


# ---------------------------------------------------------------- numba kernels

@njit(inline="always")
def _rotl(x, k):
    return (x << uint64(k)) | (x >> uint64(64 - k))


@njit(inline="always")
def _next(s):
    # xoshiro256**
    r = _rotl(s[1] * uint64(5), 7) * uint64(9)
    t = s[1] << uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return r


@njit(inline="always")
def _unif(s):
    return (_next(s) >> uint64(11)) * (1.0 / 9007199254740992.0)


@njit(inline="always")
def _exit_time(s, tab):
    n = tab.size - 1
    x = _unif(s) * n
    i = int(x)
    f = x - i
    return tab[i] + f * (tab[i + 1] - tab[i])


@njit(inline="always")
def _gap(x, y, z, centers, radii):
    g = 1e300
    for k in range(centers.shape[0]):
        dx = x - centers[k, 0]
        dy = y - centers[k, 1]
        dz = z - centers[k, 2]
        v = np.sqrt(dx * dx + dy * dy + dz * dz) - radii[k]
        if v < g:
            g = v
    return g


@njit(cache=True, fastmath=True)
def _cohort(n, sx, sy, sz, t0, checks, centers, radii, D, rho_min, tab, out, s):
    """Advance ``n`` molecules released at (sx, sy, sz, t0); add closed-ball counts to out[k, c]."""
    nc = checks.size
    K = centers.shape[0]
    if nc == 0:
        return 0
    tlast = checks[nc - 1]
    hops = 0
    r2 = radii * radii
    for p in range(n):
        x = sx
        y = sy
        z = sz
        t = t0
        in_dom = False
        cx = 0.0
        cy = 0.0
        cz = 0.0
        R = 0.0
        texit = 0.0
        g = _gap(x, y, z, centers, radii)
        if g >= rho_min:
            in_dom = True
            cx = x
            cy = y
            cz = z
            R = g
            texit = t + _exit_time(s, tab) * R * R / D
        for c in range(nc):
            tc = checks[c]
            if in_dom:
                while in_dom and texit <= tc:
                    hops += 1
                    while True:
                        a = 2.0 * _unif(s) - 1.0
                        b = 2.0 * _unif(s) - 1.0
                        q = a * a + b * b
                        if q < 1.0:
                            break
                    w = 2.0 * np.sqrt(1.0 - q)
                    x = cx + R * a * w
                    y = cy + R * b * w
                    z = cz + R * (1.0 - 2.0 * q)
                    t = texit
                    g = _gap(x, y, z, centers, radii)
                    if g >= rho_min:
                        cx = x
                        cy = y
                        cz = z
                        R = g
                        texit = t + _exit_time(s, tab) * R * R / D
                    else:
                        in_dom = False
                if in_dom:
                    # still inside a sphere that avoids every observer at tc
                    if texit > tlast:
                        break
                    continue
            if tc > t:
                sd = np.sqrt(2.0 * D * (tc - t))
                u1 = _unif(s)
                u2 = _unif(s)
                m = np.sqrt(-2.0 * np.log(1.0 - u1))
                x += sd * m * np.cos(2.0 * np.pi * u2)
                y += sd * m * np.sin(2.0 * np.pi * u2)
                u1 = _unif(s)
                u2 = _unif(s)
                m = np.sqrt(-2.0 * np.log(1.0 - u1))
                z += sd * m * np.cos(2.0 * np.pi * u2)
                t = tc
            for k in range(K):
                dx = x - centers[k, 0]
                dy = y - centers[k, 1]
                dz = z - centers[k, 2]
                if dx * dx + dy * dy + dz * dz <= r2[k]:
                    out[k, c] += 1
            g = _gap(x, y, z, centers, radii)
            if g >= rho_min:
                in_dom = True
                cx = x
                cy = y
                cz = z
                R = g
                texit = t + _exit_time(s, tab) * R * R / D
    return hops


def rng_state(stream: SeededStream) -> np.ndarray:
    st = stream.rng.integers(1, 2 ** 63 - 1, size=4, dtype=np.int64).astype(np.uint64)
    return st


def simulate_cohort(n: int, source, t0: float, checks, centers, radii, diff_coef: float, state: np.ndarray,
                    rho_min: float = DEFAULT_RHO_MIN) -> np.ndarray:
    """Closed-ball counts of one released cohort at each observer and check time: (n_obs, n_checks)."""
    checks = np.ascontiguousarray(checks, dtype=float)
    centers = np.ascontiguousarray(np.atleast_2d(centers), dtype=float)
    radii = np.ascontiguousarray(np.atleast_1d(radii), dtype=float)
    if checks.size and checks[0] <= t0:
        raise ValueError("check times must follow the release")
    if np.any(np.diff(checks) < 0):
        raise ValueError("check times must be sorted")
    out = np.zeros((centers.shape[0], checks.size), dtype=np.int64)
    if n > 0:
        src = np.asarray(source, dtype=float)
        _cohort(int(n), src[0], src[1], src[2], float(t0), checks, centers, radii, float(diff_coef),
                float(rho_min), get_exit_table(), out, state)
    return out


# ---------------------------------------------------------------- plain stepping engine

@dataclass
class ParticleState:
    positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    species: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    emitted_at: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.species = np.asarray(self.species, dtype=np.int64).reshape(-1)
        self.emitted_at = np.asarray(self.emitted_at, dtype=float).reshape(-1)
        if not (len(self.positions) == len(self.species) == len(self.emitted_at)):
            raise ValueError("inconsistent particle arrays")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("non-finite coordinates")

    def __len__(self):
        return len(self.species)

    def emit(self, n: int, at, species: int, t: float) -> "ParticleState":
        pos = np.repeat(np.asarray(at, dtype=float).reshape(1, 3), n, axis=0)
        return ParticleState(np.vstack([self.positions, pos]),
                             np.concatenate([self.species, np.full(n, species, dtype=np.int64)]),
                             np.concatenate([self.emitted_at, np.full(n, t)]))

    def count(self, species: int) -> int:
        return int(np.count_nonzero(self.species == species))


def brownian_advance(state: ParticleState, dt: float, diff_coef, stream: SeededStream) -> ParticleState:
    """Exact Brownian increment over dt; diff_coef is a scalar or a per-species mapping/array."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if np.isscalar(diff_coef):
        d = np.full(len(state), float(diff_coef))
    else:
        table = np.asarray(diff_coef, dtype=float)
        d = table[state.species]
    step = stream.rng.standard_normal(state.positions.shape) * np.sqrt(2.0 * d * dt)[:, None]
    return ParticleState(state.positions + step, state.species.copy(), state.emitted_at.copy())


def count_in_sphere(state: ParticleState, center, radius: float, species: Optional[int] = None) -> int:
    if not radius > 0:
        raise ValueError("radius must be > 0")
    if len(state) == 0:
        return 0
    d2 = np.sum((state.positions - np.asarray(center, dtype=float)) ** 2, axis=1)
    inside = d2 <= radius * radius
    if species is not None:
        inside &= state.species == species
    return int(np.count_nonzero(inside))


RELEASE_TX = "tx_release"
SAMPLE_RX = "rx_sample"
RELEASE_RX = "rx_release"
SAMPLE_FC = "fc_sample"
_EVENT_ORDER = {SAMPLE_RX: 0, SAMPLE_FC: 1, RELEASE_TX: 2, RELEASE_RX: 3}


@dataclass
class SimSchedule:
    """Event list of one sequence plus the stepping grid that lands on every event."""
    sim_step: float
    events: list
    horizon: float

    @classmethod
    def build(cls, cfg: SystemConfig, sim_step: float = 10e-6, L: Optional[int] = None) -> "SimSchedule":
        if not sim_step > 0:
            raise ValueError("sim_step must be > 0")
        tm = cfg.timing
        L = tm.L if L is None else L
        ev = []
        for j in range(1, L + 1):
            t0 = (j - 1) * tm.T
            ev.append((t0, RELEASE_TX, j, 0))
            ev += [(t, SAMPLE_RX, j, m) for m, t in enumerate(tm.rx_sample_times(j))]
            ev.append((t0 + tm.t_trans, RELEASE_RX, j, 0))
            ev += [(t, SAMPLE_FC, j, m) for m, t in enumerate(tm.fc_sample_times(j))]
        # samples at an instant are taken before releases at that instant
        ev.sort(key=lambda e: (round(e[0], 15), _EVENT_ORDER[e[1]]))
        return cls(sim_step=sim_step, events=ev, horizon=L * tm.T)

    def step_times(self) -> np.ndarray:
        grid = np.arange(0.0, self.horizon + self.sim_step / 2, self.sim_step)
        times = np.concatenate([grid, [e[0] for e in self.events]])
        times = np.unique(np.round(times, 15))
        return times[times <= self.horizon + 1e-15]


def run_stepping(cfg: SystemConfig, tx_symbols, stream: SeededStream, sim_step: float = 10e-6,
                 relay: str = "DF"):
    """Reference simulation with the plain stepping engine.

    Returns (rx_sums (K, L), rx_outputs (K, L), fc_counts (K, L)) where
    rx_outputs are decisions (DF) or release counts (AF).
    """
    tm, sp, rel = cfg.timing, cfg.spatial, cfg.release
    tx = np.asarray(tx_symbols, dtype=np.int64)
    L = tx.size
    K = cfg.K
    sched = SimSchedule.build(cfg, sim_step, L)
    d_table = np.array((rel.d0,) + rel.d_k)
    state = ParticleState()
    rx_sums = np.zeros((K, L), dtype=np.int64)
    rx_out = np.zeros((K, L), dtype=np.int64)
    fc = np.zeros((K, L), dtype=np.int64)
    ev = iter(sched.events)
    pending = next(ev, None)
    t_prev = 0.0
    for t in sched.step_times():
        if t > t_prev and len(state):
            state = brownian_advance(state, t - t_prev, d_table, stream)
        t_prev = t
        while pending is not None and round(pending[0], 15) <= t:
            _, kind, j, _m = pending
            if kind == RELEASE_TX and tx[j - 1]:
                state = state.emit(rel.s0, sp.tx_position, 0, t)
            elif kind == SAMPLE_RX:
                for k in range(K):
                    rx_sums[k, j - 1] += count_in_sphere(state, sp.rx_positions[k], sp.rx_radius[k], 0)
            elif kind == RELEASE_RX:
                for k in range(K):
                    if relay == "DF":
                        rx_out[k, j - 1] = rx_energy_decide(int(rx_sums[k, j - 1]), cfg.rx_thresholds[k])
                        n = int(round(rel.s_k[k])) * rx_out[k, j - 1]
                    else:
                        n = int(np.floor(rel.alpha_k[k] * rx_sums[k, j - 1] + 0.5))
                        rx_out[k, j - 1] = n
                    if n:
                        state = state.emit(n, sp.rx_positions[k], k + 1, t)
            elif kind == SAMPLE_FC:
                for k in range(K):
                    fc[k, j - 1] += count_in_sphere(state, sp.fc_position, sp.fc_radius, k + 1)
            pending = next(ev, None)
    return rx_sums, rx_out, fc


# ---------------------------------------------------------------- fast batch physics

@dataclass(frozen=True)
class FcTiming:
    dt_fc: float
    m_fc: int

    def offsets(self) -> np.ndarray:
        return self.dt_fc * np.arange(1, self.m_fc + 1)


def _union_offsets(timings: Sequence[FcTiming]):
    all_off = np.unique(np.round(np.concatenate([t.offsets() for t in timings]), 12))
    index = {t: np.searchsorted(all_off, np.round(t.offsets(), 12)) for t in timings}
    return all_off, index


def _rx_check_grid(cfg: SystemConfig, L: int) -> np.ndarray:
    return np.concatenate([cfg.timing.rx_sample_times(j) for j in range(1, L + 1)])


def _fc_check_grid(cfg: SystemConfig, offsets: np.ndarray, L: int) -> np.ndarray:
    tm = cfg.timing
    return np.concatenate([(j - 1) * tm.T + tm.t_trans + offsets for j in range(1, L + 1)])


@dataclass
class TxPhase:
    """TX symbols and RX sample sums for every observer site of a batch."""
    tx: np.ndarray               # (R, L)
    rx_sums: np.ndarray          # (R, n_sites, L)
    sites: np.ndarray            # (n_sites, 3)

    def for_config(self, cfg: SystemConfig) -> np.ndarray:
        idx = [_site_index(self.sites, p) for p in cfg.spatial.rx_positions]
        return self.rx_sums[:, idx, :]


def _site_index(sites, p) -> int:
    d = np.linalg.norm(sites - np.asarray(p), axis=1)
    i = int(np.argmin(d))
    if d[i] > 1e-12:
        raise KeyError(f"RX site {p} was not simulated")
    return i


def simulate_tx_phase(cfgs: Sequence[SystemConfig], sequences: int, stream: SeededStream, tx=None,
                      rho_min: float = DEFAULT_RHO_MIN, row_offset: int = 0) -> TxPhase:
    """TX-to-RX physics for all RX sites used by ``cfgs`` at once (same TX, timing and radius).

    Sequence r draws from its own stream (index ``row_offset + r``), so a
    batch can be split into chunks without changing any result.
    """
    base = cfgs[0]
    tm, rel, sp = base.timing, base.release, base.spatial
    for c in cfgs[1:]:
        ct = c.timing
        same = (ct.t_trans, ct.t_report, ct.dt_rx, ct.m_rx, ct.L) == (tm.t_trans, tm.t_report, tm.dt_rx, tm.m_rx, tm.L)
        if not same or c.release.s0 != rel.s0 or c.release.d0 != rel.d0 or c.spatial.tx_position != sp.tx_position:
            raise ValueError("configs sharing the TX phase must agree on TX, timing and diffusion")
    sites, radii = [], []
    for c in cfgs:
        for p, r in zip(c.spatial.rx_positions, c.spatial.rx_radius):
            if not any(np.allclose(p, q, atol=1e-15, rtol=0) for q in sites):
                sites.append(p)
                radii.append(r)
    sites = np.array(sites)
    radii = np.array(radii)
    L = tm.L
    R = sequences
    if tx is None:
        tx = (stream.fork(0).rng.random((R, L)) < rel.p1).astype(np.int64)
    tx = np.asarray(tx, dtype=np.int64).reshape(R, L)
    checks = _rx_check_grid(base, L)
    m_rx = tm.m_rx
    out = np.zeros((R, sites.shape[0], L), dtype=np.int64)
    for r in range(R):
        st = rng_state(stream.fork(1, row_offset + r))
        acc = np.zeros((sites.shape[0], L * m_rx), dtype=np.int64)
        for i in np.flatnonzero(tx[r]):
            first = i * m_rx
            acc[:, first:] += simulate_cohort(rel.s0, sp.tx_position, i * tm.T, checks[first:], sites, radii,
                                              rel.d0, st, rho_min)
        out[r] = acc.reshape(sites.shape[0], L, m_rx).sum(axis=2)
    return TxPhase(tx=tx, rx_sums=out, sites=sites)


def simulate_relay(cfg: SystemConfig, releases, stream: SeededStream, timings: Sequence[FcTiming],
                   rho_min: float = DEFAULT_RHO_MIN, stream_tag: int = 2,
                   row_offset: int = 0) -> Dict[FcTiming, np.ndarray]:
    """RX-to-FC physics for given release counts (R, K, L); returns per-species FC sums per timing."""
    rel_counts = np.asarray(releases, dtype=np.int64)
    R, K, L = rel_counts.shape
    tm, sp = cfg.timing, cfg.spatial
    offsets, index = _union_offsets(timings)
    nm = offsets.size
    checks = _fc_check_grid(cfg, offsets, L)
    fc_c = np.asarray(sp.fc_position)[None, :]
    fc_r = np.array([sp.fc_radius])
    res = {t: np.zeros((R, K, L), dtype=np.int64) for t in timings}
    for r in range(R):
        st = rng_state(stream.fork(stream_tag, row_offset + r))
        for k in range(K):
            acc = np.zeros(L * nm, dtype=np.int64)
            for i in np.flatnonzero(rel_counts[r, k]):
                t0 = i * tm.T + tm.t_trans
                first = i * nm
                acc[first:] += simulate_cohort(int(rel_counts[r, k, i]), sp.rx_positions[k], t0, checks[first:],
                                               fc_c, fc_r, cfg.release.d_k[k], st, rho_min)[0]
            grid = acc.reshape(L, nm)
            for t in timings:
                res[t][r, k] = grid[:, index[t]].sum(axis=1)
    return res


def simulate_relay_units(cfg: SystemConfig, sequences: int, stream: SeededStream, timings: Sequence[FcTiming],
                         rho_min: float = DEFAULT_RHO_MIN, row_offset: int = 0) -> Dict[FcTiming, np.ndarray]:
    """DF relay cohorts simulated as if every RX released in every interval.

    Returns per timing an array (R, K, L_release, L) of FC sums; the FC
    observation for any decision pattern d is sum_i d[r, k, i] * unit[r, k, i, :].
    """
    tm, sp = cfg.timing, cfg.spatial
    L = tm.L
    K = cfg.K
    offsets, index = _union_offsets(timings)
    nm = offsets.size
    checks = _fc_check_grid(cfg, offsets, L)
    fc_c = np.asarray(sp.fc_position)[None, :]
    fc_r = np.array([sp.fc_radius])
    res = {t: np.zeros((sequences, K, L, L), dtype=np.int32) for t in timings}
    sizes = [int(round(s)) for s in cfg.release.s_k]
    for r in range(sequences):
        st = rng_state(stream.fork(3, row_offset + r))
        for k in range(K):
            for i in range(L):
                first = i * nm
                grid = np.zeros(L * nm, dtype=np.int64)
                grid[first:] = simulate_cohort(sizes[k], sp.rx_positions[k], i * tm.T + tm.t_trans, checks[first:],
                                               fc_c, fc_r, cfg.release.d_k[k], st, rho_min)[0]
                grid = grid.reshape(L, nm)
                for t in timings:
                    res[t][r, k, i] = grid[:, index[t]].sum(axis=1)
    return res


def combine_units(units: np.ndarray, decisions) -> np.ndarray:
    return np.einsum("rkij,rki->rkj", units, np.asarray(decisions, dtype=np.int64))


def df_releases(cfg: SystemConfig, rx_decisions) -> np.ndarray:
    sizes = np.array([int(round(s)) for s in cfg.release.s_k])
    return np.asarray(rx_decisions, dtype=np.int64) * sizes[None, :, None]


def af_releases(cfg: SystemConfig, rx_sums) -> np.ndarray:
    alpha = np.asarray(cfg.release.alpha_k)
    return np.floor(alpha[None, :, None] * np.asarray(rx_sums) + 0.5).astype(np.int64)


def rx_decisions_from_sums(cfg: SystemConfig, rx_sums) -> np.ndarray:
    xi = np.asarray(cfg.rx_thresholds)
    return (np.asarray(rx_sums) >= xi[None, :, None]).astype(np.int64)


# ---------------------------------------------------------------- error estimation

def score(decisions, tx, variant_label: str, history_mode: str, seed=None) -> ErrorReport:
    err = (np.asarray(decisions) != np.asarray(tx)).astype(float)
    R, L = err.shape
    per_seq = err.mean(axis=1)
    q = float(err.mean())
    se = float(per_seq.std(ddof=1) / math.sqrt(R)) if R > 1 else float("nan")
    binom = math.sqrt(max(q * (1 - q), 0.0) / err.size)
    per_int = err.mean(axis=0)
    per_int_se = np.sqrt(per_int * (1 - per_int) / R)
    return ErrorReport(variant=variant_label, history_mode=history_mode, q_bar=q, std_err=se,
                       per_interval=per_int, per_interval_se=per_int_se, source="particle_sim", seed=seed,
                       realizations=R, extra={"binomial_se": binom, "errors": int(err.sum())})


def detect(cfg: SystemConfig, variant: DetectorVariant, tx, rx_dec, fc_species, model: Optional[ChannelModel] = None):
    model = model or ChannelModel(cfg)
    res = run_fc_detector(model, variant, fc_species, tx, rx_dec)
    return res.decisions


def evaluate_variants(cfg: SystemConfig, variants: Sequence[DetectorVariant], sequences: int, stream: SeededStream,
                      tx_phase: Optional[TxPhase] = None, rho_min: float = DEFAULT_RHO_MIN) -> Dict[str, ErrorReport]:
    """Score several FC detectors on one shared physics realization of ``cfg``."""
    if tx_phase is None:
        tx_phase = simulate_tx_phase([cfg], sequences, stream, rho_min=rho_min)
    tx = tx_phase.tx
    rx_sums = tx_phase.for_config(cfg)
    timing = FcTiming(cfg.timing.dt_fc, cfg.timing.m_fc)
    model = ChannelModel(cfg)
    out = {}
    df = [v for v in variants if v.relay == "DF"]
    af = [v for v in variants if v.relay == "AF"]
    if df:
        rx_dec = rx_decisions_from_sums(cfg, rx_sums)
        fc = simulate_relay(cfg, df_releases(cfg, rx_dec), stream, [timing], rho_min, stream_tag=2)[timing]
        for v in df:
            out[v.label] = score(detect(cfg, v, tx, rx_dec, fc, model), tx, v.kind, v.history_mode, stream.seed)
    if af:
        fc = simulate_relay(cfg, af_releases(cfg, rx_sums), stream, [timing], rho_min, stream_tag=4)[timing]
        for v in af:
            out[v.label] = score(detect(cfg, v, tx, None, fc, model), tx, v.kind, v.history_mode, stream.seed)
    return out


def estimate_error_rate(config: SystemConfig, variant: DetectorVariant, sequences: int,
                        stream: SeededStream, rho_min: float = DEFAULT_RHO_MIN) -> ErrorReport:
    """Monte Carlo error rate of one detector variant over ``sequences`` random TX sequences of length L."""
    if sequences < 1:
        raise ValueError("sequences must be >= 1")
    return evaluate_variants(config, [variant], sequences, stream, rho_min=rho_min)[variant.label]


# ---------------------------------------------------------------- live single-sequence run

def run_system(config: SystemConfig, variant: DetectorVariant, tx_symbols, stream: SeededStream,
               rho_min: float = DEFAULT_RHO_MIN, model: Optional[ChannelModel] = None) -> List[SymbolFrame]:
    """Simulate one sequence interval by interval, feeding the FC detector as observations arrive."""
    cfg = config
    tm, sp, rel = cfg.timing, cfg.spatial, cfg.release
    tx = np.asarray(tx_symbols, dtype=np.int64)
    L = tx.size
    if L > tm.L:
        raise ValueError("sequence longer than the configured L")
    if variant.relay == "AF" and not any(rel.alpha_k):
        log.warning("AF variant with zero amplification factors")
    K = cfg.K
    model = model or ChannelModel(cfg)
    rx_checks = _rx_check_grid(cfg, L)
    fc_checks = np.concatenate([tm.fc_sample_times(j) for j in range(1, L + 1)])
    centers = np.asarray(sp.rx_positions)
    radii = np.asarray(sp.rx_radius)
    fc_c = np.asarray(sp.fc_position)[None, :]
    fc_r = np.array([sp.fc_radius])
    st_tx = rng_state(stream.fork(1))
    st_fc = rng_state(stream.fork(2))
    rx_acc = np.zeros((K, L * tm.m_rx), dtype=np.int64)
    fc_acc = np.zeros((K, L * tm.m_fc), dtype=np.int64)
    ctx = LikelihoodContext.initial(K, variant.history_mode)
    frames = []
    mix_stream = stream.fork(5)
    for j in range(1, L + 1):
        i = j - 1
        if tx[i]:
            first = i * tm.m_rx
            rx_acc[:, first:] += simulate_cohort(rel.s0, sp.tx_position, i * tm.T, rx_checks[first:], centers, radii,
                                                 rel.d0, st_tx, rho_min)
        rx_sums = rx_acc[:, i * tm.m_rx:(i + 1) * tm.m_rx].sum(axis=1)
        if variant.relay == "DF":
            rx_dec = np.array([rx_energy_decide(int(rx_sums[k]), cfg.rx_thresholds[k]) for k in range(K)])
            release = rx_dec * np.array([int(round(s)) for s in rel.s_k])
        else:
            rx_dec = None
            release = np.floor(np.asarray(rel.alpha_k) * rx_sums + 0.5).astype(np.int64)
        t0 = i * tm.T + tm.t_trans
        first = i * tm.m_fc
        for k in range(K):
            if release[k]:
                fc_acc[k, first:] += simulate_cohort(int(release[k]), sp.rx_positions[k], t0, fc_checks[first:],
                                                     fc_c, fc_r, rel.d_k[k], st_fc, rho_min)[0]
        fc_k = fc_acc[:, first:first + tm.m_fc].sum(axis=1)
        pooled = int(fc_k.sum())
        est = None
        kind = variant.kind
        if kind == MD_ML:
            bit, est = md_ml_decide(ctx, [int(c) for c in fc_k], model)
        elif kind == SD_ML:
            bit, est = sd_ml_decide(ctx, pooled, model)
        elif kind == SA_ML:
            bit = sa_ml_decide(ctx, pooled, model, stream=mix_stream.fork(j))
        elif kind == MAJORITY:
            bit = constant_or_majority_decide(variant, fc_k)
            est = tuple(int(c >= variant.fc_constant_threshold) for c in fc_k)
        else:
            bit = constant_or_majority_decide(variant, pooled)
        per_species = kind in (MD_ML, MAJORITY)
        frames.append(SymbolFrame(
            j=j, tx_symbol=int(tx[i]), rx_sums=tuple(int(x) for x in rx_sums),
            fc_sums=tuple(int(c) for c in fc_k) if per_species else pooled, fc_decision=int(bit),
            rx_decisions=None if rx_dec is None else tuple(int(x) for x in rx_dec),
            rx_releases=None if rx_dec is not None else tuple(int(x) for x in release),
            fc_rx_estimates=est))
        ctx = update_local_history(ctx, bit, est if est is not None else [0] * K,
                                   true_tx=int(tx[i]), true_rx=rx_dec if rx_dec is not None else [0] * K)
    return frames


def replay_frames(config: SystemConfig, variant: DetectorVariant, frames: Sequence[SymbolFrame],
                  model: Optional[ChannelModel] = None) -> np.ndarray:
    """Run the batch detector on recorded frames; must reproduce the live decisions."""
    K = config.K
    tx = np.array([[f.tx_symbol for f in frames]])
    if variant.kind in (MD_ML, MAJORITY):
        fc = np.array([[f.fc_sums[k] for f in frames] for k in range(K)])[None]
    else:
        fc = np.array([[f.pooled_fc for f in frames]])
    rx = None
    if frames and frames[0].rx_decisions is not None:
        rx = np.array([[f.rx_decisions[k] for f in frames] for k in range(K)])[None]
    return run_fc_detector(model or ChannelModel(config), variant, fc, tx, rx).decisions[0]
