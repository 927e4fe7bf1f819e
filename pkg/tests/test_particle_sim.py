import math

import numpy as np
import pytest

from coopmc.channel import ChannelModel, hitting_probability
from coopmc.config import MS, UM, default_config
from coopmc.detectors import GENIE, LOCAL, MAJORITY, MD_ML, SA_ML, SD_CONST, SD_ML, DetectorVariant
from coopmc.particle_sim import (FcTiming, ParticleState, SimSchedule, brownian_advance, count_in_sphere,
                                 estimate_error_rate, evaluate_variants, replay_frames, rng_state, run_stepping,
                                 run_system, simulate_cohort, simulate_relay, simulate_relay_units,
                                 simulate_tx_phase, df_releases, combine_units, rx_decisions_from_sums)
from coopmc.stochastic import SeededStream

D = 5e-9


def small_config(K=1, s0=2000, s_each=500.0, L=2, **kw):
    cfg = default_config(K=K, L=L, **kw)
    rel = cfg.release
    return cfg.replace(release=rel.__class__(s0=s0, s_k=(s_each,) * K, alpha_k=rel.alpha_k, d0=rel.d0,
                                             d_k=rel.d_k, p1=rel.p1))


def test_brownian_advance_moments():
    n, dt = 10 ** 6, 1e-4
    st = ParticleState(np.zeros((n, 3)), np.zeros(n, dtype=int), np.zeros(n))
    out = brownian_advance(st, dt, D, SeededStream(1))
    var = 2 * D * dt
    for axis in range(3):
        x = out.positions[:, axis]
        assert abs(x.mean()) <= 4 * math.sqrt(var / n)
        # sample variance of n normals: sd = var * sqrt(2 / (n - 1))
        assert abs(x.var(ddof=1) - var) <= 4 * var * math.sqrt(2 / (n - 1))
    with pytest.raises(ValueError):
        brownian_advance(st, 0.0, D, SeededStream(1))


def test_msd_grows_as_6dt():
    n, t = 10 ** 5, 1e-3
    st = ParticleState(np.zeros((n, 3)), np.zeros(n, dtype=int), np.zeros(n))
    for _ in range(10):
        st = brownian_advance(st, t / 10, D, SeededStream(2).fork(_))
    r2 = np.sum(st.positions ** 2, axis=1)
    assert abs(r2.mean() - 6 * D * t) <= 3 * r2.std(ddof=1) / math.sqrt(n)


def test_count_in_sphere():
    assert count_in_sphere(ParticleState(), (0, 0, 0), 1.0) == 0
    st = ParticleState([[0, 0, 0], [1.0, 0, 0], [1.0000001, 0, 0]], [0, 1, 0], [0, 0, 0])
    assert count_in_sphere(st, (0, 0, 0), 1.0) == 2
    assert count_in_sphere(st, (0, 0, 0), 1.0, species=1) == 1
    with pytest.raises(ValueError):
        count_in_sphere(st, (0, 0, 0), 0.0)


def test_particle_conservation():
    st = ParticleState().emit(5, (0, 0, 0), 0, 0.0).emit(3, (1, 0, 0), 1, 1e-3)
    st = brownian_advance(st, 1e-4, [D, D], SeededStream(0))
    assert len(st) == 8 and st.count(0) == 5 and st.count(1) == 3
    with pytest.raises(ValueError):
        ParticleState(np.zeros((2, 3)), [0], [0.0])


def test_schedule_orders_samples_before_releases():
    cfg = default_config(K=1, L=2)
    sch = SimSchedule.build(cfg, 10e-6)
    kinds = [e[1] for e in sch.events]
    assert kinds[0] == "tx_release"
    assert len(sch.events) == 2 * (1 + 5 + 1 + 10)
    times = sch.step_times()
    for e in sch.events:
        assert np.any(np.isclose(times, e[0], atol=1e-15, rtol=0))
    with pytest.raises(ValueError):
        SimSchedule.build(cfg, 0.0)


def test_cohort_counts_match_closed_form():
    """Walk-on-spheres kernel against the hitting probability at several distances and times."""
    checks = np.array([0.1, 0.3, 0.5, 1.0]) * MS
    centers = np.array([[2 * UM, 0, 0], [1 * UM, 0, 0], [0.5 * UM, 0.2 * UM, 0]])
    radii = np.full(3, 0.2 * UM)
    n = 2_000_000
    out = simulate_cohort(n, (0, 0, 0), 0.0, checks, centers, radii, D, rng_state(SeededStream(5)))
    for i, c in enumerate(centers):
        p = hitting_probability(0.2 * UM, np.linalg.norm(c), D, checks)
        se = np.sqrt(n * p * (1 - p))
        assert np.all(np.abs(out[i] - n * p) <= 4 * se + 1)


def test_cohort_validation():
    st = rng_state(SeededStream(0))
    with pytest.raises(ValueError):
        simulate_cohort(10, (0, 0, 0), 1.0, np.array([0.5]), [[1, 0, 0]], [0.1], D, st)
    with pytest.raises(ValueError):
        simulate_cohort(10, (0, 0, 0), 0.0, np.array([2.0, 1.0]), [[1, 0, 0]], [0.1], D, st)


def test_zero_emission_gives_zero_sums():
    cfg = small_config(K=2, s0=0, L=3)
    tp = simulate_tx_phase([cfg], 3, SeededStream(0), tx=np.ones((3, 3), dtype=int))
    assert tp.rx_sums.sum() == 0
    assert rx_decisions_from_sums(cfg, tp.for_config(cfg)).sum() == 0


def test_rx_sum_mean_matches_model():
    cfg = default_config(K=1)
    model = ChannelModel(cfg)
    checks = np.concatenate([cfg.timing.rx_sample_times(1), cfg.timing.rx_sample_times(2)])
    R = 1000
    tot = np.zeros((R, 2))
    state = rng_state(SeededStream(8))
    for r in range(R):
        c = simulate_cohort(cfg.release.s0, (0, 0, 0), 0.0, checks, np.array(cfg.spatial.rx_positions),
                            np.array(cfg.spatial.rx_radius), D, state)[0]
        tot[r] = [c[:5].sum(), c[5:].sum()]
    for lag in range(2):
        mu = cfg.release.s0 * model.rx_sum[0, lag]
        assert abs(tot[:, lag].mean() - mu) <= 3 * tot[:, lag].std(ddof=1) / math.sqrt(R)


def test_symmetric_rx_sums_uncorrelated():
    cfg = default_config(K=2, L=1)
    tp = simulate_tx_phase([cfg], 400, SeededStream(4), tx=np.ones((400, 1), dtype=int))
    a, b = tp.rx_sums[:, 0, 0].astype(float), tp.rx_sums[:, 1, 0].astype(float)
    r = np.corrcoef(a, b)[0, 1]
    assert abs(r) <= 4 / math.sqrt(400)


def test_chunked_runs_are_identical():
    cfg = small_config(K=2, L=3)
    tx = (SeededStream(1).rng.random((6, 3)) < 0.5).astype(int)
    full = simulate_tx_phase([cfg], 6, SeededStream(3), tx=tx)
    a = simulate_tx_phase([cfg], 2, SeededStream(3), tx=tx[:2])
    b = simulate_tx_phase([cfg], 4, SeededStream(3), tx=tx[2:], row_offset=2)
    assert np.array_equal(full.rx_sums, np.concatenate([a.rx_sums, b.rx_sums]))
    t = FcTiming(cfg.timing.dt_fc, cfg.timing.m_fc)
    u_full = simulate_relay_units(cfg, 6, SeededStream(3), [t])[t]
    u_b = simulate_relay_units(cfg, 4, SeededStream(3), [t], row_offset=2)[t]
    assert np.array_equal(u_full[2:], u_b)


def test_units_equal_direct_relay_in_distribution():
    """As-if-released DF cohorts combined with the decisions behave like a direct relay run."""
    cfg = small_config(K=1, L=2, s_each=2000.0)
    t = FcTiming(cfg.timing.dt_fc, cfg.timing.m_fc)
    R = 400
    dec = np.ones((R, 1, 2), dtype=int)
    units = combine_units(simulate_relay_units(cfg, R, SeededStream(6), [t])[t], dec)
    direct = simulate_relay(cfg, df_releases(cfg, dec), SeededStream(7), [t])[t]
    for j in range(2):
        a, b = units[:, 0, j].astype(float), direct[:, 0, j].astype(float)
        se = math.sqrt(a.var(ddof=1) / R + b.var(ddof=1) / R)
        assert abs(a.mean() - b.mean()) <= 3 * se


def test_union_timing_matches_single_timing_run():
    cfg = small_config(K=1, L=2, s_each=2000.0)
    t10 = FcTiming(cfg.timing.dt_fc, 10)
    t4 = FcTiming(0.3 * MS / 4, 4)
    rel = np.full((200, 1, 2), 2000)
    both = simulate_relay(cfg, rel, SeededStream(2), [t10, t4])
    alone = simulate_relay(cfg, rel, SeededStream(9), [t4])
    a, b = both[t4][:, 0, 0].astype(float), alone[t4][:, 0, 0].astype(float)
    assert abs(a.mean() - b.mean()) <= 3 * math.sqrt(a.var() / 200 + b.var() / 200)
    assert np.all(both[t10] >= 0)


def test_stepping_engine_agrees_with_kernel_and_step_size():
    cfg = small_config(K=1, L=2, s0=3000, s_each=1000.0)
    tx = np.array([1, 1])
    R = 40
    runs = {}
    for step in (10e-6, 5e-6):
        sums = np.array([run_stepping(cfg, tx, SeededStream(11).fork(r, int(step * 1e7)), step)[0][0]
                         for r in range(R)], dtype=float)
        runs[step] = sums
    tp = simulate_tx_phase([cfg], 200, SeededStream(12), tx=np.ones((200, 2), dtype=int))
    kern = tp.rx_sums[:, 0, :].astype(float)
    a, b = runs[10e-6], runs[5e-6]
    for j in range(2):
        se_ab = math.sqrt(a[:, j].var(ddof=1) / R + b[:, j].var(ddof=1) / R)
        assert abs(a[:, j].mean() - b[:, j].mean()) <= 2 * se_ab + 1e-9
        se_ak = math.sqrt(a[:, j].var(ddof=1) / R + kern[:, j].var(ddof=1) / 200)
        assert abs(a[:, j].mean() - kern[:, j].mean()) <= 3 * se_ak


def test_live_run_replays_bitwise():
    cfg = default_config(K=2, L=6)
    from coopmc.analytics import calibrate_amplification
    cfg = cfg.with_alpha([calibrate_amplification(ChannelModel(cfg))] * 2)
    tx = [1, 0, 1, 1, 0, 1]
    for v in (DetectorVariant(SD_ML, LOCAL), DetectorVariant(MD_ML, GENIE), DetectorVariant(SA_ML, LOCAL),
              DetectorVariant(MAJORITY, fc_constant_threshold=8)):
        frames = run_system(cfg, v, tx, SeededStream(3))
        assert len(frames) == 6
        live = np.array([f.fc_decision for f in frames])
        assert np.array_equal(live, replay_frames(cfg, v, frames))
        again = run_system(cfg, v, tx, SeededStream(3))
        assert [f.fc_decision for f in again] == live.tolist()


def test_perfect_channel_error_vanishes():
    cfg = default_config(K=1, L=4, total_rx_molecules=200_000, rx_threshold=60)
    rel = cfg.release
    cfg = cfg.replace(release=rel.__class__(s0=200_000, s_k=rel.s_k, alpha_k=rel.alpha_k, d0=rel.d0, d_k=rel.d_k,
                                            p1=rel.p1))
    rep = estimate_error_rate(cfg, DetectorVariant(SD_ML, GENIE), 10, SeededStream(1))
    assert rep.q_bar <= 0.05
    with pytest.raises(ValueError):
        estimate_error_rate(cfg, DetectorVariant(SD_ML), 0, SeededStream(1))


def test_genie_not_worse_than_local():
    cfg = default_config(K=2)
    out = evaluate_variants(cfg, [DetectorVariant(SD_ML, GENIE), DetectorVariant(SD_ML, LOCAL)], 150,
                            SeededStream(2))
    g, l = out["SD_ML/genie"], out["SD_ML/local"]
    assert g.q_bar <= l.q_bar + 2 * math.hypot(g.std_err, l.std_err)
    assert 0 <= g.q_bar <= 1 and g.std_err > 0
