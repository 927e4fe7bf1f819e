import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from coopmc.channel import (RX_TO_FC, TX_TO_RX, ChannelModel, build_link_profile, hitting_probability,
                            mean_rx_count, nu_sigma, sa_fc_isi_and_signal, sd_fc_isi_and_signal,
                            sd_fc_mean_direct)
from coopmc.config import default_config

R, D = 0.2e-6, 5e-9

# closed form evaluated at 50 digits with mpmath
FROZEN_HIT = [
    ((0.2e-6, 2e-6, 5e-9, 0.5e-3), 1.273420162795878e-4),
    ((0.2e-6, 2e-6, 5e-9, 0.1e-3), 2.8908887209583273e-4),
    ((0.2e-6, 0.6e-6, 5e-9, 0.03e-3), 6.9378503833403274e-3),
    ((0.2e-6, 1.0e-6, 5e-9, 0.2e-3), 5.829343381184741e-4),
    ((0.2e-6, 2.088e-6, 5e-9, 1.0e-3), 5.4049636702986321e-5),
    ((0.2e-6, 0.1e-6, 5e-9, 1e-6), 0.60245597192970749),
]


@pytest.mark.parametrize("args,expected", FROZEN_HIT)
def test_hitting_probability_frozen(args, expected):
    assert hitting_probability(*args) == pytest.approx(expected, rel=1e-10)


def test_hitting_probability_limits():
    assert hitting_probability(R, 0.1e-6, D, 1e-15) == pytest.approx(1.0, abs=1e-12)
    assert hitting_probability(R, 2e-6, D, 1e-12) == pytest.approx(0.0, abs=1e-300)


def test_hitting_probability_rejects_bad_input():
    for bad in [(0, 1e-6, D, 1e-3), (R, -1e-6, D, 1e-3), (R, 1e-6, D, 0.0), (R, 1e-6, np.nan, 1e-3)]:
        with pytest.raises(ValueError):
            hitting_probability(*bad)


@given(d=st.floats(0.3e-6, 5e-6), t=st.floats(1e-6, 5e-3))
def test_hitting_probability_is_probability(d, t):
    p = hitting_probability(R, d, D, t)
    assert 0.0 <= p <= 1.0


def test_hitting_probability_vectorized():
    t = np.array([1e-4, 5e-4])
    out = hitting_probability(R, 2e-6, D, t)
    assert out.shape == (2,)
    assert out[1] == pytest.approx(FROZEN_HIT[0][1], rel=1e-10)


def test_link_profile_lag0_and_monotone_tail(cfg2):
    d = math.sqrt(4 + 0.36) * 1e-6
    prof = build_link_profile(R, d, D, cfg2.timing, TX_TO_RX)
    assert prof.summed_by_lag[0] == pytest.approx(9.6866512746069382e-4, rel=1e-10)
    assert prof.summed_by_lag[1] == pytest.approx(1.467254563970557e-4, rel=1e-10)
    direct = sum(hitting_probability(R, d, D, m * 100e-6) for m in range(1, 6))
    assert prof.summed_by_lag[0] == pytest.approx(direct, rel=1e-14)
    tail = prof.summed_by_lag[1:]
    assert np.all(np.diff(tail) <= 0)
    fc = build_link_profile(R, 0.6e-6, D, cfg2.timing, RX_TO_FC)
    assert np.all(np.diff(fc.summed_by_lag[1:]) <= 0)
    assert fc.per_sample_probs.shape == (20, 10)


def test_link_profile_empty_and_bad_phase(cfg2):
    tm = cfg2.timing.__class__(t_trans=1e-3, t_report=0.3e-3, dt_rx=1e-4, dt_fc=3e-5, m_rx=0, m_fc=10, L=20)
    prof = build_link_profile(R, 2e-6, D, tm, TX_TO_RX)
    assert np.all(prof.summed_by_lag == 0)
    with pytest.raises(ValueError):
        build_link_profile(R, 2e-6, D, tm, "sideways")


def test_mean_rx_count_examples(cfg2):
    prof = build_link_profile(R, 2.088e-6, D, cfg2.timing, TX_TO_RX)
    s0 = 1e4
    assert mean_rx_count(prof, [0, 0, 0], 3, s0) == 0.0
    assert mean_rx_count(prof, [1], 1, s0) == pytest.approx(s0 * prof.summed_by_lag[0])
    assert mean_rx_count(prof, [1, 1], 2, s0) == pytest.approx(s0 * (prof.summed_by_lag[0] + prof.summed_by_lag[1]))
    with pytest.raises(IndexError):
        mean_rx_count(prof, [1], 2, s0)


@given(st.lists(st.integers(0, 1), min_size=1, max_size=20))
def test_mean_rx_count_linear(bits):
    prof = build_link_profile(R, 2.088e-6, D, default_config().timing, TX_TO_RX)
    j = len(bits)
    total = mean_rx_count(prof, bits, j, 1.0)
    by_term = sum(mean_rx_count(prof, [0] * i + [1] + [0] * (j - i - 1), j, 1.0) for i in range(j) if bits[i])
    assert total == pytest.approx(by_term, rel=1e-12, abs=1e-300)


def test_sd_fc_isi_signal_examples(cfg2):
    prof = build_link_profile(R, 0.6e-6, D, cfg2.timing, RX_TO_FC)
    assert sd_fc_isi_and_signal([prof, prof], [[0], [0]], [0, 0], [1000, 1000]) == (0.0, 0.0)
    isi, sig = sd_fc_isi_and_signal([prof], [[1]], [1], [1000])
    assert isi == pytest.approx(1000 * prof.summed_by_lag[1])
    assert sig == pytest.approx(1000 * prof.summed_by_lag[0])
    a = sd_fc_isi_and_signal([prof, prof], [[1], [0]], [1, 0], [1000, 1000])
    b = sd_fc_isi_and_signal([prof, prof], [[1], [0]], [0, 1], [1000, 1000])
    assert a[1] == b[1]
    with pytest.raises(ValueError):
        sd_fc_isi_and_signal([prof], [[1], [0]], [1], [1000])


@given(st.lists(st.integers(0, 1), min_size=4, max_size=4), st.integers(0, 1), st.integers(0, 1))
def test_sd_fc_mean_matches_direct_sum(hist, c1, c2):
    prof = build_link_profile(R, 0.6e-6, D, default_config().timing, RX_TO_FC)
    h = [hist[:2], hist[2:]]
    isi, sig = sd_fc_isi_and_signal([prof, prof], h, [c1, c2], [700, 1300])
    assert isi + sig == pytest.approx(sd_fc_mean_direct([prof, prof], h, [c1, c2], [700, 1300]), rel=1e-12)


def test_sa_fc_isi_signal(cfg2):
    tm = cfg2.timing
    rx = build_link_profile(R, 2.088e-6, D, tm, TX_TO_RX)
    fc = build_link_profile(R, 0.6e-6, D, tm, RX_TO_FC)
    isi, sig = sa_fc_isi_and_signal([fc], [0, 0, 0], [2.0], 1e4, [rx])
    assert isi == 0.0
    assert sig == pytest.approx(2.0 * 1e4 * rx.summed_by_lag[0] * fc.summed_by_lag[0])
    isi1, _ = sa_fc_isi_and_signal([fc], [1], [2.0], 1e4, [rx])
    # past RX mean of interval 1 seen at lag 1, plus TX ISI reaching the RX in interval 2 seen at lag 0
    hand = 2.0 * 1e4 * (rx.summed_by_lag[0] * fc.summed_by_lag[1] + rx.summed_by_lag[1] * fc.summed_by_lag[0])
    assert isi1 == pytest.approx(hand, rel=1e-12)


def test_nu_sigma(cfg2):
    prof = build_link_profile(R, 0.6e-6, D, cfg2.timing, RX_TO_FC)
    nu, sigma = nu_sigma(prof, [])
    assert sigma == 0.0 and nu == prof.summed_by_lag[0]
    assert nu_sigma(prof, [1])[1] == pytest.approx(prof.summed_by_lag[1])
    m = ChannelModel(cfg2)
    assert m.nu[0] == pytest.approx(m.nu[1], rel=1e-14)
