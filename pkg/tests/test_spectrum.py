import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from chanagg.spectrum import (OUTAGE, AmcMode, FrameConfig, PuChannelProcess, PuState, SnrClass,
                              SnrProcess, SpectrumError, SpectrumPool, channel_utilization,
                              compute_frame_slots, draw_row, pu_slot_capacity, sample_pu_transition,
                              sample_snr_transition, snr_stationary, su_slot_capacity, snr_to_mode)

MODES = (AmcMode(1, 1, 0.0, 6.0), AmcMode(2, 2, 6.0, 12.0), AmcMode(3, 4, 12.0, math.inf))


def frame_slots_by_hand(pi, eps, rs, rn):
    # direct evaluation, no cancellation tricks; exact rationals avoid float noise
    from fractions import Fraction as F
    raw = F(pi) / (F(rn) * F(eps) * F(rs)) * F(rn)
    return max(1, math.ceil(raw))


@pytest.mark.parametrize("pi,eps,rs,rn,expected", [
    (1000, 0.5, 500, 2, 4),
    (1, 1, 1, 1, 1),
    (1500, 0.8, 400, 4, 5),
])
def test_frame_slots_examples(pi, eps, rs, rn, expected):
    assert frame_slots_by_hand(pi, eps, rs, rn) == expected
    cfg = FrameConfig(pi, eps, rs)
    assert compute_frame_slots(cfg, AmcMode(1, rn, 0, 1)) == expected


@given(st.integers(1, 5000), st.sampled_from([0.1, 0.25, 0.5, 0.8, 1.0]),
       st.integers(1, 2000), st.sampled_from([1, 2, 3, 4, 6, 8]))
def test_frame_slots_do_not_depend_on_bits_per_symbol(pi, eps, rs, rn):
    cfg = FrameConfig(pi, eps, rs)
    assert compute_frame_slots(cfg, AmcMode(1, rn, 0, 1)) == compute_frame_slots(cfg, AmcMode(1, 1, 0, 1))


def test_frame_config_rejects_nonpositive():
    with pytest.raises(SpectrumError):
        FrameConfig(0, 0.5, 100)
    with pytest.raises(SpectrumError):
        FrameConfig(10, 0.5, math.inf)


@pytest.mark.parametrize("a,c,expected", [(0.2, 0.8, 0.2), (0.0, 0.5, 0.0), (0.5, 0.5, 0.5)])
def test_channel_utilization(a, c, expected):
    assert channel_utilization(PuChannelProcess(0, on_to_off=c, off_to_on=a)) == pytest.approx(expected)


def test_frozen_or_invalid_chain_rejected():
    with pytest.raises(SpectrumError):
        PuChannelProcess(0, on_to_off=0.0, off_to_on=0.0)
    with pytest.raises(SpectrumError, match="off_to_on"):
        PuChannelProcess(3, on_to_off=0.5, off_to_on=1.2)


def test_utilization_matches_empirical_on_fraction():
    p = PuChannelProcess(0, on_to_off=0.3, off_to_on=0.1)
    rng = random.Random(5)
    n = 200_000
    on = sum(sample_pu_transition(p, rng) is PuState.ON for _ in range(n))
    assert abs(on / n - channel_utilization(p)) < 0.01


def test_pu_forced_and_absorbing_transitions():
    rng = random.Random(0)
    p = PuChannelProcess(0, on_to_off=0.0, off_to_on=1.0)
    assert sample_pu_transition(p, rng) is PuState.ON
    for _ in range(100):
        assert sample_pu_transition(p, rng) is PuState.ON


def _pool(m, s):
    return SpectrumPool(m, s)


@pytest.mark.parametrize("s,theta,expected", [(4, (0.5, 0.25), 3.0), (4, (0.0, 0.0), 0.0), (2, (1, 1, 1), 6.0)])
def test_pu_slot_capacity(s, theta, expected):
    procs = [PuChannelProcess(i, on_to_off=1 - t, off_to_on=t) for i, t in enumerate(theta)]
    assert pu_slot_capacity(_pool(len(theta), s), procs) == pytest.approx(expected)


def test_pu_slot_capacity_needs_one_process_per_channel():
    with pytest.raises(SpectrumError):
        pu_slot_capacity(_pool(2, 1), [PuChannelProcess(0, 0.5, 0.5)])


@pytest.mark.parametrize("m,s,phi,expected", [(2, 4, 3, 5), (2, 4, 8, 0), (3, 2, 0, 6)])
def test_su_slot_capacity(m, s, phi, expected):
    assert su_slot_capacity(_pool(m, s), phi) == expected


def test_su_slot_capacity_range():
    with pytest.raises(SpectrumError):
        su_slot_capacity(_pool(2, 2), 5)


@settings(max_examples=50)
@given(st.integers(1, 6), st.integers(1, 6), st.data())
def test_slot_capacities_add_up(m, s, data):
    utils = data.draw(st.lists(st.floats(0.01, 0.99), min_size=m, max_size=m))
    procs = [PuChannelProcess(i, on_to_off=1 - u, off_to_on=u) for i, u in enumerate(utils)]
    pool = _pool(m, s)
    phi = pu_slot_capacity(pool, procs)
    assert phi + su_slot_capacity(pool, phi) == pytest.approx(m * s)


def test_snr_to_mode_lookup():
    assert snr_to_mode(-3.0, MODES) is OUTAGE
    assert snr_to_mode(6.0, MODES) is MODES[1]
    assert snr_to_mode(8.5, MODES) is MODES[1]
    assert snr_to_mode(40.0, MODES) is MODES[2]
    with pytest.raises(SpectrumError):
        snr_to_mode(math.nan, MODES)


@given(st.floats(0.0, 60.0), st.floats(0.0, 60.0))
def test_snr_to_mode_is_monotone(a, b):
    lo, hi = sorted((a, b))
    assert snr_to_mode(lo, MODES).bits_per_symbol <= snr_to_mode(hi, MODES).bits_per_symbol


def test_amc_mode_validation():
    with pytest.raises(SpectrumError):
        AmcMode(1, 0, 0, 1)
    with pytest.raises(SpectrumError):
        AmcMode(1, 2, 5, 5)


def test_snr_identity_and_forced_rows():
    rng = random.Random(1)
    s = SnrProcess(0, SnrClass.MODERATE, ((1, 0, 0), (0, 1, 0), (0, 0, 1)))
    assert all(sample_snr_transition(s, rng) is SnrClass.MODERATE for _ in range(100))
    s = SnrProcess(0, SnrClass.GOOD, ((0, 1, 0), (0, 1, 0), (0, 0, 1)))
    assert sample_snr_transition(s, rng) is SnrClass.MODERATE


def test_snr_uniform_rows_occupancy():
    third = 1 / 3
    s = SnrProcess(0, SnrClass.GOOD, ((third,) * 3,) * 3)
    rng = random.Random(7)
    counts = {c: 0 for c in SnrClass}
    n = 1_000_000
    for _ in range(n):
        counts[sample_snr_transition(s, rng)] += 1
    for v in counts.values():
        assert abs(v / n - third) < 0.01


def test_snr_matrix_checks():
    with pytest.raises(SpectrumError):
        SnrProcess(0, SnrClass.GOOD, ((0.5, 0.6, 0), (0, 1, 0), (0, 0, 1)))
    with pytest.raises(SpectrumError):
        SnrProcess(0, SnrClass.GOOD, ((1, 0), (0, 1)))


def test_snr_stationary_birth_death():
    # detailed balance gives pi proportional to (1, 1, 1) for this symmetric chain
    pi = snr_stationary(((0.9, 0.1, 0), (0.1, 0.8, 0.1), (0, 0.1, 0.9)))
    assert pi == pytest.approx((1 / 3, 1 / 3, 1 / 3))


def test_draw_row_edges():
    assert draw_row((0.2, 0.8, 0.0), 0.0) == 0
    assert draw_row((0.2, 0.8, 0.0), 0.2) == 1
    assert draw_row((0.2, 0.8, 0.0), 0.9999999999999999) == 1


def test_pool_take_release_and_seize():
    pool = SpectrumPool(2, 3)
    got = pool.take_free(4, su_id=7)
    assert got == [(0, 0), (0, 1), (0, 2), (1, 0)]
    assert pool.free_count == 2
    lost = pool.seize_channel(0)
    assert lost == {7: [(0, 0), (0, 1), (0, 2)]}
    assert pool.count() == (3, 1, 2)
    with pytest.raises(SpectrumError):
        pool.seize_channel(0)
    pool.vacate_channel(0)
    pool.release([(1, 0)])
    assert pool.count() == (0, 0, 6) and pool.free_count == 6
    with pytest.raises(SpectrumError):
        pool.take_free(7, su_id=1)
