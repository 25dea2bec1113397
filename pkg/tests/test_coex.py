import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coexsim import constants as C
from coexsim.arbiter import ProtocolId
from coexsim.ble import BlePhy, BleState
from coexsim.channel import ChannelState
from coexsim.coex import (
    Activity,
    CoexMode,
    CoexSystem,
    Direction,
    Disposition,
    HandoverController,
    configure_coexistence,
    handover_latencies,
    hybrid_wakeup,
    run_split,
    sequence_gaps,
    split_bidirectional,
    validate_interval,
)
from coexsim.errors import IllegalTransition, Infeasible, InvalidInterval, OutOfRange, UnsupportedPhy
from coexsim.esb import EsbPhy
from coexsim.experiments import power_vs_esb_share

BLE, ESB = ProtocolId.BLE, ProtocolId.ESB


@pytest.mark.parametrize("ci", [7_500, 100_000, 1_000_000, 4_000_000])
def test_valid_intervals(ci):
    assert validate_interval(ci) == ci


@pytest.mark.parametrize("ci", [0, 5_000, 7_501, 4_001_250])
def test_invalid_intervals(ci):
    with pytest.raises(InvalidInterval):
        validate_interval(ci)
    with pytest.raises(InvalidInterval):
        CoexSystem(0, ci)


# -- runtime TXP / PHY control ------------------------------------------------------

def _txp_system():
    return CoexSystem(0, 100_000, channel=ChannelState(C.BLE_LINK_ATTENUATION_DB, C.ESB_LINK_ATTENUATION_DB))


def test_txp_example():
    s = _txp_system()
    s.set_txp(BLE, -2)
    assert s.rssi(BLE) == -43
    assert s.rssi(ESB) == -31


@given(st.sampled_from([BLE, ESB]), st.floats(-40, 8, allow_nan=False))
def test_txp_change_leaves_other_rssi_bit_identical(proto, txp):
    s = _txp_system()
    other = ESB if proto is BLE else BLE
    before_other, before_mine = s.rssi(other), s.rssi(proto)
    s.set_txp(proto, txp)
    assert s.rssi(other) == before_other
    assert s.rssi(proto) - before_mine == pytest.approx(txp - 8)


def test_txp_outside_range():
    with pytest.raises(OutOfRange):
        _txp_system().set_txp(BLE, 9)


@pytest.mark.parametrize("proto, phy", [(ESB, "coded_s8"), (BLE, "4m"), (BLE, EsbPhy.PHY_4M),
                                        (ESB, BlePhy.CODED_S8)])
def test_unsupported_phy(proto, phy):
    with pytest.raises(UnsupportedPhy):
        _txp_system().set_phy(proto, phy)


def test_phy_by_name():
    s = _txp_system()
    s.set_phy(BLE, "1m")
    s.set_phy(ESB, "2m")
    assert s.ble.config.phy is BlePhy.PHY_1M and s.esb.config.phy is EsbPhy.PHY_2M


def _ble_rate_under(esb_phy, seed=0):
    s = CoexSystem(seed, 100_000, ble_fwd_kbps=200, esb_kbps=None)
    s.set_phy(ESB, esb_phy)
    s.start()
    s.run(3_100_000)
    return s.ble.throughput_kbps("fwd", 100_000, 3_100_000)


def test_esb_phy_leaves_ble_throughput_alone():
    rates = [_ble_rate_under(p) for p in EsbPhy]
    assert all(abs(r - rates[0]) / rates[0] <= 0.02 for r in rates)
    assert rates[0] == pytest.approx(200, rel=0.05)


# -- operating range ------------------------------------------------------------------

def test_esb_max_grows_with_connection_interval():
    ranges = [configure_coexistence(ci, duration_us=2_000_000) for ci in (7_500, 100_000, 1_000_000)]
    esb = [r.esb_max_at_ble_zero for r in ranges]
    assert esb == sorted(esb)
    assert ranges[0].ble_max == pytest.approx(1_000, rel=0.10)


@settings(max_examples=4, deadline=None)
@given(st.sampled_from([600.0, 900.0, 1_200.0]),
       st.lists(st.sampled_from([i / 10 for i in range(11)]), min_size=3, max_size=3, unique=True))
def test_power_falls_as_esb_takes_a_larger_share(total, shares):
    # shares at least 0.1 apart: closer points differ by less than a packet
    powers = power_vs_esb_share(total, sorted(shares))
    assert all(b < a for a, b in zip(powers, powers[1:]))


# -- handover -----------------------------------------------------------------------

def test_mode_validation():
    with pytest.raises(ValueError):
        CoexMode(Activity.CONCURRENT, Disposition.STANDBY)
    with pytest.raises(ValueError):
        CoexMode(Activity.ESB_ONLY)


def test_illegal_handover_raises():
    s = CoexSystem(0, 100_000)
    s.start()
    ctl = HandoverController(s, CoexMode(Activity.ESB_ONLY, Disposition.STANDBY))
    with pytest.raises(IllegalTransition):
        ctl.handover(Direction.BLE_ADJUST)
    with pytest.raises(IllegalTransition):
        ctl.handover(Direction.TO_ESB)


def test_handover_record_is_completed_later():
    s = CoexSystem(0, 100_000, ble_fwd_kbps=0, esb_kbps=0)
    s.start()
    ctl = HandoverController(s, CoexMode(Activity.BLE_ONLY, Disposition.STANDBY))
    rec = ctl.handover(Direction.TO_ESB)
    assert rec.effective_time is None and rec.latency is None
    s.run(100_000)
    assert rec.effective_time > rec.command_time
    assert s.ble.state is BleState.STANDBY
    assert ctl.mode.activity is Activity.ESB_ONLY


def test_to_esb_latency_does_not_depend_on_scenario():
    means = [handover_latencies(Direction.TO_ESB, sc, runs=300, seed=1).mean() / 1e3
             for sc in ("standby", "shutdown")]
    means.append(handover_latencies(Direction.ESB_ADJUST, "concurrent", runs=300, seed=1).mean() / 1e3)
    assert max(means) - min(means) <= 2.0


@pytest.mark.parametrize("ci", [50_000, 100_000])
def test_standby_to_ble_is_a_uniform_anchor_wait(ci):
    lat = handover_latencies(Direction.TO_BLE, "standby", runs=800, seed=2, ci=ci)
    assert lat.min() >= 0 and lat.max() <= ci
    assert lat.mean() == pytest.approx(ci / 2, rel=0.10)
    assert lat.std() == pytest.approx(ci / math.sqrt(12), rel=0.10)


def test_shutdown_to_ble_needs_a_full_restart():
    lat = handover_latencies(Direction.TO_BLE, "shutdown", runs=50, seed=3)
    floor = C.BLE_REINIT_US + C.BLE_INIT_US + C.BLE_CONNECT_US + C.BLE_DISCOVERY_US
    assert lat.min() >= floor


# -- hybrid wake-up ---------------------------------------------------------------

def test_hybrid_wakeup_is_gap_free_on_every_seed():
    tls = [hybrid_wakeup(100_000, seed) for seed in range(150)]
    assert all(t.gap_free() for t in tls)
    assert all(t.t_esb_first_pkt < t.t_ble_connected < t.t_ble_ready <= t.t_esb_stop for t in tls)


def test_esb_carries_data_until_the_stop():
    s = CoexSystem(4, 100_000, ble_fwd_kbps=0, esb_kbps=None)
    tl = hybrid_wakeup(100_000, system=s)
    fwd_times = [t for t, _ in s.esb.fwd_log]
    assert fwd_times[0] >= tl.t_esb_first_pkt
    # ESB keeps sending through the whole bridge, never idle for a full interval
    assert max(np.diff(fwd_times)) < 100_000
    assert fwd_times[-1] <= tl.t_esb_stop + 5_000


def test_first_esb_packet_pays_the_coexistence_init():
    tls = [hybrid_wakeup(100_000, seed) for seed in range(100)]
    mean = np.mean([t.t_esb_first_pkt for t in tls])
    assert mean == pytest.approx(C.ESB_INIT_US + C.MPSL_INIT_EXTRA_US, rel=0.05)


# -- ESB forward / BLE reverse split ------------------------------------------------

@pytest.mark.parametrize("fwd, rev", [(2_200, 0), (0, 1_350), (1_100, 675)])
def test_split_examples_are_feasible(fwd, rev):
    res = split_bidirectional(fwd, rev)
    assert res.fwd_actual >= fwd * 0.95 and res.rev_actual >= rev * 0.95
    assert sequence_gaps(res.rev_sdus) == 0


def test_point_beyond_the_frontier_is_infeasible():
    with pytest.raises(Infeasible) as exc:
        split_bidirectional(2_200, 1_350)
    fwd, rev = exc.value.nearest_feasible
    assert fwd < 2_200 * 0.95 or rev < 1_350 * 0.95


def test_split_demand_must_be_non_negative():
    with pytest.raises(ValueError):
        split_bidirectional(-1, 0)


def test_reverse_path_delivers_in_order_next_to_saturated_esb():
    res = run_split(None, 600, seed=5)
    assert sequence_gaps(res.rev_sdus) == 0
    assert list(res.rev_sdus) == sorted(res.rev_sdus)


def test_sequence_gaps():
    assert sequence_gaps([]) == 0
    assert sequence_gaps([0, 1, 2]) == 0
    assert sequence_gaps([0, 2, 3]) == 1
