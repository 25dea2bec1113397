import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coexsim.ble import BlePhy
from coexsim.channel import ChannelState, ack_loss_prob, rssi, throughput_cap
from coexsim.coex import CoexSystem
from coexsim.errors import UncoveredInterval
from coexsim.esb import EsbPhy
from coexsim.power import PowerModel, PowerRecorder, PowerTrace

ALL_PHYS = list(BlePhy) + list(EsbPhy)
dbm = st.floats(-120, 10, allow_nan=False)


def test_rssi_is_txp_minus_attenuation():
    assert rssi(8, 41) == -33
    assert rssi(-2, 41) == -43
    assert rssi(8, 0) == 8
    ch = ChannelState(ble_attenuation_db=41)
    assert ch.ble_rssi(-12) == -53


def test_negative_attenuation_is_rejected():
    with pytest.raises(ValueError):
        ChannelState(ble_attenuation_db=-1)


@pytest.mark.parametrize("x, p", [(-80, 0.22), (-70, 0.07), (-60, 0.01), (-50, 0.0),
                                  (-75, 0.145), (-95, 0.22), (-30, 0.0)])
def test_ack_loss_anchors(x, p):
    assert ack_loss_prob(x) == pytest.approx(p)


def test_throughput_cap_shape():
    assert all(throughput_cap(-40, phy) == 1.0 for phy in ALL_PHYS)
    assert all(throughput_cap(-65, phy) == 1.0 for phy in ALL_PHYS)
    assert all(throughput_cap(-110, phy) == 0.0 for phy in ALL_PHYS)
    assert throughput_cap(-85, EsbPhy.PHY_4M) < throughput_cap(-85, BlePhy.PHY_2M)
    # ESB 4M loses more per dB than BLE 2M between -85 and -70
    drop = lambda phy: throughput_cap(-70, phy) - throughput_cap(-85, phy)
    assert drop(EsbPhy.PHY_4M) > drop(BlePhy.PHY_2M)


@given(dbm, dbm)
def test_ack_loss_is_non_increasing_in_rssi(a, b):
    lo, hi = sorted((a, b))
    assert ack_loss_prob(hi) <= ack_loss_prob(lo)


@given(dbm, dbm, st.sampled_from(ALL_PHYS))
def test_throughput_cap_is_non_decreasing_in_rssi(a, b, phy):
    lo, hi = sorted((a, b))
    assert 0.0 <= throughput_cap(lo, phy) <= throughput_cap(hi, phy) <= 1.0


# -- power ----------------------------------------------------------------------

def test_power_model_validation():
    with pytest.raises(ValueError):
        PowerModel(idle_ble=-1)
    with pytest.raises(ValueError):
        PowerModel(slope_esb=0)
    m = PowerModel()
    assert m.instantaneous_power([]) == m.sleep
    assert m.instantaneous_power(["mcu", "esb_standby"]) == pytest.approx(m.sleep + 0.55)
    assert m.linear_esb(1_000) == pytest.approx(13.55)


intervals = st.lists(
    st.tuples(st.integers(0, 5_000), st.integers(1, 2_000), st.floats(0, 50, allow_nan=False)),
    max_size=30)


def _trace(parts, floor=0.45):
    rec = PowerRecorder(floor)
    for start, length, mw in parts:
        rec.add(start, start + length, mw)
    return rec.trace(0, 10_000)


@settings(max_examples=200)
@given(intervals, st.integers(0, 10_000), st.integers(0, 10_000), st.integers(0, 10_000))
def test_energy_is_exactly_additive(parts, a, b, c):
    t0, t1, t2 = sorted((a, b, c))
    tr = _trace(parts)
    assert tr.energy_fj(t0, t2) == tr.energy_fj(t0, t1) + tr.energy_fj(t1, t2)


@settings(max_examples=100)
@given(intervals)
def test_energy_equals_sum_of_rectangles(parts):
    tr = _trace(parts, floor=0)
    expected = sum(round(mw * 1e6) * length for _, length, mw in parts)
    assert tr.energy_fj(0, 10_000) == expected


def test_add_energy_spreads_the_total():
    rec = PowerRecorder()
    rec.add_energy(100, 1_520, 44.75)
    assert rec.trace(0, 2_000).integrate(0, 2_000) == pytest.approx(44.75, rel=1e-6)


def test_integration_outside_the_trace_raises():
    tr = _trace([])
    with pytest.raises(UncoveredInterval):
        tr.integrate(-1, 10)
    with pytest.raises(UncoveredInterval):
        tr.integrate(0, 10_001)


def test_trace_rejects_unordered_timestamps():
    with pytest.raises(ValueError):
        PowerTrace([0, 5, 5], [1, 2, 3], 10)


def test_csv_is_sampled_every_10us():
    rec = PowerRecorder(0.45)
    rec.add(20, 40, 1.0)
    text = rec.trace(0, 100).to_csv()
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["time_us", "power_mw"]
    times = [int(r[0]) for r in rows[1:]]
    assert times == list(range(0, 100, 10))
    assert [r[1] for r in rows[1:4]] == ["0.450", "0.450", "1.450"]
    t, p = rec.trace(0, 100).samples()
    assert np.all(np.diff(t) > 0)


def test_esb_streaming_at_1000kbps_follows_the_linear_model():
    dur = 2_000_000
    s = CoexSystem(0, 100_000, ble=False, esb_kbps=1_000)
    s.start()
    s.run(dur)
    measured = s.power_trace(100_000, dur).mean_power()
    assert measured == pytest.approx(PowerModel().linear_esb(1_000), rel=0.05)


def test_idle_powers():
    for kw, idle in ((dict(esb=False), 0.99), (dict(ble=False, esb_kbps=0), 0.55)):
        s = CoexSystem(0, 7_500, **kw)
        s.start()
        s.run(1_000_000)
        assert s.power_trace(100_000, 1_000_000).mean_power() == pytest.approx(idle, rel=0.05)
