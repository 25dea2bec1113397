import pytest
from hypothesis import given
from hypothesis import strategies as st

from coexsim import constants as C
from coexsim.errors import DegenerateFit, OutOfRange
from coexsim.esb import EsbConfig, EsbLink, EsbPhy, esb_slot_us
from coexsim.arbiter import RadioArbiter
from coexsim.kernel import Simulator
from coexsim.oracle import (
    BLE_POWER,
    ESB_POWER,
    AckCapacityModel,
    LinearPowerModel,
    ble_aggregate,
    f_max,
    fit_overhead,
    k_of_m,
    r_max,
    relative_error,
)
from coexsim.traffic import Source

payload = st.integers(0, 252)


def test_k_exact_values():
    assert k_of_m(252) == 1.0
    assert k_of_m(126) == 0.5
    assert k_of_m(132) == pytest.approx(0.5238, abs=1e-4)


def test_k_against_measured_ratio():
    # the measured 0.542 is quoted to three places
    assert relative_error(k_of_m(132), 0.542) == pytest.approx(0.0335, abs=1e-3)
    assert relative_error(k_of_m(132), 0.542, decimals=3) <= 0.033


def test_fmax_and_rmax_values():
    assert f_max(2) == pytest.approx(2_244.6, abs=0.05)
    assert relative_error(f_max(2), 2_244) < 0.003
    assert r_max(0) == 0
    assert f_max(252) == pytest.approx(1_342.4, abs=0.05)
    assert r_max(252) == pytest.approx(3_408 * 252 / 622)
    assert r_max(252) == pytest.approx(1_380.73, abs=0.005)


@pytest.mark.parametrize("fn", [k_of_m, f_max, r_max])
@pytest.mark.parametrize("m", [-1, 253])
def test_out_of_range_payload(fn, m):
    with pytest.raises(OutOfRange):
        fn(m)


@given(payload, payload)
def test_fmax_decreases_and_rmax_increases(a, b):
    if a == b:
        return
    lo, hi = sorted((a, b))
    assert f_max(hi) < f_max(lo)
    assert r_max(hi) > r_max(lo)


@given(st.integers(1, 252))
def test_reverse_forward_ratio_identity(m):
    assert r_max(m) / f_max(m) == pytest.approx(3_408 * m / 835_000, rel=1e-12)


def test_custom_model_constants():
    m = AckCapacityModel(overhead_bytes_equiv=400)
    assert m.f_max(0) == 835_000 / 400


# -- fit ----------------------------------------------------------------------

def test_fit_round_trips_exact_points():
    pts = [(m, 835_000 / (m + 370)) for m in (2, 64, 132, 200, 252)]
    fit = fit_overhead(pts)
    assert fit.numerator == pytest.approx(835_000, rel=1e-9)
    assert fit.overhead == pytest.approx(370, rel=1e-9)


def test_fit_on_published_saturation_points():
    fit = fit_overhead([(2, 2_244), (244, 1_364)])
    assert fit.numerator == pytest.approx(835_000, rel=0.01)


@pytest.mark.parametrize("pts", [[(2, 2_244)], [(2, 2_244), (2, 2_000)], [(2, 0), (4, 10)], [(2, 1), (4, 2)]])
def test_degenerate_fits(pts):
    with pytest.raises(DegenerateFit):
        fit_overhead(pts)


def _saturated(m, dur=1_000_000):
    sim = Simulator(0)
    link = EsbLink(sim, RadioArbiter(sim), EsbConfig(ack_payload=m), Source(252))
    link.start()
    sim.run_until(dur)
    return link.throughput_kbps(0, dur)


@pytest.mark.parametrize("m", [2, 64, 132, 200, 252])
def test_simulator_saturation_agrees_with_closed_form(m):
    assert _saturated(m) == pytest.approx(f_max(m), rel=0.05)


def test_fit_of_simulated_sweep_recovers_the_overhead():
    fit = fit_overhead([(m, _saturated(m)) for m in (2, 64, 132, 200, 252)])
    assert fit.overhead == pytest.approx(370, abs=10)
    assert fit.numerator == pytest.approx(835_000, rel=0.01)
    # the M = 0 cycle in byte-equivalents of the per-ACK-byte cost
    per_ack_byte = 8 / 4 + C.ESB_ACK_HANDLING_US_PER_BYTE
    cycle0 = esb_slot_us(252, 0, EsbPhy.PHY_4M) + C.ESB_INTER_PACKET_GAP_US
    assert fit.overhead == pytest.approx(cycle0 / per_ack_byte, abs=10)


def test_relative_error_with_rounding():
    assert relative_error(1.0, 2.0) == 0.5
    assert relative_error(0.5449, 0.545, decimals=3) == 0.0
    assert relative_error(0.54, 0.545, decimals=3) == pytest.approx(0.0045 / 0.5445)


# -- power lines and BLE capacity ----------------------------------------------------

def test_linear_power_models():
    assert ESB_POWER.power(1_000) == pytest.approx(13.55)
    assert BLE_POWER.power(0) == 0.99
    assert ESB_POWER.power(1_000) / BLE_POWER.power(1_000) == pytest.approx(0.75, abs=0.05)
    with pytest.raises(ValueError):
        LinearPowerModel(1.0, 0.0)


def test_ble_aggregate_examples():
    assert 1_054 <= ble_aggregate(0, 7_500) <= 1_100
    assert ble_aggregate(1_100, 7_500) == 0
    assert ble_aggregate(550, 7_500) == pytest.approx(550)
    assert ble_aggregate(0, 100_000) == pytest.approx(1_350)
    with pytest.raises(OutOfRange):
        ble_aggregate(0, 50_000)
    with pytest.raises(OutOfRange):
        ble_aggregate(2_000, 7_500)
