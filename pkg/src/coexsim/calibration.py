"""Re-derive every back-solved constant from the reference measurements.

``calibrate()`` returns one row per constant with the value it derives and
the value frozen in ``constants``; the test suite asserts they agree.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass

import numpy as np

from . import constants as C

# reference measurements the calibration starts from
TARGETS = {
    "ble_single_us": 1_420,
    "ble_single_uj": 44.75,
    "esb_single_us": 860,
    "esb_single_uj": 23.23,
    "ble_idle_mw": 0.99,
    "esb_idle_mw": 0.55,
    "ble_slope": 0.017,
    "esb_slope": 0.013,
    "ble_warmup_ms": 218.96,
    "ble_warmup_uj": 1_226.55,
    "ble_adv_uj": 219.37,
    "ble_discovery_uj": 576.45,
    "esb_warmup_ms": 12.51,
    "esb_warmup_uj": 61.71,
    "hybrid_esb_first_ms": 28.9,
    "hybrid_ble_connected_ms": 418.3,
    "hybrid_esb_stop_ms": 555.1,
    "shutdown_to_ble_ms": 309.52,
    "fwd_numerator": 835_000,
    "overhead_bytes": 370,
    "coded_kbps": 50.0,
    "handover": {
        "HANDOVER_ESB_ADJUST": (18.07, 2.04),
        "HANDOVER_BLE_ADJUST": (35.51, 2.81),
        "HANDOVER_STANDBY_TO_ESB": (18.64, 2.58),
        "HANDOVER_SHUTDOWN_TO_ESB": (18.30, 1.07),
    },
}


@dataclass(frozen=True)
class Row:
    name: str
    derived: float
    frozen: float
    how: str

    @property
    def rel_diff(self) -> float:
        if self.frozen == 0:
            return abs(self.derived)
        return abs(self.derived - self.frozen) / abs(self.frozen)


@contextlib.contextmanager
def patched(**values):
    """Temporarily override constants (the link layers read them at call time)."""
    old = {k: getattr(C, k) for k in values}
    try:
        for k, v in values.items():
            setattr(C, k, v)
        yield
    finally:
        for k, v in old.items():
            setattr(C, k, v)


def ble_stream_slope(rates=range(100, 1001, 100), ci: int = 7_500, dur: int = 1_000_000) -> float:
    from .coex import CoexSystem

    pts = []
    for r in rates:
        s = CoexSystem(0, ci, esb=False, ble_fwd_kbps=r)
        s.start()
        s.run(ci + dur)
        pts.append((s.ble.throughput_kbps("fwd", ci, ci + dur), s.power_trace(ci, ci + dur).mean_power()))
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])


def _ble_energy_split(t):
    """Per-PDU and per-data-event energy that hit both the single-event energy and the slope."""
    fixed = t["ble_single_uj"] - C.MCU_BASELINE_MW * t["ble_single_us"] / 1e3 - C.BLE_EMPTY_EVENT_UJ

    def slope_at(pdu):
        with patched(BLE_PDU_UJ=pdu, BLE_DATA_EVENT_UJ=fixed - pdu):
            return ble_stream_slope()

    # the fitted slope is affine in the split, two runs pin it
    a, b = 0.5 * fixed, 0.9 * fixed
    sa, sb = slope_at(a), slope_at(b)
    pdu = a + (t["ble_slope"] - sa) * (b - a) / (sb - sa)
    return pdu, fixed - pdu


def _adv_mean_us(interval: int, p: float) -> float:
    missed = (1 - p) / p
    return (interval - 1) / 2 + missed * (interval + (C.BLE_ADV_DELAY_MAX_US - 1) / 2)


def calibrate(simulate: bool = True) -> list[Row]:
    t = TARGETS
    rows: list[Row] = []

    def add(name, value, how):
        rows.append(Row(name, float(value), float(getattr(C, name)), how))

    # airtime
    ble_oh = t["ble_single_us"] - C.BLE_MAX_PAYLOAD * 8 / 2
    add("BLE_OVERHEAD_US", ble_oh, "single 244 B event on 2M minus payload airtime")
    add("BLE_HEADER_BITS", (ble_oh - 2 * C.BLE_IFS_US) * 2, "overhead beyond two IFS, as bits at 2 bit/us")
    esb_oh = t["esb_single_us"] - C.BLE_MAX_PAYLOAD * 8 / 4
    add("ESB_TURNAROUND_US", esb_oh - C.ESB_HEADER_BITS / 4, "single 244 B packet on 4M minus payload and header airtime")
    # saturated cycle (252 B, M ACK) must equal 252*8/F_max(M) for every M
    per_byte = C.ESB_MAX_PAYLOAD * 8 * 1000 / t["fwd_numerator"]
    add("ESB_ACK_HANDLING_US_PER_BYTE", round(per_byte - 2, 4), "cycle slope in M minus ACK payload airtime at 4M")
    add("ESB_INTER_PACKET_GAP_US", round(t["overhead_bytes"] * per_byte - C.ESB_MAX_PAYLOAD * 2 - esb_oh),
        "cycle at M = 0 minus packet airtime")
    budget = 100_000 - C.BLE_EVENT_END_MARGIN_US
    frag_bits = C.BLE_CODED_MAX_FRAGMENT * 8
    n = round(t["coded_kbps"] * 100 / frag_bits)
    add("BLE_CODED_OVERHEAD_US", budget // n - frag_bits * 8, "whole 100 ms event budget split over the fragments of ~50 kbps")

    # power
    add("BLE_EMPTY_EVENT_UJ", (t["ble_idle_mw"] - C.MCU_BASELINE_MW) * 7.5, "idle excess over the MCU baseline at 7.5 ms")
    add("ESB_STANDBY_MW", t["esb_idle_mw"] - C.MCU_BASELINE_MW, "ESB idle minus MCU baseline")
    radio = t["esb_single_uj"] / t["esb_single_us"] * 1e3
    add("ESB_RADIO_MW", radio, "single-packet energy over its duration")
    slot = C.ESB_MAX_PAYLOAD * 8 / 4 + esb_oh
    excess = radio - C.MCU_BASELINE_MW - C.ESB_STANDBY_MW
    # mW/kbps times bits per packet is uJ per packet
    add("ESB_PACKET_PREP_UJ", t["esb_slope"] * C.ESB_MAX_PAYLOAD * 8 - excess * slot / 1e3,
        "marginal energy per 252 B packet at the streaming slope minus radio energy")
    add("INIT_MW", t["esb_warmup_uj"] / t["esb_warmup_ms"], "ESB warm-up energy over its duration")

    # warm-up
    add("BLE_REINIT_US", (t["shutdown_to_ble_ms"] - t["ble_warmup_ms"]) * 1e3, "cold BLE restart minus a plain warm-up")
    add("MPSL_INIT_EXTRA_US", (t["hybrid_esb_first_ms"] - t["esb_warmup_ms"]) * 1e3, "hybrid first ESB packet minus standalone")
    # capture probability from the hybrid connection time at a 100 ms advertising interval
    adv100 = (t["hybrid_ble_connected_ms"] * 1e3 - C.BLE_INIT_US - C.MPSL_INIT_EXTRA_US - C.BLE_CONNECT_US)
    half = (100_000 - 1) / 2
    missed = (adv100 - half) / (100_000 + (C.BLE_ADV_DELAY_MAX_US - 1) / 2)
    p = 1 / (1 + missed)
    add("BLE_ADV_CAPTURE_P", round(p, 6), "mean missed advertising events at 100 ms")
    adv20 = _adv_mean_us(20_000, p)
    add("BLE_DISCOVERY_US", round(t["ble_warmup_ms"] * 1e3 - C.BLE_INIT_US - adv20 - C.BLE_CONNECT_US),
        "warm-up total minus init, mean advertising wait and connection")
    add("BLE_DISCOVERY_COEX_US", (t["hybrid_esb_stop_ms"] - t["hybrid_ble_connected_ms"]) * 1e3 - C.BLE_TAKEOVER_US,
        "hybrid ESB stop minus connection minus takeover delay")
    add("BLE_ADV_MW", t["ble_adv_uj"] / adv20 * 1e3, "advertising energy over mean advertising wait")
    add("BLE_DISCOVERY_MW", t["ble_discovery_uj"] / C.BLE_DISCOVERY_US * 1e3, "discovery energy over its duration")
    conn_uj = t["ble_warmup_uj"] - C.BLE_INIT_US * C.INIT_MW / 1e3 - t["ble_adv_uj"] - t["ble_discovery_uj"]
    add("BLE_CONNECT_MW", conn_uj / C.BLE_CONNECT_US * 1e3, "warm-up energy left for the connection phase")

    for name, (mean, sd) in t["handover"].items():
        width = sd * math.sqrt(12) * 1e3
        frozen = getattr(C, name)
        rows.append(Row(name + "[const]", mean * 1e3 - width / 2, frozen[0], "mean minus half the uniform width"))
        rows.append(Row(name + "[width]", width, frozen[1], "sd times sqrt(12)"))

    if simulate:
        pdu, data = _ble_energy_split(t)
        add("BLE_PDU_UJ", pdu, "streaming slope at 7.5 ms, simulated")
        add("BLE_DATA_EVENT_UJ", data, "single-event energy minus baseline, empty event and PDU")
    return rows


def provenance_table(rows: list[Row]) -> str:
    lines = ["constant,derived,frozen,rel_diff,derivation"]
    for r in rows:
        lines.append(f"{r.name},{r.derived:.6g},{r.frozen:.6g},{r.rel_diff:.2e},{r.how}")
    return "\n".join(lines) + "\n"
