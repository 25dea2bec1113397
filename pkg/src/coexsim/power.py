"""Power accounting: state powers, a piecewise-constant power trace that
emulates a 100 kS/s current probe, and exact energy integration.

Internally powers are integer nanowatts and times integer microseconds, so
energies are integer femtojoules and integration is exactly additive.
"""

from __future__ import annotations

import bisect
import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import constants as C
from .errors import UncoveredInterval

SAMPLE_PERIOD_US = 10


def mw_to_nw(mw: float) -> int:
    return int(round(mw * 1e6))


@dataclass(frozen=True)
class PowerModel:
    idle_ble: float = 0.99
    idle_esb: float = 0.55
    slope_ble: float = 0.017
    slope_esb: float = 0.013
    sleep: float = C.SLEEP_MW
    states: dict = field(default_factory=lambda: {
        "mcu": C.MCU_BASELINE_MW,
        "ble_standby": C.BLE_STANDBY_MW,
        "esb_standby": C.ESB_STANDBY_MW,
        "esb_radio": C.ESB_RADIO_MW - C.MCU_BASELINE_MW - C.ESB_STANDBY_MW,
        "init": C.INIT_MW,
        "ble_advertising": C.BLE_ADV_MW,
        "ble_connecting": C.BLE_CONNECT_MW,
        "ble_discovery": C.BLE_DISCOVERY_MW,
    })

    def __post_init__(self):
        if min(self.idle_ble, self.idle_esb, self.sleep) < 0 or min(self.states.values()) < 0:
            raise ValueError("powers must be non-negative")
        if self.slope_ble <= 0 or self.slope_esb <= 0:
            raise ValueError("slopes must be positive")

    def instantaneous_power(self, active_states) -> float:
        """Sleep floor plus the contribution of every active state (mW)."""
        return self.sleep + sum(self.states[s] for s in active_states)

    def linear_ble(self, kbps: float) -> float:
        return self.idle_ble + self.slope_ble * kbps

    def linear_esb(self, kbps: float) -> float:
        return self.idle_esb + self.slope_esb * kbps


class PowerRecorder:
    """Collects rectangular power contributions; several may overlap."""

    def __init__(self, floor_mw: float = 0.0):
        self._deltas: dict[int, int] = {}
        self.floor_nw = mw_to_nw(floor_mw)

    def add(self, start: int, end: int, mw: float) -> None:
        if end <= start or mw == 0:
            return
        nw = mw_to_nw(mw)
        self._deltas[start] = self._deltas.get(start, 0) + nw
        self._deltas[end] = self._deltas.get(end, 0) - nw

    def add_energy(self, start: int, end: int, uj: float) -> None:
        """Spread ``uj`` evenly over [start, end)."""
        if end <= start:
            return
        self.add(start, end, uj * 1e3 / (end - start))

    def trace(self, t0: int, t1: int) -> "PowerTrace":
        times = [t0]
        powers = [self.floor_nw]
        level = self.floor_nw
        for t in sorted(self._deltas):
            level += self._deltas[t]
            if t <= t0:
                powers[0] = level
                continue
            if t >= t1:
                break
            if level != powers[-1]:
                times.append(t)
                powers.append(level)
        return PowerTrace(times, powers, t1)


class PowerTrace:
    """Piecewise-constant power: ``powers[i]`` holds on [times[i], times[i+1])."""

    def __init__(self, times: list[int], powers_nw: list[int], end_us: int):
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("trace timestamps must be strictly increasing")
        if end_us <= times[0]:
            raise ValueError("trace must cover a non-empty interval")
        self.times = list(times)
        self.powers_nw = list(powers_nw)
        self.start_us = times[0]
        self.end_us = end_us
        # prefix energies in fJ at each change point
        self._cum = [0]
        bounds = self.times[1:] + [end_us]
        for i, p in enumerate(self.powers_nw):
            self._cum.append(self._cum[-1] + p * (bounds[i] - self.times[i]))

    def _energy_to(self, t: int) -> int:
        i = bisect.bisect_right(self.times, t) - 1
        return self._cum[i] + self.powers_nw[i] * (t - self.times[i])

    def energy_fj(self, t0: int, t1: int) -> int:
        if t0 < self.start_us or t1 > self.end_us or t1 < t0:
            raise UncoveredInterval(f"[{t0}, {t1}) not inside trace [{self.start_us}, {self.end_us})")
        return self._energy_to(t1) - self._energy_to(t0)

    def integrate(self, t0: int, t1: int) -> float:
        """Energy in uJ over [t0, t1)."""
        return self.energy_fj(t0, t1) / 1e9

    def mean_power(self, t0: int | None = None, t1: int | None = None) -> float:
        t0 = self.start_us if t0 is None else t0
        t1 = self.end_us if t1 is None else t1
        return self.integrate(t0, t1) * 1e3 / (t1 - t0)

    def power_at(self, t: int) -> float:
        i = bisect.bisect_right(self.times, t) - 1
        return self.powers_nw[i] / 1e6

    def samples(self, period_us: int = SAMPLE_PERIOD_US) -> tuple[np.ndarray, np.ndarray]:
        """Uniform samples (time_us, mW), as a 100 kS/s probe would see them."""
        t = np.arange(self.start_us, self.end_us, period_us, dtype=np.int64)
        idx = np.searchsorted(np.asarray(self.times), t, side="right") - 1
        return t, np.asarray(self.powers_nw, dtype=np.int64)[idx] / 1e6

    def to_csv(self, period_us: int = SAMPLE_PERIOD_US) -> str:
        t, p = self.samples(period_us)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time_us", "power_mw"])
        for ti, pi in zip(t.tolist(), p.tolist()):
            w.writerow([ti, f"{pi:.3f}"])
        return buf.getvalue()
