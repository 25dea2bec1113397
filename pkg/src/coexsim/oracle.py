"""Closed-form ESB ACK-payload capacity, overhead fit, linear power models
and the BLE shared-capacity trade-off.

Pure functions, independent of the simulator, so they double as a check
on it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFit, OutOfRange

MAX_PAYLOAD = 252
OVERHEAD_BYTES = 370
FWD_NUMERATOR = 835_000
REV_NUMERATOR = 3_408


@dataclass(frozen=True)
class AckCapacityModel:
    max_payload: int = MAX_PAYLOAD
    overhead_bytes_equiv: float = OVERHEAD_BYTES
    fwd_numerator: float = FWD_NUMERATOR
    rev_numerator: float = REV_NUMERATOR

    def _check(self, m: float) -> None:
        if not 0 <= m <= self.max_payload:
            raise OutOfRange(f"ACK payload {m} B outside [0, {self.max_payload}]")

    def k(self, m: float) -> float:
        self._check(m)
        return m / self.max_payload

    def f_max(self, m: float) -> float:
        self._check(m)
        return self.fwd_numerator / (m + self.overhead_bytes_equiv)

    def r_max(self, m: float) -> float:
        self._check(m)
        return self.rev_numerator * m / (m + self.overhead_bytes_equiv)


_DEFAULT = AckCapacityModel()


def k_of_m(m: float) -> float:
    """Reverse/forward throughput ratio before saturation."""
    return _DEFAULT.k(m)


def f_max(m: float) -> float:
    """Saturated forward throughput (kbps) with an ``m``-byte ACK payload."""
    return _DEFAULT.f_max(m)


def r_max(m: float) -> float:
    """Saturated reverse throughput (kbps) carried by ``m``-byte ACK payloads."""
    return _DEFAULT.r_max(m)


@dataclass(frozen=True)
class OverheadFit:
    numerator: float
    overhead: float


def fit_overhead(points) -> OverheadFit:
    """Least-squares fit of F = A / (M + B) through the linear form 1/F = M/A + B/A."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2 or len(np.unique(pts[:, 0])) < 2:
        raise DegenerateFit("need at least two distinct payload sizes")
    if np.any(pts[:, 1] <= 0):
        raise DegenerateFit("throughputs must be positive")
    slope, intercept = np.polyfit(pts[:, 0], 1.0 / pts[:, 1], 1)
    if slope <= 0:
        raise DegenerateFit("throughput does not decrease with ACK payload")
    a = 1.0 / slope
    return OverheadFit(a, intercept * a)


def relative_error(model: float, measured: float, decimals: int | None = None) -> float:
    """|model - measured| / measured.

    With ``decimals`` the measurement is taken as rounded to that many
    places and the smallest error over its rounding interval is returned.
    """
    if decimals is None:
        return abs(model - measured) / abs(measured)
    half = 0.5 * 10.0 ** (-decimals)
    lo, hi = measured - half, measured + half
    if lo <= model <= hi:
        return 0.0
    edge = lo if model < lo else hi
    return abs(model - edge) / abs(edge)


# -- linear power ------------------------------------------------------------------

@dataclass(frozen=True)
class LinearPowerModel:
    idle: float
    slope: float

    def __post_init__(self):
        if self.slope <= 0:
            raise ValueError("slope must be positive")

    def power(self, kbps: float) -> float:
        return self.idle + self.slope * kbps


BLE_POWER = LinearPowerModel(0.99, 0.017)
ESB_POWER = LinearPowerModel(0.55, 0.013)


# -- BLE shared capacity ---------------------------------------------------------------

# connection interval -> (aggregate at zero forward load, kbps; d reverse / d forward)
BLE_CAPACITY = {
    7_500: (1_100.0, -1.0),
    100_000: (1_350.0, -0.91),
}


def ble_aggregate(fwd: float, ci: int) -> float:
    """Largest reverse throughput BLE can carry alongside ``fwd`` kbps forward."""
    if ci not in BLE_CAPACITY:
        raise OutOfRange(f"no capacity line for a {ci} us connection interval")
    cap, slope = BLE_CAPACITY[ci]
    fwd_max = cap / -slope
    if not 0 <= fwd <= fwd_max:
        raise OutOfRange(f"forward load {fwd} kbps outside [0, {fwd_max:.0f}]")
    return max(cap + slope * fwd, 0.0)
