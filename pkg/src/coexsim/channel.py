"""Empirical channel: RSSI from TXP and attenuation, ACK back-channel loss,
and PHY-dependent forward throughput degradation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import constants as C


def rssi(txp_dbm: float, attenuation_db: float) -> float:
    return txp_dbm - attenuation_db


def interp_anchors(x: float, anchors) -> float:
    """Piecewise-linear through (x, y) anchors, clamped at both ends."""
    xs = [a[0] for a in anchors]
    ys = [a[1] for a in anchors]
    return float(np.interp(x, xs, ys))


def ack_loss_prob(rssi_dbm: float) -> float:
    return interp_anchors(rssi_dbm, C.ACK_LOSS_ANCHORS)


def _phy_key(phy) -> str:
    key = getattr(phy, "curve_key", None)
    if key is None:
        raise ValueError(f"no throughput curve for {phy!r}")
    return key


def throughput_cap(rssi_dbm: float, phy) -> float:
    """Fraction of the nominal maximum throughput reachable at this RSSI."""
    return interp_anchors(rssi_dbm, C.THROUGHPUT_CAP_ANCHORS[_phy_key(phy)])


def forward_loss_prob(rssi_dbm: float, phy) -> float:
    """Per-attempt forward packet loss, the complement of the throughput curve."""
    return 1.0 - throughput_cap(rssi_dbm, phy)


@dataclass
class ChannelState:
    """Per-link attenuation; RSSI is always derived, never stored."""

    ble_attenuation_db: float = 0.0
    esb_attenuation_db: float = 0.0

    def __post_init__(self):
        if self.ble_attenuation_db < 0 or self.esb_attenuation_db < 0:
            raise ValueError("attenuation must be non-negative")

    def ble_rssi(self, txp_dbm: float) -> float:
        return rssi(txp_dbm, self.ble_attenuation_db)

    def esb_rssi(self, txp_dbm: float) -> float:
        return rssi(txp_dbm, self.esb_attenuation_db)

    @classmethod
    def from_rssi(cls, ble_rssi: float, esb_rssi: float, txp_dbm: float = 8.0) -> "ChannelState":
        return cls(max(txp_dbm - ble_rssi, 0.0), max(txp_dbm - esb_rssi, 0.0))
