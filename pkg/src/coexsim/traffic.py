"""Application packet sources feeding the link layers."""

from __future__ import annotations

import math


class Source:
    """Packets of ``size`` bytes, either saturated or paced at ``rate_kbps``.

    A paced source releases packet k at the first integer microsecond where
    ``rate * t >= k * size * 8``; the release schedule is a pure function of
    time, so link layers may look ahead when planning.
    """

    def __init__(self, size: int, rate_kbps: float | None = None, start_us: int = 0,
                 limit: int | None = None):
        if size <= 0:
            raise ValueError("packet size must be positive")
        if rate_kbps is not None and rate_kbps < 0:
            raise ValueError("rate must be non-negative")
        self.size = size
        self.rate_kbps = rate_kbps
        self.start_us = start_us
        self.taken = 0
        self.stop_us: int | None = None
        self.limit = limit  # total packets ever released

    @property
    def saturated(self) -> bool:
        return self.rate_kbps is None

    def released(self, t: int) -> int:
        n = self._released(t)
        return n if self.limit is None else min(n, self.limit)

    def _released(self, t: int) -> int:
        if self.stop_us is not None:
            t = min(t, self.stop_us)
        if t < self.start_us:
            return 0
        if self.saturated:
            return 1 << 60
        if self.rate_kbps == 0:
            return 0
        # kbps == bits per ms == bits / 1000 us
        return int(math.floor(self.rate_kbps * (t - self.start_us) / 1000 / (self.size * 8))) + 1

    def available(self, t: int) -> int:
        return max(self.released(t) - self.taken, 0)

    def take(self, n: int = 1) -> None:
        self.taken += n

    def next_release(self, t: int) -> int | None:
        """Earliest time after which ``available`` becomes positive."""
        if self.available(t) > 0:
            return t
        if self.saturated:
            if (self.stop_us is not None and self.stop_us < max(t, self.start_us)) or (
                    self.limit is not None and self.taken >= self.limit):
                return None
            return max(t, self.start_us)
        if self.rate_kbps == 0 or (self.limit is not None and self.taken >= self.limit):
            return None
        k = self.taken  # index of the packet we are waiting for (0-based)
        bits = k * self.size * 8
        wait = bits * 1000 / self.rate_kbps
        if not math.isfinite(wait):
            # vanishingly small rate: the packet never comes
            return None
        due = max(self.start_us + int(math.ceil(wait)), t)
        if self.stop_us is not None and due > self.stop_us:
            return None
        return due

    def set_rate(self, rate_kbps: float | None, now: int) -> None:
        """Re-pace from ``now`` on; packets already released stay queued."""
        backlog = 0 if self.saturated else self.available(now)
        self.rate_kbps = rate_kbps
        self.start_us = now
        self.taken = 0 if self.saturated else self.released(now) - backlog
