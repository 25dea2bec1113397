"""Deterministic discrete-event engine on an integer-microsecond clock."""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import SchedulingInPast

US_PER_MS = 1_000
US_PER_S = 1_000_000


@dataclass(frozen=True)
class EventHandle:
    id: int
    fire_at: int
    sequence: int


@dataclass(order=True)
class _Entry:
    fire_at: int
    sequence: int
    handle: EventHandle = field(compare=False)
    action: Callable[[], None] = field(compare=False)


class Simulator:
    """Event queue plus the single RNG stream of a simulation instance.

    Events at equal times fire in insertion order. Modules must only draw
    from ``rng`` inside event callbacks so that a seed fully determines a run.
    """

    def __init__(self, seed: int = 0, horizon_us: int | None = None):
        self.rng = np.random.default_rng(seed)
        self.seed = seed
        self.horizon_us = horizon_us
        self._now = 0
        self._queue: list[_Entry] = []
        self._ids = itertools.count()
        self._pending: dict[int, _Entry] = {}
        self.scheduled = 0
        self.fired = 0
        self.cancelled = 0
        self.trace: list[tuple[int, int]] | None = None

    def now(self) -> int:
        return self._now

    @property
    def pending(self) -> int:
        return len(self._pending)

    def schedule(self, at: int, action: Callable[[], None]) -> EventHandle:
        at = int(at)
        if at < self._now:
            raise SchedulingInPast(f"cannot schedule at {at} us, now is {self._now} us")
        n = next(self._ids)
        handle = EventHandle(id=n, fire_at=at, sequence=n)
        entry = _Entry(at, n, handle, action)
        heapq.heappush(self._queue, entry)
        self._pending[n] = entry
        self.scheduled += 1
        return handle

    def schedule_in(self, delay: int, action: Callable[[], None]) -> EventHandle:
        return self.schedule(self._now + int(delay), action)

    def cancel(self, handle: EventHandle | None) -> bool:
        if handle is None or handle.id not in self._pending:
            return False
        # lazy deletion: the heap entry is skipped when popped
        del self._pending[handle.id]
        self.cancelled += 1
        return True

    def run_until(self, t_end: int) -> int:
        t_end = int(t_end)
        if t_end < self._now:
            raise SchedulingInPast(f"run_until({t_end}) is before now ({self._now})")
        fired = 0
        q = self._queue
        while q and q[0].fire_at <= t_end:
            entry = heapq.heappop(q)
            if self._pending.pop(entry.handle.id, None) is None:
                continue
            self._now = entry.fire_at
            if self.trace is not None:
                self.trace.append((entry.fire_at, entry.sequence))
            entry.action()
            fired += 1
        self._now = t_end
        self.fired += fired
        return fired
