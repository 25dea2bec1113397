"""Time-division arbitration of the single 2.4 GHz radio between BLE and ESB.

BLE connection events are reserved at fixed anchors and always win. ESB
asks for opportunistic slots; a request that would touch a reserved anchor
window is blocked until the anchor ends. An anchor reserved on top of an
already granted ESB slot (one the ESB side could not foresee) truncates that
slot and cancels its completion callback.
"""

from __future__ import annotations

import bisect
import enum
from dataclasses import dataclass, field
from typing import Callable

from .errors import AnchorConflict, EmptyWindow
from .kernel import EventHandle, Simulator


class ProtocolId(enum.Enum):
    BLE = "ble"
    ESB = "esb"


class Priority(enum.Enum):
    ANCHOR = "anchor"
    OPPORTUNISTIC = "opportunistic"


class SlotOutcome(enum.Enum):
    COMPLETED = "completed"
    PREEMPTED = "preempted"


@dataclass(frozen=True)
class SlotRequest:
    owner: ProtocolId
    earliest_start: int
    duration: int
    priority: Priority = Priority.OPPORTUNISTIC

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("slot duration must be positive")


@dataclass(eq=False)
class RadioSlot:
    owner: ProtocolId
    start: int
    end: int
    outcome: SlotOutcome = SlotOutcome.COMPLETED
    # completion event of the transmission occupying the slot
    handle: EventHandle | None = field(default=None, repr=False)
    on_preempt: Callable[["RadioSlot"], None] | None = field(default=None, repr=False)

    @property
    def duration(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class Blocked:
    retry_at: int


class RadioArbiter:
    """Grants radio slots and keeps the append-only slot log.

    ``radio_switch_us`` is charged before an ESB slot that follows BLE
    activity; ``anchor_guard_us`` is the lead time before a BLE anchor during
    which ESB may not hold the radio.
    """

    def __init__(self, sim: Simulator, radio_switch_us: int = 150, anchor_guard_us: int = 0):
        self.sim = sim
        self.radio_switch_us = radio_switch_us
        self.anchor_guard_us = anchor_guard_us
        self.log: list[RadioSlot] = []
        self._anchor_starts: list[int] = []
        self._anchors: list[RadioSlot] = []
        self._esb_open: list[RadioSlot] = []
        self._esb_busy_until = 0
        self.preemptions = 0
        self.blocked = 0

    # -- BLE side -----------------------------------------------------------
    def reserve_anchor(self, start: int, duration: int) -> RadioSlot:
        if duration <= 0:
            raise ValueError("anchor duration must be positive")
        if start < self.sim.now():
            raise ValueError(f"anchor at {start} us lies in the past")
        end = start + duration
        i = bisect.bisect_left(self._anchor_starts, start)
        for j in (i - 1, i):
            if 0 <= j < len(self._anchors):
                a = self._anchors[j]
                if a.start < end and start < a.end:
                    raise AnchorConflict(f"anchor [{start}, {end}) overlaps [{a.start}, {a.end})")
        slot = RadioSlot(ProtocolId.BLE, start, end)
        self._anchor_starts.insert(i, start)
        self._anchors.insert(i, slot)
        self.log.append(slot)
        self._preempt_overlapping(slot)
        return slot

    def _preempt_overlapping(self, anchor: RadioSlot) -> None:
        # same guarded window the ESB side is checked against
        lo = anchor.start - self.anchor_guard_us
        hi = anchor.end + self.radio_switch_us
        now = self.sim.now()
        cut = max(lo, now)
        keep = []
        busy = now
        for s in self._esb_open:
            if s.end <= now:
                continue
            if s.start < hi and lo < s.end:
                self._preempt(s, cut)
                if s.end <= s.start:
                    continue
                # a truncated slot still holds the radio up to the cut
            keep.append(s)
            busy = max(busy, s.end)
        self._esb_open = keep
        self._esb_busy_until = busy

    def _preempt(self, slot: RadioSlot, at: int) -> None:
        self.preemptions += 1
        slot.outcome = SlotOutcome.PREEMPTED
        if at <= slot.start:
            # the slot never reached the air: drop it from the log
            slot.end = slot.start
            for k in range(len(self.log) - 1, -1, -1):
                if self.log[k] is slot:
                    del self.log[k]
                    break
        else:
            slot.end = at
        self.sim.cancel(slot.handle)
        if slot.on_preempt is not None:
            slot.on_preempt(slot)

    # -- ESB side -----------------------------------------------------------
    def _conflict(self, start: int, end: int) -> RadioSlot | None:
        """First reserved anchor whose guarded window meets [start, end)."""
        lo = start - self.anchor_guard_us
        i = bisect.bisect_right(self._anchor_starts, lo)
        j = max(i - 1, 0)
        guard = self.anchor_guard_us
        sw = self.radio_switch_us
        while j < len(self._anchors):
            a = self._anchors[j]
            if a.start - guard >= end:
                return None
            if start < a.end + sw and a.start - guard < end:
                return a
            j += 1
        return None

    def request_slot(self, req: SlotRequest) -> RadioSlot | Blocked:
        if req.owner is not ProtocolId.ESB:
            raise ValueError("request_slot is for the opportunistic (ESB) owner")
        start = max(req.earliest_start, self.sim.now(), self._esb_busy_until)
        while True:
            end = start + req.duration
            a = self._conflict(start, end)
            if a is None:
                break
            if start >= a.end:
                # switch-over time after the anchor is charged to this slot
                start = a.end + self.radio_switch_us
                continue
            self.blocked += 1
            return Blocked(retry_at=max(a.end, self.sim.now()))
        slot = RadioSlot(ProtocolId.ESB, start, end)
        self.log.append(slot)
        self._esb_open.append(slot)
        self._esb_busy_until = end
        if len(self._esb_open) > 64:
            now = self.sim.now()
            self._esb_open = [s for s in self._esb_open if s.end > now]
        return slot

    def next_anchor_after(self, t: int) -> RadioSlot | None:
        i = bisect.bisect_right(self._anchor_starts, t)
        return self._anchors[i] if i < len(self._anchors) else None

    # -- accounting ----------------------------------------------------------
    def utilization(self, window_start: int, window_end: int) -> dict[str, float]:
        if window_end <= window_start:
            raise EmptyWindow(f"window [{window_start}, {window_end}) is empty")
        span = window_end - window_start
        busy = {ProtocolId.BLE: 0, ProtocolId.ESB: 0}
        for s in self.log:
            ov = min(s.end, window_end) - max(s.start, window_start)
            if ov > 0:
                busy[s.owner] += ov
        ble = busy[ProtocolId.BLE] / span
        esb = busy[ProtocolId.ESB] / span
        return {"ble_fraction": ble, "esb_fraction": esb, "idle_fraction": 1.0 - ble - esb}

    def slot_rows(self) -> list[tuple[str, int, int, str]]:
        return [(s.owner.value, s.start, s.end, s.outcome.value) for s in self.log]


def overlapping_pairs(slots: list[RadioSlot]) -> list[tuple[RadioSlot, RadioSlot]]:
    """Brute-force overlap scan; quadratic, meant for checking logs in tests."""
    bad = []
    for i, a in enumerate(slots):
        for b in slots[i + 1:]:
            if a.start < b.end and b.start < a.end:
                bad.append((a, b))
    return bad
