import numpy as np
import pytest

from coexsim.arbiter import (
    Blocked,
    ProtocolId,
    RadioArbiter,
    SlotOutcome,
    SlotRequest,
    overlapping_pairs,
)
from coexsim.errors import AnchorConflict, EmptyWindow
from coexsim.kernel import Simulator

ESB, BLE = ProtocolId.ESB, ProtocolId.BLE


def esb(t, d):
    return SlotRequest(ESB, t, d)


def test_free_radio_grants_at_earliest_start():
    arb = RadioArbiter(Simulator())
    slot = arb.request_slot(esb(100, 500))
    assert (slot.start, slot.end) == (100, 600)


def test_esb_requests_queue_behind_each_other():
    arb = RadioArbiter(Simulator())
    arb.request_slot(esb(0, 500))
    second = arb.request_slot(esb(0, 500))
    assert second.start == 500


def test_request_overlapping_anchor_is_blocked_until_anchor_end():
    sim = Simulator()
    arb = RadioArbiter(sim, radio_switch_us=150, anchor_guard_us=0)
    arb.reserve_anchor(1_000, 1_400)
    out = arb.request_slot(esb(500, 860))
    assert isinstance(out, Blocked)
    assert out.retry_at == 2_400


def test_guard_window_before_anchor_blocks():
    arb = RadioArbiter(Simulator(), anchor_guard_us=3_000)
    arb.reserve_anchor(10_000, 1_000)
    # ends at 7_500 < 10_000 but inside the 3 ms guard
    assert isinstance(arb.request_slot(esb(6_000, 1_500)), Blocked)
    assert not isinstance(arb.request_slot(esb(0, 1_000)), Blocked)


def test_start_inside_switch_window_is_pushed_past_it():
    arb = RadioArbiter(Simulator(), radio_switch_us=150)
    arb.reserve_anchor(0, 1_000)
    slot = arb.request_slot(esb(1_050, 100))
    assert slot.start == 1_150


def test_surprise_anchor_truncates_airing_slot_and_cancels_completion():
    sim = Simulator()
    arb = RadioArbiter(sim)
    hit = []
    slot = arb.request_slot(esb(0, 1_000))
    slot.handle = sim.schedule(slot.end, lambda: hit.append("done"))
    slot.on_preempt = lambda s: hit.append(("preempted", s.end))
    sim.run_until(300)
    arb.reserve_anchor(400, 500)
    sim.run_until(5_000)
    assert hit == [("preempted", 400)]
    assert slot.outcome is SlotOutcome.PREEMPTED
    assert arb.preemptions == 1


def test_preempted_slot_that_never_aired_leaves_the_log():
    arb = RadioArbiter(Simulator())
    slot = arb.request_slot(esb(1_000, 500))
    arb.reserve_anchor(900, 700)
    assert slot.duration == 0
    assert all(s.owner is BLE for s in arb.log)


def test_overlapping_anchors_are_rejected():
    arb = RadioArbiter(Simulator())
    arb.reserve_anchor(0, 1_000)
    with pytest.raises(AnchorConflict):
        arb.reserve_anchor(999, 10)
    arb.reserve_anchor(1_000, 10)


def test_only_esb_requests_slots():
    arb = RadioArbiter(Simulator())
    with pytest.raises(ValueError):
        arb.request_slot(SlotRequest(BLE, 0, 10))


def test_utilization_fractions():
    sim = Simulator()
    arb = RadioArbiter(sim)
    arb.reserve_anchor(0, 250)
    arb.request_slot(esb(500, 250))
    u = arb.utilization(0, 1_000)
    assert u == pytest.approx({"ble_fraction": 0.25, "esb_fraction": 0.25, "idle_fraction": 0.5})
    with pytest.raises(EmptyWindow):
        arb.utilization(5, 5)


def test_next_anchor_after():
    arb = RadioArbiter(Simulator())
    a = arb.reserve_anchor(100, 10)
    b = arb.reserve_anchor(300, 10)
    assert arb.next_anchor_after(0) is a
    assert arb.next_anchor_after(100) is b
    assert arb.next_anchor_after(300) is None


def _sweep_overlaps(slots):
    live = sorted((s for s in slots if s.duration > 0), key=lambda s: (s.start, s.end))
    return [(a, b) for a, b in zip(live, live[1:]) if b.start < a.end]


def test_sweep_agrees_with_brute_force_scan():
    rng = np.random.default_rng(1)
    arb = RadioArbiter(Simulator())
    for _ in range(200):
        arb.request_slot(esb(int(rng.integers(0, 50_000)), int(rng.integers(1, 900))))
    assert len(_sweep_overlaps(arb.log)) == len(overlapping_pairs(arb.log)) == 0


def fuzz_arbiter(n_requests: int, seed: int):
    """Random interleaving of anchors, surprise anchors and ESB requests on a live clock."""
    rng = np.random.default_rng(seed)
    sim = Simulator(seed)
    arb = RadioArbiter(sim, radio_switch_us=150, anchor_guard_us=int(rng.choice([0, 3_000])))
    anchors = []
    anchor_len = {}
    next_anchor = 0
    granted = 0
    backlog_end = 0
    for _ in range(n_requests):
        if backlog_end - sim.now() > 4_000:
            # keep queued ESB grants within a few ms of the clock
            sim.run_until(backlog_end - int(rng.integers(0, 4_000)))
        now = sim.now()
        roll = rng.random()
        if roll < 0.02:
            start = max(next_anchor, now + int(rng.integers(0, 8_000)))
            dur = int(rng.integers(100, 3_000))
            slot = arb.reserve_anchor(start, dur)
            anchors.append(slot)
            anchor_len[id(slot)] = dur
            next_anchor = start + dur
        else:
            out = arb.request_slot(esb(now + int(rng.integers(0, 2_000)), int(rng.integers(50, 1_500))))
            if not isinstance(out, Blocked):
                granted += 1
                backlog_end = out.end
                out.handle = sim.schedule(out.end, lambda: None)
        sim.run_until(sim.now() + int(rng.integers(0, 400)))
    return arb, anchors, anchor_len, granted


def test_fuzzed_arbiter_keeps_mutual_exclusion_and_ble_priority():
    arb, anchors, anchor_len, granted = fuzz_arbiter(100_000, seed=7)
    assert granted > 10_000 and arb.preemptions > 0 and arb.blocked > 0
    assert _sweep_overlaps(arb.log) == []
    # anchors are never shortened, moved or dropped
    assert all(a.duration == anchor_len[id(a)] for a in anchors)
    assert all(a.outcome is SlotOutcome.COMPLETED for a in anchors)
    assert sum(s.owner is BLE for s in arb.log) == len(anchors)
