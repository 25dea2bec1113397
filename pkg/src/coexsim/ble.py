"""Connection-oriented BLE link layer.

Covers the warm-up pipeline (init, advertising, connection, service
discovery), connection events that pack forward/reverse PDU exchanges into
the time left before the next anchor, implicit acknowledgement with
in-event retransmission, and PHY-dependent airtime.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import constants as C
from .arbiter import RadioArbiter
from .channel import ChannelState, forward_loss_prob
from .errors import IllegalTransition, PayloadTooLarge
from .kernel import Simulator
from .power import PowerRecorder
from .traffic import Source


class BlePhy(enum.Enum):
    CODED_S8 = "coded_s8"
    PHY_1M = "1m"
    PHY_2M = "2m"

    @property
    def bits_per_us(self) -> float:
        return {"coded_s8": 0.125, "1m": 1.0, "2m": 2.0}[self.value]

    @property
    def overhead_us(self) -> int:
        if self is BlePhy.CODED_S8:
            return C.BLE_CODED_OVERHEAD_US
        # two IFS plus the non-payload bits of both PDUs
        return int(round(2 * C.BLE_IFS_US + C.BLE_HEADER_BITS / self.bits_per_us))

    @property
    def max_fragment(self) -> int:
        return C.BLE_CODED_MAX_FRAGMENT if self is BlePhy.CODED_S8 else C.BLE_MAX_PAYLOAD

    @property
    def curve_key(self) -> str:
        return f"ble_{self.value}"


class BleState(enum.Enum):
    SLEEP = "sleep"
    INIT = "init"
    ADVERTISING = "advertising"
    CONNECTING = "connecting"
    SERVICE_DISCOVERY = "service_discovery"
    CONNECTED = "connected"
    STANDBY = "standby"
    SHUTDOWN = "shutdown"


_LEGAL = {
    BleState.SLEEP: {BleState.INIT},
    BleState.INIT: {BleState.ADVERTISING, BleState.SHUTDOWN},
    BleState.ADVERTISING: {BleState.CONNECTING, BleState.SHUTDOWN},
    BleState.CONNECTING: {BleState.SERVICE_DISCOVERY, BleState.SHUTDOWN},
    BleState.SERVICE_DISCOVERY: {BleState.CONNECTED, BleState.SHUTDOWN},
    BleState.CONNECTED: {BleState.STANDBY, BleState.SHUTDOWN, BleState.SLEEP},
    BleState.STANDBY: {BleState.CONNECTED, BleState.SHUTDOWN, BleState.SLEEP},
    BleState.SHUTDOWN: {BleState.INIT, BleState.SLEEP},
}


def is_legal_transition(old: BleState, new: BleState) -> bool:
    return new in _LEGAL[old]


@dataclass
class BleConfig:
    connection_interval: int = 100_000
    advertising_interval: int = C.BLE_ADV_INTERVAL_US
    scan_interval: int = C.BLE_SCAN_INTERVAL_US
    phy: BlePhy = BlePhy.PHY_2M
    txp: float = 8.0
    payload: int = C.BLE_MAX_PAYLOAD

    def __post_init__(self):
        if self.payload > C.BLE_MAX_PAYLOAD:
            raise PayloadTooLarge(f"BLE payload {self.payload} B exceeds {C.BLE_MAX_PAYLOAD} B")
        if min(self.connection_interval, self.advertising_interval, self.scan_interval) <= 0:
            raise ValueError("intervals must be positive")


@dataclass
class PduExchange:
    fwd_bytes: int
    rev_bytes: int
    retransmitted: bool
    airtime: int
    fwd_ok: bool = True
    rev_ok: bool = True


def exchange_airtime(fwd_bytes: int, rev_bytes: int, phy: BlePhy) -> int:
    """One central->peripheral / peripheral->central PDU pair, both IFS included."""
    return int(round((fwd_bytes + rev_bytes) * 8 / phy.bits_per_us)) + phy.overhead_us


def n_fragments(payload: int, phy: BlePhy) -> int:
    return max(1, -(-payload // phy.max_fragment))


def ble_event_duration(payload: int, phy: BlePhy = BlePhy.PHY_2M) -> int:
    """Connection event carrying a single ``payload``-byte packet."""
    if payload > C.BLE_MAX_PAYLOAD:
        raise PayloadTooLarge(f"BLE payload {payload} B exceeds {C.BLE_MAX_PAYLOAD} B")
    if payload < 0:
        raise ValueError("payload must be non-negative")
    n = n_fragments(payload, phy)
    return int(round(payload * 8 / phy.bits_per_us)) + n * phy.overhead_us


# -- warm-up --------------------------------------------------------------------

@dataclass(frozen=True)
class WarmupTimeline:
    t_init_done: int
    t_adv_done: int
    t_connected: int
    t_discovery_done: int
    missed_adv_events: int = 0

    @property
    def total(self) -> int:
        return self.t_discovery_done

    def energy_uj(self) -> float:
        return (
            self.t_init_done * C.INIT_MW
            + (self.t_adv_done - self.t_init_done) * C.BLE_ADV_MW
            + (self.t_connected - self.t_adv_done) * C.BLE_CONNECT_MW
            + (self.t_discovery_done - self.t_connected) * C.BLE_DISCOVERY_MW
        ) / 1e3

    def shifted(self, t0: int) -> "WarmupTimeline":
        return WarmupTimeline(self.t_init_done + t0, self.t_adv_done + t0, self.t_connected + t0,
                              self.t_discovery_done + t0, self.missed_adv_events)


def advertising_wait(adv_interval: int, rng: np.random.Generator | None) -> tuple[int, int]:
    """Time from advertising start until a connection request arrives.

    A uniform phase into the first advertising interval, then one further
    interval (plus advDelay) for every advertising event the central fails to
    act on. Returns (wait_us, missed_events). ``rng=None`` is the zero-phase
    floor: the very first advertisement connects.
    """
    if rng is None:
        return 0, 0
    wait = int(rng.integers(0, adv_interval))
    missed = int(rng.geometric(C.BLE_ADV_CAPTURE_P)) - 1
    if missed:
        wait += missed * adv_interval + int(rng.integers(0, C.BLE_ADV_DELAY_MAX_US, size=missed).sum())
    return wait, missed


def warmup(config: BleConfig, rng: np.random.Generator | None, coex: bool = False) -> WarmupTimeline:
    """Sample one wake-up timeline relative to the wake instant."""
    init = C.BLE_INIT_US + (C.MPSL_INIT_EXTRA_US if coex else 0)
    adv, missed = advertising_wait(config.advertising_interval, rng)
    t_adv = init + adv
    t_conn = t_adv + C.BLE_CONNECT_US
    disc = C.BLE_DISCOVERY_COEX_US if coex else C.BLE_DISCOVERY_US
    return WarmupTimeline(init, t_adv, t_conn, t_conn + disc, missed)


def expected_warmup_us(adv_interval: int, coex: bool = False) -> float:
    """Closed-form mean of ``warmup(...).total``."""
    p = C.BLE_ADV_CAPTURE_P
    missed = (1 - p) / p
    adv = (adv_interval - 1) / 2 + missed * (adv_interval + (C.BLE_ADV_DELAY_MAX_US - 1) / 2)
    init = C.BLE_INIT_US + (C.MPSL_INIT_EXTRA_US if coex else 0)
    disc = C.BLE_DISCOVERY_COEX_US if coex else C.BLE_DISCOVERY_US
    return init + adv + C.BLE_CONNECT_US + disc


# -- connection events ----------------------------------------------------------

class _Direction:
    """Fragment queue of one direction; retransmissions go back to the head."""

    def __init__(self, source: Source | None):
        self.source = source
        self.retry: deque[tuple[int, int, bool]] = deque()  # (sdu_seq, nbytes, last_fragment)
        self.head_seq = -1
        self.head_left = 0
        self.next_seq = 0
        self.delivered_bytes = 0
        self.delivered_sdus: list[int] = []
        self.delivery_log: list[tuple[int, int]] = []  # (time, bytes)

    def peek(self, t: int, max_frag: int) -> tuple[int, int, bool] | None:
        if self.retry:
            return self.retry[0]
        if self.head_left > 0:
            n = min(self.head_left, max_frag)
            return self.head_seq, n, n == self.head_left
        if self.source is None or self.source.available(t) <= 0:
            return None
        n = min(self.source.size, max_frag)
        return self.next_seq, n, n == self.source.size

    def commit(self, t: int, max_frag: int) -> tuple[int, int, bool]:
        if self.retry:
            return self.retry.popleft()
        if self.head_left == 0:
            self.source.take()
            self.head_seq = self.next_seq
            self.next_seq += 1
            self.head_left = self.source.size
        n = min(self.head_left, max_frag)
        self.head_left -= n
        return self.head_seq, n, self.head_left == 0

    def requeue(self, frags: list[tuple[int, int, bool]]) -> None:
        for f in reversed(frags):
            self.retry.appendleft(f)


class BleLink:
    """Peripheral-side BLE link driven by the kernel and the radio arbiter.

    ``fwd`` is peripheral -> central, ``rev`` the opposite. ``priority``
    names the direction whose offered load is served first in every event;
    the other direction fills whatever airtime is left.
    """

    def __init__(
        self,
        sim: Simulator,
        arbiter: RadioArbiter,
        config: BleConfig | None = None,
        fwd: Source | None = None,
        rev: Source | None = None,
        channel: ChannelState | None = None,
        recorder: PowerRecorder | None = None,
        priority: str = "fwd",
    ):
        self.sim = sim
        self.arbiter = arbiter
        self.config = config or BleConfig()
        self.channel = channel or ChannelState()
        self.recorder = recorder
        self.priority = priority
        self.fwd = _Direction(fwd)
        self.rev = _Direction(rev)
        self.state = BleState.SLEEP
        self.transitions: list[tuple[int, BleState, BleState]] = []
        self.events: list[tuple[int, int, list[PduExchange]]] = []
        self.anchor_times: list[int] = []
        self.keep_events = False
        self._next_anchor: int | None = None
        self._stopped = False
        self.timeline: WarmupTimeline | None = None

    # -- state machine ------------------------------------------------------
    def transition(self, new: BleState) -> None:
        if not is_legal_transition(self.state, new):
            raise IllegalTransition(f"{self.state.value} -> {new.value}")
        self.transitions.append((self.sim.now(), self.state, new))
        self.state = new

    def wake(self, coex: bool = False, zero_phase: bool = False, on_ready=None) -> WarmupTimeline:
        """Run the warm-up pipeline from now; returns the absolute timeline."""
        t0 = self.sim.now()
        self.transition(BleState.INIT)
        tl = warmup(self.config, None if zero_phase else self.sim.rng, coex=coex).shifted(t0)
        self.timeline = tl
        rec = self.recorder
        if rec is not None:
            rec.add(t0, tl.t_init_done, C.INIT_MW)
            rec.add(tl.t_init_done, tl.t_adv_done, C.BLE_ADV_MW)
            rec.add(tl.t_adv_done, tl.t_connected, C.BLE_CONNECT_MW)
            rec.add(tl.t_connected, tl.t_discovery_done, C.BLE_DISCOVERY_MW)
        self.sim.schedule(tl.t_init_done, lambda: self.transition(BleState.ADVERTISING))
        self.sim.schedule(tl.t_adv_done, lambda: self.transition(BleState.CONNECTING))
        self.sim.schedule(tl.t_connected, lambda: self.transition(BleState.SERVICE_DISCOVERY))

        def ready():
            self.transition(BleState.CONNECTED)
            self.start_events(self.sim.now())
            if on_ready is not None:
                on_ready()

        self.sim.schedule(tl.t_discovery_done, ready)
        return tl

    def connect_now(self, first_anchor: int | None = None) -> None:
        """Jump straight to Connected (benchmarks that start from a live link)."""
        for s in (BleState.INIT, BleState.ADVERTISING, BleState.CONNECTING,
                  BleState.SERVICE_DISCOVERY, BleState.CONNECTED):
            self.transition(s)
        self.start_events(self.sim.now() if first_anchor is None else first_anchor)

    def start_events(self, first_anchor: int) -> None:
        self._stopped = False
        self._plan(first_anchor)

    def stop_events(self) -> None:
        self._stopped = True

    # -- connection events --------------------------------------------------
    def _loss(self) -> float:
        return forward_loss_prob(self.channel.ble_rssi(self.config.txp), self.config.phy)

    def _plan(self, anchor: int) -> None:
        """Reserve the event at ``anchor`` and schedule its completion."""
        if self._stopped:
            return
        cfg = self.config
        phy = cfg.phy
        budget = cfg.connection_interval - C.BLE_EVENT_END_MARGIN_US
        carry_data = self.state is BleState.CONNECTED
        first, second = (self.fwd, self.rev) if self.priority == "fwd" else (self.rev, self.fwd)
        plan: list[list] = []  # [first_frag, second_frag]
        used = 0
        if carry_data:
            while True:
                f = first.peek(anchor, phy.max_fragment)
                if f is None:
                    break
                cost = exchange_airtime(f[1], 0, phy)
                if used + cost > budget:
                    break
                plan.append([first.commit(anchor, phy.max_fragment), None])
                used += cost
            for ex in plan:
                f = second.peek(anchor, phy.max_fragment)
                if f is None:
                    break
                extra = exchange_airtime(ex[0][1], f[1], phy) - exchange_airtime(ex[0][1], 0, phy)
                if used + extra > budget:
                    break
                ex[1] = second.commit(anchor, phy.max_fragment)
                used += extra
            while True:
                f = second.peek(anchor, phy.max_fragment)
                if f is None:
                    break
                cost = exchange_airtime(0, f[1], phy)
                if used + cost > budget:
                    break
                plan.append([None, second.commit(anchor, phy.max_fragment)])
                used += cost

        loss = self._loss() if plan else 0.0
        rng = self.sim.rng
        exchanges: list[PduExchange] = []
        done: list[tuple[_Direction, tuple[int, int, bool]]] = []
        # each direction is stop-and-wait: every slot carries the oldest
        # unacknowledged fragment, so a loss shifts the rest back one slot
        pending = {id(first): [ex[0] for ex in plan if ex[0] is not None],
                   id(second): [ex[1] for ex in plan if ex[1] is not None]}
        head = {id(first): 0, id(second): 0}

        def send(d) -> tuple[int, bool]:
            q, i = pending[id(d)], head[id(d)]
            ok = loss == 0.0 or rng.random() >= loss
            if ok:
                done.append((d, q[i]))
                head[id(d)] = i + 1
            return q[i][1], ok

        def record(sent: dict, retransmitted: bool, airtime: int) -> None:
            nf, fok = sent.get(id(self.fwd), (0, True))
            nr, rok = sent.get(id(self.rev), (0, True))
            exchanges.append(PduExchange(nf, nr, retransmitted, airtime, fok, rok))

        for a, b in plan:
            sent = {}
            for d, frag in ((first, a), (second, b)):
                if frag is not None:
                    sent[id(d)] = send(d)
            na, nb = (0 if a is None else a[1]), (0 if b is None else b[1])
            record(sent, False, exchange_airtime(na, nb, phy))
        # in-event retransmission, 150 us after the failed exchange, while time remains
        while True:
            d = next((d for d in (first, second) if head[id(d)] < len(pending[id(d)])), None)
            if d is None:
                break
            cost = exchange_airtime(pending[id(d)][head[id(d)]][1], 0, phy)
            if used + cost > budget:
                break
            used += cost
            record({id(d): send(d)}, True, cost)
        for d in (first, second):
            # undelivered fragments wait for the next event, ahead of fresh data
            d.requeue(pending[id(d)][head[id(d)]:])

        duration = sum(e.airtime for e in exchanges) if exchanges else exchange_airtime(0, 0, phy)
        slot = self.arbiter.reserve_anchor(anchor, duration)
        self.anchor_times.append(anchor)
        if self.recorder is not None:
            self._record_power(anchor, duration, exchanges)
        if self.keep_events:
            self.events.append((anchor, duration, exchanges))
        end = slot.end

        def finish():
            if self.state is not BleState.CONNECTED:
                # link left Connected after planning: nothing counts as delivered
                for d in (first, second):
                    d.requeue([f for dd, f in done if dd is d])
                done.clear()
            for d, (seq, n, last) in done:
                d.delivered_bytes += n
                d.delivery_log.append((end, n))
                if last:
                    d.delivered_sdus.append(seq)
            self._plan(anchor + self.config.connection_interval)

        self.sim.schedule(end, finish)

    def _record_power(self, anchor: int, duration: int, exchanges: list[PduExchange]) -> None:
        uj = C.BLE_EMPTY_EVENT_UJ
        if exchanges:
            uj += C.BLE_DATA_EVENT_UJ
            per_us = C.BLE_PDU_UJ / C.BLE_SINGLE_EVENT_US
            uj += per_us * sum(e.airtime for e in exchanges)
        self.recorder.add_energy(anchor, anchor + duration, uj)

    # -- metrics ------------------------------------------------------------
    def throughput_kbps(self, direction: str, t0: int, t1: int) -> float:
        d = self.fwd if direction == "fwd" else self.rev
        bits = sum(n for t, n in d.delivery_log if t0 < t <= t1) * 8
        return bits / ((t1 - t0) / 1000)
