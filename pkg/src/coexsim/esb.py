"""Connectionless ESB link: transmit straight after init, explicit ACKs that
may carry a reverse payload, fixed-delay auto-retransmit, and an ACK
back-channel that can drop packets without any recovery."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import constants as C
from .arbiter import Blocked, Priority, ProtocolId, RadioArbiter, RadioSlot, SlotRequest
from .channel import ChannelState, ack_loss_prob, forward_loss_prob
from .errors import EmptyAudit, PayloadTooLarge
from .kernel import EventHandle, Simulator
from .power import PowerRecorder
from .traffic import Source


class EsbPhy(enum.Enum):
    PHY_1M = "1m"
    PHY_2M = "2m"
    PHY_4M = "4m"

    @property
    def bits_per_us(self) -> float:
        return {"1m": 1.0, "2m": 2.0, "4m": 4.0}[self.value]

    @property
    def overhead_us(self) -> float:
        # radio turnaround is PHY independent, the header bits are not
        return C.ESB_TURNAROUND_US + C.ESB_HEADER_BITS / self.bits_per_us

    @property
    def curve_key(self) -> str:
        return f"esb_{self.value}"


class Outcome(enum.Enum):
    ACKED_OK = "acked_ok"
    ACK_LOST = "ack_lost"
    FAILED = "failed"
    PREEMPTED = "preempted"


@dataclass
class EsbConfig:
    phy: EsbPhy = EsbPhy.PHY_4M
    txp: float = 8.0
    payload: int = C.ESB_MAX_PAYLOAD
    ack_payload: int = 0
    retransmit_delay: int = C.ESB_RETRANSMIT_DELAY_US
    max_retries: int = C.ESB_MAX_RETRIES
    retry_on_ack_loss: bool = False

    def __post_init__(self):
        for name in ("payload", "ack_payload"):
            v = getattr(self, name)
            if v > C.ESB_MAX_PAYLOAD:
                raise PayloadTooLarge(f"ESB {name} {v} B exceeds {C.ESB_MAX_PAYLOAD} B")
            if v < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.retransmit_delay < 0 or self.max_retries < 0:
            raise ValueError("retransmit settings must be non-negative")


@dataclass
class Transaction:
    seq: int
    fwd_bytes: int
    ack_bytes: int
    retries_used: int = 0
    airtime: int = 0
    outcome: Outcome | None = None
    attempts: list[tuple[int, int]] = field(default_factory=list)

    @property
    def t_done(self) -> int | None:
        return self.attempts[-1][1] if self.attempts else None


@dataclass
class AckAudit:
    expected_seqs: set = field(default_factory=set)
    received_seqs: set = field(default_factory=set)

    @property
    def loss_rate(self) -> float:
        return audit_ack_loss(self)


def audit_ack_loss(audit: AckAudit) -> float:
    if not audit.expected_seqs:
        raise EmptyAudit("no ACKs were expected")
    missing = audit.expected_seqs - audit.received_seqs
    return len(missing) / len(audit.expected_seqs)


def esb_event_duration(payload: int, ack_payload: int = 0, phy: EsbPhy = EsbPhy.PHY_4M) -> int:
    """Airtime of one packet plus its ACK."""
    for v in (payload, ack_payload):
        if v > C.ESB_MAX_PAYLOAD:
            raise PayloadTooLarge(f"ESB payload {v} B exceeds {C.ESB_MAX_PAYLOAD} B")
        if v < 0:
            raise ValueError("payload must be non-negative")
    return int(round((payload + ack_payload) * 8 / phy.bits_per_us + phy.overhead_us))


def esb_slot_us(payload: int, ack_payload: int, phy: EsbPhy) -> int:
    """Radio occupancy of a transaction: airtime plus per-byte ACK payload handling."""
    return int(round((payload + ack_payload) * 8 / phy.bits_per_us + phy.overhead_us
                     + C.ESB_ACK_HANDLING_US_PER_BYTE * ack_payload))


def warmup_esb(rng: np.random.Generator | None = None, coex: bool = False) -> int:
    """Time from wake to the first packet leaving the radio."""
    t = C.ESB_INIT_US + (C.MPSL_INIT_EXTRA_US if coex else 0)
    if rng is not None:
        t += int(rng.integers(-C.ESB_INIT_JITTER_US, C.ESB_INIT_JITTER_US + 1))
    return t


class EsbState(enum.Enum):
    SLEEP = "sleep"
    INIT = "init"
    ACTIVE = "active"
    STOPPED = "stopped"


class EsbLink:
    """Transmitter side of an ESB pipe.

    Packets come from ``source``; every transaction asks the arbiter for a
    slot. ``force_loss(seq, attempt) -> bool`` replaces the random forward
    loss draw when given.
    """

    def __init__(
        self,
        sim: Simulator,
        arbiter: RadioArbiter,
        config: EsbConfig | None = None,
        source: Source | None = None,
        channel: ChannelState | None = None,
        recorder: PowerRecorder | None = None,
        force_loss: Callable[[int, int], bool] | None = None,
    ):
        self.sim = sim
        self.arbiter = arbiter
        self.config = config or EsbConfig()
        self.source = source if source is not None else Source(self.config.payload)
        self.channel = channel or ChannelState()
        self.recorder = recorder
        self.force_loss = force_loss
        self.state = EsbState.SLEEP
        self.log: list[Transaction] = []
        self.audit = AckAudit()
        self.fwd_log: list[tuple[int, int]] = []   # (time, bytes) delivered forward
        self.ack_log: list[tuple[int, int]] = []   # (time, bytes) of ACK payload received
        self.t_first_packet: int | None = None
        self._seq = 0
        self._current: Transaction | None = None
        self._wake: EventHandle | None = None
        self._busy = False
        self._stop_at: int | None = None

    # -- lifecycle ----------------------------------------------------------
    def wake(self, coex: bool = False, jitter: bool = True) -> int:
        """Initialise from sleep; returns the absolute start time of transmission."""
        t0 = self.sim.now()
        self.state = EsbState.INIT
        t = t0 + warmup_esb(self.sim.rng if jitter else None, coex)
        if self.recorder is not None:
            self.recorder.add(t0, t, C.INIT_MW)
        self.sim.schedule(t, self.start)
        return t

    def start(self) -> None:
        self.state = EsbState.ACTIVE
        self._stop_at = None
        self._poll()

    def stop(self) -> None:
        """Stop after the in-flight transaction."""
        self.state = EsbState.STOPPED
        self._stop_at = self.sim.now()
        if self._wake is not None:
            self.sim.cancel(self._wake)
            self._wake = None

    def kick(self) -> None:
        """Re-examine the source now (after a rate or config change)."""
        if self.state is EsbState.ACTIVE and not self._busy:
            if self._wake is not None:
                self.sim.cancel(self._wake)
                self._wake = None
            self._poll()

    # -- transmit loop --------------------------------------------------------
    def _schedule_poll(self, at: int) -> None:
        self._wake = self.sim.schedule(max(at, self.sim.now()), self._poll)

    def _poll(self) -> None:
        self._wake = None
        if self.state is not EsbState.ACTIVE or self._busy:
            return
        if self._current is None:
            now = self.sim.now()
            if self.source.available(now) <= 0:
                nxt = self.source.next_release(now)
                if nxt is not None:
                    self._schedule_poll(nxt)
                return
            self.source.take()
            cfg = self.config
            self._current = Transaction(self._seq, cfg.payload, cfg.ack_payload)
            self._seq += 1
        self._attempt(self.sim.now())

    def _attempt(self, earliest: int) -> None:
        cfg = self.config
        dur = esb_slot_us(cfg.payload, cfg.ack_payload, cfg.phy)
        res = self.arbiter.request_slot(SlotRequest(ProtocolId.ESB, earliest, dur, Priority.OPPORTUNISTIC))
        if isinstance(res, Blocked):
            self._wake = self.sim.schedule(max(res.retry_at, earliest), lambda: self._attempt(self.sim.now()))
            return
        self._busy = True
        slot: RadioSlot = res
        slot.on_preempt = self._on_preempt
        slot.handle = self.sim.schedule(slot.end, lambda: self._complete(slot))

    def _lost(self, tx: Transaction, p: float) -> bool:
        if self.force_loss is not None:
            return bool(self.force_loss(tx.seq, tx.retries_used))
        return p > 0 and self.sim.rng.random() < p

    def _complete(self, slot: RadioSlot) -> None:
        self._busy = False
        tx = self._current
        cfg = self.config
        if self.t_first_packet is None:
            self.t_first_packet = slot.start
        tx.attempts.append((slot.start, slot.end))
        tx.airtime += slot.duration
        self._charge(slot)
        rssi = self.channel.esb_rssi(cfg.txp)
        if self._lost(tx, forward_loss_prob(rssi, cfg.phy)):
            self._retry_or_fail(tx, Outcome.FAILED)
            return
        self.fwd_log.append((slot.end, tx.fwd_bytes))
        self.audit.expected_seqs.add(tx.seq)
        p_ack = ack_loss_prob(rssi)
        if p_ack > 0 and self.sim.rng.random() < p_ack:
            if cfg.retry_on_ack_loss and tx.retries_used < cfg.max_retries:
                tx.retries_used += 1
                self._attempt(self.sim.now() + cfg.retransmit_delay)
                return
            self._finish(tx, Outcome.ACK_LOST)
            return
        self.audit.received_seqs.add(tx.seq)
        if tx.ack_bytes:
            self.ack_log.append((slot.end, tx.ack_bytes))
        self._finish(tx, Outcome.ACKED_OK)

    def _retry_or_fail(self, tx: Transaction, final: Outcome) -> None:
        if tx.retries_used < self.config.max_retries:
            tx.retries_used += 1
            self._attempt(self.sim.now() + self.config.retransmit_delay)
        else:
            self._finish(tx, final)

    def _on_preempt(self, slot: RadioSlot) -> None:
        self._busy = False
        tx = self._current
        if slot.duration == 0:
            # never aired: ask again without spending a retry
            self._wake = self.sim.schedule(self.sim.now(), lambda: self._attempt(self.sim.now()))
            return
        tx.attempts.append((slot.start, slot.end))
        tx.airtime += slot.duration
        self._charge(slot)
        now = self.sim.now()
        if tx.retries_used < self.config.max_retries:
            tx.retries_used += 1
            at = max(slot.end, now) + self.config.retransmit_delay
            self._wake = self.sim.schedule(at, lambda: self._attempt(self.sim.now()))
        else:
            self._finish(tx, Outcome.PREEMPTED)

    def _finish(self, tx: Transaction, outcome: Outcome) -> None:
        tx.outcome = outcome
        self.log.append(tx)
        self._current = None
        if self.state is EsbState.ACTIVE:
            self._schedule_poll(self.sim.now() + C.ESB_INTER_PACKET_GAP_US)

    def _charge(self, slot: RadioSlot) -> None:
        if self.recorder is None:
            return
        excess = C.ESB_RADIO_MW - C.MCU_BASELINE_MW - C.ESB_STANDBY_MW
        self.recorder.add(slot.start, slot.end, excess)
        # packet preparation runs on the CPU before the radio is keyed
        self.recorder.add_energy(slot.start - C.ESB_PREP_US, slot.start, C.ESB_PACKET_PREP_UJ)

    # -- metrics ----------------------------------------------------------------
    def throughput_kbps(self, t0: int, t1: int, reverse: bool = False) -> float:
        log = self.ack_log if reverse else self.fwd_log
        bits = sum(n for t, n in log if t0 < t <= t1) * 8
        return bits / ((t1 - t0) / 1000)

    def transaction_rows(self) -> list[tuple]:
        return [(t.seq, t.attempts[0][0], t.t_done, t.outcome.value, t.retries_used, t.airtime)
                for t in self.log]
