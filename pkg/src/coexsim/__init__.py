"""Discrete-event model of BLE and ESB sharing one 2.4 GHz radio."""

from .arbiter import Blocked, Priority, ProtocolId, RadioArbiter, RadioSlot, SlotOutcome, SlotRequest
from .ble import BleConfig, BleLink, BlePhy, BleState, PduExchange, ble_event_duration, warmup
from .channel import ChannelState, ack_loss_prob, forward_loss_prob, throughput_cap
from .coex import (
    Activity,
    CoexMode,
    CoexOperatingRange,
    CoexSystem,
    Direction,
    Disposition,
    HandoverController,
    HandoverRecord,
    configure_coexistence,
    handover_latencies,
    hybrid_wakeup,
    split_bidirectional,
)
from .errors import CoexSimError
from .esb import AckAudit, EsbConfig, EsbLink, EsbPhy, Outcome, Transaction, audit_ack_loss, esb_event_duration, warmup_esb
from .kernel import EventHandle, Simulator
from .oracle import f_max, fit_overhead, k_of_m, r_max
from .power import PowerModel, PowerRecorder, PowerTrace
from .scenario import load_scenario
from .traffic import Source

__version__ = "0.1.0"
