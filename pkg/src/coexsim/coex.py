"""Coexistence controller on top of the two link layers.

Wires BLE and ESB to one radio arbiter and a shared power recorder, and
provides the policies built on that: connection-interval governance,
traffic handover between the protocols, ESB-bridged wake-up, the ESB
forward / BLE reverse split and per-protocol TXP/PHY control.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import constants as C
from .arbiter import ProtocolId, RadioArbiter
from .ble import BleConfig, BleLink, BlePhy, BleState
from .channel import ChannelState
from .errors import IllegalTransition, Infeasible, InvalidInterval, OutOfRange, UnsupportedPhy
from .esb import EsbConfig, EsbLink, EsbPhy
from .kernel import Simulator
from .power import PowerRecorder, PowerTrace
from .traffic import Source

BLE_CI_MIN_US = 7_500
BLE_CI_MAX_US = 4_000_000
BLE_CI_STEP_US = 1_250
TXP_RANGE_DBM = (-40.0, 8.0)


def validate_interval(ci: int) -> int:
    if not (BLE_CI_MIN_US <= ci <= BLE_CI_MAX_US) or ci % BLE_CI_STEP_US:
        raise InvalidInterval(
            f"connection interval {ci} us must be a multiple of {BLE_CI_STEP_US} us "
            f"in [{BLE_CI_MIN_US}, {BLE_CI_MAX_US}]"
        )
    return ci


def _source(size: int, rate: float | None) -> Source:
    """``None`` saturates; 0 leaves the direction idle until re-paced."""
    return Source(size, None if rate is None else max(float(rate), 0.0))


class CoexSystem:
    """One device running BLE, ESB or both on a shared radio.

    Rates are kbps; ``None`` means saturated, 0 means no traffic. With both
    protocols present the arbiter keeps the MPSL guard before every BLE
    anchor.
    """

    def __init__(
        self,
        seed: int = 0,
        ci: int = 100_000,
        ble: bool = True,
        esb: bool = True,
        ble_config: BleConfig | None = None,
        esb_config: EsbConfig | None = None,
        ble_fwd_kbps: float | None = 0,
        ble_rev_kbps: float | None = 0,
        esb_kbps: float | None = None,
        channel: ChannelState | None = None,
        ble_priority: str = "fwd",
    ):
        self.sim = Simulator(seed)
        self.channel = channel or ChannelState()
        guard = C.MPSL_ANCHOR_GUARD_US if (ble and esb) else 0
        self.arbiter = RadioArbiter(self.sim, C.RADIO_SWITCH_US, guard)
        self.recorder = PowerRecorder()
        self.has_ble = ble
        self.has_esb = esb
        self.ble: BleLink | None = None
        self.esb: EsbLink | None = None
        if ble:
            cfg = ble_config or BleConfig()
            cfg.connection_interval = validate_interval(ci)
            self.ble = BleLink(self.sim, self.arbiter, cfg,
                               fwd=_source(cfg.payload, ble_fwd_kbps),
                               rev=_source(cfg.payload, ble_rev_kbps),
                               channel=self.channel, recorder=self.recorder, priority=ble_priority)
        if esb:
            cfg = esb_config or EsbConfig()
            self.esb = EsbLink(self.sim, self.arbiter, cfg, _source(cfg.payload, esb_kbps), channel=self.channel,
                               recorder=self.recorder)
        self._t_on = 0

    def start(self) -> None:
        """Both links live from t = 0 (BLE already connected)."""
        if self.ble is not None:
            self.ble.connect_now(0)
        if self.esb is not None:
            self.esb.start()

    def run(self, duration_us: int) -> None:
        self.sim.run_until(self.sim.now() + duration_us)

    def power_trace(self, t0: int, t1: int) -> PowerTrace:
        rec = self.recorder
        rec.add(t0, t1, C.MCU_BASELINE_MW)
        if self.has_esb:
            rec.add(t0, t1, C.ESB_STANDBY_MW)
        if self.has_ble:
            rec.add(t0, t1, C.BLE_STANDBY_MW)
        tr = rec.trace(t0, t1)
        # baselines are window-specific; take them back out of the recorder
        rec.add(t0, t1, -C.MCU_BASELINE_MW)
        if self.has_esb:
            rec.add(t0, t1, -C.ESB_STANDBY_MW)
        if self.has_ble:
            rec.add(t0, t1, -C.BLE_STANDBY_MW)
        return tr

    # -- runtime control ----------------------------------------------------
    def set_txp(self, proto: ProtocolId, txp: float) -> None:
        if not TXP_RANGE_DBM[0] <= txp <= TXP_RANGE_DBM[1]:
            raise OutOfRange(f"TXP {txp} dBm outside {TXP_RANGE_DBM}")
        link = self._link(proto)
        link.config.txp = float(txp)

    def set_phy(self, proto: ProtocolId, phy) -> None:
        link = self._link(proto)
        want = BlePhy if proto is ProtocolId.BLE else EsbPhy
        if isinstance(phy, str):
            try:
                phy = want(phy.lower())
            except ValueError:
                raise UnsupportedPhy(f"{phy!r} is not a {proto.value} PHY") from None
        if not isinstance(phy, want):
            raise UnsupportedPhy(f"{phy!r} is not a {proto.value} PHY")
        link.config.phy = phy

    def rssi(self, proto: ProtocolId) -> float:
        link = self._link(proto)
        if proto is ProtocolId.BLE:
            return self.channel.ble_rssi(link.config.txp)
        return self.channel.esb_rssi(link.config.txp)

    def _link(self, proto: ProtocolId):
        link = self.ble if proto is ProtocolId.BLE else self.esb
        if link is None:
            raise IllegalTransition(f"{proto.value} is not part of this system")
        return link


# -- operating range ------------------------------------------------------------

@dataclass(frozen=True)
class CoexOperatingRange:
    ci: int
    ble_max: float
    esb_max_at_ble_zero: float


def configure_coexistence(ci: int, seed: int = 0, duration_us: int | None = None) -> CoexOperatingRange:
    """Saturation endpoints of the BLE/ESB frontier at this connection interval."""
    validate_interval(ci)
    dur = duration_us or max(2_000_000, 5 * ci)
    both = CoexSystem(seed, ci, ble_fwd_kbps=None, esb_kbps=None)
    both.start()
    both.run(dur)
    esb_only = CoexSystem(seed, ci, ble_fwd_kbps=0, esb_kbps=None)
    esb_only.start()
    esb_only.run(dur)
    return CoexOperatingRange(
        ci,
        both.ble.throughput_kbps("fwd", 0, dur),
        esb_only.esb.throughput_kbps(0, dur),
    )


def coexistence_point(ci: int, ble_kbps: float | None, esb_kbps: float | None, seed: int = 0,
                      duration_us: int = 2_000_000) -> dict:
    """Achieved throughputs and mean power for one offered (BLE, ESB) load."""
    sys_ = CoexSystem(seed, ci, ble_fwd_kbps=ble_kbps, esb_kbps=esb_kbps)
    sys_.start()
    sys_.run(ci + duration_us)
    t0, t1 = ci, ci + duration_us
    return {
        "ble_kbps": sys_.ble.throughput_kbps("fwd", t0, t1),
        "esb_kbps": sys_.esb.throughput_kbps(t0, t1),
        "power_mw": sys_.power_trace(t0, t1).mean_power(),
    }


# -- handover -------------------------------------------------------------------

class Activity(enum.Enum):
    BLE_ONLY = "ble_only"
    ESB_ONLY = "esb_only"
    CONCURRENT = "concurrent"


class Disposition(enum.Enum):
    STANDBY = "standby"
    SHUTDOWN = "shutdown"


@dataclass(frozen=True)
class CoexMode:
    activity: Activity
    inactive_disposition: Disposition | None = None

    def __post_init__(self):
        if self.activity is Activity.CONCURRENT and self.inactive_disposition is not None:
            raise ValueError("concurrent mode has no inactive protocol")
        if self.activity is not Activity.CONCURRENT and self.inactive_disposition is None:
            raise ValueError("single-protocol mode needs a disposition for the other protocol")


class Direction(enum.Enum):
    TO_BLE = "to_ble"
    TO_ESB = "to_esb"
    BLE_ADJUST = "ble_adjust"
    ESB_ADJUST = "esb_adjust"


@dataclass
class HandoverRecord:
    command_time: int
    direction: Direction
    effective_time: int | None = None

    @property
    def latency(self) -> int | None:
        return None if self.effective_time is None else self.effective_time - self.command_time


def _const_plus_uniform(rng: np.random.Generator, law: tuple[int, int]) -> int:
    const, width = law
    return const + int(rng.integers(0, width + 1))


class HandoverController:
    """Moves application traffic between BLE and ESB.

    A concurrent system re-allocates rates (BLE_ADJUST / ESB_ADJUST); a
    single-protocol system hands over to the other one, which is either in
    standby (BLE keeps its connection alive with empty events) or shut down
    (a cold restart of its stack). Records are completed when the new
    allocation takes effect.
    """

    def __init__(self, system: CoexSystem, mode: CoexMode):
        if system.ble is None or system.esb is None:
            raise ValueError("handover needs both protocols")
        self.sys = system
        self.mode = mode
        self.records: list[HandoverRecord] = []

    def _legal(self, direction: Direction) -> bool:
        a = self.mode.activity
        if direction in (Direction.BLE_ADJUST, Direction.ESB_ADJUST):
            return a is Activity.CONCURRENT
        if direction is Direction.TO_ESB:
            return a is Activity.BLE_ONLY
        return a is Activity.ESB_ONLY

    def handover(self, direction: Direction) -> HandoverRecord:
        if not self._legal(direction):
            raise IllegalTransition(f"{direction.value} not possible from {self.mode.activity.value}")
        sim = self.sys.sim
        rng = sim.rng
        now = sim.now()
        rec = HandoverRecord(now, direction)
        self.records.append(rec)
        disp = self.mode.inactive_disposition
        ble, esb = self.sys.ble, self.sys.esb

        def done(action=None):
            def fire():
                rec.effective_time = sim.now()
                if action is not None:
                    action()
            return fire

        if direction is Direction.ESB_ADJUST:
            sim.schedule(now + _const_plus_uniform(rng, C.HANDOVER_ESB_ADJUST), done(action=esb.kick))
        elif direction is Direction.BLE_ADJUST:
            sim.schedule(now + _const_plus_uniform(rng, C.HANDOVER_BLE_ADJUST), done())
        elif direction is Direction.TO_ESB:
            law = C.HANDOVER_STANDBY_TO_ESB if disp is Disposition.STANDBY else C.HANDOVER_SHUTDOWN_TO_ESB

            def to_esb():
                esb.start()
                ble.transition(BleState.STANDBY if disp is Disposition.STANDBY else BleState.SHUTDOWN)
                if disp is Disposition.SHUTDOWN:
                    ble.stop_events()

            sim.schedule(now + _const_plus_uniform(rng, law), done(action=to_esb))
            self.mode = CoexMode(Activity.ESB_ONLY, disp)
        else:
            esb.stop()
            if disp is Disposition.STANDBY:
                # data resumes at the next connection anchor of the live link
                nxt = self.sys.arbiter.next_anchor_after(now - 1)
                at = (nxt.start if nxt is not None else now) + C.HANDOVER_STANDBY_TO_BLE_CONST
                sim.schedule(at, done(action=lambda: ble.transition(BleState.CONNECTED)))
            else:
                def restart():
                    ble.config.advertising_interval = C.BLE_ADV_INTERVAL_US
                    ble.wake(on_ready=done())

                sim.schedule(now + C.BLE_REINIT_US, restart)
            self.mode = CoexMode(Activity.BLE_ONLY, disp)
        return rec


def handover_latencies(direction: Direction, scenario: str, runs: int = 500, seed: int = 0,
                       ci: int = 100_000) -> np.ndarray:
    """Latencies (us) of ``runs`` handovers issued at uniformly random phases.

    ``scenario`` is "concurrent", "standby" or "shutdown". Every trial runs
    on a fresh system so trials are independent.
    """
    if scenario == "concurrent":
        mode = CoexMode(Activity.CONCURRENT)
    else:
        disp = Disposition(scenario)
        mode = CoexMode(Activity.ESB_ONLY if direction is Direction.TO_BLE else Activity.BLE_ONLY, disp)
    seeds = np.random.default_rng(seed).integers(0, 2**63 - 1, size=runs)
    out = np.empty(runs, dtype=np.int64)
    for i, s in enumerate(seeds):
        sys_ = CoexSystem(int(s), ci, ble_fwd_kbps=0, esb_kbps=0)
        sys_.start()
        if mode.activity is Activity.ESB_ONLY:
            if mode.inactive_disposition is Disposition.SHUTDOWN:
                sys_.ble.transition(BleState.SHUTDOWN)
                sys_.ble.stop_events()
            else:
                sys_.ble.transition(BleState.STANDBY)
        ctl = HandoverController(sys_, mode)
        # settle for one interval, then command at a uniformly random phase
        cmd = ci + int(sys_.sim.rng.integers(0, ci))
        box = {}
        sys_.sim.schedule(cmd, lambda: box.setdefault("rec", ctl.handover(direction)))
        sys_.sim.run_until(cmd)
        rec = box["rec"]
        while rec.effective_time is None:
            sys_.sim.run_until(sys_.sim.now() + 50_000)
        out[i] = rec.latency
    return out


# -- ESB-bridged wake-up ----------------------------------------------------------

@dataclass(frozen=True)
class WakeupTimeline:
    t_esb_first_pkt: int
    t_ble_connected: int
    t_ble_ready: int
    t_esb_stop: int

    def gap_free(self) -> bool:
        """Some protocol accepts data at every instant after the first ESB packet."""
        return self.t_ble_ready <= self.t_esb_stop


def hybrid_wakeup(adv_interval: int = 100_000, seed: int = 0, ci: int = 100_000,
                  system: CoexSystem | None = None) -> WakeupTimeline:
    """Wake both stacks from sleep; ESB carries data until BLE can take over."""
    sys_ = system or CoexSystem(seed, ci, ble_fwd_kbps=0, esb_kbps=None)
    sys_.ble.config.advertising_interval = adv_interval
    sim = sys_.sim
    esb_t = sys_.esb.wake(coex=True)
    tl = sys_.ble.wake(coex=True)
    t_stop = tl.t_discovery_done + C.BLE_TAKEOVER_US
    sim.schedule(t_stop, sys_.esb.stop)
    sim.run_until(t_stop + 1)
    first = sys_.esb.t_first_packet if sys_.esb.t_first_packet is not None else esb_t
    return WakeupTimeline(first, tl.t_connected, tl.t_discovery_done, t_stop)


# -- ESB forward / BLE reverse split ------------------------------------------------

@dataclass(frozen=True)
class SplitResult:
    fwd_actual: float
    rev_actual: float
    rev_sdus: tuple


SPLIT_TOLERANCE = 0.05


def run_split(fwd_kbps: float | None, rev_kbps: float | None, ci: int = 100_000, seed: int = 0,
              duration_us: int = 2_000_000) -> SplitResult:
    """ESB carries the forward stream, BLE (central -> peripheral) the reverse one."""
    sys_ = CoexSystem(seed, ci, ble_fwd_kbps=0, ble_rev_kbps=rev_kbps, esb_kbps=fwd_kbps,
                      ble_priority="rev")
    sys_.start()
    # skip one interval so delivery lag does not read as lost throughput
    sys_.run(ci + duration_us)
    t0, t1 = ci, ci + duration_us
    return SplitResult(
        sys_.esb.throughput_kbps(t0, t1),
        sys_.ble.throughput_kbps("rev", t0, t1),
        tuple(sys_.ble.rev.delivered_sdus),
    )


def split_bidirectional(fwd_demand: float, rev_demand: float, ci: int = 100_000, seed: int = 0,
                        duration_us: int = 2_000_000) -> SplitResult:
    """Serve (fwd, rev) demand; raises ``Infeasible`` outside the frontier."""
    if fwd_demand < 0 or rev_demand < 0:
        raise ValueError("demands must be non-negative")
    res = run_split(fwd_demand, rev_demand, ci, seed, duration_us)
    if (res.fwd_actual < fwd_demand * (1 - SPLIT_TOLERANCE)
            or res.rev_actual < rev_demand * (1 - SPLIT_TOLERANCE)):
        raise Infeasible(
            f"({fwd_demand}, {rev_demand}) kbps lies outside the achievable region",
            nearest_feasible=(res.fwd_actual, res.rev_actual),
        )
    return res


def sequence_gaps(seqs) -> int:
    """Number of sequence numbers missing below the highest one delivered."""
    if not seqs:
        return 0
    return max(seqs) + 1 - len(set(seqs))
