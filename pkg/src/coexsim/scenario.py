"""Scenario files: a JSON document validated against ``SCHEMA`` before any
simulation starts, with unit-suffixed durations and defaults filled in."""

from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from . import constants as C
from .arbiter import ProtocolId
from .ble import BleConfig, BlePhy
from .channel import ChannelState
from .coex import (
    Activity,
    CoexMode,
    CoexSystem,
    Direction,
    Disposition,
    HandoverController,
    validate_interval,
)
from .errors import ParseError, SchemaViolation
from .esb import EsbConfig, EsbPhy

_DURATION = {"type": ["integer", "string"]}
_RATE = {"type": ["number", "string", "null"]}
_TXP = {"type": "number", "minimum": -40, "maximum": 8}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["name"],
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "seed": {"type": "integer", "minimum": 0},
        "horizon": _DURATION,
        "ble": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "enabled": {"type": "boolean"},
                "ci": _DURATION,
                "advertising_interval": _DURATION,
                "scan_interval": _DURATION,
                "phy": {"enum": [p.value for p in BlePhy]},
                "txp": _TXP,
                "payload": {"type": "integer", "minimum": 1, "maximum": C.BLE_MAX_PAYLOAD},
                "fwd_kbps": _RATE,
                "rev_kbps": _RATE,
            },
        },
        "esb": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "enabled": {"type": "boolean"},
                "phy": {"enum": [p.value for p in EsbPhy]},
                "txp": _TXP,
                "payload": {"type": "integer", "minimum": 1, "maximum": C.ESB_MAX_PAYLOAD},
                "ack_payload": {"type": "integer", "minimum": 0, "maximum": C.ESB_MAX_PAYLOAD},
                "retransmit_delay": _DURATION,
                "max_retries": {"type": "integer", "minimum": 0, "maximum": 15},
                "retry_on_ack_loss": {"type": "boolean"},
                "kbps": _RATE,
            },
        },
        "channel": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "ble_attenuation_db": {"type": "number", "minimum": 0},
                "esb_attenuation_db": {"type": "number", "minimum": 0},
                "rssi_sweep": {"type": "array", "items": {"type": "number"}, "minItems": 1},
            },
        },
        "mode": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "activity": {"enum": [a.value for a in Activity]},
                "inactive_disposition": {"enum": [d.value for d in Disposition]},
            },
        },
        "commands": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["at", "command"],
                "properties": {
                    "at": _DURATION,
                    "command": {"enum": ["set_txp", "set_phy", "handover", "demand"]},
                    "args": {"type": "object"},
                },
            },
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "trace": {"type": "boolean"},
                "slots": {"type": "boolean"},
                "report": {"type": "boolean"},
            },
        },
    },
}

DEFAULTS = {
    "seed": 0,
    "horizon": "2s",
    "ble": {"enabled": True, "ci": "100ms", "advertising_interval": "20ms", "scan_interval": "2.5ms",
            "phy": "2m", "txp": 8, "payload": C.BLE_MAX_PAYLOAD, "fwd_kbps": 0, "rev_kbps": 0},
    "esb": {"enabled": True, "phy": "4m", "txp": 8, "payload": C.ESB_MAX_PAYLOAD, "ack_payload": 0,
            "retransmit_delay": "600us", "max_retries": C.ESB_MAX_RETRIES, "retry_on_ack_loss": False,
            "kbps": "saturate"},
    "channel": {"ble_attenuation_db": 0.0, "esb_attenuation_db": 0.0},
    "mode": {"activity": "concurrent"},
    "commands": [],
    "outputs": {"trace": False, "slots": False, "report": True},
}

_UNITS = {"us": 1, "ms": 1_000, "s": 1_000_000}
_DUR_RE = re.compile(r"^\s*([0-9]*\.?[0-9]+)\s*(us|ms|s)\s*$")


def parse_duration(value, field_name: str = "duration") -> int:
    """Integer microseconds from an int (already us) or a string like "7.5ms"."""
    if isinstance(value, bool):
        raise SchemaViolation(f"{field_name}: expected a duration", field_name, "duration")
    if isinstance(value, int):
        if value < 0:
            raise SchemaViolation(f"{field_name}: negative duration", field_name, "minimum")
        return value
    if isinstance(value, str):
        m = _DUR_RE.match(value)
        if m:
            us = float(m.group(1)) * _UNITS[m.group(2)]
            if abs(us - round(us)) > 1e-6:
                raise SchemaViolation(f"{field_name}: {value!r} is not a whole number of us", field_name, "resolution")
            return int(round(us))
    raise SchemaViolation(f"{field_name}: cannot read {value!r} as a duration (use us/ms/s)", field_name, "duration")


def parse_rate(value, field_name: str = "rate") -> float | None:
    """kbps, with "saturate" (or null) for an unlimited source."""
    if value is None or value == "saturate":
        return None
    if isinstance(value, (int, float)) and not isinstance(value, bool) and value >= 0:
        return float(value)
    raise SchemaViolation(f"{field_name}: expected kbps >= 0 or \"saturate\"", field_name, "rate")


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class Command:
    at_us: int
    command: str
    args: dict


@dataclass
class Scenario:
    name: str
    seed: int
    horizon_us: int
    ble: BleConfig
    esb: EsbConfig
    ble_enabled: bool
    esb_enabled: bool
    ble_fwd_kbps: float | None
    ble_rev_kbps: float | None
    esb_kbps: float | None
    channel: ChannelState
    rssi_sweep: list[float] | None
    mode: CoexMode
    commands: list[Command] = field(default_factory=list)
    outputs: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)


def validate(doc: dict) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if not errors:
        return
    e = errors[0]
    if e.validator == "additionalProperties":
        extra = sorted(set(e.instance) - set(e.schema.get("properties", {})))
        path = ".".join(str(p) for p in list(e.absolute_path) + extra[:1])
        raise SchemaViolation(f"unknown field {path!r}", path, "additionalProperties")
    path = ".".join(str(p) for p in e.absolute_path) or "<root>"
    raise SchemaViolation(f"{path}: {e.message}", path, str(e.validator))


def from_dict(doc: dict) -> Scenario:
    validate(doc)
    d = _merge(DEFAULTS, doc)
    b, e, ch, mode = d["ble"], d["esb"], d["channel"], d["mode"]
    ci = parse_duration(b["ci"], "ble.ci")
    validate_interval(ci)
    ble = BleConfig(
        connection_interval=ci,
        advertising_interval=parse_duration(b["advertising_interval"], "ble.advertising_interval"),
        scan_interval=parse_duration(b["scan_interval"], "ble.scan_interval"),
        phy=BlePhy(b["phy"]),
        txp=float(b["txp"]),
        payload=b["payload"],
    )
    esb = EsbConfig(
        phy=EsbPhy(e["phy"]),
        txp=float(e["txp"]),
        payload=e["payload"],
        ack_payload=e["ack_payload"],
        retransmit_delay=parse_duration(e["retransmit_delay"], "esb.retransmit_delay"),
        max_retries=e["max_retries"],
        retry_on_ack_loss=e["retry_on_ack_loss"],
    )
    activity = Activity(mode["activity"])
    disp = mode.get("inactive_disposition")
    if activity is Activity.CONCURRENT and disp is not None:
        raise SchemaViolation("mode.inactive_disposition only applies to single-protocol modes",
                              "mode.inactive_disposition", "dependency")
    if activity is not Activity.CONCURRENT and disp is None:
        disp = "standby"
    commands = [Command(parse_duration(c["at"], f"commands.{i}.at"), c["command"], c.get("args", {}))
                for i, c in enumerate(d["commands"])]
    if any(b2.at_us < a.at_us for a, b2 in zip(commands, commands[1:])):
        raise SchemaViolation("commands must be ordered by time", "commands", "ordering")
    return Scenario(
        name=d["name"],
        seed=d["seed"],
        horizon_us=parse_duration(d["horizon"], "horizon"),
        ble=ble,
        esb=esb,
        ble_enabled=b["enabled"],
        esb_enabled=e["enabled"],
        ble_fwd_kbps=parse_rate(b["fwd_kbps"], "ble.fwd_kbps"),
        ble_rev_kbps=parse_rate(b["rev_kbps"], "ble.rev_kbps"),
        esb_kbps=parse_rate(e["kbps"], "esb.kbps"),
        channel=ChannelState(ch["ble_attenuation_db"], ch["esb_attenuation_db"]),
        rssi_sweep=ch.get("rssi_sweep"),
        mode=CoexMode(activity, None if disp is None else Disposition(disp)),
        commands=commands,
        outputs=d["outputs"],
        raw=d,
    )


def loads(text: str) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", line=e.lineno) from None
    if not isinstance(doc, dict):
        raise SchemaViolation("scenario must be a JSON object", "<root>", "type")
    return from_dict(doc)


def load_scenario(path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ParseError(f"cannot read {p}: {e.strerror}") from None
    return loads(text)


# -- running a scenario timeline ------------------------------------------------------

def build_system(sc: Scenario) -> CoexSystem:
    return CoexSystem(
        sc.seed, sc.ble.connection_interval, ble=sc.ble_enabled, esb=sc.esb_enabled,
        ble_config=sc.ble, esb_config=sc.esb,
        ble_fwd_kbps=sc.ble_fwd_kbps, ble_rev_kbps=sc.ble_rev_kbps, esb_kbps=sc.esb_kbps,
        channel=sc.channel,
    )


def _proto(name: str) -> ProtocolId:
    try:
        return ProtocolId(str(name).lower())
    except ValueError:
        raise SchemaViolation(f"unknown protocol {name!r}", "commands.args.proto", "enum") from None


def run_scenario(sc: Scenario) -> dict:
    """Run the timeline: both links start at t = 0, commands fire at their times."""
    s = build_system(sc)
    s.start()
    ctl = HandoverController(s, sc.mode) if (s.ble is not None and s.esb is not None) else None
    if ctl is not None and sc.mode.activity is not Activity.CONCURRENT:
        from .ble import BleState

        if sc.mode.activity is Activity.BLE_ONLY:
            s.esb.stop()
        else:
            s.ble.transition(BleState.STANDBY if sc.mode.inactive_disposition is Disposition.STANDBY
                             else BleState.SHUTDOWN)
            if sc.mode.inactive_disposition is Disposition.SHUTDOWN:
                s.ble.stop_events()

    def make(cmd: Command):
        a = cmd.args

        def fire():
            if cmd.command == "set_txp":
                s.set_txp(_proto(a["proto"]), float(a["txp"]))
            elif cmd.command == "set_phy":
                s.set_phy(_proto(a["proto"]), a["phy"])
            elif cmd.command == "handover":
                if ctl is None:
                    raise SchemaViolation("handover needs both protocols", "commands", "dependency")
                ctl.handover(Direction(str(a["direction"]).replace("-", "_")))
            elif cmd.command == "demand":
                now = s.sim.now()
                if "ble_kbps" in a and s.ble is not None and s.ble.fwd.source is not None:
                    s.ble.fwd.source.set_rate(parse_rate(a["ble_kbps"]), now)
                if "esb_kbps" in a and s.esb is not None:
                    s.esb.source.set_rate(parse_rate(a["esb_kbps"]), now)
                    s.esb.kick()
        return fire

    for cmd in sc.commands:
        s.sim.schedule(cmd.at_us, make(cmd))
    s.run(sc.horizon_us)
    t1 = sc.horizon_us
    out = {"name": sc.name, "seed": sc.seed, "horizon_us": t1}
    if s.ble is not None:
        out["ble_fwd_kbps"] = s.ble.throughput_kbps("fwd", 0, t1)
        out["ble_rev_kbps"] = s.ble.throughput_kbps("rev", 0, t1)
    if s.esb is not None:
        out["esb_fwd_kbps"] = s.esb.throughput_kbps(0, t1)
        out["esb_rev_kbps"] = s.esb.throughput_kbps(0, t1, reverse=True)
        if s.esb.audit.expected_seqs:
            out["esb_ack_loss"] = s.esb.audit.loss_rate
    tr = s.power_trace(0, t1)
    out["energy_uj"] = tr.integrate(0, t1)
    out["mean_power_mw"] = tr.mean_power()
    out["utilization"] = s.arbiter.utilization(0, t1)
    if ctl is not None:
        out["handovers"] = [
            {"command_us": r.command_time, "effective_us": r.effective_time, "direction": r.direction.value,
             "latency_us": r.latency}
            for r in ctl.records
        ]
    return {"summary": out, "system": s}
