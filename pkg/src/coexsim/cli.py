"""``coexsim`` command line.

    coexsim <subcommand> [--scenario FILE] [--seed N] [--json] [--check] [--out DIR]

Exit codes: 0 ok, 2 bad scenario/arguments, 3 simulation error, 4 a metric
missed its reference value under ``--check``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import experiments as E
from .calibration import calibrate, provenance_table
from .errors import CoexSimError, ParseError, SchemaViolation
from .scenario import load_scenario, parse_duration, run_scenario

EXIT_OK, EXIT_SCHEMA, EXIT_SIM, EXIT_CHECK = 0, 2, 3, 4
HANDOVER_SCENARIOS = ("concurrent", "standby", "shutdown")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail(EXIT_SCHEMA, "usage", message)


def _fail(code: int, kind: str, message: str, **extra):
    print(json.dumps({"error": kind, "message": message, **extra}), file=sys.stderr)
    raise SystemExit(code)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="scenario JSON file")
    common.add_argument("--seed", type=int, help="RNG seed (overrides the scenario)")
    common.add_argument("--json", action="store_true", help="print the machine-readable report")
    common.add_argument("--check", action="store_true", help="exit 4 if any metric misses its reference")
    common.add_argument("--out", help="output directory (default: $COEXSIM_OUT)")

    p = _Parser(prog="coexsim", description="BLE/ESB single-radio coexistence simulator")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    sp = sub.add_parser("single-packet", parents=[common], help="time and energy of one 244 B packet")
    sp.add_argument("--proto", choices=["ble", "esb", "both"], default="both")
    sub.add_parser("stream", parents=[common], help="power versus streaming throughput")
    sw = sub.add_parser("sleepwake", parents=[common], help="warm-up from sleep to first packet")
    sw.add_argument("--proto", choices=["ble", "esb", "both"], default="both")
    sw.add_argument("--period", default="10s", help="wake-up period (us/ms/s)")
    sw.add_argument("--runs", type=int, default=1_000)
    sub.add_parser("bidir", parents=[common], help="BLE forward/reverse trade-off")
    sub.add_parser("coexist", parents=[common], help="BLE/ESB operating range per connection interval")
    ho = sub.add_parser("handover", parents=[common], help="handover latency")
    ho.add_argument("--direction", choices=["ble-adjust", "esb-adjust", "to-esb", "to-ble"])
    ho.add_argument("--runs", type=int, default=500)
    wk = sub.add_parser("wakeup-hybrid", parents=[common], help="ESB-bridged wake-up")
    wk.add_argument("--runs", type=int, default=1_000)
    wk.add_argument("--adv-interval", default="100ms")
    sub.add_parser("split", parents=[common], help="ESB forward / BLE reverse frontier")
    sub.add_parser("txp-phy", parents=[common], help="per-protocol TXP and PHY control")
    al = sub.add_parser("ack-loss", parents=[common], help="ACK back-channel loss versus RSSI")
    al.add_argument("--transactions", type=int, default=10_000)
    sub.add_parser("oracle", parents=[common], help="closed-form ACK capacity sweep (CSV)")
    sub.add_parser("calibrate", parents=[common], help="re-derive calibrated constants")
    sub.add_parser("run", parents=[common], help="run a scenario file's timeline")
    return p


def _out_dir(args, name: str, seed: int) -> Path | None:
    base = args.out or os.environ.get("COEXSIM_OUT")
    if not base:
        return None
    d = Path(base) / f"{name}-seed{seed}"
    d.mkdir(parents=True, exist_ok=True)
    return d


def _emit(args, report: E.Report, seed: int) -> int:
    d = _out_dir(args, report.experiment, seed)
    payload = report.to_dict()
    payload["seed"] = seed
    text = json.dumps(payload, indent=2, sort_keys=True, default=float)
    if d is not None:
        (d / "report.json").write_text(text + "\n")
        for fname, content in report.traces.items():
            (d / fname).write_text(content)
    if args.json:
        print(text)
    else:
        print(f"# {report.experiment} (seed {seed})")
        print(report.table())
    if args.check and not report.ok:
        return EXIT_CHECK
    return EXIT_OK


def _dispatch(args) -> int:
    scenario = None
    handover_case = None
    if args.scenario:
        if args.cmd == "handover" and args.scenario in HANDOVER_SCENARIOS:
            handover_case = args.scenario
        else:
            scenario = load_scenario(args.scenario)
    seed = args.seed if args.seed is not None else (scenario.seed if scenario else 0)
    ci = scenario.ble.connection_interval if scenario else 100_000

    if args.cmd == "single-packet":
        return _emit(args, E.single_packet(args.proto, seed), seed)
    if args.cmd == "stream":
        return _emit(args, E.streaming_power(seed), seed)
    if args.cmd == "sleepwake":
        period = parse_duration(args.period, "--period")
        rep = E.sleepwake(args.runs, seed)
        if args.proto != "both":
            rep.metrics = [m for m in rep.metrics if m.name.startswith(args.proto)]
        rep.extra["period_us"] = period
        return _emit(args, rep, seed)
    if args.cmd == "bidir":
        return _emit(args, E.ble_bidirectional(seed), seed)
    if args.cmd == "coexist":
        return _emit(args, E.coexistence(seed), seed)
    if args.cmd == "handover":
        return _emit(args, E.handover(handover_case, args.direction, args.runs, seed, ci), seed)
    if args.cmd == "wakeup-hybrid":
        adv = parse_duration(args.adv_interval, "--adv-interval")
        return _emit(args, E.wakeup_hybrid(args.runs, seed, adv), seed)
    if args.cmd == "split":
        return _emit(args, E.split_frontier(seed), seed)
    if args.cmd == "txp-phy":
        return _emit(args, E.txp_phy(seed), seed)
    if args.cmd == "ack-loss":
        return _emit(args, E.ack_loss(args.transactions, seed), seed)
    if args.cmd == "oracle":
        rep = E.oracle_report(seed)
        rep.traces["oracle_sweep.csv"] = E.oracle_table()
        if args.json or args.check or args.out or os.environ.get("COEXSIM_OUT"):
            code = _emit(args, rep, seed)
            if args.json:
                return code
        else:
            code = EXIT_CHECK if (args.check and not rep.ok) else EXIT_OK
        print(E.oracle_table(), end="")
        return code
    if args.cmd == "calibrate":
        rows = calibrate()
        table = provenance_table(rows)
        d = _out_dir(args, "calibrate", seed)
        if d is not None:
            (d / "calibration.csv").write_text(table)
        if args.json:
            print(json.dumps([r.__dict__ | {"rel_diff": r.rel_diff} for r in rows], indent=2))
        else:
            print(table, end="")
        return EXIT_CHECK if args.check and any(r.rel_diff > 1e-3 for r in rows) else EXIT_OK
    if args.cmd == "run":
        if scenario is None:
            _fail(EXIT_SCHEMA, "usage", "run needs --scenario FILE")
        if args.seed is not None:
            scenario.seed = args.seed
        res = run_scenario(scenario)
        summary, system = res["summary"], res["system"]
        d = _out_dir(args, scenario.name, scenario.seed)
        if d is not None:
            if scenario.outputs.get("report", True):
                (d / "report.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
            if scenario.outputs.get("trace"):
                (d / "power.csv").write_text(system.power_trace(0, scenario.horizon_us).to_csv())
            if scenario.outputs.get("slots"):
                rows = ["owner,start_us,end_us,outcome"] + [",".join(map(str, r)) for r in system.arbiter.slot_rows()]
                (d / "slots.csv").write_text("\n".join(rows) + "\n")
                if system.esb is not None:
                    tx = ["seq,first_attempt_us,done_us,outcome,retries,airtime_us"]
                    tx += [",".join(map(str, r)) for r in system.esb.transaction_rows()]
                    (d / "transactions.csv").write_text("\n".join(tx) + "\n")
            if summary.get("handovers"):
                hv = ["command_us,effective_us,direction,latency_us"]
                hv += [f"{h['command_us']},{h['effective_us']},{h['direction']},{h['latency_us']}"
                       for h in summary["handovers"]]
                (d / "handovers.csv").write_text("\n".join(hv) + "\n")
        print(json.dumps(summary, indent=2, sort_keys=True) if args.json else
              "\n".join(f"{k}: {v}" for k, v in summary.items()))
        return EXIT_OK
    raise AssertionError(args.cmd)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ParseError as e:
        _fail(EXIT_SCHEMA, "parse", str(e), line=e.line, field=getattr(e, "field", None))
    except SchemaViolation as e:
        _fail(EXIT_SCHEMA, "schema", str(e), field=e.field, constraint=e.constraint)
    except CoexSimError as e:
        _fail(EXIT_SIM, type(e).__name__, str(e))
    except (ValueError, KeyError) as e:
        _fail(EXIT_SIM, type(e).__name__, str(e))


if __name__ == "__main__":
    sys.exit(main())
