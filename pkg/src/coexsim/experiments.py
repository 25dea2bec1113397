"""Named reproductions of the measurement campaign.

Every function returns a ``Report``: metrics with the reference value and
tolerance they are gated on, plus optional CSV traces.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import constants as C
from . import oracle
from .arbiter import ProtocolId
from .ble import BleConfig, BlePhy, warmup
from .channel import ChannelState
from .coex import (
    CoexSystem,
    Direction,
    configure_coexistence,
    coexistence_point,
    handover_latencies,
    hybrid_wakeup,
    run_split,
    sequence_gaps,
)
from .esb import EsbConfig, EsbPhy, audit_ack_loss, warmup_esb


@dataclass
class Metric:
    name: str
    value: float
    target: float | None = None
    rel_tol: float | None = None
    abs_tol: float | None = None
    unit: str = ""
    n: int | None = None
    sd: float | None = None

    @property
    def delta(self) -> float | None:
        return None if self.target is None else self.value - self.target

    @property
    def ok(self) -> bool:
        if self.target is None:
            return True
        if self.abs_tol is not None:
            return abs(self.value - self.target) <= self.abs_tol + 1e-12
        if self.rel_tol is not None:
            return abs(self.value - self.target) <= self.rel_tol * abs(self.target) + 1e-12
        return self.value == self.target


@dataclass
class Report:
    experiment: str
    metrics: list[Metric] = field(default_factory=list)
    traces: dict[str, str] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def add(self, *args, **kw) -> Metric:
        m = Metric(*args, **kw)
        self.metrics.append(m)
        return m

    def __getitem__(self, name: str) -> Metric:
        for m in self.metrics:
            if m.name == name:
                return m
        raise KeyError(name)

    @property
    def ok(self) -> bool:
        return all(m.ok for m in self.metrics)

    def to_dict(self) -> dict:
        out = {"experiment": self.experiment, "ok": self.ok, "metrics": []}
        for m in self.metrics:
            d = asdict(m)
            d["delta"] = m.delta
            d["ok"] = m.ok
            out["metrics"].append(d)
        out.update(self.extra)
        return out

    def table(self) -> str:
        rows = [f"{'metric':34} {'value':>12} {'target':>12} {'delta':>10}  ok"]
        for m in self.metrics:
            tgt = "" if m.target is None else f"{m.target:12.4g}"
            dl = "" if m.delta is None else f"{m.delta:10.3g}"
            sd = "" if m.sd is None else f"  (sd {m.sd:.4g}, n={m.n})"
            rows.append(f"{m.name:34} {m.value:12.4g} {tgt:>12} {dl:>10}  {'yes' if m.ok else 'NO'}{sd}")
        return "\n".join(rows)


def _stats(x) -> tuple[float, float, int]:
    a = np.asarray(x, dtype=float)
    return float(a.mean()), float(a.std(ddof=1)) if len(a) > 1 else 0.0, len(a)


# -- single packet ---------------------------------------------------------------------

def single_packet(proto: str = "both", seed: int = 0) -> Report:
    rep = Report("single-packet")
    if proto in ("ble", "both"):
        s = CoexSystem(seed, 7_500, esb=False, ble_fwd_kbps=None)
        s.ble.fwd.source.limit = 1
        s.start()
        s.run(7_500)
        slot = s.arbiter.log[0]
        tr = s.power_trace(0, 7_500)
        rep.add("ble_duration_us", slot.duration, 1_420, rel_tol=0.05, unit="us")
        rep.add("ble_energy_uj", tr.integrate(slot.start, slot.end), 44.75, rel_tol=0.05, unit="uJ")
        rep.traces["ble_power.csv"] = tr.to_csv()
    if proto in ("esb", "both"):
        s = CoexSystem(seed, esb_config=EsbConfig(payload=244), ble=False, esb_kbps=None)
        s.esb.source.limit = 1
        s.start()
        s.run(2_000)
        t0, t1 = s.esb.log[0].attempts[0]
        tr = s.power_trace(0, 2_000)
        rep.add("esb_duration_us", t1 - t0, 860, rel_tol=0.05, unit="us")
        rep.add("esb_energy_uj", tr.integrate(t0, t1), 23.23, rel_tol=0.05, unit="uJ")
        rep.traces["esb_power.csv"] = tr.to_csv()
    return rep


# -- streaming power ---------------------------------------------------------------------

def ble_stream_point(kbps: float, ci: int = 7_500, dur: int = 1_000_000, seed: int = 0) -> tuple[float, float]:
    s = CoexSystem(seed, ci, esb=False, ble_fwd_kbps=kbps)
    s.start()
    s.run(ci + dur)
    return s.ble.throughput_kbps("fwd", ci, ci + dur), s.power_trace(ci, ci + dur).mean_power()


def esb_stream_point(kbps: float, dur: int = 1_000_000, seed: int = 0) -> tuple[float, float]:
    settle = 10_000
    s = CoexSystem(seed, ble=False, esb_kbps=kbps)
    s.start()
    s.run(settle + dur)
    return s.esb.throughput_kbps(settle, settle + dur), s.power_trace(settle, settle + dur).mean_power()


def streaming_power(seed: int = 0) -> Report:
    rep = Report("stream")
    ble = np.array([ble_stream_point(r, seed=seed) for r in range(100, 1_001, 100)])
    esb = np.array([esb_stream_point(r, seed=seed) for r in range(100, 2_201, 300)])
    bs = np.polyfit(ble[:, 0], ble[:, 1], 1)[0]
    es = np.polyfit(esb[:, 0], esb[:, 1], 1)[0]
    rep.add("ble_slope_mw_per_kbps", bs, 0.017, rel_tol=0.10)
    rep.add("esb_slope_mw_per_kbps", es, 0.013, rel_tol=0.10)
    rep.add("ble_idle_mw", ble_stream_point(0, seed=seed)[1], 0.99, rel_tol=0.05, unit="mW")
    rep.add("esb_idle_mw", esb_stream_point(0, seed=seed)[1], 0.55, rel_tol=0.05, unit="mW")
    ratio = esb_stream_point(1_000, seed=seed)[1] / ble_stream_point(1_000, seed=seed)[1]
    rep.add("esb_over_ble_power_at_1000kbps", ratio, 0.75, abs_tol=0.05)
    rep.extra["ble_points"] = ble.tolist()
    rep.extra["esb_points"] = esb.tolist()
    return rep


# -- sleep-wake ----------------------------------------------------------------------------

def sleepwake(runs: int = 1_000, seed: int = 0, adv_interval: int = C.BLE_ADV_INTERVAL_US) -> Report:
    """Warm-up from sleep to the first application packet, over ``runs`` wake-ups."""
    rep = Report("sleepwake")
    rng = np.random.default_rng(seed)
    cfg = BleConfig(connection_interval=7_500, advertising_interval=adv_interval)
    ble = [warmup(cfg, rng) for _ in range(runs)]
    bt, bsd, n = _stats([w.total / 1e3 for w in ble])
    be, besd, _ = _stats([w.energy_uj() for w in ble])
    esb_t = np.array([warmup_esb(rng) for _ in range(runs)])
    et, esd, _ = _stats(esb_t / 1e3)
    ee, eesd, _ = _stats(esb_t * C.INIT_MW / 1e3)
    rep.add("ble_warmup_ms", bt, 218.96, rel_tol=0.05, unit="ms", n=n, sd=bsd)
    rep.add("ble_warmup_uj", be, 1_226.55, rel_tol=0.05, unit="uJ", n=n, sd=besd)
    rep.add("esb_warmup_ms", et, 12.51, rel_tol=0.05, unit="ms", n=n, sd=esd)
    rep.add("esb_warmup_uj", ee, 61.71, rel_tol=0.05, unit="uJ", n=n, sd=eesd)
    rep.add("energy_ratio_esb_over_ble", ee / be, 1 / 20, rel_tol=0.10)
    return rep


# -- ESB ACK capacity vs the closed form ---------------------------------------------------

def esb_saturation(ack_payload: int, dur: int = 1_000_000, seed: int = 0) -> tuple[float, float]:
    s = CoexSystem(seed, ble=False, esb_config=EsbConfig(ack_payload=ack_payload), esb_kbps=None)
    s.start()
    s.run(dur)
    return s.esb.throughput_kbps(0, dur), s.esb.throughput_kbps(0, dur, reverse=True)


def esb_presaturation_ratio(ack_payload: int, kbps: float = 500, dur: int = 1_000_000, seed: int = 0) -> float:
    s = CoexSystem(seed, ble=False, esb_config=EsbConfig(ack_payload=ack_payload), esb_kbps=kbps)
    s.start()
    s.run(dur)
    return s.esb.throughput_kbps(0, dur, reverse=True) / s.esb.throughput_kbps(0, dur)


def oracle_report(seed: int = 0) -> Report:
    rep = Report("oracle")
    rows = []
    for m in (2, 64, 132, 200, 252):
        fwd, rev = esb_saturation(m, seed=seed)
        rep.add(f"sim_fmax_M{m}", fwd, oracle.f_max(m), rel_tol=0.05, unit="kbps")
        rep.add(f"sim_k_M{m}", esb_presaturation_ratio(m, seed=seed), oracle.k_of_m(m), rel_tol=0.05)
        rows.append((m, oracle.k_of_m(m), oracle.f_max(m), oracle.r_max(m), fwd, rev))
    fit = oracle.fit_overhead([(r[0], r[4]) for r in rows])
    rep.add("sim_fit_numerator", fit.numerator, oracle.FWD_NUMERATOR, rel_tol=0.01)
    rep.add("sim_fit_overhead", fit.overhead, oracle.OVERHEAD_BYTES, abs_tol=10)
    rep.add("fmax_err_M2", oracle.relative_error(oracle.f_max(2), 2_244), 0.0, abs_tol=0.003)
    rep.add("fmax_err_M244", oracle.relative_error(oracle.f_max(244), 1_364), 0.0, abs_tol=0.003)
    rep.add("k_err_M132", oracle.relative_error(oracle.k_of_m(132), 0.542, decimals=3), 0.0, abs_tol=0.033)
    lines = ["M,k,f_max_kbps,r_max_kbps,sim_fwd_kbps,sim_rev_kbps"]
    lines += [",".join(f"{v:.6g}" for v in r) for r in rows]
    rep.traces["oracle.csv"] = "\n".join(lines) + "\n"
    return rep


def oracle_table(ms=range(0, 253, 4)) -> str:
    lines = ["M,k,f_max_kbps,r_max_kbps"]
    for m in ms:
        lines.append(f"{m},{oracle.k_of_m(m):.6f},{oracle.f_max(m):.3f},{oracle.r_max(m):.3f}")
    return "\n".join(lines) + "\n"


# -- BLE bidirectional -------------------------------------------------------------------------

def ble_bidir_point(ci: int, fwd_kbps: float, dur: int = 2_000_000, seed: int = 0) -> tuple[float, float]:
    """Forward paced at ``fwd_kbps``, reverse saturated."""
    s = CoexSystem(seed, ci, esb=False, ble_fwd_kbps=fwd_kbps, ble_rev_kbps=None)
    s.start()
    s.run(ci + dur)
    return s.ble.throughput_kbps("fwd", ci, ci + dur), s.ble.throughput_kbps("rev", ci, ci + dur)


def ble_bidirectional(seed: int = 0) -> Report:
    rep = Report("bidir")
    p7 = np.array([ble_bidir_point(7_500, r, seed=seed) for r in range(0, 1_001, 100)])
    p100 = np.array([ble_bidir_point(100_000, r, seed=seed) for r in range(0, 1_301, 100)])
    rep.add("ci7.5_slope", np.polyfit(p7[:, 0], p7[:, 1], 1)[0], -1.016, abs_tol=0.05)
    rep.add("ci7.5_aggregate_kbps", p7.sum(axis=1).mean(), 1_100, rel_tol=0.10, unit="kbps")
    rep.add("ci100_fwd_max_kbps", ble_bidir_point(100_000, None, seed=seed)[0], 1_350, rel_tol=0.10, unit="kbps")
    rep.add("ci100_rev_max_kbps", p100[0, 1], 1_350, rel_tol=0.10, unit="kbps")
    rep.add("ci100_slope", np.polyfit(p100[:, 0], p100[:, 1], 1)[0], -0.91, abs_tol=0.05)
    rep.extra["ci7.5_points"] = p7.tolist()
    rep.extra["ci100_points"] = p100.tolist()
    return rep


# -- ACK loss ---------------------------------------------------------------------------------

ACK_LOSS_TARGETS = ((-80.0, 0.22), (-70.0, 0.07), (-60.0, 0.01), (-50.0, 0.0))


def ack_loss_run(rssi: float, transactions: int = 10_000, seed: int = 0) -> float:
    s = CoexSystem(seed, ble=False, esb_config=EsbConfig(ack_payload=4), esb_kbps=None,
                   channel=ChannelState.from_rssi(rssi, rssi))
    s.start()
    while len(s.esb.log) < transactions:
        s.run(100_000)
    audit = s.esb.audit
    # audit the first ``transactions`` exchanges exactly
    keep = {t.seq for t in s.esb.log[:transactions]}
    audit.expected_seqs &= keep
    audit.received_seqs &= keep
    return audit_ack_loss(audit)


def ack_loss(transactions: int = 10_000, seed: int = 0) -> Report:
    rep = Report("ack-loss")
    for rssi, target in ACK_LOSS_TARGETS:
        rep.add(f"ack_loss_at_{int(rssi)}dBm", ack_loss_run(rssi, transactions, seed), target, abs_tol=0.02,
                n=transactions)
    return rep


# -- coexistence -------------------------------------------------------------------------------

COEX_TARGETS = {7_500: (1_000, 1_000), 100_000: (None, 2_200), 1_000_000: (None, 2_300)}


def coexistence(seed: int = 0) -> Report:
    rep = Report("coexist")
    for ci, (ble_t, esb_t) in COEX_TARGETS.items():
        r = configure_coexistence(ci, seed)
        rep.add(f"ci{ci / 1000:g}ms_ble_max_kbps", r.ble_max, ble_t, rel_tol=0.10, unit="kbps")
        rep.add(f"ci{ci / 1000:g}ms_esb_max_kbps", r.esb_max_at_ble_zero, esb_t, rel_tol=0.10, unit="kbps")
    return rep


def power_vs_esb_share(total_kbps: float, shares, ci: int = 100_000, seed: int = 0) -> list[float]:
    """Mean power while a fixed total throughput is split between ESB and BLE."""
    out = []
    for sh in shares:
        esb = total_kbps * sh
        pt = coexistence_point(ci, total_kbps - esb, esb, seed)
        out.append(pt["power_mw"])
    return out


# -- handover ------------------------------------------------------------------------------------

HANDOVER_CASES = {
    ("concurrent", "ble-adjust"): (Direction.BLE_ADJUST, 35.51),
    ("concurrent", "esb-adjust"): (Direction.ESB_ADJUST, 18.07),
    ("standby", "to-esb"): (Direction.TO_ESB, 18.64),
    ("standby", "to-ble"): (Direction.TO_BLE, 49.47),
    ("shutdown", "to-esb"): (Direction.TO_ESB, 18.30),
    ("shutdown", "to-ble"): (Direction.TO_BLE, 309.52),
}


def handover(scenario: str | None = None, direction: str | None = None, runs: int = 500, seed: int = 0,
             ci: int = 100_000) -> Report:
    rep = Report("handover")
    rows = ["scenario,direction,run,latency_us"]
    for (sc, dname), (d, target) in HANDOVER_CASES.items():
        if scenario not in (None, sc) or direction not in (None, dname):
            continue
        lat = handover_latencies(d, sc, runs, seed, ci)
        mean, sd, n = _stats(lat / 1e3)
        rep.add(f"{sc}_{dname}_ms", mean, target, rel_tol=0.10, unit="ms", n=n, sd=sd)
        if (sc, dname) == ("standby", "to-ble"):
            # independent check: a uniform wait for the next anchor
            rep.add("standby_to-ble_vs_uniform_mean_ms", mean, ci / 2e3, rel_tol=0.10, unit="ms")
            rep.add("standby_to-ble_vs_uniform_sd_ms", sd, ci / 1e3 / math.sqrt(12), rel_tol=0.10, unit="ms")
        rows += [f"{sc},{dname},{i},{v}" for i, v in enumerate(lat.tolist())]
    rep.traces["handover_latencies.csv"] = "\n".join(rows) + "\n"
    return rep


# -- hybrid wake-up ----------------------------------------------------------------------------------

def wakeup_hybrid(runs: int = 200, seed: int = 0, adv_interval: int = 100_000) -> Report:
    rep = Report("wakeup-hybrid")
    seeds = np.random.default_rng(seed).integers(0, 2**63 - 1, size=runs)
    tls = [hybrid_wakeup(adv_interval, int(s)) for s in seeds]
    for name, target in (("t_esb_first_pkt", 28.9), ("t_ble_connected", 418.3), ("t_esb_stop", 555.1)):
        m, sd, n = _stats([getattr(t, name) / 1e3 for t in tls])
        rep.add(f"{name}_ms", m, target, rel_tol=0.10, unit="ms", n=n, sd=sd)
    rep.add("gap_free_runs", sum(t.gap_free() for t in tls), runs, abs_tol=0)
    esb_alone = float(np.mean([warmup_esb(np.random.default_rng(int(s))) for s in seeds])) / 1e3
    rep.add("esb_bridge_delay_over_standalone_ms", rep["t_esb_first_pkt_ms"].value - esb_alone)
    return rep


# -- ESB forward / BLE reverse -------------------------------------------------------------------------

def split_frontier(seed: int = 0, rev_rates=range(0, 1_351, 150)) -> Report:
    rep = Report("split-bidir")
    pts = []
    gaps = 0
    for rv in rev_rates:
        r = run_split(None, rv if rv else 0, seed=seed)
        pts.append((r.fwd_actual, r.rev_actual))
        gaps += sequence_gaps(r.rev_sdus)
    pts = np.array(pts)
    rev_max = run_split(0, None, seed=seed).rev_actual
    rep.add("fwd_max_kbps", pts[0, 0], 2_200, rel_tol=0.10, unit="kbps")
    rep.add("rev_max_kbps", rev_max, 1_350, rel_tol=0.10, unit="kbps")
    inside = pts[(pts[:, 0] > 0) | (pts[:, 1] == 0)]
    rep.add("slope", np.polyfit(inside[:, 0], inside[:, 1], 1)[0], -0.61, abs_tol=0.08)
    rep.add("reverse_sequence_gaps", gaps, 0, abs_tol=0)
    rep.extra["points"] = pts.tolist()
    return rep


# -- TXP / PHY runtime control ------------------------------------------------------------------------

PHY_PHASES = (
    ("ble_coded_esb_1m", ProtocolId.BLE, BlePhy.CODED_S8),
    ("ble_1m_esb_1m", ProtocolId.BLE, BlePhy.PHY_1M),
    ("ble_2m_esb_1m", ProtocolId.BLE, BlePhy.PHY_2M),
    ("ble_2m_esb_2m", ProtocolId.ESB, EsbPhy.PHY_2M),
    ("ble_2m_esb_4m", ProtocolId.ESB, EsbPhy.PHY_4M),
)


def txp_phy(seed: int = 0, phase_us: int = 4_000_000, measure_us: int = 2_000_000) -> Report:
    rep = Report("txp-phy")
    chan = ChannelState(C.BLE_LINK_ATTENUATION_DB, C.ESB_LINK_ATTENUATION_DB)
    s = CoexSystem(seed, 100_000, ble_config=BleConfig(phy=BlePhy.CODED_S8), esb_config=EsbConfig(phy=EsbPhy.PHY_1M),
                   ble_fwd_kbps=200, esb_kbps=None, channel=chan)

    # TXP steps: RSSI follows exactly, the other protocol does not move
    rssi_rows = ["step,ble_txp,esb_txp,ble_rssi,esb_rssi"]
    steps = [(ProtocolId.BLE, v) for v in (8, -2, -12, 8)] + [(ProtocolId.ESB, v) for v in (8, -2, -12, 8)]
    prev = None
    exact = orthogonal = True
    for i, (proto, txp) in enumerate(steps):
        s.set_txp(proto, txp)
        cur = (s.rssi(ProtocolId.BLE), s.rssi(ProtocolId.ESB))
        rssi_rows.append(f"{i},{s.ble.config.txp},{s.esb.config.txp},{cur[0]},{cur[1]}")
        if prev is not None:
            mine, other = (0, 1) if proto is ProtocolId.BLE else (1, 0)
            if cur[other] != prev[other]:
                orthogonal = False
            if abs(abs(cur[mine] - prev[mine]) - 10) > 1e-12 and cur[mine] != prev[mine] and abs(cur[mine] - prev[mine]) != 20:
                exact = False
        prev = cur
    rep.add("ble_rssi_at_8dBm", s.channel.ble_rssi(8), -33, abs_tol=0)
    rep.add("esb_rssi_at_8dBm", s.channel.esb_rssi(8), -31, abs_tol=0)
    rep.add("rssi_steps_exact", float(exact), 1.0, abs_tol=0)
    rep.add("rssi_cross_protocol_identical", float(orthogonal), 1.0, abs_tol=0)
    rep.traces["rssi.csv"] = "\n".join(rssi_rows) + "\n"

    # PHY sequence within one continuous run
    s.start()
    targets = {"ble_coded_esb_1m": (50, 0), "ble_1m_esb_1m": (200, 500), "ble_2m_esb_2m": (200, 1_200),
               "ble_2m_esb_4m": (200, 1_800)}
    tp_rows = ["second,ble_kbps,esb_kbps,ble_phy,esb_phy"]
    per_phase_ble = {}
    for name, proto, phy in PHY_PHASES:
        s.set_phy(proto, phy)
        t0 = s.sim.now()
        s.run(phase_us)
        a, b = t0 + phase_us - measure_us, t0 + phase_us
        ble, esb = s.ble.throughput_kbps("fwd", a, b), s.esb.throughput_kbps(a, b)
        sec = [s.ble.throughput_kbps("fwd", a + k * 1_000_000, a + (k + 1) * 1_000_000)
               for k in range(measure_us // 1_000_000)]
        per_phase_ble[name] = sec
        for k in range(phase_us // 1_000_000):
            w0 = t0 + k * 1_000_000
            tp_rows.append(f"{w0 // 1_000_000},{s.ble.throughput_kbps('fwd', w0, w0 + 1_000_000):.3f},"
                           f"{s.esb.throughput_kbps(w0, w0 + 1_000_000):.3f},{s.ble.config.phy.value},"
                           f"{s.esb.config.phy.value}")
        if name in targets:
            bt, et = targets[name]
            rep.add(f"{name}_ble_kbps", ble, bt, rel_tol=0.15, unit="kbps")
            if et == 0:
                rep.add(f"{name}_esb_kbps", esb, 0, abs_tol=0.15 * 50, unit="kbps")
            else:
                rep.add(f"{name}_esb_kbps", esb, et, rel_tol=0.15, unit="kbps")
        else:
            rep.add(f"{name}_esb_kbps", esb, unit="kbps")
    # BLE per-second throughput across the ESB PHY changes
    ref = per_phase_ble["ble_2m_esb_1m"]
    worst = max(abs(v - r) / r for name in ("ble_2m_esb_2m", "ble_2m_esb_4m")
                for v, r in zip(per_phase_ble[name], ref))
    rep.add("ble_change_under_esb_phy", worst, 0.0, abs_tol=0.02)
    rep.traces["throughput.csv"] = "\n".join(tp_rows) + "\n"
    return rep
