import numpy as np
import pytest

from coexsim import constants as C
from coexsim.arbiter import ProtocolId, RadioArbiter
from coexsim.channel import ChannelState
from coexsim.coex import CoexSystem
from coexsim.errors import EmptyAudit, PayloadTooLarge
from coexsim.esb import (
    AckAudit,
    EsbConfig,
    EsbLink,
    EsbPhy,
    Outcome,
    audit_ack_loss,
    esb_event_duration,
    esb_slot_us,
    warmup_esb,
)
from coexsim.kernel import Simulator
from coexsim.traffic import Source


def test_single_packet_on_4m():
    assert esb_event_duration(244, 0, EsbPhy.PHY_4M) == 860


def test_overhead_only_event():
    assert esb_event_duration(0, 0, EsbPhy.PHY_4M) == 860 - 244 * 8 // 4 == 372


def test_slower_phys_stretch_payload_and_header():
    assert esb_event_duration(244, 0, EsbPhy.PHY_2M) == round(976 + 339.5 + 65)
    assert esb_event_duration(244, 0, EsbPhy.PHY_1M) == round(1_952 + 339.5 + 130)


def test_payload_limits():
    with pytest.raises(PayloadTooLarge):
        esb_event_duration(253)
    with pytest.raises(PayloadTooLarge):
        EsbConfig(ack_payload=253)


def test_config_defaults():
    cfg = EsbConfig()
    assert (cfg.retransmit_delay, cfg.max_retries, cfg.retry_on_ack_loss) == (600, 3, False)


def test_audit_arithmetic():
    assert audit_ack_loss(AckAudit(set(range(100)), set(range(100)))) == 0.0
    assert audit_ack_loss(AckAudit(set(range(100)), set(range(78)))) == pytest.approx(0.22)
    with pytest.raises(EmptyAudit):
        audit_ack_loss(AckAudit())


def test_warmup_floor_and_jitter():
    assert warmup_esb() == 12_510
    assert warmup_esb(coex=True) == 12_510 + C.MPSL_INIT_EXTRA_US
    rng = np.random.default_rng(0)
    xs = [warmup_esb(rng) for _ in range(2_000)]
    assert min(xs) >= 12_010 and max(xs) <= 13_010
    assert np.mean(xs) == pytest.approx(12_510, rel=0.005)


def _link(n=None, rate=None, seed=0, channel=None, force_loss=None, **cfg):
    sim = Simulator(seed)
    config = EsbConfig(**cfg)
    link = EsbLink(sim, RadioArbiter(sim), config, Source(config.payload, rate, limit=n),
                   channel=channel, force_loss=force_loss)
    link.start()
    return sim, link


def test_lossless_transaction_is_acked_first_time():
    sim, link = _link(n=1)
    sim.run_until(10_000)
    (tx,) = link.log
    assert tx.outcome is Outcome.ACKED_OK and tx.retries_used == 0


def test_forced_first_attempt_loss_retries_after_exactly_600us():
    sim, link = _link(n=1, force_loss=lambda seq, attempt: attempt == 0)
    sim.run_until(10_000)
    (tx,) = link.log
    assert tx.outcome is Outcome.ACKED_OK and tx.retries_used == 1
    (s0, e0), (s1, _) = tx.attempts
    assert s1 - e0 == 600


def test_every_retry_gap_equals_the_retransmit_delay():
    sim, link = _link(n=200, seed=4, retransmit_delay=750,
                      channel=ChannelState(esb_attenuation_db=86.0))
    sim.run_until(2_000_000)
    gaps = [b[0] - a[1] for tx in link.log for a, b in zip(tx.attempts, tx.attempts[1:])]
    assert len(gaps) > 50
    assert set(gaps) == {750}


def test_failed_fraction_matches_binomial_oracle():
    # -78 dBm on 4M: 55% of attempts get through
    p = 0.45
    ch = ChannelState(esb_attenuation_db=86.0)
    n = 10_000
    sim, link = _link(n=n, seed=9, channel=ch)
    sim.run_until(10**9)
    failed = sum(tx.outcome is Outcome.FAILED for tx in link.log) / n
    oracle = p ** (3 + 1)
    se = np.sqrt(oracle * (1 - oracle) / n)
    assert abs(failed - oracle) < 4 * se


def test_ack_loss_does_not_trigger_retransmission_by_default():
    ch = ChannelState(esb_attenuation_db=88.0)  # -80 dBm
    sim, link = _link(n=2_000, seed=1, channel=ch)
    sim.run_until(10**9)
    lost = [tx for tx in link.log if tx.outcome is Outcome.ACK_LOST]
    assert lost and all(len(tx.attempts) == tx.retries_used + 1 for tx in lost)
    assert link.audit.loss_rate == pytest.approx(len(lost) / len(link.audit.expected_seqs))


def test_retry_on_ack_loss_flag_resends():
    ch = ChannelState(esb_attenuation_db=88.0)
    sim, a = _link(n=2_000, seed=1, channel=ch)
    sim.run_until(10**9)
    sim, b = _link(n=2_000, seed=1, channel=ch, retry_on_ack_loss=True)
    sim.run_until(10**9)
    frac = lambda link: sum(tx.outcome is Outcome.ACK_LOST for tx in link.log) / len(link.log)
    assert frac(b) < frac(a) / 5


def test_saturated_throughput_with_two_byte_ack():
    # oracle: slot airtime plus the inter-packet gap, back to back
    slot = round((252 + 2) * 8 / 4 + 339.5 + 130 / 4 + 0.4144 * 2)
    oracle = 252 * 8 / (slot + 17) * 1000
    assert esb_slot_us(252, 2, EsbPhy.PHY_4M) == slot
    sim, link = _link(ack_payload=2)
    sim.run_until(1_000_000)
    assert link.throughput_kbps(0, 1_000_000) == pytest.approx(oracle, rel=0.002)
    assert oracle == pytest.approx(2_244, rel=0.001)


@pytest.mark.parametrize("m", [8, 64, 252])
def test_ack_payload_bounded_by_forward_ratio(m):
    ch = ChannelState(esb_attenuation_db=80.0)
    sim, link = _link(ack_payload=m, seed=2, channel=ch)
    sim.run_until(1_000_000)
    fwd = link.throughput_kbps(0, 1_000_000)
    rev = link.throughput_kbps(0, 1_000_000, reverse=True)
    assert 0 < rev <= m / 252 * fwd + 1e-9


def test_no_transaction_overlaps_a_ble_anchor():
    sys_ = CoexSystem(3, 7_500, ble_fwd_kbps=300, ble_rev_kbps=100, esb_kbps=None)
    sys_.start()
    sys_.run(2_000_000)
    anchors = [s for s in sys_.arbiter.log if s.owner is ProtocolId.BLE]
    attempts = sorted(a for tx in sys_.esb.log for a in tx.attempts if a[1] > a[0])
    assert anchors and attempts
    spans = sorted([(s.start, s.end) for s in anchors] + attempts)
    assert all(b[0] >= a[1] for a, b in zip(spans, spans[1:]))
