"""Share one radio between a BLE connection and an ESB stream, then look at the slot log.

    python3 demos/coexistence_walkthrough.py
"""

from coexsim.arbiter import ProtocolId
from coexsim.coex import CoexSystem

CI = 7_500
DUR = 1_000_000

# BLE paced at 300 kbps on a 7.5 ms interval, ESB takes whatever is left
system = CoexSystem(seed=3, ci=CI, ble_fwd_kbps=300, esb_kbps=None)
system.start()
system.run(DUR)

ble = system.ble.throughput_kbps("fwd", CI, DUR)
esb = system.esb.throughput_kbps(CI, DUR)
print(f"BLE forward   {ble:8.1f} kbps")
print(f"ESB forward   {esb:8.1f} kbps")

share = system.arbiter.utilization(CI, DUR)
print(f"radio time    BLE {share['ble_fraction']:.1%}  ESB {share['esb_fraction']:.1%}  idle {share['idle_fraction']:.1%}")

power = system.power_trace(CI, DUR)
print(f"mean power    {power.mean_power():8.2f} mW")

# anchors are logged one interval ahead, so sort by start
print("\nfirst slots (owner, start us, end us, outcome):")
for owner, start, end, outcome in sorted(system.arbiter.slot_rows(), key=lambda r: r[1])[:12]:
    print(f"  {owner:4} {start:8d} {end:8d}  {outcome}")

anchors = [s for s in system.arbiter.log if s.owner is ProtocolId.BLE]
gaps = [b.start - a.end for a, b in zip(anchors, anchors[1:])]
print(f"\n{len(anchors)} anchors, shortest idle gap between them {min(gaps)} us")
