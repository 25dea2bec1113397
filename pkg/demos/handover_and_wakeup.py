"""Latency of switching between protocols, and an ESB-bridged wake-up.

    python3 demos/handover_and_wakeup.py
"""

import numpy as np

from coexsim.coex import Direction, handover_latencies, hybrid_wakeup

CI = 100_000

print("handover latency over 300 trials (ms)")
for scenario, direction in [("concurrent", Direction.BLE_ADJUST), ("concurrent", Direction.ESB_ADJUST),
                            ("standby", Direction.TO_ESB), ("standby", Direction.TO_BLE),
                            ("shutdown", Direction.TO_ESB), ("shutdown", Direction.TO_BLE)]:
    lat = handover_latencies(direction, scenario, runs=300, seed=0, ci=CI) / 1e3
    print(f"  {scenario:10} {direction.name:10} mean {lat.mean():7.2f}  sd {lat.std(ddof=1):6.2f}")

# a standby BLE link resumes at its next anchor: uniform over one interval
print(f"  uniform anchor wait would give mean {CI / 2e3:.2f}, sd {CI / 1e3 / np.sqrt(12):.2f}")

print("\nhybrid wake-up, one run")
tl = hybrid_wakeup(CI, seed=1)
for name in ("t_esb_first_pkt", "t_ble_connected", "t_ble_ready", "t_esb_stop"):
    print(f"  {name:16} {getattr(tl, name) / 1e3:8.1f} ms")
print(f"  data flowed without a gap: {tl.gap_free()}")
