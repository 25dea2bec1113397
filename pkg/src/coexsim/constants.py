"""Calibrated model constants.

Every value here is either a published measurement or back-solved from one;
``coexsim.calibration.calibrate`` re-derives the back-solved ones and the
test suite checks that the frozen numbers still agree with it.
Times are integer microseconds unless the name says otherwise, powers in mW,
energies in uJ.
"""

# -- BLE link layer -----------------------------------------------------------
BLE_MAX_PAYLOAD = 244
BLE_IFS_US = 150
BLE_SINGLE_EVENT_US = 1_420          # 244 B on 2M, one connection event
BLE_OVERHEAD_US = 444                # 1420 - 244*8/2, on the 2M PHY
BLE_HEADER_BITS = 288                # (444 - 2 IFS) us at 2 bit/us: headers, CRC, empty-PDU bits
BLE_CODED_OVERHEAD_US = 2_545        # per coded-S8 fragment exchange: 23 fragments fill a 100 ms event (~50 kbps)
BLE_CODED_MAX_FRAGMENT = 27          # LL payload without data length extension
BLE_EVENT_END_MARGIN_US = 1_700      # an exchange must finish this long before the next anchor

BLE_CI_PRESETS_US = (7_500, 100_000, 1_000_000)
BLE_ADV_INTERVAL_US = 20_000
BLE_SCAN_INTERVAL_US = 2_500

# warm-up pipeline
BLE_INIT_US = 12_000
BLE_CONNECT_US = 15_000
BLE_ADV_DELAY_MAX_US = 10_000        # pseudo-random advDelay added to every advertising event
BLE_ADV_CAPTURE_P = 0.244236         # per-event chance the scanner turns an advertisement into a connection
BLE_DISCOVERY_US = 104_602           # standalone service discovery
BLE_DISCOVERY_COEX_US = 116_800      # service discovery while ESB shares the radio
BLE_TAKEOVER_US = 20_000             # discovery done -> ESB stopped, BLE carrying data

# -- ESB link layer -----------------------------------------------------------
ESB_MAX_PAYLOAD = 252
ESB_SINGLE_EVENT_US = 860            # 244 B on 4M, no ACK payload
ESB_TURNAROUND_US = 339.5            # fixed part of the per-transaction overhead
ESB_HEADER_BITS = 130                # preamble/address/PCF/CRC of packet + ACK
ESB_ACK_HANDLING_US_PER_BYTE = 0.4144
ESB_INTER_PACKET_GAP_US = 17
ESB_RETRANSMIT_DELAY_US = 600
ESB_MAX_RETRIES = 3
ESB_INIT_US = 12_510
ESB_INIT_JITTER_US = 500
MPSL_INIT_EXTRA_US = 16_390          # stack + MPSL bring-up added to both protocols in hybrid firmware

# -- radio arbitration ----------------------------------------------------------
RADIO_SWITCH_US = 150
MPSL_ANCHOR_GUARD_US = 3_000

# -- power model (mW) -----------------------------------------------------------
SLEEP_MW = 0.003
MCU_BASELINE_MW = 0.45
ESB_STANDBY_MW = 0.10                # ESB idle total = 0.55
BLE_STANDBY_MW = 0.0
BLE_EMPTY_EVENT_UJ = 4.05            # makes BLE idle 0.99 mW at a 7.5 ms interval
BLE_DATA_EVENT_UJ = 7.940            # extra energy of an event that carries data
BLE_PDU_UJ = 32.121                  # per 244 B exchange on 2M (scaled by airtime elsewhere)
ESB_RADIO_MW = 27.0116               # 23.23 uJ / 860 us
ESB_PACKET_PREP_UJ = 3.0276          # per-transaction CPU work outside the radio window
ESB_PREP_US = 200

# warm-up phase powers
INIT_MW = 4.9329                     # 61.71 uJ / 12.51 ms
BLE_ADV_MW = 2.5112
BLE_CONNECT_MW = 24.7687
BLE_DISCOVERY_MW = 5.5109

# -- handover: measured switching latencies ------------------------------------
# (constant, uniform jitter width), mean = constant + width/2, sd = width/sqrt(12)
HANDOVER_ESB_ADJUST = (14_536, 7_067)
HANDOVER_BLE_ADJUST = (30_642, 9_734)
HANDOVER_STANDBY_TO_ESB = (14_171, 8_937)
HANDOVER_SHUTDOWN_TO_ESB = (16_447, 3_707)
HANDOVER_STANDBY_TO_BLE_CONST = 0
BLE_REINIT_US = 90_560

# -- channel --------------------------------------------------------------------
ACK_LOSS_ANCHORS = ((-80.0, 0.22), (-70.0, 0.07), (-60.0, 0.01), (-50.0, 0.0))

# throughput fraction vs RSSI per PHY; loss-free above -65 dBm
THROUGHPUT_CAP_ANCHORS = {
    "ble_coded_s8": ((-106.0, 0.0), (-100.0, 0.5), (-92.0, 0.95), (-85.0, 1.0)),
    "ble_1m": ((-99.0, 0.0), (-92.0, 0.4), (-80.0, 0.95), (-70.0, 1.0)),
    "ble_2m": ((-96.0, 0.0), (-90.0, 0.3), (-85.0, 0.55), (-75.0, 0.9), (-65.0, 1.0)),
    "esb_1m": ((-97.0, 0.0), (-90.0, 0.4), (-80.0, 0.9), (-70.0, 1.0)),
    "esb_2m": ((-93.0, 0.0), (-88.0, 0.3), (-78.0, 0.85), (-68.0, 1.0)),
    "esb_4m": ((-90.0, 0.0), (-85.0, 0.2), (-78.0, 0.55), (-70.0, 0.9), (-65.0, 1.0)),
}

# attenuation of the two receiver paths in the TXP/PHY runtime-control setup
BLE_LINK_ATTENUATION_DB = 41.0
ESB_LINK_ATTENUATION_DB = 39.0
