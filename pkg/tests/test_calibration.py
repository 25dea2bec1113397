import csv
import io

import pytest

from coexsim import constants as C
from coexsim.calibration import TARGETS, calibrate, patched, provenance_table


@pytest.fixture(scope="module")
def rows():
    return calibrate()


def test_every_frozen_constant_is_rederived(rows):
    bad = [(r.name, r.derived, r.frozen) for r in rows if r.rel_diff > 1e-3]
    assert not bad


def test_fast_path_skips_the_simulated_split():
    names = {r.name for r in calibrate(simulate=False)}
    assert "BLE_OVERHEAD_US" in names and "BLE_PDU_UJ" not in names


def test_provenance_table_is_csv(rows):
    table = list(csv.reader(io.StringIO(provenance_table(rows))))
    assert table[0] == ["constant", "derived", "frozen", "rel_diff", "derivation"]
    assert len(table) == len(rows) + 1
    assert all(len(r) >= 5 for r in table[1:])


def test_patched_restores_constants():
    before = C.BLE_PDU_UJ
    with patched(BLE_PDU_UJ=1.0):
        assert C.BLE_PDU_UJ == 1.0
    assert C.BLE_PDU_UJ == before


def test_targets_are_not_mutated(rows):
    assert TARGETS["ble_single_us"] == 1_420 and TARGETS["esb_single_uj"] == 23.23
