import math

import pytest

from dualsafe import selftest, vm_a, vm_b
from dualsafe.mcu import HALTED, McuConfig, load
from dualsafe.vmstatus import NO_CORRUPTION

ALL = [(vm, name) for vm in "AB" for name in selftest.OPCODE_VALUES[vm]]


def test_one_vector_per_opcode():
    assert selftest.n_opcodes("A") == len(vm_a.OPCODES) == 29
    assert selftest.n_opcodes("B") == len(vm_b.FORMATS) == 34
    for vm in "AB":
        assert sorted(v.opcode for v in selftest.VECTORS[vm]) == sorted(selftest.OPCODE_VALUES[vm])


@pytest.mark.parametrize("vm", "AB")
def test_healthy_vm_passes_every_vector(vm):
    assert selftest.failing_vectors(vm, NO_CORRUPTION) == frozenset()


@pytest.mark.parametrize("vm,name", ALL)
def test_each_corruption_is_caught_by_its_own_vector_and_diagnosed(vm, name):
    code = selftest.OPCODE_VALUES[vm][name]
    failing = selftest.failing_vectors(vm, code)
    own = next(i for i, v in enumerate(selftest.VECTORS[vm]) if v.opcode == name)
    assert own in failing
    assert selftest.diagnose(vm, code) == name


@pytest.mark.parametrize("vm", "AB")
def test_fault_dictionary_signatures_are_unique(vm):
    assert len(selftest.fault_dictionary(vm)) == selftest.n_opcodes(vm)


def first_detection(program, vm, name, k, start_cursor=0):
    m = load(program, config=McuConfig(selftest_k=k))
    m.selftest_cursor = start_cursor
    m.corrupt[vm] = selftest.OPCODE_VALUES[vm][name]
    for cycle in range(1, 100):
        fail = m.self_test_slice()
        if fail is not None:
            return cycle, fail
    return None, None


def oracle_cycles(vm, name, k, start_cursor=0):
    """Cycles until the slice first covers a vector the fault breaks, by cursor arithmetic."""
    n = selftest.n_opcodes(vm)
    if k <= 0 or k >= n:
        return 1
    broken = selftest.failing_vectors(vm, selftest.OPCODE_VALUES[vm][name])
    return min((pos - start_cursor) % n // k for pos in broken) + 1


def test_vm_b_add_found_within_one_rotation(seal_program):
    n = selftest.n_opcodes("B")
    for k in (1, 4, n):
        cycle, fail = first_detection(seal_program, "B", "ADD", k)
        assert (fail.vm, fail.opcode) == ("B", "ADD")
        assert cycle <= math.ceil(n / k)
    assert first_detection(seal_program, "B", "ADD", n)[0] == 1


@pytest.mark.parametrize("k,start", [(1, 0), (4, 0), (4, 17), (3, 5), (0, 9)])
def test_detection_cycle_matches_cursor_arithmetic(seal_program, k, start):
    # a VM-A fault is found by VM-A's own slice; VM-B vectors keep passing meanwhile
    for name in ("HALT", "ADD", "LOOP", "RANGECHK"):
        cycle, fail = first_detection(seal_program, "A", name, k, start)
        assert fail.opcode == name
        assert cycle == oracle_cycles("A", name, k, start)


def test_selftest_failure_halts_the_controller(seal_program):
    m = load(seal_program, config=McuConfig(selftest_k=0))
    m.corrupt["B"] = selftest.OPCODE_VALUES["B"]["SW"]
    r = m.run_cycle(0, {"start": 1, "stop": 0})
    assert m.mode == HALTED and r.lines is None
    kinds = [e.kind for e in r.events]
    assert kinds == ["selftest_fail", "halt"]
    assert r.events[0].details["opcode"] == "SW"
