from dataclasses import replace

import pytest

from dualsafe import duplex, vm_a
from dualsafe.build import build_program
from dualsafe.frontend import compile_source, complexity_check
from dualsafe.layout import crc32
from dualsafe.mcu import HALTED, REBOOTING, RUNNING, McuConfig, load

COPY = "MACHINE M INPUTS i:BOOL OUTPUTS o:BOOL OPERATION user_logic BEGIN o := i END"
LOOP50 = ("MACHINE L INPUTS i:BOOL STATE s:INT(0..100) OPERATION user_logic "
          "BEGIN FOR k FROM 0 TO 4 DO s := k + 1 + 2 + 3 END END")


@pytest.fixture(scope="module")
def copy_program():
    return build_program(compile_source(COPY))


def test_healthy_cycle_drives_the_line(copy_program):
    m = load(copy_program)
    r = m.run_cycle(0, {"i": 1})
    assert r.ok and r.lines == (True,)
    assert m.last["out_a"] == m.last["out_b"] == (1).to_bytes(4, "little")
    assert r.out_digest == crc32(m.last["out_a"])
    assert m.mode == RUNNING and r.events == []


def test_flipped_store_address_is_a_local_divergence(copy_program):
    m = load(copy_program)
    img = copy_program.image_a
    store = [ins for ins in vm_a.decode(img.code, img.base) if ins.name == "STORE"][-1]
    m.flip(store.addr + 1, 2)           # low byte of the target address
    r = m.run_cycle(0, {"i": 1})
    assert not r.ok and r.lines is None
    assert [e.kind for e in r.events] == ["local_divergence", "reboot_start"]
    assert m.mode == REBOOTING


def test_budget_exhaustion_reboots():
    tm = compile_source(LOOP50)
    assert complexity_check(tm).max_ops == 50
    p = build_program(tm)
    p = replace(p, image_a=replace(p.image_a, budget=10), image_b=replace(p.image_b, budget=10))
    m = load(p)
    r = m.run_cycle(0, {"i": 1})
    ev = r.events[0]
    assert ev.kind == "local_divergence"
    assert ev.details["status_a"] == ev.details["status_b"] == "budget"
    assert m.mode == REBOOTING


def test_budget_is_enough_for_the_loop():
    m = load(build_program(compile_source(LOOP50)))
    assert m.run_cycle(0, {"i": 0}).ok


def test_readback_check(copy_program):
    m = load(copy_program)
    assert m.readback_check((True, False), (True, False)) is None
    lines = (True, False, True, False)
    assert m.readback_check(lines, (True, False, True, True)) == 3
    # stuck-at-1 while commanding 1 is invisible
    assert m.readback_check((True,), (True,)) is None


def test_four_instance_executions_per_cycle(seal_program):
    sc = duplex.Scenario([{"at": 0, "set": {"start": 1, "stop": 0}}], [], 7)
    counts = []
    duplex.run(seal_program, sc, observer=lambda sim, c, _: counts.append(
        sum(m.executions for m in sim.mcus)))
    assert counts == [4 * (c + 1) for c in range(7)]


# -- reboot, resync and storms ------------------------------------------------------------

def seal_run(program, faults, cycles=40):
    sc = duplex.Scenario([{"at": 0, "set": {"start": 1, "stop": 0}},
                          {"at": 1, "set": {"start": 0, "stop": 0}}], faults, cycles)
    return duplex.run(program, sc)


def state_addr(program):
    return program.image_a.layout["K"].addr


def test_reboot_takes_r_cycles(seal_program):
    flip = duplex.FaultSpec("data_bitflip", mcu=1, vm="A", address=state_addr(seal_program),
                            bit=0, at=10, duration=1)
    res = seal_run(seal_program, [flip])
    modes = [m[0] for m in res.modes]
    assert modes[9] == RUNNING
    assert modes[10:15] == [REBOOTING] * 5
    assert modes[15] == RUNNING
    kinds = [(e.cycle, e.kind) for e in res.events if e.source == "MCU1"]
    assert (10, "local_divergence") in kinds and (15, "resync") in kinds
    # the second controller never noticed
    assert all(m[1] == RUNNING for m in res.modes)
    # outage: no board output during the reboot, drive again after resync
    assert not any(any(b) for b in res.board[10:15])
    assert all(b == (True,) for b in res.board[15:])


def test_two_reboots_stay_running(seal_program):
    addr = state_addr(seal_program)
    flips = [duplex.FaultSpec("data_bitflip", mcu=1, vm="A", address=addr, bit=0, at=t,
                              duration=1) for t in (5, 20)]
    res = seal_run(seal_program, flips)
    assert res.modes[-1] == [RUNNING, RUNNING]
    assert sum(e.kind == "reboot_start" for e in res.events) == 2


def test_permanent_flip_ends_in_a_storm(seal_program):
    flip = duplex.FaultSpec("data_bitflip", mcu=2, vm="B",
                            address=seal_program.image_b.layout["K"].addr + 3, bit=0, at=2)
    res = seal_run(seal_program, [flip], 60)
    mcu2 = [e for e in res.events if e.source == "MCU2"]
    starts = [e for e in mcu2 if e.kind == "reboot_start"]
    halts = [e for e in mcu2 if e.kind == "halt"]
    assert len(starts) == 3
    assert halts and halts[0].details["reason"] == "reboot storm"
    assert halts[0].cycle > starts[-1].cycle
    assert res.modes[-1] == [RUNNING, HALTED]


def test_reboot_storm_window(copy_program):
    m = load(copy_program, config=McuConfig(storm_window=100))
    for c in (0, 10, 20):
        m.cycle = c
        m.start_reboot([])
        assert m.mode == REBOOTING
    m.cycle = 101      # the reboot at cycle 0 has left the window
    m.start_reboot([])
    assert m.mode == REBOOTING
    m.cycle = 102
    ev = []
    m.start_reboot(ev)
    assert m.mode == HALTED and ev[-1].details["reason"] == "reboot storm"


def test_halted_is_absorbing(seal_program):
    stuck = duplex.FaultSpec("output_stuck", mcu=1, output=0, value=1, at=0)
    sc = duplex.Scenario([{"at": c, "set": {"start": c % 2, "stop": (c // 3) % 2}}
                          for c in range(40)], [stuck], 40)
    res = duplex.run(seal_program, sc)
    first = next(c for c, m in enumerate(res.modes) if m[0] == HALTED)
    assert all(m[0] == HALTED for m in res.modes[first:])
    assert not any(e.source == "MCU1" and e.cycle > first for e in res.events)
