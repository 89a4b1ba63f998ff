"""One simulated controller running the fixed safety sequencer.

Per cycle: instruction self-test slice, write inputs, run chain A on VM-A,
run chain B on VM-B, compare both results byte for byte in canonical form,
and hand the verdict to the duplex layer. Any trap, budget overrun or
mismatch is a local divergence; the controller then runs its full
instruction self-test (failure means HALT) and otherwise reboots.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import selftest, vm_a, vm_b
from .codegen_a import ImageA
from .codegen_b import ImageB
from .layout import DataLayout, canonical_bytes, crc32, read_slot, write_slot
from .memmap import MapError, MemoryMap
from .vmstatus import NAMES, NO_CORRUPTION, OK

RUNNING, REBOOTING, HALTED = "RUNNING", "REBOOTING", "HALTED"


class LoadError(ValueError):
    def __init__(self, kind: str, message: str):
        self.kind = kind       # overlap | out-of-range | empty | image-too-large | layout
        super().__init__(f"{kind}: {message}")


def check_map(mmap: MemoryMap) -> MemoryMap:
    """First loader stage: the regions themselves, before any image is placed."""
    try:
        return mmap.validate()
    except MapError as e:
        raise LoadError(e.kind, str(e)) from None


@dataclass(frozen=True)
class McuConfig:
    reboot_cycles: int = 5
    storm_threshold: int = 3
    storm_window: int = 100
    selftest_k: int = 4          # opcodes per VM per cycle; 0 means all of them
    selftest_enabled: bool = True  # off only for mutation testing of the comparison path


@dataclass
class TraceEvent:
    cycle: int
    source: str
    kind: str
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"type": "event", "cycle": self.cycle, "source": self.source,
                "kind": self.kind, "details": self.details}


@dataclass
class Program:
    """Everything a controller loads: both images, the map and the state inits."""
    mmap: MemoryMap
    image_a: ImageA
    image_b: ImageB
    inits: dict              # state variable -> list of initial element values
    fingerprint: str = ""

    @property
    def budget(self) -> int:
        return self.image_a.budget

    def slots(self, kind: str) -> list:
        return self.image_a.layout.of_kind(kind)

    @property
    def line_slots(self) -> list:
        """BOOL outputs, flattened in declaration order, are the board lines."""
        return [s for s in self.slots("output") if s.is_bool]

    @property
    def n_lines(self) -> int:
        return sum(s.count for s in self.line_slots)


@dataclass
class CycleResult:
    lines: Optional[tuple]       # commanded line values if both instances agreed
    out_digest: int = 0
    state_digest: int = 0
    events: list = field(default_factory=list)
    ok: bool = False


@dataclass(frozen=True)
class SelfTestFailure:
    vm: str
    opcode: str
    vector: str


class Mcu:
    def __init__(self, name: str, program: Program, config: McuConfig = McuConfig()):
        self.name = name
        self.program = program
        self.config = config
        self._validate()
        self.mem = np.zeros(program.mmap.space, np.uint8)
        self.mode = RUNNING
        self.cycle = 0
        self.remaining = 0
        self.reboot_count = 0
        self.reboot_times = deque()
        self.selftest_cursor = 0
        self.corrupt = {"A": NO_CORRUPTION, "B": NO_CORRUPTION}
        self.executions = 0
        self.last = {}            # canonical bytes of the latest run, per instance
        self.permanent_flips = []  # (address, bit) in code, re-applied after every reload
        self.permanent_data_flips = []  # (address, bit) in data, re-applied after resync
        self.reload()
        self.reset_data()

    # -- loading -----------------------------------------------------------------
    def _validate(self):
        p = self.program
        check_map(p.mmap)
        for img, region, what in ((p.image_a, p.mmap.code_a, "CODE_A"),
                                  (p.image_b, p.mmap.code_b, "CODE_B")):
            if img.base != region.base or len(img.code) > region.size:
                raise LoadError("image-too-large",
                                f"{len(img.code)} bytes at {img.base:#x} do not fit {what}")
        for layout, region, what in ((p.image_a.layout, p.mmap.data_a, "DATA_A"),
                                     (p.image_b.layout, p.mmap.data_b, "DATA_B")):
            for s in layout.slots:
                if not region.contains(s.addr, s.size):
                    raise LoadError("layout", f"'{s.name}' lies outside {what}")
            if layout.scratch_size and not region.contains(layout.scratch_addr,
                                                           layout.scratch_size):
                raise LoadError("layout", f"scratch area lies outside {what}")

    def reload(self):
        p = self.program
        for img, region in ((p.image_a, p.mmap.code_a), (p.image_b, p.mmap.code_b)):
            self.mem[region.base:region.end] = 0
            self.mem[img.base:img.base + len(img.code)] = np.frombuffer(img.code, np.uint8)
        for addr, bit in self.permanent_flips:
            self.flip(addr, bit)

    def _layouts(self):
        return ((self.program.image_a.layout, self.program.mmap.data_a),
                (self.program.image_b.layout, self.program.mmap.data_b))

    def reset_data(self):
        for layout, region in self._layouts():
            self.mem[region.base:region.end] = 0
            for s in layout.slots:
                if s.kind == "state":
                    vals = self.program.inits[s.name]
                elif s.kind in ("input", "output"):
                    vals = [s.lo] * s.count
                else:
                    continue
                write_slot(self.mem, s, layout, vals)

    # -- state transfer -------------------------------------------------------------
    def state_blob(self, vm: str = "A") -> bytes:
        layout = self.program.image_a.layout if vm == "A" else self.program.image_b.layout
        return canonical_bytes(self.mem, layout, layout.of_kind("state"))

    def install_state(self, blob: bytes):
        """Write a canonical state serialization into both data regions."""
        arr = np.frombuffer(blob, "<i4")
        for layout, _ in self._layouts():
            pos = 0
            for s in layout.of_kind("state"):
                write_slot(self.mem, s, layout, arr[pos:pos + s.count])
                pos += s.count
            if pos != arr.size:
                raise ValueError("state blob does not match the layout")

    # -- self-test ------------------------------------------------------------------
    def self_test_slice(self, k: Optional[int] = None) -> Optional[SelfTestFailure]:
        """Run the next ``k`` vectors of each VM; the cursor advances cyclically."""
        if not self.config.selftest_enabled:
            return None
        k = self.config.selftest_k if k is None else k
        for vm in ("A", "B"):
            vecs = selftest.VECTORS[vm]
            n = len(vecs)
            count = n if k <= 0 or k >= n else k
            for j in range(count):
                vec = vecs[(self.selftest_cursor + j) % n]
                if not selftest.run_vector(vm, vec, self.corrupt[vm]):
                    return SelfTestFailure(vm, selftest.diagnose(vm, self.corrupt[vm]),
                                           vec.opcode)
        if k > 0:
            self.selftest_cursor += k
        return None

    def full_self_test(self) -> Optional[SelfTestFailure]:
        return self.self_test_slice(0)

    # -- the cycle ----------------------------------------------------------------
    def write_inputs(self, inputs: dict):
        for layout, _ in self._layouts():
            for s in layout.of_kind("input"):
                v = inputs[s.name]
                write_slot(self.mem, s, layout, v if isinstance(v, list) else [v])

    def _run_a(self) -> tuple:
        p, m = self.program, self.program.mmap
        return vm_a.run(self.mem, p.image_a.entry, m.code_a.base, m.code_a.end,
                        m.data_a.base, m.data_a.end, p.image_a.budget, self.corrupt["A"],
                        vm_a.STACK_CAPACITY)

    def _run_b(self) -> tuple:
        p, m = self.program, self.program.mmap
        return vm_b.run(self.mem, p.image_b.entry, m.code_b.base, m.code_b.end,
                        m.data_b.base, m.data_b.end, p.image_b.budget, self.corrupt["B"])

    def _canonical(self, layout: DataLayout) -> tuple:
        outs = canonical_bytes(self.mem, layout, layout.of_kind("output"))
        state = canonical_bytes(self.mem, layout, layout.of_kind("state"))
        return outs, state

    def lines_of(self, layout: DataLayout) -> tuple:
        vals = [read_slot(self.mem, s, layout) for s in self.program.line_slots]
        return tuple(bool(v) for arr in vals for v in arr)

    def run_cycle(self, cycle: int, inputs: dict) -> CycleResult:
        """One sequencer pass. Requires mode RUNNING; inputs are already validated."""
        assert self.mode == RUNNING
        self.cycle = cycle
        ev = []
        fail = self.self_test_slice()
        if fail is not None:
            self._selftest_halt(fail, ev)
            return CycleResult(None, events=ev)
        self.write_inputs(inputs)
        st_a, steps_a, _ = self._run_a()
        st_b, steps_b, _ = self._run_b()
        self.executions += 2
        la, lb = self.program.image_a.layout, self.program.image_b.layout
        out_a, state_a = self._canonical(la)
        out_b, state_b = self._canonical(lb)
        self.last = {"status_a": st_a, "status_b": st_b, "out_a": out_a, "out_b": out_b,
                     "state_a": state_a, "state_b": state_b,
                     "steps_a": steps_a, "steps_b": steps_b}
        if st_a != OK or st_b != OK or out_a != out_b or state_a != state_b:
            details = {"status_a": NAMES[st_a], "status_b": NAMES[st_b]}
            if st_a == OK and st_b == OK:
                details["mismatch"] = "outputs" if out_a != out_b else "state"
            ev.append(self.event("local_divergence", **details))
            self.diverged(ev)
            return CycleResult(None, events=ev)
        return CycleResult(self.lines_of(la), crc32(out_a), crc32(state_a), ev, True)

    def diverged(self, ev: list):
        """Classify a divergence: broken instructions halt, anything else reboots."""
        fail = self.full_self_test()
        if fail is not None:
            self._selftest_halt(fail, ev)
        else:
            self.start_reboot(ev)

    def _selftest_halt(self, fail: SelfTestFailure, ev: list):
        ev.append(self.event("selftest_fail", vm=fail.vm, opcode=fail.opcode,
                             vector=fail.vector))
        self.halt(ev, "selftest")

    def event(self, kind: str, **details) -> TraceEvent:
        return TraceEvent(self.cycle, self.name, kind, details)

    def halt(self, ev: list, reason: str):
        if self.mode != HALTED:
            self.mode = HALTED
            ev.append(self.event("halt", reason=reason))

    def readback_check(self, driven: tuple, sensed: tuple) -> Optional[int]:
        for i, (d, s) in enumerate(zip(driven, sensed)):
            if d != s:
                return i
        return None

    # -- reboot -----------------------------------------------------------------
    def start_reboot(self, ev: list):
        c, cfg = self.cycle, self.config
        self.reboot_times.append(c)
        while self.reboot_times and self.reboot_times[0] <= c - cfg.storm_window:
            self.reboot_times.popleft()
        if len(self.reboot_times) > cfg.storm_threshold:
            self.halt(ev, "reboot storm")
            return
        self.mode = REBOOTING
        self.remaining = cfg.reboot_cycles
        self.reboot_count += 1
        ev.append(self.event("reboot_start", count=self.reboot_count,
                             remaining=self.remaining))

    def reboot_step(self, cycle: int) -> tuple:
        """Count down one cycle. Returns (events, ready_for_resync)."""
        assert self.mode == REBOOTING
        self.cycle = cycle
        ev = []
        self.remaining -= 1
        if self.remaining > 0:
            return ev, False
        self.reload()
        self.reset_data()
        self.selftest_cursor = 0
        fail = self.full_self_test()
        if fail is not None:
            self._selftest_halt(fail, ev)
            return ev, False
        ev.append(self.event("reboot_done", count=self.reboot_count))
        return ev, True

    def flip(self, addr: int, bit: int):
        self.mem[addr] ^= np.uint8(1 << bit)

    def finish_resync(self, blob: bytes, ev: list):
        self.install_state(blob)
        for addr, bit in self.permanent_data_flips:
            self.flip(addr, bit)
        self.mode = RUNNING
        ev.append(self.event("resync", result="ok", bytes=len(blob)))

    def refuse_resync(self, ev: list, why: str):
        ev.append(self.event("resync", result="refused", reason=why))
        self.start_reboot(ev)


def load(program: Program, name: str = "MCU1", config: McuConfig = McuConfig()) -> Mcu:
    return Mcu(name, program, config)
