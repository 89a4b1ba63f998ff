"""Two controllers in lockstep: frames, cross comparison, heartbeat, board.

MCU1 drives the power line and MCU2 the command line of every output; a
board output is energized only when both lines are. All anomalies become trace events and
mode changes, never exceptions.
"""

from __future__ import annotations

import hashlib
import json
import random
import struct
from dataclasses import asdict, dataclass, field
from typing import Optional

from . import selftest
from .layout import crc32
from .mcu import HALTED, REBOOTING, RUNNING, Mcu, McuConfig, Program, TraceEvent
from .vmstatus import NO_CORRUPTION

TRACE_VERSION = 1
SOURCES = ("HARNESS", "MCU1", "MCU2", "BOARD")
_RANK = {s: i for i, s in enumerate(SOURCES)}

SYNC = 0xA5
_FRAME_BODY = struct.Struct("<BHIIIB")
FRAME_SIZE = _FRAME_BODY.size + 4
ST_ALIVE, ST_REBOOTING, ST_RESYNC = 1, 2, 4


@dataclass(frozen=True)
class Frame:
    seq: int
    cycle: int
    out_digest: int
    state_digest: int
    status: int

    def pack(self) -> bytes:
        body = _FRAME_BODY.pack(SYNC, self.seq, self.cycle, self.out_digest,
                                self.state_digest, self.status)
        return body + struct.pack("<I", crc32(body))

    @classmethod
    def unpack(cls, data: Optional[bytes]) -> Optional["Frame"]:
        """Decode a received frame; None when absent, malformed or failing its CRC."""
        if data is None or len(data) != FRAME_SIZE:
            return None
        body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
        if crc32(body) != crc:
            return None
        sync, seq, cycle, od, sd, status = _FRAME_BODY.unpack(body)
        if sync != SYNC:
            return None
        return cls(seq, cycle, od, sd, status)


@dataclass(frozen=True)
class SimConfig:
    mcu: McuConfig = McuConfig()
    heartbeat_threshold: int = 3

    def to_json(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()[:16]


# -- faults -----------------------------------------------------------------------

FAULT_KINDS = ("code_bitflip", "data_bitflip", "opcode_semantics", "frame_drop",
               "frame_corrupt", "output_stuck", "mcu_kill")


_FIELDS = {
    "code_bitflip": {"vm", "address", "bit"}, "data_bitflip": {"vm", "address", "bit"},
    "opcode_semantics": {"vm", "opcode"}, "output_stuck": {"output", "value"},
    "frame_drop": set(), "frame_corrupt": set(), "mcu_kill": set(),
}


class ScenarioError(ValueError):
    pass


@dataclass
class FaultSpec:
    kind: str
    mcu: int = 1
    vm: str = "A"
    address: Optional[int] = None
    bit: Optional[int] = None
    opcode: Optional[str] = None
    output: Optional[int] = None
    value: int = 1
    at: int = 0
    duration: Optional[int] = None      # cycles; None means permanent

    def active(self, cycle: int) -> bool:
        return cycle >= self.at and (self.duration is None or cycle < self.at + self.duration)

    def to_json(self) -> dict:
        keep = {"kind", "mcu", "at", "duration"} | _FIELDS.get(self.kind, set())
        return {k: v for k, v in asdict(self).items() if k in keep and v is not None}

    @classmethod
    def from_json(cls, d: dict) -> "FaultSpec":
        if not isinstance(d, dict):
            raise ScenarioError(f"fault must be an object, got {d!r}")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ScenarioError(f"unknown fault fields {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ScenarioError(str(e)) from None

    def validate(self, program: Program) -> "FaultSpec":
        def bad(msg):
            raise ScenarioError(f"{self.kind}: {msg}")

        if self.kind not in FAULT_KINDS:
            bad(f"unknown fault kind (expected one of {', '.join(FAULT_KINDS)})")
        if self.mcu not in (1, 2):
            bad(f"mcu must be 1 or 2, got {self.mcu!r}")
        if not isinstance(self.at, int) or self.at < 0:
            bad("at must be a cycle number >= 0")
        if self.duration is not None and (not isinstance(self.duration, int) or self.duration < 1):
            bad("duration must be a positive cycle count or null")
        if self.kind in ("code_bitflip", "data_bitflip", "opcode_semantics") and \
                self.vm not in ("A", "B"):
            bad(f"vm must be 'A' or 'B', got {self.vm!r}")
        if self.kind in ("code_bitflip", "data_bitflip"):
            m = program.mmap
            region = {("code_bitflip", "A"): m.code_a, ("code_bitflip", "B"): m.code_b,
                      ("data_bitflip", "A"): m.data_a, ("data_bitflip", "B"): m.data_b
                      }[(self.kind, self.vm)]
            if not isinstance(self.address, int) or not region.contains(self.address):
                bad(f"address {self.address!r} outside the target region")
            if self.bit is not None and self.bit not in range(8):
                bad(f"bit must be 0..7, got {self.bit!r}")
        if self.kind == "opcode_semantics" and self.opcode not in selftest.OPCODE_VALUES[self.vm]:
            bad(f"unknown VM-{self.vm} opcode {self.opcode!r}")
        if self.kind == "output_stuck":
            if not isinstance(self.output, int) or not 0 <= self.output < program.n_lines:
                bad(f"output index {self.output!r} outside 0..{program.n_lines - 1}")
            if self.value not in (0, 1):
                bad("stuck value must be 0 or 1")
        return self


@dataclass
class Scenario:
    inputs: list = field(default_factory=list)     # of {"at": c, "set": {...}}
    faults: list = field(default_factory=list)     # of FaultSpec
    cycles: int = 0
    seed: int = 0

    @classmethod
    def from_json(cls, d: dict, program: Program) -> "Scenario":
        if not isinstance(d, dict):
            raise ScenarioError("scenario must be a JSON object")
        unknown = set(d) - {"inputs", "faults", "cycles", "seed"}
        if unknown:
            raise ScenarioError(f"unknown scenario keys {sorted(unknown)}")
        cycles, seed = d.get("cycles", 0), d.get("seed", 0)
        if not isinstance(cycles, int) or cycles < 0:
            raise ScenarioError("cycles must be an integer >= 0")
        if not isinstance(seed, int) or not 0 <= seed < 2**64:
            raise ScenarioError("seed must be an unsigned 64-bit integer")
        inputs = d.get("inputs", [])
        if not isinstance(inputs, list):
            raise ScenarioError("inputs must be a list")
        slots = {s.name: s for s in program.slots("input")}
        for entry in inputs:
            if not isinstance(entry, dict) or set(entry) != {"at", "set"}:
                raise ScenarioError(f"input entry needs exactly 'at' and 'set': {entry!r}")
            if not isinstance(entry["at"], int) or entry["at"] < 0:
                raise ScenarioError(f"bad input cycle {entry['at']!r}")
            if not isinstance(entry["set"], dict):
                raise ScenarioError("'set' must be an object")
            for name, v in entry["set"].items():
                if name not in slots:
                    raise ScenarioError(f"unknown input '{name}'")
                check_value(slots[name], v)
        faults = [FaultSpec.from_json(f).validate(program) for f in d.get("faults", [])]
        return cls(inputs, faults, cycles, seed)

    def to_json(self) -> dict:
        return {"inputs": self.inputs, "faults": [f.to_json() for f in self.faults],
                "cycles": self.cycles, "seed": self.seed}


def check_value(slot, v):
    vals = v if isinstance(v, list) else [v]
    if slot.is_array != isinstance(v, list) or len(vals) != slot.count:
        raise ScenarioError(f"input '{slot.name}' needs {slot.count} value(s)")
    for x in vals:
        if isinstance(x, bool):
            x = int(x)
        if not isinstance(x, int) or not slot.lo <= x <= slot.hi:
            raise ScenarioError(f"input '{slot.name}' value {x!r} outside {slot.lo}..{slot.hi}")


def default_inputs(program: Program) -> dict:
    return {s.name: ([s.lo] * s.count if s.is_array else s.lo) for s in program.slots("input")}


# -- the simulator ------------------------------------------------------------------

class Sim:
    def __init__(self, program: Program, config: SimConfig = SimConfig(), seed: int = 0):
        self.program = program
        self.config = config
        self.mcus = (Mcu("MCU1", program, config.mcu), Mcu("MCU2", program, config.mcu))
        self.rng = random.Random(seed)
        self.faults = []
        self.cycle = 0
        self.killed = [False, False]
        self.missed = [0, 0]
        self.hb_lost = [False, False]
        self.seq_out = [0, 0]
        self.last_seq_in = [None, None]
        self.n = program.n_lines
        self.board = (False,) * self.n
        self.lines = [(False,) * self.n, (False,) * self.n]

    def inject(self, fault: FaultSpec) -> None:
        self.faults.append(fault.validate(self.program))

    # fault helpers
    def _active(self, kind: str, mcu: int, cycle: int) -> list:
        return [f for f in self.faults if f.kind == kind and f.mcu == mcu and f.active(cycle)]

    def _apply_due(self, c: int, ev: list):
        for f in self.faults:
            if f.at != c:
                continue
            m = self.mcus[f.mcu - 1]
            details = f.to_json()
            if f.kind in ("code_bitflip", "data_bitflip"):
                bit = f.bit if f.bit is not None else self.rng.randrange(8)
                details["bit"] = bit
                m.flip(f.address, bit)
                if f.duration is None:
                    (m.permanent_flips if f.kind == "code_bitflip"
                     else m.permanent_data_flips).append((f.address, bit))
            elif f.kind == "mcu_kill":
                self.killed[f.mcu - 1] = True
            ev.append(TraceEvent(c, "HARNESS", "fault_injected", details))
        for i, m in enumerate(self.mcus):
            for vm in ("A", "B"):
                hits = [f for f in self._active("opcode_semantics", i + 1, c) if f.vm == vm]
                m.corrupt[vm] = (selftest.OPCODE_VALUES[vm][hits[-1].opcode] if hits
                                 else NO_CORRUPTION)

    def alive(self, i: int) -> bool:
        return not self.killed[i] and self.mcus[i].mode != HALTED

    def step(self, inputs: dict) -> tuple:
        """Advance one lockstep cycle. Returns (board values, events in trace order)."""
        c = self.cycle
        ev = []
        T = self.config.heartbeat_threshold
        self._apply_due(c, ev)

        # heartbeat verdict from the frames of previous cycles
        for i, m in enumerate(self.mcus):
            if self.alive(i) and self.missed[i] >= T and not self.hb_lost[i]:
                self.hb_lost[i] = True
                ev.append(TraceEvent(c, m.name, "heartbeat_timeout", {"missed": self.missed[i]}))

        # reboot countdown, then resync from a partner that has not run yet this cycle
        for i, m in enumerate(self.mcus):
            if self.killed[i] or m.mode != REBOOTING:
                continue
            rev, ready = m.reboot_step(c)
            if ready:
                j = 1 - i
                partner = self.mcus[j]
                if self.killed[j] or partner.mode != RUNNING:
                    m.refuse_resync(rev, f"partner {partner.name} is "
                                    f"{'dead' if self.killed[j] else partner.mode}")
                else:
                    m.finish_resync(partner.state_blob(), rev)
                    self.missed[i] = 0
                    self.hb_lost[i] = False
                    self.last_seq_in[i] = None
            ev += rev

        # four executions: two instances on each running controller
        results = [None, None]
        for i, m in enumerate(self.mcus):
            if not self.killed[i] and m.mode == RUNNING:
                results[i] = m.run_cycle(c, inputs)
                ev += results[i].events

        # frame exchange
        wire = [None, None]
        for i, m in enumerate(self.mcus):
            if not self.alive(i):
                continue
            r = results[i]
            status = ST_ALIVE
            if m.mode == REBOOTING:
                status |= ST_REBOOTING | ST_RESYNC
            od, sd = (r.out_digest, r.state_digest) if r is not None and r.ok else (0, 0)
            self.seq_out[i] = (self.seq_out[i] + 1) & 0xFFFF
            data = Frame(self.seq_out[i], c & 0xFFFFFFFF, od, sd, status).pack()
            if self._active("frame_drop", i + 1, c):
                data = None
            elif self._active("frame_corrupt", i + 1, c):
                pos = self.rng.randrange(8 * FRAME_SIZE)
                buf = bytearray(data)
                buf[pos // 8] ^= 1 << (pos % 8)
                data = bytes(buf)
            wire[i] = data

        # receive, validate, cross-compare
        for i, m in enumerate(self.mcus):
            if not self.alive(i):
                continue
            f = Frame.unpack(wire[1 - i])
            valid = f is not None and f.cycle == c and (
                self.last_seq_in[i] is None
                or 1 <= (f.seq - self.last_seq_in[i]) % 0x10000 <= 0x7FFF)
            if not valid:
                self.missed[i] += 1
                continue
            self.last_seq_in[i] = f.seq
            self.missed[i] = 0
            self.hb_lost[i] = False
            r = results[i]
            if (m.mode == RUNNING and r is not None and r.ok and f.status & ST_ALIVE
                    and not f.status & ST_REBOOTING
                    and (f.out_digest, f.state_digest) != (r.out_digest, r.state_digest)):
                ev.append(TraceEvent(c, m.name, "cross_divergence", {
                    "own_out": r.out_digest, "own_state": r.state_digest,
                    "partner_out": f.out_digest, "partner_state": f.state_digest}))
                m.halt(ev, "cross divergence")

        # drive lines; comparison is complete for this cycle
        zero = (False,) * self.n
        for i, m in enumerate(self.mcus):
            r = results[i]
            drive = (not self.killed[i] and m.mode == RUNNING and r is not None and r.ok
                     and not self.hb_lost[i])
            self.lines[i] = r.lines if drive else zero
            if m.mode == RUNNING and r is not None and r.ok:
                ev.append(TraceEvent(c, m.name, "cycle_ok", {"driven": bool(drive)}))

        sensed = [self._sense(i, c) for i in range(2)]
        board = tuple(a and b for a, b in zip(sensed[0], sensed[1]))

        # readback of each controller's own lines
        for i, m in enumerate(self.mcus):
            if self.killed[i] or m.mode != RUNNING or results[i] is None:
                continue
            bad = m.readback_check(self.lines[i], sensed[i])
            if bad is not None:
                ev.append(TraceEvent(c, m.name, "readback_fail", {
                    "output": bad, "driven": int(self.lines[i][bad]),
                    "sensed": int(sensed[i][bad])}))
                m.halt(ev, "readback")

        for k, (old, new) in enumerate(zip(self.board, board)):
            if old != new:
                ev.append(TraceEvent(c, "BOARD", "output_change", {"output": k, "value": int(new)}))
        self.board = board
        ev.sort(key=lambda e: _RANK[e.source])
        self.cycle += 1
        return board, ev

    def _sense(self, i: int, c: int) -> tuple:
        vals = list(self.lines[i])
        for f in self._active("output_stuck", i + 1, c):
            vals[f.output] = bool(f.value)
        return tuple(vals)

    def modes(self) -> list:
        return ["KILLED" if self.killed[i] else m.mode for i, m in enumerate(self.mcus)]


# -- scenario runs and traces -------------------------------------------------------

def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass
class RunResult:
    lines: list            # JSONL records, header first
    board: list            # board tuple per cycle
    events: list           # all TraceEvents in order
    modes: list            # controller modes per cycle

    def text(self) -> str:
        return "".join(line + "\n" for line in self.lines)


def run(program: Program, scenario: Scenario, config: SimConfig = SimConfig(),
        cycles: Optional[int] = None, observer=None) -> RunResult:
    """Run a scenario and return its deterministic trace.

    ``observer(sim, cycle, inputs)`` is called after every step, for tests
    and the fuzz harness that need per-instance data.
    """
    n = scenario.cycles if cycles is None else cycles
    sim = Sim(program, config, scenario.seed)
    for f in scenario.faults:
        sim.inject(f)
    header = {"type": "header", "tool": "dualsafe", "version": TRACE_VERSION,
              "fingerprint": program.fingerprint, "config_hash": config.digest(),
              "seed": scenario.seed, "cycles": n, "lines": program.n_lines}
    out = RunResult([_dump(header)], [], [], [])
    by_cycle = {}
    for entry in scenario.inputs:
        by_cycle.setdefault(entry["at"], []).append(entry["set"])
    current = default_inputs(program)
    for c in range(n):
        for upd in by_cycle.get(c, []):
            current.update({k: (list(v) if isinstance(v, list) else int(v))
                            for k, v in upd.items()})
        board, ev = sim.step(current)
        if observer is not None:
            observer(sim, c, current)
        out.lines += [_dump(e.to_json()) for e in ev]
        out.lines.append(_dump({"type": "board", "cycle": c, "values": [int(b) for b in board],
                                "modes": sim.modes()}))
        out.board.append(board)
        out.events += ev
        out.modes.append(sim.modes())
    return out
