"""Differential fuzzing: random models, both chains, the reference interpreter.

Each job generates a model from its seed, builds both images, runs the
duplex simulator with random inputs and checks, every cycle, that each
controller's VM-A and VM-B results equal the interpreter's byte for byte
and that no anomaly event was raised.
"""

from __future__ import annotations

import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import duplex
from .build import build_program
from .frontend import Interpreter, Trap, compile_source, initial_state, print_model
from .gen import GenConfig, gen_program, random_inputs
from .mcu import RUNNING, McuConfig

QUIET = {"cycle_ok", "output_change"}


@dataclass
class FuzzFailure:
    seed: int
    cycle: int
    reason: str
    repro: str


@dataclass
class FuzzReport:
    n: int
    cycles: int
    failures: list = field(default_factory=list)
    executions: int = 0       # VM instance runs that were compared

    @property
    def ok(self) -> bool:
        return not self.failures

    def text(self) -> str:
        lines = [f"fuzz: {self.n} models x {self.cycles} cycles, {self.executions} "
                 f"instance runs compared, {len(self.failures)} failure(s)"]
        for f in sorted(self.failures, key=lambda f: f.seed):
            lines.append(f"  seed {f.seed} cycle {f.cycle}: {f.reason}")
            lines.append(f"    repro: {f.repro}")
        return "\n".join(lines) + "\n"


def canonical(tm, values: dict, syms) -> bytes:
    """Interpreter values in the controllers' canonical serialization."""
    flat = []
    for s in syms:
        v = values[s.name]
        flat += list(v) if isinstance(v, (list, tuple)) else [v]
    return np.asarray(flat, "<i4").tobytes()


def repro_command(seed: int, m: int, mutate: Optional[str]) -> str:
    cmd = f"dualsafe fuzz --count 1 --seed {seed} --cycles {m}"
    return cmd + (f" --mutate {mutate}" if mutate else "")


def fuzz_one(seed: int, m: int, mutate: Optional[str] = None,
             gen: Optional[GenConfig] = None) -> tuple:
    """Run one job. Returns (failure or None, compared instance runs).

    ``mutate`` is ``"VM:OPCODE"``: that opcode is corrupted on both
    controllers with the self-test switched off, so only the comparison
    between the two chains can catch it.
    """
    repro = repro_command(seed, m, mutate)

    def fail(cycle, reason):
        return FuzzFailure(seed, cycle, reason, repro)

    cfg = gen or GenConfig(seed=seed)
    try:
        tm = compile_source(print_model(gen_program(cfg)))
        program = build_program(tm)
    except Exception as e:          # any rejection of a generated model is a finding
        return fail(-1, f"build: {type(e).__name__}: {e}"), 0

    rng = random.Random(seed ^ 0x5EED)
    vectors = [random_inputs(tm, rng) for _ in range(m)]
    return differential(tm, program, vectors, seed, mutate, repro)


def differential(tm, program, vectors: list, seed: int = 0, mutate: Optional[str] = None,
                 repro: str = "") -> tuple:
    """Three-way comparison of one model over an input trace; see ``fuzz_one``."""
    m = len(vectors)

    def fail(cycle, reason):
        return FuzzFailure(seed, cycle, reason, repro)

    interp = Interpreter(tm)
    state = initial_state(tm)
    expected = []
    try:
        for c, inp in enumerate(vectors):
            out = interp.run_cycle(state, inp)
            state = out.state
            expected.append((canonical(tm, out.outputs, tm.outputs),
                             canonical(tm, state, tm.state)))
    except Trap as t:
        return fail(c, f"reference interpreter trapped: {t}"), 0

    faults = []
    mcu_cfg = McuConfig()
    if mutate:
        vm, op = mutate.split(":")
        faults = [duplex.FaultSpec("opcode_semantics", mcu=i, vm=vm, opcode=op)
                  for i in (1, 2)]
        mcu_cfg = McuConfig(selftest_enabled=False)
    scenario = duplex.Scenario([{"at": c, "set": v} for c, v in enumerate(vectors)],
                               faults, m, seed)
    problems = []
    compared = [0]

    def observe(sim, c, _inputs):
        if problems:
            return
        want_out, want_state = expected[c]
        for mcu in sim.mcus:
            if mcu.mode != RUNNING or mcu.cycle != c or not mcu.last:
                continue
            last = mcu.last
            for vm in ("a", "b"):
                compared[0] += 1
                if last[f"out_{vm}"] != want_out or last[f"state_{vm}"] != want_state:
                    problems.append(fail(c, f"{mcu.name} VM-{vm.upper()} differs from the "
                                            "reference interpreter"))
                    return

    try:
        result = duplex.run(program, scenario, duplex.SimConfig(mcu=mcu_cfg), observer=observe)
    except Exception as e:
        return fail(-1, f"simulator: {type(e).__name__}: {e}"), compared[0]
    noisy = [e for e in result.events if e.kind not in QUIET and e.source != "HARNESS"]
    if noisy:
        e = noisy[0]
        return fail(e.cycle, f"{e.source} {e.kind} {e.details}"), compared[0]
    if problems:
        return problems[0], compared[0]
    return None, compared[0]


def _job(args):
    return fuzz_one(*args)


def cmd_fuzz(n: int, m: int, seed: int = 0, mutate: Optional[str] = None,
             workers: int = 1) -> FuzzReport:
    """Fuzz ``n`` models with seeds ``seed .. seed+n-1`` for ``m`` cycles each."""
    report = FuzzReport(n, m)
    jobs = [(seed + i, m, mutate) for i in range(n)]
    if workers > 1 and n > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_job, jobs, chunksize=max(1, n // (8 * workers))))
    else:
        results = [_job(j) for j in jobs]
    for failure, compared in results:
        report.executions += compared
        if failure is not None:
            report.failures.append(failure)
    report.failures.sort(key=lambda f: f.seed)
    return report


# -- single bit-flip campaign ----------------------------------------------------------

@dataclass
class FlipOutcome:
    seed: int
    fault: dict
    effective: bool            # the faulty controller's results left the reference
    first_effect: int = -1     # cycle of the first deviating instance result
    detected_at: int = -1      # cycle of the first divergence event on that controller
    unsafe_cycles: list = field(default_factory=list)   # cycles with a wrong driven value

    @property
    def ok(self) -> bool:
        timely = not self.effective or self.detected_at == self.first_effect
        return timely and not self.unsafe_cycles


def _used_ranges(program) -> dict:
    """Byte ranges worth flipping: the loaded code and the allocated data."""
    a, b = program.image_a, program.image_b

    def data_span(layout):
        ends = [s.addr + s.size for s in layout.slots]
        if layout.scratch_size:
            ends.append(layout.scratch_addr + layout.scratch_size)
        lo = min([s.addr for s in layout.slots] + ([layout.scratch_addr]
                                                    if layout.scratch_size else []))
        return lo, max(ends)

    return {("code_bitflip", "A"): (a.base, a.base + len(a.code)),
            ("code_bitflip", "B"): (b.base, b.base + len(b.code)),
            ("data_bitflip", "A"): data_span(a.layout),
            ("data_bitflip", "B"): data_span(b.layout)}


def flip_one(program, tm, vectors, reference, fault: duplex.FaultSpec, seed: int) -> FlipOutcome:
    """Run one injected bit flip and check timely detection and board safety.

    ``reference`` holds the fault-free (outputs, state) canonical bytes and
    the fault-free board values per cycle.
    """
    target = fault.mcu - 1
    out = FlipOutcome(seed, fault.to_json(), False)
    ref_bytes, ref_board = reference
    n = len(vectors)

    def observe(sim, c, _inputs):
        m = sim.mcus[target]
        if not out.effective and m.mode != duplex.HALTED and m.cycle == c and m.last \
                and c >= fault.at:
            last = m.last
            want_out, want_state = ref_bytes[c]
            if (last["status_a"] or last["status_b"]
                    or any(last[f"out_{v}"] != want_out or last[f"state_{v}"] != want_state
                           for v in "ab")):
                out.effective = True
                out.first_effect = c
        for i in range(2):
            lines = sim.lines[i]
            if any(lines) and lines != ref_board[c]:
                out.unsafe_cycles.append(c)
        if any(b and not r for b, r in zip(sim.board, ref_board[c])):
            out.unsafe_cycles.append(c)

    scenario = duplex.Scenario([{"at": c, "set": v} for c, v in enumerate(vectors)],
                               [fault], n, seed)
    result = duplex.run(program, scenario, observer=observe)
    name = f"MCU{fault.mcu}"
    hits = [e.cycle for e in result.events if e.source == name
            and e.kind in ("local_divergence", "cross_divergence")]
    out.detected_at = hits[0] if hits else -1
    out.unsafe_cycles = sorted(set(out.unsafe_cycles))
    return out


def flip_campaign(n_faults: int, seed: int = 0, cycles: int = 20,
                  faults_per_model: int = 10) -> list:
    """``n_faults`` random single code/data bit flips spread over fuzzed models."""
    rng = random.Random(seed)
    outcomes = []
    model_seed = seed
    while len(outcomes) < n_faults:
        model_seed += 1
        tm = compile_source(print_model(gen_program(GenConfig(seed=model_seed))))
        program = build_program(tm)
        vrng = random.Random(model_seed)
        vectors = [random_inputs(tm, vrng) for _ in range(cycles)]
        ref_bytes = []
        interp, state = Interpreter(tm), initial_state(tm)
        for v in vectors:
            o = interp.run_cycle(state, v)
            state = o.state
            ref_bytes.append((canonical(tm, o.outputs, tm.outputs), canonical(tm, state, tm.state)))
        clean = duplex.run(program, duplex.Scenario(
            [{"at": c, "set": v} for c, v in enumerate(vectors)], [], cycles, model_seed))
        reference = (ref_bytes, clean.board)
        ranges = _used_ranges(program)
        for _ in range(min(faults_per_model, n_faults - len(outcomes))):
            kind = rng.choice(("code_bitflip", "data_bitflip"))
            vm = rng.choice("AB")
            lo, hi = ranges[(kind, vm)]
            fault = duplex.FaultSpec(kind, mcu=rng.choice((1, 2)), vm=vm,
                                     address=rng.randrange(lo, hi), bit=rng.randrange(8),
                                     at=rng.randrange(cycles // 2),
                                     duration=rng.choice((None, 1)))
            outcomes.append(flip_one(program, tm, vectors, reference, fault, model_seed))
    return outcomes
