"""Throughput of full duplex cycles on the interlocking benchmark model."""

from __future__ import annotations

import random
import time
from dataclasses import dataclass

from .build import build_program
from .duplex import Sim, SimConfig
from .frontend import typecheck
from .gen import BENCH_INPUTS, bench_model


@dataclass
class BenchReport:
    equations: int
    cycles: int
    build_seconds: float
    run_seconds: float
    fingerprint: str
    healthy: bool              # every cycle was cycle_ok on both controllers

    @property
    def cycles_per_second(self) -> float:
        return self.cycles / self.run_seconds if self.run_seconds > 0 else float("inf")

    @property
    def equations_per_second(self) -> float:
        return self.equations * self.cycles_per_second

    def text(self) -> str:
        return (f"bench: {self.equations} equations, fingerprint {self.fingerprint}\n"
                f"  build {self.build_seconds:.2f} s\n"
                f"  {self.cycles} duplex cycles (4 instances each) in {self.run_seconds:.3f} s\n"
                f"  {self.cycles_per_second:.2f} cycles/s, "
                f"{self.equations_per_second:,.0f} equations/s per instance, "
                f"{4 * self.equations_per_second:,.0f} equation evaluations/s in total\n"
                f"  all cycles healthy: {'yes' if self.healthy else 'NO'}\n")


def run_bench(equations: int, cycles: int = 10, seed: int = 0) -> BenchReport:
    t0 = time.perf_counter()
    program = build_program(typecheck(bench_model(equations, seed)))
    t1 = time.perf_counter()
    sim = Sim(program, SimConfig(), seed)
    rng = random.Random(seed)
    vectors = [{"x": [rng.randint(0, 1) for _ in range(BENCH_INPUTS)]} for _ in range(cycles + 1)]
    sim.step(vectors[0])            # warm-up cycle: first-call costs stay out of the timing
    healthy = True
    t2 = time.perf_counter()
    for c in range(cycles):
        _, events = sim.step(vectors[c + 1])
        healthy &= sum(e.kind == "cycle_ok" for e in events) == 2
    t3 = time.perf_counter()
    return BenchReport(equations, cycles, t1 - t0, t3 - t2, program.fingerprint, healthy)
