import random

import pytest

from dualsafe import fuzz
from dualsafe.bench import run_bench
from dualsafe.build import build_program
from dualsafe.frontend import Interpreter, Trap, compile_source, initial_state, print_model
from dualsafe.frontend import ast as A
from dualsafe.frontend import interp as interp_mod
from dualsafe.gen import GenConfig, bench_model, gen_program, random_inputs


def gen_text(seed, **kw):
    return print_model(gen_program(GenConfig(seed=seed, **kw)))


def test_budget_zero_gives_empty_body():
    text = gen_text(1, budget=0)
    assert text.rstrip().endswith("OPERATION user_logic BEGIN\nEND")
    compile_source(text)


def test_same_seed_same_text():
    assert gen_text(7) == gen_text(7)
    assert gen_text(7) != gen_text(8)


@pytest.mark.parametrize("seed", range(0, 400, 7))
def test_generated_models_build(seed):
    tm = compile_source(gen_text(seed))
    build_program(tm)


def test_random_inputs_respect_declared_ranges():
    tm = compile_source(gen_text(3))
    rng = random.Random(0)
    for _ in range(50):
        for sym in tm.inputs:
            v = random_inputs(tm, rng)[sym.name]
            for x in v if isinstance(v, list) else [v]:
                assert sym.lo <= x <= sym.hi


def test_empty_campaign():
    rep = fuzz.cmd_fuzz(0, 100)
    assert rep.ok and rep.failures == [] and rep.executions == 0
    assert rep.text().startswith("fuzz: 0 models")


def test_small_campaign_is_clean():
    rep = fuzz.cmd_fuzz(25, 25, seed=500)
    assert rep.ok, rep.text()
    assert rep.executions == 25 * 25 * 4


def test_parallel_campaign_matches_serial():
    a = fuzz.cmd_fuzz(6, 10, seed=40, mutate="B:SUB")
    b = fuzz.cmd_fuzz(6, 10, seed=40, mutate="B:SUB", workers=2)
    assert [(f.seed, f.cycle, f.reason) for f in a.failures] == \
        [(f.seed, f.cycle, f.reason) for f in b.failures]


# -- mutation check ----------------------------------------------------------------------

def plus_observable(seed, m):
    """Oracle: does making the model's ``+`` off by one change any result?"""
    tm = compile_source(gen_text(seed))
    rng = random.Random(seed ^ 0x5EED)
    vectors = [random_inputs(tm, rng) for _ in range(m)]
    original = interp_mod.apply_binop

    def trace(op_fn):
        interp_mod.apply_binop = op_fn
        try:
            it, state, out = Interpreter(tm), initial_state(tm), []
            for v in vectors:
                o = it.run_cycle(state, v)
                state = o.state
                out.append((o.outputs, state))
            return out
        except Trap as t:
            return ("trap", t.kind, len(out))
        finally:
            interp_mod.apply_binop = original

    return trace(original) != trace(lambda op, a, b: original(op, a, b) + (op == "+"))


@pytest.mark.parametrize("mutation", ["A:ADD", "B:ADD"])
def test_broken_add_is_caught_wherever_it_matters(mutation):
    seeds, m = range(200, 260), 30
    rep = fuzz.cmd_fuzz(len(seeds), m, seed=seeds[0], mutate=mutation)
    caught = {f.seed for f in rep.failures}
    assert caught == {s for s in seeds if plus_observable(s, m)}
    assert caught
    for f in rep.failures:
        assert f.repro == f"dualsafe fuzz --count 1 --seed {f.seed} --cycles {m} --mutate {mutation}"
        assert f"seed {f.seed}" in rep.text()


# -- benchmark ---------------------------------------------------------------------------

@pytest.mark.parametrize("n", [1, 63, 64, 130])
def test_bench_model_has_one_equation_per_relay(n):
    m = bench_model(n)
    assert m.state[0].type == A.ArrayType(n, A.BOOL)
    loops = [s for s in m.body if isinstance(s, A.For)]
    per_cycle = sum((l.hi.value - l.lo.value + 1) * len(l.body) for l in loops)
    per_cycle += sum(1 for s in m.body if isinstance(s, A.Assign) and s.target == "s")
    assert per_cycle == n
    compile_source(print_model(m))


def test_bench_small_runs_and_is_deterministic():
    a, b = run_bench(1, cycles=3), run_bench(1, cycles=3)
    assert a.healthy and a.cycles_per_second > 0
    assert a.fingerprint == b.fingerprint
    assert "cycles/s" in a.text()
