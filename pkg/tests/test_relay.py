import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualsafe import relay
from dualsafe.frontend import ModelError, complexity_check, print_model, run_trace, typecheck

from conftest import SEAL_IN


def compile_netlist(text):
    return typecheck(relay.translate(relay.parse_schematic(text)))


def outputs(tm, trace):
    return [o.outputs for o in run_trace(tm, trace)]


def test_seal_in_shape():
    sch = relay.parse_schematic(SEAL_IN)
    assert sch.inputs == ("start", "stop")
    assert sch.coils == ("K",)
    assert sch.outputs == ("motor",)


def test_seal_in_three_phase_table(seal_tm):
    trace = [{"start": 1, "stop": 0}, {"start": 0, "stop": 0}, {"start": 0, "stop": 1}]
    assert [o["motor"] for o in outputs(seal_tm, trace)] == [1, 1, 0]


def test_seal_in_full_truth_table(seal_tm):
    # hand-evaluated: K' = (start or K) and not stop, motor = K'
    for k0 in (0, 1):
        for start in (0, 1):
            for stop in (0, 1):
                trace = ([{"start": 1, "stop": 0}] if k0 else []) + [{"start": start, "stop": stop}]
                want = int((start or k0) and not stop)
                assert outputs(seal_tm, trace)[-1]["motor"] == want


def test_zero_coils_is_a_plain_copy():
    tm = compile_netlist("INPUT i; OUTPUT o = i;")
    assert not tm.state
    assert "o := i" in print_model(tm.model)
    assert [o["o"] for o in outputs(tm, [{"i": 0}, {"i": 1}])] == [0, 1]


def test_normally_closed_contact():
    tm = compile_netlist("INPUT i; OUTPUT o = !i;")
    assert outputs(tm, [{"i": 0}])[0]["o"] == 1
    assert outputs(tm, [{"i": 1}])[0]["o"] == 0


def test_comments_and_layout():
    tm = compile_netlist("# header\nINPUT a,\n  b; # two inputs\nOUTPUT q = a & (b | !a);\n")
    assert [o["q"] for o in outputs(tm, [{"a": 1, "b": 0}, {"a": 1, "b": 1}])] == [0, 1]


@pytest.mark.parametrize("text,code,line", [
    ("INPUT a;\nOUTPUT q = x;", "unknown-reference", 2),
    ("INPUT a;\nCOIL K = a;\nCOIL K = !a;", "duplicate-target", 3),
    ("INPUT a, a;", "duplicate", 1),
    ("INPUT a;\nOUTPUT q = a;\nOUTPUT r = q;", "unknown-reference", 3),
    ("INPUT a;\nOUTPUT q = a &;", "syntax", 2),
    ("INPUT a;\nTIMER t = a;", "syntax", 2),
    ("INPUT a;\nOUTPUT q = a $ a;", "syntax", 2),
])
def test_netlist_errors(text, code, line):
    with pytest.raises(ModelError) as e:
        relay.parse_schematic(text)
    d = e.value.diagnostics[0]
    assert d.code == code and d.span.line == line


def test_snapshot_names_avoid_collisions():
    tm = compile_netlist("INPUT pre_K; COIL K = pre_K | K; OUTPUT o = K;")
    assert [o["o"] for o in outputs(tm, [{"pre_K": 1}, {"pre_K": 0}])] == [1, 1]


# -- random schematics --------------------------------------------------------------------

def random_net(rng, names, depth=0):
    if depth >= 2 or rng.random() < 0.4:
        n = rng.choice(names)
        return f"!{n}" if rng.random() < 0.3 else n
    op = rng.choice(" & | ".split())
    items = [random_net(rng, names, depth + 1) for _ in range(rng.randint(2, 3))]
    return "(" + f" {op} ".join(items) + ")"


def random_rungs(seed):
    rng = random.Random(seed)
    ins = [f"x{i}" for i in range(rng.randint(1, 4))]
    coils = [f"C{i}" for i in range(rng.randint(0, 4))]
    outs = [f"y{i}" for i in range(rng.randint(1, 3))]
    rungs = [f"COIL {c} = {random_net(rng, ins + coils)};" for c in coils]
    rungs += [f"OUTPUT {o} = {random_net(rng, ins + coils)};" for o in outs]
    return ins, rungs


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), perm_seed=st.integers(0, 10**6))
def test_rung_order_does_not_matter(seed, perm_seed):
    ins, rungs = random_rungs(seed)
    head = f"INPUT {', '.join(ins)};\n"
    shuffled = rungs[:]
    random.Random(perm_seed).shuffle(shuffled)
    a = compile_netlist(head + "\n".join(rungs))
    b = compile_netlist(head + "\n".join(shuffled))
    rng = random.Random(seed)
    trace = [{x: rng.randint(0, 1) for x in ins} for _ in range(12)]
    assert outputs(a, trace) == outputs(b, trace)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_translation_always_checks(seed):
    ins, rungs = random_rungs(seed)
    tm = compile_netlist(f"INPUT {', '.join(ins)};\n" + "\n".join(rungs))
    assert complexity_check(tm).max_ops > 0
