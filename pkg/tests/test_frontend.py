import pytest

from dualsafe.frontend import (
    Interpreter, ModelError, Trap, check_exhaustive, compile_source, complexity_check,
    initial_state, parse, print_model, run_trace, typecheck,
)

MINIMAL = "MACHINE M INPUTS i:BOOL OUTPUTS o:BOOL OPERATION user_logic BEGIN o := i END"

COUNTER_WRAP = """
MACHINE Counter
STATE c : INT(0..3) := 0;
INVARIANT c < 4
OPERATION user_logic BEGIN
  IF c = 3 THEN c := 0 ELSE c := c + 1 END
END
"""

COUNTER_NOWRAP = """
MACHINE Counter
STATE c : INT(0..3) := 0;
INVARIANT c < 4
OPERATION user_logic BEGIN
  c := c + 1
END
"""


def codes(src):
    with pytest.raises(ModelError) as e:
        compile_source(src)
    assert all(d.span.line >= 1 for d in e.value.diagnostics)
    return e.value.codes


# -- parse -------------------------------------------------------------------------

def test_minimal_model():
    m = parse(MINIMAL)
    assert m.name == "M"
    assert [d.name for d in m.inputs] == ["i"]
    assert [d.name for d in m.outputs] == ["o"]
    assert m.state == ()


def test_twenty_inputs_eight_outputs():
    ins = "; ".join(f"i{k}:BOOL" for k in range(20))
    outs = "; ".join(f"o{k}:BOOL" for k in range(8))
    body = "; ".join(f"o{k} := i{k} AND i{k + 8}" for k in range(8))
    tm = compile_source(f"MACHINE SK1 INPUTS {ins} OUTPUTS {outs} "
                        f"OPERATION user_logic BEGIN {body} END")
    assert len(tm.inputs) == 20 and len(tm.outputs) == 8


def test_operation_must_be_user_logic():
    assert codes("MACHINE M OPERATION main BEGIN END") == ["operation-name"]


@pytest.mark.parametrize("src,code", [
    ("MACHINE M INPUTS i:BOOL; i:BOOL OPERATION user_logic BEGIN END", "duplicate"),
    ("MACHINE M FOO OPERATION user_logic BEGIN END", "unknown-section"),
    ("MACHINE M OPERATION user_logic BEGIN WHILE TRUE DO END END", "syntax"),
    ("MACHINE M INPUTS i:INT(5..1) OPERATION user_logic BEGIN END", "range"),
    ("MACHINE M OUTPUTS o:BOOL OPERATION user_logic BEGIN o := END", "syntax"),
])
def test_parse_errors(src, code):
    assert code in codes(src)


def test_diagnostic_format_has_file_line_col():
    with pytest.raises(ModelError) as e:
        compile_source("MACHINE M\nOPERATION main BEGIN END")
    assert e.value.diagnostics[0].format("m.b0").startswith("m.b0:2:")


# -- typecheck ---------------------------------------------------------------------

def test_bool_assignment_well_typed():
    tm = typecheck(parse(MINIMAL))
    assert tm.outputs[0].is_bool


@pytest.mark.parametrize("src,code", [
    ("MACHINE M INPUTS b:BOOL OUTPUTS n:INT(0..9) OPERATION user_logic BEGIN n := b END",
     "type-mismatch"),
    ("MACHINE M STATE n:INT(0..9); s:INT(0..100) OPERATION user_logic BEGIN "
     "FOR k FROM 0 TO n DO s := k END END", "non-constant-bound"),
    ("MACHINE M INPUTS i:BOOL OPERATION user_logic BEGIN i := TRUE END", "assign-input"),
    ("MACHINE M STATE s:INT(0..9) OPERATION user_logic BEGIN "
     "FOR k FROM 0 TO 3 DO k := 1 END END", "assign-loop-index"),
    ("MACHINE M INPUTS b:BOOL STATE a:ARRAY 3 OF BOOL OPERATION user_logic BEGIN "
     "a(b) := TRUE END", "index-type"),
    ("MACHINE M STATE s:INT(0..9) OPERATION user_logic BEGIN s := z END",
     "unknown-identifier"),
])
def test_type_errors(src, code):
    assert code in codes(src)


# -- complexity ---------------------------------------------------------------------

def test_cost_of_copy_is_two():
    assert complexity_check(compile_source(MINIMAL)).max_ops == 2


def test_cost_of_empty_body_is_zero():
    tm = compile_source("MACHINE M OPERATION user_logic BEGIN END")
    assert complexity_check(tm).max_ops == 0


def test_cost_of_counted_loop():
    tm = compile_source("MACHINE M STATE s:INT(0..100) OPERATION user_logic BEGIN "
                        "FOR k FROM 0 TO 9 DO s := s + 1 END END")
    # s := s + 1 is load, literal, add, store = 4; loop overhead 2 per trip
    assert complexity_check(tm).max_ops == 10 * (4 + 2)


def test_if_costs_conditions_plus_worst_branch():
    tm = compile_source("MACHINE M INPUTS a:BOOL STATE s:INT(0..100) OPERATION user_logic "
                        "BEGIN IF a THEN s := 1 ELSE s := s + 1 * 2 END END")
    assert complexity_check(tm).max_ops == 1 + 6


# -- interpreter -------------------------------------------------------------------

def test_outputs_reset_each_cycle():
    tm = compile_source("MACHINE M INPUTS i:BOOL OUTPUTS o:BOOL; n:INT(3..9) "
                        "OPERATION user_logic BEGIN IF i THEN o := TRUE; n := 7 END END")
    outs = [o.outputs for o in run_trace(tm, [{"i": 1}, {"i": 0}])]
    assert outs == [{"o": 1, "n": 7}, {"o": 0, "n": 3}]


def test_division_truncates_toward_zero():
    tm = compile_source("MACHINE M INPUTS a:INT(-9..9); b:INT(-9..9) "
                        "OUTPUTS q:INT(-9..9); r:INT(-9..9) "
                        "OPERATION user_logic BEGIN q := a / b; r := a MOD b END")
    out = next(run_trace(tm, [{"a": -7, "b": 2}]))
    assert out.outputs == {"q": -3, "r": -1}
    with pytest.raises(Trap) as t:
        next(run_trace(tm, [{"a": 1, "b": 0}]))
    assert t.value.kind == "div_zero"


def test_range_trap():
    tm = compile_source(COUNTER_NOWRAP)
    with pytest.raises(Trap) as t:
        list(run_trace(tm, [{}] * 4))
    assert t.value.kind == "range"


def test_state_inits_and_defaults():
    tm = compile_source("MACHINE M STATE a:INT(-5..5); b:BOOL; c:ARRAY 2 OF INT(2..4); "
                        "d:INT(0..9) := 7 OPERATION user_logic BEGIN END")
    assert initial_state(tm) == {"a": -5, "b": 0, "c": [2, 2], "d": 7}


# -- exhaustive checking ----------------------------------------------------------------

def test_invariant_true_holds():
    tm = compile_source("MACHINE M INPUTS i:BOOL STATE s:BOOL INVARIANT TRUE "
                        "OPERATION user_logic BEGIN s := i END")
    assert check_exhaustive(tm).verdict == "holds"


def test_wrapping_counter_holds_with_four_states():
    assert check_exhaustive(compile_source(COUNTER_WRAP)).summary() == "holds, 4 states"


def test_counter_without_wrap_traps_after_four_cycles():
    r = check_exhaustive(compile_source(COUNTER_NOWRAP))
    assert r.verdict == "trap" and r.trap == "range"
    assert len(r.witness) == 4


def test_invariant_violation_witness_replays():
    tm = compile_source("MACHINE M INPUTS up:BOOL STATE c:INT(0..7) INVARIANT c <= 2 "
                        "OPERATION user_logic BEGIN IF up AND c < 7 THEN c := c + 1 END END")
    r = check_exhaustive(tm)
    assert r.verdict == "violated"
    assert len(r.witness) == 3
    interp, state = Interpreter(tm), initial_state(tm)
    for inputs in r.witness:
        out = interp.run_cycle(state, inputs)
        state = out.state
    assert not interp.eval_invariant({**r.witness[-1], **out.outputs, **state})


def test_wide_state_is_too_large():
    tm = compile_source("MACHINE M STATE x:INT(-2147483648..2147483647) "
                        "OPERATION user_logic BEGIN x := 0 END")
    r = check_exhaustive(tm, 10_000)
    assert r.verdict == "too-large"
    assert r.estimate == 2**32
    assert "too large" in r.summary()


def test_print_parse_identity_on_example():
    from conftest import KITCHEN
    m = parse(KITCHEN)
    assert parse(print_model(m)) == m
