"""Command-line entry point.

Exit codes: 0 success, 1 verification or fuzz failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import duplex, relay
from .build import ArtifactError, build_program, load_artifacts, write_artifacts
from .codegen_a import CodegenError as CodegenErrorA
from .codegen_b import CodegenError as CodegenErrorB
from .frontend import ModelError, check_exhaustive, compile_source, print_model
from .frontend.exhaustive import HOLDS
from .mcu import LoadError

OK, FAIL, USAGE = 0, 1, 2


class InputError(Exception):
    """Bad user input; reported on stderr with exit code 2."""


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise InputError(f"{path}: {e.strerror}") from None


def _model(path: str):
    src = _read(path)
    try:
        return compile_source(src)
    except ModelError as e:
        raise InputError("\n".join(d.format(path) for d in e.diagnostics)) from None


def _program(path: str):
    """A build directory or a model source file."""
    p = Path(path)
    if p.is_dir():
        try:
            return load_artifacts(p)
        except ArtifactError as e:
            raise InputError(str(e)) from None
    try:
        return build_program(_model(path))
    except (CodegenErrorA, CodegenErrorB, LoadError) as e:
        raise InputError(f"{path}: {e}") from None


def _json(path: str):
    try:
        return json.loads(_read(path))
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: invalid JSON: {e}") from None


# -- commands -----------------------------------------------------------------------

def cmd_build(args) -> int:
    tm = _model(args.model)
    try:
        program = build_program(tm)
    except (CodegenErrorA, CodegenErrorB, LoadError) as e:
        raise InputError(f"{args.model}: {e}") from None
    if args.record_bytes < 1 or args.record_bytes > 255:
        raise InputError("--record-bytes must be 1..255")
    paths = write_artifacts(program, args.out, args.record_bytes, title=tm.name)
    for name in paths:
        print(paths[name])
    print(f"fingerprint {program.fingerprint}")
    return OK


def cmd_relay(args) -> int:
    src = _read(args.netlist)
    try:
        model = relay.translate(relay.parse_schematic(src), args.name)
        compile_source(print_model(model))
    except ModelError as e:
        raise InputError("\n".join(d.format(args.netlist) for d in e.diagnostics)) from None
    text = print_model(model)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return OK


def _scenario(args, program, extra_faults=()):
    d = _json(args.scenario) if args.scenario else {}
    if not isinstance(d, dict):
        raise InputError("scenario must be a JSON object")
    d = dict(d)
    d["faults"] = list(d.get("faults", [])) + list(extra_faults)
    if args.seed is not None:
        d["seed"] = args.seed
    if args.cycles is not None:
        d["cycles"] = args.cycles
    try:
        return duplex.Scenario.from_json(d, program)
    except duplex.ScenarioError as e:
        raise InputError(f"scenario: {e}") from None


def _emit_trace(args, result) -> None:
    if args.trace:
        Path(args.trace).write_text(result.text())
    else:
        sys.stdout.write(result.text())


def cmd_run(args) -> int:
    program = _program(args.model)
    result = duplex.run(program, _scenario(args, program))
    _emit_trace(args, result)
    return OK


def cmd_inject(args) -> int:
    program = _program(args.model)
    faults = []
    for text in args.fault:
        try:
            faults.append(json.loads(text))
        except json.JSONDecodeError as e:
            raise InputError(f"--fault: invalid JSON: {e}") from None
    result = duplex.run(program, _scenario(args, program, faults))
    _emit_trace(args, result)
    final = result.modes[-1] if result.modes else ["RUNNING", "RUNNING"]
    print(f"final modes: {' '.join(final)}", file=sys.stderr)
    return OK


def cmd_check(args) -> int:
    tm = _model(args.model)
    report = check_exhaustive(tm, args.max_states)
    print(report.summary())
    for c, inputs in enumerate(report.witness):
        print(f"  cycle {c}: " + ", ".join(f"{k}={v}" for k, v in inputs.items()))
    return OK if report.verdict == HOLDS else FAIL


def cmd_fuzz(args) -> int:
    from .fuzz import cmd_fuzz as fuzz
    if args.count < 0 or args.cycles is not None and args.cycles < 0:
        raise InputError("--count and --cycles must be >= 0")
    report = fuzz(args.count, 100 if args.cycles is None else args.cycles,
                  args.seed or 0, args.mutate, args.workers)
    sys.stdout.write(report.text())
    return OK if report.ok else FAIL


def cmd_bench(args) -> int:
    from .bench import run_bench
    if args.equations < 1:
        raise InputError("--equations must be >= 1")
    try:
        report = run_bench(args.equations, args.cycles or 10, args.seed or 0)
    except (CodegenErrorA, CodegenErrorB, LoadError) as e:
        raise InputError(f"benchmark model does not fit: {e}") from None
    sys.stdout.write(report.text())
    return OK if report.healthy else FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dualsafe",
                                description="Diverse dual-chain compiler and duplex simulator")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="compile a model into both images")
    b.add_argument("model")
    b.add_argument("--out", default="build")
    b.add_argument("--record-bytes", type=int, default=4,
                   help="payload bytes per HEX record of image B (4 = one instruction)")
    b.set_defaults(func=cmd_build)

    r = sub.add_parser("relay", help="translate a relay netlist into model source")
    r.add_argument("netlist")
    r.add_argument("--out")
    r.add_argument("--name", default="Relay")
    r.set_defaults(func=cmd_relay)

    for name, func, helptext in (("run", cmd_run, "simulate a scenario"),
                                 ("inject", cmd_inject, "simulate with injected faults")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("model", help="model source or build directory")
        s.add_argument("--scenario")
        s.add_argument("--cycles", type=int)
        s.add_argument("--seed", type=int)
        s.add_argument("--trace", help="write the JSONL trace here instead of stdout")
        if name == "inject":
            s.add_argument("--fault", action="append", default=[], metavar="JSON",
                           help="fault spec as a JSON object (repeatable)")
        s.set_defaults(func=func)

    c = sub.add_parser("check", help="exhaustive invariant check")
    c.add_argument("model")
    c.add_argument("--max-states", type=int, default=1_000_000)
    c.set_defaults(func=cmd_check)

    f = sub.add_parser("fuzz", help="differential fuzzing of both chains")
    f.add_argument("--count", "-n", type=int, default=100)
    f.add_argument("--cycles", type=int)
    f.add_argument("--seed", type=int)
    f.add_argument("--mutate", metavar="VM:OPCODE",
                   help="corrupt one opcode on both controllers with self-test off")
    f.add_argument("--workers", type=int, default=1)
    f.set_defaults(func=cmd_fuzz)

    k = sub.add_parser("bench", help="interlocking throughput benchmark")
    k.add_argument("--equations", type=int, default=50000)
    k.add_argument("--cycles", type=int)
    k.add_argument("--seed", type=int)
    k.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
