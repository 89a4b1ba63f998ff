"""Stored instruction test vectors for both VMs.

Each opcode has one tiny program with hand-computed expected results. A
vector runs in its own 1 KiB scratch memory, so it never touches the
controller's real images. When a vector fails, the whole suite is run
and the pattern of failing vectors is looked up in a fault dictionary
(one entry per opcode) to name the faulty instruction.
"""

from __future__ import annotations

import functools
import struct
from dataclasses import dataclass

import numpy as np

from . import vm_a, vm_b
from .vmstatus import NO_CORRUPTION, OK, TRAP_EXPLICIT

SCRATCH = 1024
D = 0x200          # data area of the scratch memory
R, R2, P, P2 = D, D + 4, D + 8, D + 12
T = D + 0x40       # 4-word table preset to 10, 20, 30, 40
B = D + 0x80       # bit array, byte 0 preset to 0x24


@dataclass(frozen=True)
class Vector:
    opcode: str
    code: bytes
    status: int
    expect: tuple          # of (address, value) 32-bit words
    preset: tuple = ()     # of (address, value) words written before running
    preset_bytes: tuple = ()


def _asm_a(*items) -> bytes:
    """Tiny two-pass assembler for VM-A vectors; strings ending in ':' are labels."""
    labels, pc = {}, 0
    for it in items:
        if isinstance(it, str):
            labels[it[:-1]] = pc
        else:
            pc += vm_a.instr_size(it[0])
    out = b""
    for it in items:
        if not isinstance(it, str):
            out += vm_a.encode(it[0], *(labels.get(a, a) if isinstance(a, str) else a
                                        for a in it[1:]))
    return out


def _vectors_a() -> list:
    H = ("HALT",)
    table = tuple((T + 4 * i, 10 * (i + 1)) for i in range(4))

    def arith(op, a, b, want):
        return Vector(op, _asm_a(("PUSH", a), ("PUSH", b), (op,), ("STORE", R), H), OK,
                      ((R, want),))

    v = [
        Vector("HALT", _asm_a(H), OK, ()),
        Vector("PUSH", _asm_a(("PUSH", 123456), ("STORE", R), H), OK, ((R, 123456),)),
        Vector("LOAD", _asm_a(("LOAD", P), ("STORE", R), H), OK, ((R, -77),), ((P, -77),)),
        Vector("STORE", _asm_a(("PUSH", -9), ("STORE", R), H), OK, ((R, -9),)),
        Vector("LDXW", _asm_a(("PUSH", 2), ("LDXW", T, 4), ("STORE", R), H), OK,
               ((R, 30),), table),
        Vector("STXW", _asm_a(("PUSH", 1), ("PUSH", 99), ("STXW", T, 4), ("LOAD", T + 4),
                              ("STORE", R), H), OK, ((R, 99),), table),
        Vector("LDXB", _asm_a(("PUSH", 5), ("LDXB", B, 16), ("STORE", R), H), OK, ((R, 1),),
               preset_bytes=((B, 0x24),)),
        Vector("STXB", _asm_a(("PUSH", 3), ("PUSH", 1), ("STXB", B, 16), ("LOAD", B),
                              ("STORE", R), H), OK, ((R, 8),)),
        Vector("CLR", _asm_a(("CLR", T, 8), ("LOAD", T), ("STORE", R), ("LOAD", T + 4),
                             ("STORE", R2), H), OK, ((R, 0), (R2, 0)), table),
        arith("ADD", 7, 5, 12), arith("SUB", 7, 12, -5), arith("MUL", 7, -6, -42),
        arith("DIV", 55, 7, 7), arith("MOD", -55, 7, -6),
        Vector("NEG", _asm_a(("PUSH", 9), ("NEG",), ("STORE", R), H), OK, ((R, -9),)),
        arith("AND", 1, 1, 1), arith("OR", 0, 0, 0), arith("XOR", 1, 0, 1),
        Vector("NOT", _asm_a(("PUSH", 1), ("NOT",), ("STORE", R), H), OK, ((R, 0),)),
        arith("EQ", 4, 4, 1), arith("NE", 4, 4, 0), arith("LT", 4, 5, 1),
        arith("LE", 5, 4, 0), arith("GT", 5, 4, 1), arith("GE", 4, 5, 0),
        Vector("RANGECHK", _asm_a(("PUSH", 5), ("RANGECHK", 5, 5), ("STORE", R), H), OK,
               ((R, 5),)),
        Vector("JMP", _asm_a(("JMP", "x"), ("PUSH", 1), ("STORE", R), H, "x:", ("PUSH", 2),
                             ("STORE", R), H), OK, ((R, 2),)),
        Vector("JZ", _asm_a(("PUSH", 0), ("JZ", "x"), ("PUSH", 1), ("STORE", R), H, "x:",
                            ("PUSH", 2), ("STORE", R), H), OK, ((R, 2),)),
        Vector("LOOP", _asm_a(("PUSH", 0), ("STORE", P), "top:", ("LOOP", P, 3, "top"),
                              ("LOAD", P), ("STORE", R), H), OK, ((R, 4),)),
    ]
    assert [x.opcode for x in v] == vm_a.OPCODE_NAMES
    return v


def _vectors_b() -> list:
    table = tuple((T + 4 * i, 10 * (i + 1)) for i in range(4))
    equ = f".equ R, {R}\n.equ R2, {R2}\n.equ P, {P}\n.equ T, {T}\n.equ B, {B}\n"

    def asm(body: str) -> bytes:
        return vm_b.to_bytes(vm_b.assemble(equ + body))

    def rrr(op, a, b, want):
        return Vector(op, asm(f"ADDI r1, r0, {a}\nADDI r2, r0, {b}\n{op} r3, r1, r2\n"
                              "SW r3, [R]\nHALT"), OK, ((R, want),))

    def check(op, setup, ins):
        return Vector(op, asm(f"{setup}\n{ins}\nSW r1, [R]\nHALT"), OK,
                      ((R, int(setup.split()[-1])),))

    branch_tail = "ADDI r1, r0, 1\nSW r1, [R]\nHALT\nx:\nADDI r1, r0, 2\nSW r1, [R]\nHALT"
    v = [
        Vector("HALT", asm("HALT"), OK, ()),
        Vector("TRAP", asm("TRAP\nHALT"), TRAP_EXPLICIT, ()),
        Vector("ADDI", asm("ADDI r1, r0, -300\nSW r1, [R]\nHALT"), OK, ((R, -300),)),
        Vector("ORI", asm("ORI r1, r0, 0x5A5A\nSW r1, [R]\nHALT"), OK, ((R, 0x5A5A),)),
        Vector("XORI", asm("ADDI r1, r0, 240\nXORI r1, r1, 255\nSW r1, [R]\nHALT"), OK,
               ((R, 15),)),
        Vector("LUI", asm("LUI r1, 0x1234\nSW r1, [R]\nHALT"), OK, ((R, 0x12340000),)),
        Vector("LW", asm("LW r1, [P]\nSW r1, [R]\nHALT"), OK, ((R, -77),), ((P, -77),)),
        Vector("SW", asm("ADDI r1, r0, -9\nSW r1, [R]\nHALT"), OK, ((R, -9),)),
        Vector("LWX", asm("ADDI r2, r0, 2\nLWX r1, r2, [T]\nSW r1, [R]\nHALT"), OK,
               ((R, 30),), table),
        Vector("SWX", asm("ADDI r2, r0, 1\nADDI r1, r0, 99\nSWX r1, r2, [T]\n"
                          "LW r3, [T+4]\nSW r3, [R]\nHALT"), OK, ((R, 99),), table),
        Vector("LBX", asm("ADDI r2, r0, 2\nLBX r1, r2, [B]\nSW r1, [R]\nHALT"), OK,
               ((R, 1),), preset_bytes=((B, 0x24),)),
        Vector("SBX", asm("ADDI r2, r0, 3\nADDI r1, r0, 1\nSBX r1, r2, [B]\n"
                          "LW r3, [B]\nSW r3, [R]\nHALT"), OK, ((R, 0x10000000),)),
        check("CHKIDX", "ADDI r1, r0, 3", "CHKIDX r1, 3"),
        rrr("ADD", 7, 5, 12), rrr("SUB", 7, 12, -5), rrr("MUL", 7, -6, -42),
        rrr("DIV", 55, 7, 7), rrr("MOD", -55, 7, -6), rrr("AND", 6, 3, 2),
        rrr("OR", 4, 1, 5), rrr("XOR", 6, 3, 5), rrr("SEQ", 4, 4, 1), rrr("SNE", 4, 4, 0),
        rrr("SLT", 4, 5, 1), rrr("SLE", 5, 4, 0),
        check("TRAPZ", "ADDI r1, r0, 1", "TRAPZ r1"),
        check("TRAPLT", "ADDI r1, r0, 5", "ADDI r2, r0, 5\nTRAPLT r1, r2"),
        check("TRAPGT", "ADDI r1, r0, 5", "ADDI r2, r0, 5\nTRAPGT r1, r2"),
        check("CHKLO", "ADDI r1, r0, -5", "CHKLO r1, -5"),
        check("CHKHI", "ADDI r1, r0, 6", "CHKHI r1, 6"),
        Vector("J", asm(f"J x\n{branch_tail}"), OK, ((R, 2),)),
        Vector("BEQZ", asm(f"ADDI r3, r0, 0\nBEQZ r3, x\n{branch_tail}"), OK, ((R, 2),)),
        Vector("BNEZ", asm(f"ADDI r3, r0, 1\nBNEZ r3, x\n{branch_tail}"), OK, ((R, 2),)),
        Vector("BLE", asm(f"ADDI r3, r0, 3\nADDI r4, r0, 3\nBLE r3, r4, x\n{branch_tail}"),
               OK, ((R, 2),)),
    ]
    order = {n: i for i, n in enumerate(vm_b.OPCODE_NAMES)}
    v.sort(key=lambda x: order[x.opcode])
    assert [x.opcode for x in v] == vm_b.OPCODE_NAMES
    return v


VECTORS = {"A": _vectors_a(), "B": _vectors_b()}
OPCODE_VALUES = {"A": {n: c for n, (c, _) in vm_a.OPCODES.items()},
                 "B": {n: c for n, (c, _) in vm_b.FORMATS.items()}}


def n_opcodes(vm: str) -> int:
    return len(VECTORS[vm])


def run_vector(vm: str, vec: Vector, corrupt: int = NO_CORRUPTION) -> bool:
    """True when the vector reproduces its expected status and result words."""
    mem = np.zeros(SCRATCH, np.uint8)
    mem[:len(vec.code)] = np.frombuffer(vec.code, np.uint8)
    fmt = "<i" if vm == "A" else ">i"
    for addr, val in vec.preset:
        mem[addr:addr + 4] = np.frombuffer(struct.pack(fmt, val), np.uint8)
    for addr, val in vec.preset_bytes:
        mem[addr] = val
    n = len(vec.code)
    if vm == "A":
        status, _, _ = vm_a.run(mem, 0, 0, n, D, SCRATCH, 64, corrupt, 8)
    else:
        status, _, _ = vm_b.run(mem, 0, 0, n, D, SCRATCH, 64, corrupt)
    if status != vec.status:
        return False
    for addr, want in vec.expect:
        if struct.unpack(fmt, mem[addr:addr + 4].tobytes())[0] != want:
            return False
    return True


def failing_vectors(vm: str, corrupt: int) -> frozenset:
    return frozenset(i for i, v in enumerate(VECTORS[vm]) if not run_vector(vm, v, corrupt))


@functools.lru_cache(maxsize=None)
def fault_dictionary(vm: str) -> dict:
    """Failure signature (set of failing vector indices) -> opcode name."""
    table = {}
    for name, code in OPCODE_VALUES[vm].items():
        table.setdefault(failing_vectors(vm, code), name)
    return table


def diagnose(vm: str, corrupt: int) -> str:
    """Name the opcode whose fault explains the observed failures (best effort)."""
    sig = failing_vectors(vm, corrupt)
    if not sig:
        return ""
    name = fault_dictionary(vm).get(sig)
    return name if name is not None else VECTORS[vm][min(sig)].opcode
