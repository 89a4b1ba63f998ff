"""VM-A: operand-stack machine with variable-length little-endian encoding.

Every instruction is a one-byte opcode followed by zero to three signed
32-bit little-endian immediates. Addresses are absolute byte addresses in
the controller's 64 KiB memory; code may only run inside CODE_A and data
accesses must stay inside DATA_A.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from numba import njit

from .vmstatus import (
    BUDGET, FAULT_DECODE, FAULT_MEMORY, FAULT_PC, FAULT_STACK, OK, TRAP_DIV, TRAP_INDEX,
    TRAP_OVERFLOW, TRAP_RANGE, TRAP_WIDTH,
)

STACK_CAPACITY = 256

HALT = 0x20
PUSH = 0x21
LOAD = 0x22
STORE = 0x23
LDXW = 0x24
STXW = 0x25
LDXB = 0x26
STXB = 0x27
CLR = 0x28
ADD = 0x30
SUB = 0x31
MUL = 0x32
DIV = 0x33
MOD = 0x34
NEG = 0x35
AND = 0x38
OR = 0x39
XOR = 0x3A
NOT = 0x3B
EQ = 0x40
NE = 0x41
LT = 0x42
LE = 0x43
GT = 0x44
GE = 0x45
RANGECHK = 0x48
JMP = 0x50
JZ = 0x51
LOOP = 0x52

# mnemonic -> (opcode, immediate count)
OPCODES = {
    "HALT": (HALT, 0), "PUSH": (PUSH, 1), "LOAD": (LOAD, 1), "STORE": (STORE, 1),
    "LDXW": (LDXW, 2), "STXW": (STXW, 2), "LDXB": (LDXB, 2), "STXB": (STXB, 2),
    "CLR": (CLR, 2),
    "ADD": (ADD, 0), "SUB": (SUB, 0), "MUL": (MUL, 0), "DIV": (DIV, 0), "MOD": (MOD, 0),
    "NEG": (NEG, 0), "AND": (AND, 0), "OR": (OR, 0), "XOR": (XOR, 0), "NOT": (NOT, 0),
    "EQ": (EQ, 0), "NE": (NE, 0), "LT": (LT, 0), "LE": (LE, 0), "GT": (GT, 0), "GE": (GE, 0),
    "RANGECHK": (RANGECHK, 2), "JMP": (JMP, 1), "JZ": (JZ, 1), "LOOP": (LOOP, 3),
}
MNEMONICS = {code: name for name, (code, _) in OPCODES.items()}
OPCODE_NAMES = list(OPCODES)

# net stack effect, used for the static depth analysis
STACK_EFFECT = {
    "HALT": 0, "PUSH": 1, "LOAD": 1, "STORE": -1, "LDXW": 0, "STXW": -2, "LDXB": 0,
    "STXB": -2, "CLR": 0, "NEG": 0, "NOT": 0, "RANGECHK": 0, "JMP": 0, "JZ": -1, "LOOP": 0,
}
for _name in ("ADD", "SUB", "MUL", "DIV", "MOD", "AND", "OR", "XOR",
              "EQ", "NE", "LT", "LE", "GT", "GE"):
    STACK_EFFECT[_name] = -1


class DecodeError(ValueError):
    pass


@dataclass(frozen=True)
class Instr:
    addr: int
    name: str
    args: tuple

    @property
    def size(self) -> int:
        return 1 + 4 * len(self.args)

    def __str__(self):
        return " ".join([self.name] + [str(a) for a in self.args])


def encode(name: str, *args: int) -> bytes:
    code, n = OPCODES[name]
    if len(args) != n:
        raise ValueError(f"{name} takes {n} immediates")
    return bytes([code]) + b"".join(struct.pack("<i", a) for a in args)


def instr_size(name: str) -> int:
    return 1 + 4 * OPCODES[name][1]


def decode(code: bytes, base: int = 0) -> list[Instr]:
    """Decode a whole code image; any unknown opcode or truncation raises DecodeError."""
    out, pc = [], 0
    while pc < len(code):
        name = MNEMONICS.get(code[pc])
        if name is None:
            raise DecodeError(f"unknown opcode {code[pc]:#04x} at {base + pc:#06x}")
        n = OPCODES[name][1]
        if pc + 1 + 4 * n > len(code):
            raise DecodeError(f"truncated {name} at {base + pc:#06x}")
        args = struct.unpack_from(f"<{n}i", code, pc + 1) if n else ()
        out.append(Instr(base + pc, name, tuple(args)))
        pc += 1 + 4 * n
    return out


def listing(code: bytes, base: int, header: str = "") -> str:
    lines = [f"; {header}"] if header else []
    for ins in decode(code, base):
        raw = code[ins.addr - base:ins.addr - base + ins.size].hex().upper()
        lines.append(f"{ins.addr:04X}  {raw:<26} {ins}")
    return "\n".join(lines) + "\n"


# -- execution kernel -------------------------------------------------------------

I64_MIN = -(2**63)
I64_MAX = 2**63 - 1


@njit(cache=True)
def _rd(mem, p):
    v = (np.int64(mem[p]) | (np.int64(mem[p + 1]) << 8) | (np.int64(mem[p + 2]) << 16)
         | (np.int64(mem[p + 3]) << 24))
    if v >= 2147483648:
        v -= 4294967296
    return v


@njit(cache=True)
def _wr(mem, p, v):
    u = v & 0xFFFFFFFF
    mem[p] = u & 0xFF
    mem[p + 1] = (u >> 8) & 0xFF
    mem[p + 2] = (u >> 16) & 0xFF
    mem[p + 3] = (u >> 24) & 0xFF


@njit(cache=True)
def _magnitude(a):
    if a >= 0:
        return np.uint64(a)
    return np.uint64(-(a + 1)) + np.uint64(1)


@njit(cache=True)
def mul_overflows(a, b):
    # signed overflow is undefined for LLVM, so compare magnitudes unsigned
    ua = _magnitude(a)
    ub = _magnitude(b)
    if ua == np.uint64(0) or ub == np.uint64(0):
        return False
    limit = np.uint64(9223372036854775808) if (a < 0) != (b < 0) else np.uint64(I64_MAX)
    return ub > limit // ua


@njit(cache=True)
def _arith(op, a, b):
    """Returns (status, value) for the integer operators."""
    if op == ADD:
        if (b > 0 and a > I64_MAX - b) or (b < 0 and a < I64_MIN - b):
            return TRAP_OVERFLOW, 0
        return OK, a + b
    if op == SUB:
        if (b < 0 and a > I64_MAX + b) or (b > 0 and a < I64_MIN + b):
            return TRAP_OVERFLOW, 0
        return OK, a - b
    if op == MUL:
        if a == 0 or b == 0:
            return OK, 0
        if mul_overflows(a, b):
            return TRAP_OVERFLOW, 0
        return OK, a * b
    # DIV / MOD truncate toward zero
    if b == 0:
        return TRAP_DIV, 0
    if a == I64_MIN and b == -1:
        return TRAP_OVERFLOW, 0
    q = a // b
    if q * b != a and ((a < 0) != (b < 0)):
        q += 1
    if op == DIV:
        return OK, q
    return OK, a - q * b


@njit(cache=True)
def run(mem, pc, code_lo, code_hi, data_lo, data_hi, budget, corrupt, stack_cap):
    """Execute from ``pc`` until HALT. Returns (status, steps, stack high-water)."""
    stack = np.zeros(stack_cap, np.int64)
    sp = 0
    steps = 0
    hwm = 0
    while True:
        if steps >= budget:
            return BUDGET, steps, hwm
        if pc < code_lo or pc >= code_hi:
            return FAULT_PC, steps, hwm
        op = np.int64(mem[pc])
        steps += 1
        bad = op == corrupt
        if op == HALT:
            if bad:
                pc += 1
                continue
            return OK, steps, hwm
        # immediates
        nimm = 0
        if op == PUSH or op == LOAD or op == STORE or op == JMP or op == JZ:
            nimm = 1
        elif op == LDXW or op == STXW or op == LDXB or op == STXB or op == CLR or op == RANGECHK:
            nimm = 2
        elif op == LOOP:
            nimm = 3
        elif not ((ADD <= op <= NEG) or (AND <= op <= NOT) or (EQ <= op <= GE)):
            return FAULT_DECODE, steps, hwm
        if pc + 1 + 4 * nimm > code_hi:
            return FAULT_DECODE, steps, hwm
        i1 = _rd(mem, pc + 1) if nimm >= 1 else 0
        i2 = _rd(mem, pc + 5) if nimm >= 2 else 0
        i3 = _rd(mem, pc + 9) if nimm >= 3 else 0
        nxt = pc + 1 + 4 * nimm

        if op == PUSH or op == LOAD:
            if sp >= stack_cap:
                return FAULT_STACK, steps, hwm
            v = i1
            if op == LOAD:
                if i1 < data_lo or i1 + 4 > data_hi:
                    return FAULT_MEMORY, steps, hwm
                v = _rd(mem, i1)
            if bad:
                v += 1
            stack[sp] = v
            sp += 1
        elif op == STORE:
            if sp < 1:
                return FAULT_STACK, steps, hwm
            sp -= 1
            v = stack[sp] + 1 if bad else stack[sp]
            if v < -2147483648 or v > 2147483647:
                return TRAP_WIDTH, steps, hwm
            if i1 < data_lo or i1 + 4 > data_hi:
                return FAULT_MEMORY, steps, hwm
            _wr(mem, i1, v)
        elif op == LDXW or op == LDXB:
            if sp < 1:
                return FAULT_STACK, steps, hwm
            idx = stack[sp - 1]
            if idx < 0 or idx >= i2:
                return TRAP_INDEX, steps, hwm
            if op == LDXW:
                a = i1 + 4 * idx
                if a < data_lo or a + 4 > data_hi:
                    return FAULT_MEMORY, steps, hwm
                v = _rd(mem, a)
                if bad:
                    v += 1
            else:
                a = i1 + (idx >> 3)
                if a < data_lo or a >= data_hi:
                    return FAULT_MEMORY, steps, hwm
                v = (np.int64(mem[a]) >> (idx & 7)) & 1
                if bad:
                    v ^= 1
            stack[sp - 1] = v
        elif op == STXW or op == STXB:
            if sp < 2:
                return FAULT_STACK, steps, hwm
            v = stack[sp - 1]
            idx = stack[sp - 2]
            sp -= 2
            if idx < 0 or idx >= i2:
                return TRAP_INDEX, steps, hwm
            if op == STXW:
                if bad:
                    v += 1
                if v < -2147483648 or v > 2147483647:
                    return TRAP_WIDTH, steps, hwm
                a = i1 + 4 * idx
                if a < data_lo or a + 4 > data_hi:
                    return FAULT_MEMORY, steps, hwm
                _wr(mem, a, v)
            else:
                if v != 0 and v != 1:
                    return TRAP_WIDTH, steps, hwm
                if bad:
                    v ^= 1
                a = i1 + (idx >> 3)
                if a < data_lo or a >= data_hi:
                    return FAULT_MEMORY, steps, hwm
                mask = np.uint8(1 << (idx & 7))
                if v:
                    mem[a] = mem[a] | mask
                else:
                    mem[a] = mem[a] & ~mask
        elif op == CLR:
            if i2 < 0 or i1 < data_lo or i1 + i2 > data_hi:
                return FAULT_MEMORY, steps, hwm
            fill = 1 if bad else 0
            for a in range(i1, i1 + i2):
                mem[a] = fill
        elif op == NEG or op == NOT:
            if sp < 1:
                return FAULT_STACK, steps, hwm
            a = stack[sp - 1]
            if op == NEG:
                if a == I64_MIN:
                    return TRAP_OVERFLOW, steps, hwm
                v = -a + 1 if bad else -a
            else:
                v = (1 - a) ^ 1 if bad else 1 - a
            stack[sp - 1] = v
        elif (ADD <= op <= MOD) or (AND <= op <= XOR) or (EQ <= op <= GE):
            if sp < 2:
                return FAULT_STACK, steps, hwm
            b = stack[sp - 1]
            a = stack[sp - 2]
            sp -= 1
            if op <= MOD:
                st, v = _arith(op, a, b)
                if st != OK:
                    return st, steps, hwm
                if bad:
                    v += 1
            else:
                if op == AND:
                    v = a & b
                elif op == OR:
                    v = a | b
                elif op == XOR:
                    v = a ^ b
                elif op == EQ:
                    v = 1 if a == b else 0
                elif op == NE:
                    v = 1 if a != b else 0
                elif op == LT:
                    v = 1 if a < b else 0
                elif op == LE:
                    v = 1 if a <= b else 0
                elif op == GT:
                    v = 1 if a > b else 0
                else:
                    v = 1 if a >= b else 0
                if bad:
                    v ^= 1
            stack[sp - 1] = v
        elif op == RANGECHK:
            if sp < 1:
                return FAULT_STACK, steps, hwm
            v = stack[sp - 1]
            inside = i1 <= v and v <= i2
            if inside == bad:
                return TRAP_RANGE, steps, hwm
        elif op == JMP:
            if not bad:
                nxt = i1
        elif op == JZ:
            if sp < 1:
                return FAULT_STACK, steps, hwm
            sp -= 1
            if (stack[sp] == 0) != bad:
                nxt = i1
        elif op == LOOP:
            if i1 < data_lo or i1 + 4 > data_hi:
                return FAULT_MEMORY, steps, hwm
            v = _rd(mem, i1) + 1
            if v > 2147483647:
                return TRAP_WIDTH, steps, hwm
            _wr(mem, i1, v)
            if (v <= i2) != bad:
                nxt = i3
        if sp > hwm:
            hwm = sp
        pc = nxt
