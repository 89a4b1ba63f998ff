"""VM-B: 16-register load/store machine with fixed 32-bit big-endian words.

Word layout, most significant byte first::

    [opcode:8][a:4][b:4][imm16]     a and b are register numbers
    [opcode:8][a:4][b:4][c:4][0:12] three-register ALU form
    [opcode:8][target:24]           absolute jump, target in words

r0 always reads zero. Unused fields must be zero; a word that violates its
format is rejected by both the decoder and the kernel.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .vm_a import mul_overflows
from .vmstatus import (
    BUDGET, FAULT_DECODE, FAULT_MEMORY, FAULT_PC, OK, TRAP_DIV, TRAP_EXPLICIT, TRAP_INDEX,
    TRAP_OVERFLOW, TRAP_RANGE, TRAP_WIDTH,
)

HALT = 0xA1
ADDI = 0xA2
LUI = 0xA3
ORI = 0xA4
XORI = 0xA5
LW = 0xA6
SW = 0xA7
LWX = 0xA8
SWX = 0xA9
LBX = 0xAA
SBX = 0xAB
CHKIDX = 0xAC
ADD = 0xB0
SUB = 0xB1
MUL = 0xB2
DIV = 0xB3
MOD = 0xB4
AND = 0xB5
OR = 0xB6
XOR = 0xB7
SEQ = 0xB8
SNE = 0xB9
SLT = 0xBA
SLE = 0xBB
TRAPZ = 0xC0
TRAPLT = 0xC1
TRAPGT = 0xC2
CHKLO = 0xC3
CHKHI = 0xC4
TRAP = 0xC5
J = 0xC8
BEQZ = 0xC9
BNEZ = 0xCA
BLE = 0xCB

# operand formats:
#   N    no operands            R    one register (a)
#   RR   registers a, b         RRR  registers a, b, c
#   RI   register a, imm16      RRI  registers a, b, imm16
#   M    register a, [address]  MX   registers a, b, [address]
#   J    target label           B1   register a, label    B2  registers a, b, label
FORMATS = {
    "HALT": (HALT, "N"), "TRAP": (TRAP, "N"),
    "ADDI": (ADDI, "RRI"), "ORI": (ORI, "RRI"), "XORI": (XORI, "RRI"),
    "LUI": (LUI, "RI"),
    "LW": (LW, "M"), "SW": (SW, "M"),
    "LWX": (LWX, "MX"), "SWX": (SWX, "MX"), "LBX": (LBX, "MX"), "SBX": (SBX, "MX"),
    "CHKIDX": (CHKIDX, "RI"), "CHKLO": (CHKLO, "RI"), "CHKHI": (CHKHI, "RI"),
    "ADD": (ADD, "RRR"), "SUB": (SUB, "RRR"), "MUL": (MUL, "RRR"), "DIV": (DIV, "RRR"),
    "MOD": (MOD, "RRR"), "AND": (AND, "RRR"), "OR": (OR, "RRR"), "XOR": (XOR, "RRR"),
    "SEQ": (SEQ, "RRR"), "SNE": (SNE, "RRR"), "SLT": (SLT, "RRR"), "SLE": (SLE, "RRR"),
    "TRAPZ": (TRAPZ, "R"), "TRAPLT": (TRAPLT, "RR"), "TRAPGT": (TRAPGT, "RR"),
    "J": (J, "J"), "BEQZ": (BEQZ, "B1"), "BNEZ": (BNEZ, "B1"), "BLE": (BLE, "B2"),
}
MNEMONICS = {code: name for name, (code, _) in FORMATS.items()}
OPCODE_NAMES = list(FORMATS)
SIGNED_IMM = {"ADDI", "CHKLO", "CHKHI"}

SCRATCH_REGS = (14, 15)
ALLOCATABLE = tuple(range(1, 14))


class AsmError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


class DecodeError(ValueError):
    pass


# -- encoding -----------------------------------------------------------------------

def word(op: int, a: int = 0, b: int = 0, imm: int = 0) -> int:
    return (op << 24) | (a << 20) | (b << 16) | (imm & 0xFFFF)


def rword(op: int, a: int, b: int, c: int) -> int:
    return (op << 24) | (a << 20) | (b << 16) | (c << 12)


def encode(name: str, *ops) -> int:
    """Encode one instruction from numeric operands (labels already resolved to words)."""
    code, fmt = FORMATS[name]
    if fmt == "N":
        return word(code)
    if fmt == "R":
        return word(code, ops[0])
    if fmt == "RR":
        return word(code, ops[0], ops[1])
    if fmt == "RRR":
        return rword(code, *ops)
    if fmt == "RI":
        return word(code, ops[0], 0, _imm16(name, ops[1]))
    if fmt == "RRI":
        return word(code, ops[0], ops[1], _imm16(name, ops[2]))
    if fmt == "M":
        return word(code, ops[0], 0, _addr16(ops[1]))
    if fmt == "MX":
        return word(code, ops[0], ops[1], _addr16(ops[2]))
    if fmt == "J":
        if not 0 <= ops[0] < 1 << 24:
            raise AsmError(f"jump target {ops[0]} out of range")
        return (code << 24) | ops[0]
    if fmt == "B1":
        return word(code, ops[0], 0, _off16(ops[1]))
    return word(code, ops[0], ops[1], _off16(ops[2]))


def _imm16(name, v):
    if name in SIGNED_IMM:
        if not -32768 <= v <= 32767:
            raise AsmError(f"{name} immediate {v} does not fit 16 signed bits")
    elif name == "CHKIDX" or name in ("LUI", "ORI", "XORI"):
        if not 0 <= v <= 0xFFFF:
            raise AsmError(f"{name} immediate {v} does not fit 16 unsigned bits")
    return v


def _addr16(v):
    if not 0 <= v <= 0xFFFF:
        raise AsmError(f"address {v:#x} outside 16-bit space")
    return v


def _off16(v):
    if not -32768 <= v <= 32767:
        raise AsmError(f"branch out of range ({v} words)")
    return v


# -- textual assembly -------------------------------------------------------------------

@dataclass
class AsmListing:
    """Assembly text: labels, one instruction per line, ``.equ`` symbols and comments."""
    lines: list
    spans: list = field(default_factory=list)   # (instruction line index, source span)

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"

    @property
    def instruction_count(self) -> int:
        return sum(1 for l in self.lines if _classify(l)[0] == "instr")


_LABEL = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*):$")
_EQU = re.compile(r"^\.equ\s+([A-Za-z_][A-Za-z0-9_]*)\s*,\s*(-?(?:0x[0-9A-Fa-f]+|\d+))$")
_MEM = re.compile(r"^\[\s*([A-Za-z_][A-Za-z0-9_]*|0x[0-9A-Fa-f]+|\d+)\s*(?:\+\s*(0x[0-9A-Fa-f]+|\d+)\s*)?\]$")
_REG = re.compile(r"^r(\d+)$")


def _classify(line: str):
    s = line.split(";", 1)[0].strip()
    if not s:
        return "blank", s
    if _LABEL.match(s):
        return "label", s
    if s.startswith("."):
        return "directive", s
    return "instr", s


def _int(tok: str, lineno: int) -> int:
    try:
        return int(tok, 0)
    except ValueError:
        raise AsmError(f"bad number '{tok}'", lineno) from None


def parse_listing(text: str) -> AsmListing:
    return AsmListing(text.splitlines())


def assemble(listing, base: int = 0) -> list[int]:
    """Two-pass assembly into a list of 32-bit words, one per instruction line.

    ``base`` is the byte address at which the first word will be loaded.
    """
    lines = listing.lines if isinstance(listing, AsmListing) else listing.splitlines()
    labels, symbols, instrs = {}, {}, []
    for lineno, line in enumerate(lines, 1):
        kind, s = _classify(line)
        if kind == "label":
            name = s[:-1]
            if name in labels:
                raise AsmError(f"label '{name}' redefined", lineno)
            labels[name] = len(instrs)
        elif kind == "directive":
            m = _EQU.match(s)
            if not m:
                raise AsmError(f"unknown directive '{s}'", lineno)
            symbols[m.group(1)] = _int(m.group(2), lineno)
        elif kind == "instr":
            instrs.append((lineno, s))
    words = []
    for idx, (lineno, s) in enumerate(instrs):
        parts = s.split(None, 1)
        name = parts[0].upper()
        if name not in FORMATS:
            raise AsmError(f"unknown mnemonic '{parts[0]}'", lineno)
        ops = [o.strip() for o in parts[1].split(",")] if len(parts) > 1 else []
        words.append(_assemble_one(name, ops, idx, labels, symbols, base, lineno))
    return words


def _assemble_one(name, ops, idx, labels, symbols, base, lineno):
    fmt = FORMATS[name][1]
    want = {"N": 0, "R": 1, "RR": 2, "RRR": 3, "RI": 2, "RRI": 3, "M": 2, "MX": 3,
            "J": 1, "B1": 2, "B2": 3}[fmt]
    if len(ops) != want:
        raise AsmError(f"{name} takes {want} operands, got {len(ops)}", lineno)

    def reg(tok):
        m = _REG.match(tok)
        if not m or int(m.group(1)) > 15:
            raise AsmError(f"bad register '{tok}'", lineno)
        return int(m.group(1))

    def mem(tok):
        m = _MEM.match(tok)
        if not m:
            raise AsmError(f"bad memory operand '{tok}'", lineno)
        head, off = m.group(1), m.group(2)
        if head[0].isdigit():
            addr = _int(head, lineno)
        elif head in symbols:
            addr = symbols[head]
        else:
            raise AsmError(f"undefined symbol '{head}'", lineno)
        return addr + (_int(off, lineno) if off else 0)

    def target(tok):
        if tok not in labels:
            raise AsmError(f"undefined label '{tok}'", lineno)
        return labels[tok]

    try:
        if fmt == "N":
            return encode(name)
        if fmt == "R":
            return encode(name, reg(ops[0]))
        if fmt == "RR":
            return encode(name, reg(ops[0]), reg(ops[1]))
        if fmt == "RRR":
            return encode(name, reg(ops[0]), reg(ops[1]), reg(ops[2]))
        if fmt == "RI":
            return encode(name, reg(ops[0]), _int(ops[1], lineno))
        if fmt == "RRI":
            return encode(name, reg(ops[0]), reg(ops[1]), _int(ops[2], lineno))
        if fmt == "M":
            return encode(name, reg(ops[0]), mem(ops[1]))
        if fmt == "MX":
            return encode(name, reg(ops[0]), reg(ops[1]), mem(ops[2]))
        if fmt == "J":
            return encode(name, base // 4 + target(ops[0]))
        if fmt == "B1":
            return encode(name, reg(ops[0]), target(ops[1]) - idx - 1)
        return encode(name, reg(ops[0]), reg(ops[1]), target(ops[2]) - idx - 1)
    except AsmError as e:
        if e.line is None:
            raise AsmError(str(e), lineno) from None
        raise


def to_bytes(words) -> bytes:
    return b"".join(struct.pack(">I", w) for w in words)


def from_bytes(code: bytes) -> list[int]:
    if len(code) % 4:
        raise DecodeError(f"code length {len(code)} is not a multiple of 4")
    return list(struct.unpack(f">{len(code) // 4}I", code))


@dataclass(frozen=True)
class Instr:
    name: str
    ops: tuple


def decode_word(w: int) -> Instr:
    op = w >> 24
    name = MNEMONICS.get(op)
    if name is None:
        raise DecodeError(f"unknown opcode {op:#04x}")
    fmt = FORMATS[name][1]
    a, b, c = (w >> 20) & 15, (w >> 16) & 15, (w >> 12) & 15
    imm = w & 0xFFFF
    simm = imm - 0x10000 if imm & 0x8000 else imm
    low12 = w & 0xFFF

    def need_zero(*fields):
        if any(fields):
            raise DecodeError(f"{name}: nonzero unused field in {w:#010x}")

    if fmt == "N":
        need_zero(w & 0xFFFFFF)
        return Instr(name, ())
    if fmt == "R":
        need_zero(b, imm)
        return Instr(name, (a,))
    if fmt == "RR":
        need_zero(imm)
        return Instr(name, (a, b))
    if fmt == "RRR":
        need_zero(low12)
        return Instr(name, (a, b, c))
    if fmt == "RI":
        need_zero(b)
        return Instr(name, (a, simm if name in SIGNED_IMM else imm))
    if fmt == "RRI":
        return Instr(name, (a, b, simm if name in SIGNED_IMM else imm))
    if fmt == "M":
        need_zero(b)
        return Instr(name, (a, imm))
    if fmt == "MX":
        return Instr(name, (a, b, imm))
    if fmt == "J":
        return Instr(name, (w & 0xFFFFFF,))
    if fmt == "B1":
        need_zero(b)
        return Instr(name, (a, simm))
    return Instr(name, (a, b, simm))


def disassemble(code: bytes, base: int = 0) -> AsmListing:
    """Reconstruct an assembly listing; branch targets become ``L_xxxx`` labels."""
    decoded = [decode_word(w) for w in from_bytes(code)]
    n = len(decoded)
    targets = set()
    for i, ins in enumerate(decoded):
        t = _branch_target(ins, i, base)
        if t is not None:
            if not 0 <= t <= n:
                raise DecodeError(f"branch at word {i} leaves the image")
            targets.add(t)
    lines = []
    for i, ins in enumerate(decoded):
        if i in targets:
            lines.append(f"L_{base + 4 * i:04X}:")
        lines.append("    " + _format(ins, i, base))
    if n in targets:
        lines.append(f"L_{base + 4 * n:04X}:")
    return AsmListing(lines)


def _branch_target(ins, i, base):
    if ins.name == "J":
        return ins.ops[0] - base // 4
    if ins.name in ("BEQZ", "BNEZ"):
        return i + 1 + ins.ops[1]
    if ins.name == "BLE":
        return i + 1 + ins.ops[2]
    return None


def _format(ins, i, base) -> str:
    fmt = FORMATS[ins.name][1]
    o = ins.ops
    r = lambda x: f"r{x}"  # noqa: E731
    if fmt == "N":
        return ins.name
    if fmt == "R":
        return f"{ins.name} {r(o[0])}"
    if fmt == "RR":
        return f"{ins.name} {r(o[0])}, {r(o[1])}"
    if fmt == "RRR":
        return f"{ins.name} {r(o[0])}, {r(o[1])}, {r(o[2])}"
    if fmt == "RI":
        return f"{ins.name} {r(o[0])}, {o[1]}"
    if fmt == "RRI":
        return f"{ins.name} {r(o[0])}, {r(o[1])}, {o[2]}"
    if fmt == "M":
        return f"{ins.name} {r(o[0])}, [0x{o[1]:04X}]"
    if fmt == "MX":
        return f"{ins.name} {r(o[0])}, {r(o[1])}, [0x{o[2]:04X}]"
    t = _branch_target(ins, i, base)
    label = f"L_{base + 4 * t:04X}"
    if fmt == "J":
        return f"J {label}"
    if fmt == "B1":
        return f"{ins.name} {r(o[0])}, {label}"
    return f"{ins.name} {r(o[0])}, {r(o[1])}, {label}"


# -- execution kernel -----------------------------------------------------------------

I64_MIN = -(2**63)
I64_MAX = 2**63 - 1


@njit(cache=True)
def _rd(mem, p):
    v = ((np.int64(mem[p]) << 24) | (np.int64(mem[p + 1]) << 16) | (np.int64(mem[p + 2]) << 8)
         | np.int64(mem[p + 3]))
    if v >= 2147483648:
        v -= 4294967296
    return v


@njit(cache=True)
def _wr(mem, p, v):
    u = v & 0xFFFFFFFF
    mem[p] = (u >> 24) & 0xFF
    mem[p + 1] = (u >> 16) & 0xFF
    mem[p + 2] = (u >> 8) & 0xFF
    mem[p + 3] = u & 0xFF


@njit(cache=True)
def run(mem, pc, code_lo, code_hi, data_lo, data_hi, budget, corrupt):
    """Execute from ``pc`` until HALT. Returns (status, steps, highest register used)."""
    regs = np.zeros(16, np.int64)
    steps = 0
    top = 0
    while True:
        if steps >= budget:
            return BUDGET, steps, top
        if pc < code_lo or pc + 4 > code_hi or pc & 3:
            return FAULT_PC, steps, top
        w = ((np.int64(mem[pc]) << 24) | (np.int64(mem[pc + 1]) << 16)
             | (np.int64(mem[pc + 2]) << 8) | np.int64(mem[pc + 3]))
        steps += 1
        op = w >> 24
        bad = op == corrupt
        a = (w >> 20) & 15
        b = (w >> 16) & 15
        c = (w >> 12) & 15
        imm = w & 0xFFFF
        simm = imm - 0x10000 if imm >= 0x8000 else imm
        nxt = pc + 4
        wr = -1        # destination register, if any
        v = np.int64(0)

        if op == HALT or op == TRAP:
            if w & 0xFFFFFF:
                return FAULT_DECODE, steps, top
            if not bad:
                return (OK if op == HALT else TRAP_EXPLICIT), steps, top
        elif op == ADDI:
            x = regs[b]
            if (simm > 0 and x > I64_MAX - simm) or (simm < 0 and x < I64_MIN - simm):
                return TRAP_OVERFLOW, steps, top
            v = x + simm
            wr = a
        elif op == LUI:
            if b:
                return FAULT_DECODE, steps, top
            v = np.int64(imm) << 16
            if v >= 2147483648:
                v -= 4294967296
            wr = a
        elif op == ORI or op == XORI:
            v = regs[b] | imm if op == ORI else regs[b] ^ imm
            wr = a
        elif op == LW or op == SW:
            if b:
                return FAULT_DECODE, steps, top
            if imm < data_lo or imm + 4 > data_hi:
                return FAULT_MEMORY, steps, top
            if op == LW:
                v = _rd(mem, imm)
                wr = a
            else:
                x = regs[a] + 1 if bad else regs[a]
                if x < -2147483648 or x > 2147483647:
                    return TRAP_WIDTH, steps, top
                _wr(mem, imm, x)
        elif op == LWX or op == SWX:
            addr = imm + 4 * regs[b]
            if addr < data_lo or addr + 4 > data_hi:
                return FAULT_MEMORY, steps, top
            if op == LWX:
                v = _rd(mem, addr)
                wr = a
            else:
                x = regs[a] + 1 if bad else regs[a]
                if x < -2147483648 or x > 2147483647:
                    return TRAP_WIDTH, steps, top
                _wr(mem, addr, x)
        elif op == LBX or op == SBX:
            i = regs[b]
            addr = imm + (i >> 3)
            if addr < data_lo or addr >= data_hi:
                return FAULT_MEMORY, steps, top
            shift = 7 - (i & 7)
            if op == LBX:
                v = (np.int64(mem[addr]) >> shift) & 1
                if bad:
                    v ^= 1
                    bad = False
                wr = a
            else:
                x = regs[a]
                if x != 0 and x != 1:
                    return TRAP_WIDTH, steps, top
                if bad:
                    x ^= 1
                if x:
                    mem[addr] = mem[addr] | np.uint8(1 << shift)
                else:
                    mem[addr] = mem[addr] & np.uint8(255 - (1 << shift))
        elif op == CHKIDX or op == CHKLO or op == CHKHI:
            if b:
                return FAULT_DECODE, steps, top
            x = regs[a]
            if op == CHKIDX:
                fail = x < 0 or x > imm
                code = TRAP_INDEX
            elif op == CHKLO:
                fail = x < simm
                code = TRAP_RANGE
            else:
                fail = x > simm
                code = TRAP_RANGE
            if fail != bad:
                return code, steps, top
        elif ADD <= op <= SLE:
            if w & 0xFFF:
                return FAULT_DECODE, steps, top
            x = regs[b]
            y = regs[c]
            if op == ADD:
                if (y > 0 and x > I64_MAX - y) or (y < 0 and x < I64_MIN - y):
                    return TRAP_OVERFLOW, steps, top
                v = x + y
            elif op == SUB:
                if (y < 0 and x > I64_MAX + y) or (y > 0 and x < I64_MIN + y):
                    return TRAP_OVERFLOW, steps, top
                v = x - y
            elif op == MUL:
                if mul_overflows(x, y):
                    return TRAP_OVERFLOW, steps, top
                v = x * y
            elif op == DIV or op == MOD:
                if y == 0:
                    return TRAP_DIV, steps, top
                if x == I64_MIN and y == -1:
                    return TRAP_OVERFLOW, steps, top
                q = x // y
                if q * y != x and ((x < 0) != (y < 0)):
                    q += 1
                v = q if op == DIV else x - q * y
            else:
                if op == AND:
                    v = x & y
                elif op == OR:
                    v = x | y
                elif op == XOR:
                    v = x ^ y
                elif op == SEQ:
                    v = 1 if x == y else 0
                elif op == SNE:
                    v = 1 if x != y else 0
                elif op == SLT:
                    v = 1 if x < y else 0
                else:
                    v = 1 if x <= y else 0
                if bad:
                    v ^= 1
                    bad = False
            wr = a
        elif op == TRAPZ:
            if b or imm:
                return FAULT_DECODE, steps, top
            if (regs[a] == 0) != bad:
                return TRAP_DIV, steps, top
        elif op == TRAPLT or op == TRAPGT:
            if imm:
                return FAULT_DECODE, steps, top
            fail = regs[a] < regs[b] if op == TRAPLT else regs[a] > regs[b]
            if fail != bad:
                return TRAP_RANGE, steps, top
        elif op == J:
            if not bad:
                nxt = (w & 0xFFFFFF) * 4
        elif op == BEQZ or op == BNEZ:
            if b:
                return FAULT_DECODE, steps, top
            take = regs[a] == 0 if op == BEQZ else regs[a] != 0
            if take != bad:
                nxt = pc + 4 + 4 * simm
        elif op == BLE:
            if (regs[a] <= regs[b]) != bad:
                nxt = pc + 4 + 4 * simm
        else:
            return FAULT_DECODE, steps, top

        if wr >= 0:
            if bad:
                v += 1
            if wr > 0:
                regs[wr] = v
                if wr > top:
                    top = wr
        pc = nxt
