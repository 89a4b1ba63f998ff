"""Chain B: typed model -> register-machine assembly text -> ImageB.

Expressions are evaluated into r1..r13 with a Sethi-Ullman ordering; r14
and r15 are reserved for constants and reloaded spills. Loops are never
unrolled here and every index that is not statically in bounds gets an
explicit CHKIDX, so the code shape differs from chain A throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import vm_b
from .frontend.complexity import instruction_budget
from .frontend.typecheck import (
    TArrayCopy, TAssign, TBinary, TConst, TFor, TIf, TIndex, TUnary, TVar, TypedModel,
)
from .layout import DataLayout, allocate
from .memmap import DEFAULT_MAP, MemoryMap
from .vm_b import AsmListing

NREGS = 13               # r1..r13 hold expression temporaries
SPILL_WORDS = 16
SPILL = "__spill"
INLINE_WORDS = 8
INT32 = (-(2**31), 2**31 - 1)

_RRR = {"+": "ADD", "-": "SUB", "*": "MUL", "/": "DIV", "MOD": "MOD", "AND": "AND",
        "OR": "OR", "XOR": "XOR", "=": "SEQ", "/=": "SNE", "<": "SLT", "<=": "SLE",
        ">": "SLT", ">=": "SLE"}
_SWAPPED = (">", ">=")


class CodegenError(ValueError):
    pass


@dataclass
class ImageB:
    words: list
    base: int
    entry: int
    layout: DataLayout
    budget: int
    registers_used: int
    listing: AsmListing = field(repr=False, default=None)

    @property
    def code(self) -> bytes:
        return vm_b.to_bytes(self.words)


def _fits16(v: int) -> bool:
    return -32768 <= v <= 32767


def _need(e) -> int:
    if isinstance(e, (TConst, TVar)):
        return 1
    if isinstance(e, TIndex):
        return _need(e.index)
    if isinstance(e, TUnary):
        return _need(e.operand)
    l, r = _need(e.left), _need(e.right)
    return l + 1 if l == r else max(l, r)


class _Emitter:
    def __init__(self, tm: TypedModel, layout: DataLayout):
        self.tm = tm
        self.layout = layout
        self.lines = []
        self.spans = []
        self.nlabels = 0
        self.spill_depth = 0
        self.max_spill = 0

    def ins(self, text: str):
        self.lines.append("    " + text)

    def label(self) -> str:
        self.nlabels += 1
        return f"B{self.nlabels}"

    def place(self, name: str):
        self.lines.append(f"{name}:")

    def li(self, rd: str, v: int):
        if _fits16(v):
            self.ins(f"ADDI {rd}, r0, {v}")
        else:
            self.ins(f"LUI {rd}, {(v >> 16) & 0xFFFF}")
            if v & 0xFFFF:
                self.ins(f"ORI {rd}, {rd}, {v & 0xFFFF}")

    def run(self) -> list:
        for s in self.layout.slots:
            self.lines.append(f".equ {s.name}, 0x{s.addr:04X}")
        self.lines.append(f".equ {SPILL}, 0x{self.layout.scratch_addr:04X}")
        self.lines.append("; output reset")
        self.prologue()
        self.stmts(self.tm.body)
        self.ins("HALT")
        return self.lines

    def prologue(self):
        for s in self.tm.outputs:
            words = (s.length + 31) // 32 if s.is_bool and s.is_array else s.length
            src = "r0"
            if s.lo != 0:
                self.li("r1", s.lo)
                src = "r1"
            if words <= INLINE_WORDS:
                for i in range(words):
                    self.ins(f"SW {src}, [{s.name}{'+' + str(4 * i) if i else ''}]")
            else:
                top = self.label()
                self.ins("ADDI r2, r0, 0")
                self.li("r3", words - 1)
                self.place(top)
                self.ins(f"SWX {src}, r2, [{s.name}]")
                self.ins("ADDI r2, r2, 1")
                self.ins(f"BLE r2, r3, {top}")

    # statements
    def stmts(self, stmts):
        for s in stmts:
            self.stmt(s)

    def stmt(self, s):
        if isinstance(s, TAssign):
            self.lines.append(f"; @{s.span}")
            self.spans.append((len(self.lines), s.span))
            sym = s.sym
            if s.index is None:
                self.expr(s.value, 0)
                self.check(s.value, sym, "r1")
                self.ins(f"SW r1, [{sym.name}]")
            else:
                self.expr(s.index, 0)
                self.expr(s.value, 1)
                self.chkidx(s.index, sym, "r1")
                self.check(s.value, sym, "r2")
                self.ins(f"{'SBX' if sym.is_bool else 'SWX'} r2, r1, [{sym.name}]")
        elif isinstance(s, TArrayCopy):
            self.lines.append(f"; @{s.span}")
            self.copy(s)
        elif isinstance(s, TIf):
            end = self.label()
            for i, (cond, body) in enumerate(s.branches):
                nxt = self.label()
                self.expr(cond, 0)
                self.ins(f"BEQZ r1, {nxt}")
                self.stmts(body)
                if not (i == len(s.branches) - 1 and not s.orelse):
                    self.ins(f"J {end}")
                self.place(nxt)
            self.stmts(s.orelse)
            self.place(end)
        elif isinstance(s, TFor):
            if s.trips == 0:
                return
            k = s.sym.name
            self.li("r1", s.lo)
            self.ins(f"SW r1, [{k}]")
            if s.trips == 1:
                self.stmts(s.body)
                return
            top = self.label()
            self.place(top)
            self.stmts(s.body)
            self.ins(f"LW r1, [{k}]")
            self.ins("ADDI r1, r1, 1")
            self.ins(f"SW r1, [{k}]")
            self.li("r2", s.hi)
            self.ins(f"BLE r1, r2, {top}")
        else:
            raise TypeError(s)

    def check(self, value, sym, reg):
        self.check_bounds(value.lo, value.hi, sym, reg)

    def check_bounds(self, lo, hi, sym, reg):
        if lo < sym.lo:
            if _fits16(sym.lo):
                self.ins(f"CHKLO {reg}, {sym.lo}")
            else:
                self.li("r14", sym.lo)
                self.ins(f"TRAPLT {reg}, r14")
        if hi > sym.hi:
            if _fits16(sym.hi):
                self.ins(f"CHKHI {reg}, {sym.hi}")
            else:
                self.li("r14", sym.hi)
                self.ins(f"TRAPGT {reg}, r14")

    def chkidx(self, index, sym, reg):
        if index.lo < 0 or index.hi > sym.length - 1:
            self.ins(f"CHKIDX {reg}, {sym.length - 1}")

    def copy(self, s: TArrayCopy):
        dst, src = s.dst, s.src
        checked = not dst.is_bool and (src.lo < dst.lo or src.hi > dst.hi)
        words = (dst.length + 31) // 32 if dst.is_bool else dst.length
        if words <= INLINE_WORDS:
            for i in range(words):
                off = f"+{4 * i}" if i else ""
                self.ins(f"LW r1, [{src.name}{off}]")
                if checked:
                    self.check_bounds(src.lo, src.hi, dst, "r1")
                self.ins(f"SW r1, [{dst.name}{off}]")
            return
        top = self.label()
        self.ins("ADDI r2, r0, 0")
        self.li("r3", words - 1)
        self.place(top)
        self.ins(f"LWX r1, r2, [{src.name}]")
        if checked:
            self.check_bounds(src.lo, src.hi, dst, "r1")
        self.ins(f"SWX r1, r2, [{dst.name}]")
        self.ins("ADDI r2, r2, 1")
        self.ins(f"BLE r2, r3, {top}")

    # expressions: the value of ``e`` ends up in r(d+1)
    def expr(self, e, d: int):
        rd = f"r{d + 1}"
        if isinstance(e, TConst):
            self.li(rd, e.value)
        elif isinstance(e, TVar):
            self.ins(f"LW {rd}, [{e.sym.name}]")
        elif isinstance(e, TIndex):
            sym = e.sym
            if isinstance(e.index, TConst) and 0 <= e.index.value < sym.length and not sym.is_bool:
                off = 4 * e.index.value
                self.ins(f"LW {rd}, [{sym.name}{'+' + str(off) if off else ''}]")
                return
            self.expr(e.index, d)
            self.chkidx(e.index, sym, rd)
            self.ins(f"{'LBX' if sym.is_bool else 'LWX'} {rd}, {rd}, [{sym.name}]")
        elif isinstance(e, TUnary):
            self.expr(e.operand, d)
            if e.op == "NOT":
                self.ins(f"XORI {rd}, {rd}, 1")
            else:
                self.ins(f"SUB {rd}, r0, {rd}")
        elif isinstance(e, TBinary):
            self.binary(e, d)
        else:
            raise TypeError(e)

    def binary(self, e, d: int):
        rd = f"r{d + 1}"
        right_first = _need(e.right) > _need(e.left)
        first, second = (e.right, e.left) if right_first else (e.left, e.right)
        self.expr(first, d)
        if d + 1 < NREGS:
            self.expr(second, d + 1)
            other = f"r{d + 2}"
        else:
            if first.lo < INT32[0] or first.hi > INT32[1]:
                raise CodegenError("expression too deep: a 64-bit intermediate would spill")
            slot = self.spill_depth
            if slot >= SPILL_WORDS:
                raise CodegenError("register spill beyond the DATA_B scratch area")
            self.spill_depth += 1
            self.max_spill = max(self.max_spill, self.spill_depth)
            self.ins(f"SW {rd}, [{SPILL}+{4 * slot}]")
            self.expr(second, d)
            self.ins(f"LW r14, [{SPILL}+{4 * slot}]")
            self.spill_depth -= 1
            # r14 holds ``first``, rd holds ``second``
            other, rd_first = rd, "r14"
            left, right = (other, rd_first) if right_first else (rd_first, other)
            self.op(e.op, rd, left, right)
            return
        left, right = (other, rd) if right_first else (rd, other)
        self.op(e.op, rd, left, right)

    def op(self, op, rd, left, right):
        if op in ("/", "MOD"):
            self.ins(f"TRAPZ {right}")
        mnem = _RRR[op]
        if op in _SWAPPED:
            left, right = right, left
        self.ins(f"{mnem} {rd}, {left}, {right}")


def emit_asm(tm: TypedModel, mmap: MemoryMap = DEFAULT_MAP) -> tuple:
    """Return (AsmListing, DATA_B layout)."""
    try:
        layout = allocate(tm, (mmap.data_b.base, mmap.data_b.size), reverse=True,
                          endian=">", bitorder="big", scratch_words=SPILL_WORDS)
    except ValueError as e:
        raise CodegenError(f"DATA_B: {e}") from None
    em = _Emitter(tm, layout)
    lines = em.run()
    return AsmListing(lines, em.spans), layout


def assemble(listing: AsmListing, layout: DataLayout, budget: int,
             mmap: MemoryMap = DEFAULT_MAP) -> ImageB:
    base = mmap.code_b.base
    try:
        words = vm_b.assemble(listing, base)
    except vm_b.AsmError as e:
        raise CodegenError(str(e)) from None
    if 4 * len(words) > mmap.code_b.size:
        raise CodegenError(
            f"code needs {4 * len(words)} bytes but CODE_B holds {mmap.code_b.size}")
    regs = 0
    for w in words:
        ins = vm_b.decode_word(w)
        fmt = vm_b.FORMATS[ins.name][1]
        nreg = {"R": 1, "RR": 2, "RRR": 3, "RI": 1, "RRI": 2, "M": 1, "MX": 2,
                "B1": 1, "B2": 2}.get(fmt, 0)
        for r in ins.ops[:nreg]:
            regs |= 1 << r
    return ImageB(words, base, base, layout, budget, bin(regs & ~1).count("1"), listing)


def compile_b(tm: TypedModel, mmap: MemoryMap = DEFAULT_MAP) -> ImageB:
    listing, layout = emit_asm(tm, mmap)
    return assemble(listing, layout, instruction_budget(tm), mmap)
