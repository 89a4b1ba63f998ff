"""Chain A: typed model -> linear IR -> stack-machine bytecode (ImageA).

The IR is a flat list of VM-A-shaped operations whose data operands are
still symbolic (variable plus byte offset) and whose jump targets are
labels. ``emit_a`` resolves both and encodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import vm_a
from .frontend.complexity import instruction_budget
from .frontend.typecheck import (
    TArrayCopy, TAssign, TBinary, TConst, TFor, TIf, TIndex, TUnary, TVar, TypedModel,
)
from .layout import DataLayout, allocate
from .memmap import DEFAULT_MAP, MemoryMap

UNROLL_MAX = 8          # FOR loops with at most this many trips are unrolled
INLINE_WORDS = 8        # array resets and copies up to this many words are unrolled
FILL = "$fill"          # hidden counter for array reset/copy loops

_BINOPS = {"+": "ADD", "-": "SUB", "*": "MUL", "/": "DIV", "MOD": "MOD", "AND": "AND",
           "OR": "OR", "XOR": "XOR", "=": "EQ", "/=": "NE", "<": "LT", "<=": "LE",
           ">": "GT", ">=": "GE"}


class CodegenError(ValueError):
    pass


@dataclass(frozen=True)
class Ref:
    """Symbolic data operand: a variable's slot plus a byte offset."""
    var: str
    offset: int = 0

    def __str__(self):
        return f"[{self.var}+{self.offset}]" if self.offset else f"[{self.var}]"


@dataclass(frozen=True)
class IrOp:
    op: str        # VM-A mnemonic, or LABEL
    args: tuple = ()

    def __str__(self):
        if self.op == "LABEL":
            return f"{self.args[0]}:"
        return " ".join([self.op] + [str(a) for a in self.args])


@dataclass
class IrProgram:
    ops: list
    layout: DataLayout
    budget: int

    def validate(self, region) -> None:
        labels = [o.args[0] for o in self.ops if o.op == "LABEL"]
        if len(set(labels)) != len(labels):
            raise CodegenError("duplicate IR label")
        for o in self.ops:
            if o.op in ("JMP", "JZ") and o.args[0] not in labels:
                raise CodegenError(f"jump to unknown label {o.args[0]}")
            if o.op == "LOOP" and o.args[2] not in labels:
                raise CodegenError(f"loop to unknown label {o.args[2]}")
            for a in o.args:
                if isinstance(a, Ref):
                    slot = self.layout[a.var]
                    if not (region.contains(slot.addr + a.offset, 4)
                            or (o.op == "CLR" and region.contains(slot.addr, slot.size))):
                        raise CodegenError(f"{a} outside DATA_A")

    def text(self) -> str:
        return "\n".join(str(o) for o in self.ops) + "\n"


@dataclass
class ImageA:
    code: bytes
    base: int
    entry: int
    layout: DataLayout
    stack_depth: int
    budget: int
    ir: IrProgram = field(repr=False, default=None)


# -- lowering --------------------------------------------------------------------

def _needs_fill(tm: TypedModel) -> bool:
    def big(n_words):
        return n_words > INLINE_WORDS

    for s in tm.outputs:
        if s.is_array and s.lo != 0 and big(s.length):
            return True

    def walk(stmts):
        for s in stmts:
            if isinstance(s, TArrayCopy):
                n = (s.dst.length + 31) // 32 if s.dst.is_bool else s.dst.length
                if big(n):
                    return True
            elif isinstance(s, TIf):
                if any(walk(b) for _, b in s.branches) or walk(s.orelse):
                    return True
            elif isinstance(s, TFor) and walk(s.body):
                return True
        return False

    return walk(tm.body)


class _Lowerer:
    def __init__(self, tm: TypedModel, layout: DataLayout):
        self.tm = tm
        self.layout = layout
        self.ops = []
        self.nlabels = 0
        self.consts = {}      # unrolled loop Symbol -> current value

    def emit(self, op, *args):
        self.ops.append(IrOp(op, args))

    def label(self) -> str:
        self.nlabels += 1
        return f"L{self.nlabels}"

    def run(self) -> list:
        self.prologue()
        self.stmts(self.tm.body)
        self.emit("HALT")
        return self.ops

    def prologue(self):
        for s in self.tm.outputs:
            if not s.is_array:
                self.emit("PUSH", s.lo)
                self.emit("STORE", Ref(s.name))
            elif s.lo == 0:
                self.emit("CLR", Ref(s.name))
            elif s.length <= INLINE_WORDS:
                for i in range(s.length):
                    self.emit("PUSH", s.lo)
                    self.emit("STORE", Ref(s.name, 4 * i))
            else:
                top = self.label()
                self.emit("PUSH", 0)
                self.emit("STORE", Ref(FILL))
                self.emit("LABEL", top)
                self.emit("LOAD", Ref(FILL))
                self.emit("PUSH", s.lo)
                self.emit("STXW", Ref(s.name), s.length)
                self.emit("LOOP", Ref(FILL), s.length - 1, top)

    # statements
    def stmts(self, stmts):
        for s in stmts:
            self.stmt(s)

    def stmt(self, s):
        if isinstance(s, TAssign):
            sym = s.sym
            if s.index is None:
                self.expr(s.value)
                self.check(s.value, sym)
                self.emit("STORE", Ref(sym.name))
            else:
                self.expr(s.index)
                self.expr(s.value)
                self.check(s.value, sym)
                self.emit("STXB" if sym.is_bool else "STXW", Ref(sym.name), sym.length)
        elif isinstance(s, TArrayCopy):
            self.copy(s)
        elif isinstance(s, TIf):
            end = self.label()
            for i, (cond, body) in enumerate(s.branches):
                nxt = self.label()
                self.expr(cond)
                self.emit("JZ", nxt)
                self.stmts(body)
                last = i == len(s.branches) - 1 and not s.orelse
                if not last:
                    self.emit("JMP", end)
                self.emit("LABEL", nxt)
            self.stmts(s.orelse)
            self.emit("LABEL", end)
        elif isinstance(s, TFor):
            if s.trips == 0:
                return
            if s.trips <= UNROLL_MAX:
                for k in range(s.lo, s.hi + 1):
                    self.consts[s.sym] = k
                    self.stmts(s.body)
                del self.consts[s.sym]
                return
            top = self.label()
            self.emit("PUSH", s.lo)
            self.emit("STORE", Ref(s.sym.name))
            self.emit("LABEL", top)
            self.stmts(s.body)
            self.emit("LOOP", Ref(s.sym.name), s.hi, top)
        else:
            raise TypeError(s)

    def check(self, value, sym):
        if value.lo < sym.lo or value.hi > sym.hi:
            self.emit("RANGECHK", sym.lo, sym.hi)

    def copy(self, s: TArrayCopy):
        dst, src = s.dst, s.src
        checked = not dst.is_bool and (src.lo < dst.lo or src.hi > dst.hi)
        words = (dst.length + 31) // 32 if dst.is_bool else dst.length
        if words <= INLINE_WORDS:
            for i in range(words):
                self.emit("LOAD", Ref(src.name, 4 * i))
                if checked:
                    self.emit("RANGECHK", dst.lo, dst.hi)
                self.emit("STORE", Ref(dst.name, 4 * i))
            return
        top = self.label()
        self.emit("PUSH", 0)
        self.emit("STORE", Ref(FILL))
        self.emit("LABEL", top)
        self.emit("LOAD", Ref(FILL))
        self.emit("LOAD", Ref(FILL))
        self.emit("LDXW", Ref(src.name), words)
        if checked:
            self.emit("RANGECHK", dst.lo, dst.hi)
        self.emit("STXW", Ref(dst.name), words)
        self.emit("LOOP", Ref(FILL), words - 1, top)

    # expressions: each leaves exactly one value on the operand stack
    def expr(self, e):
        if isinstance(e, TConst):
            self.emit("PUSH", e.value)
        elif isinstance(e, TVar):
            if e.sym in self.consts:
                self.emit("PUSH", self.consts[e.sym])
            else:
                self.emit("LOAD", Ref(e.sym.name))
        elif isinstance(e, TIndex):
            sym = e.sym
            k = self.static(e.index)
            if k is not None and not sym.is_bool and 0 <= k < sym.length:
                self.emit("LOAD", Ref(sym.name, 4 * k))
                return
            self.expr(e.index)
            self.emit("LDXB" if sym.is_bool else "LDXW", Ref(sym.name), sym.length)
        elif isinstance(e, TUnary):
            self.expr(e.operand)
            self.emit("NOT" if e.op == "NOT" else "NEG")
        elif isinstance(e, TBinary):
            self.expr(e.left)
            self.expr(e.right)
            self.emit(_BINOPS[e.op])
        else:
            raise TypeError(e)

    def static(self, e):
        if isinstance(e, TConst):
            return e.value
        if isinstance(e, TVar) and e.sym in self.consts:
            return self.consts[e.sym]
        return None


def lower(tm: TypedModel, mmap: MemoryMap = DEFAULT_MAP) -> IrProgram:
    """Lower a typed model to IR with a DATA_A symbol table."""
    hidden = (FILL,) if _needs_fill(tm) else ()
    try:
        layout = allocate(tm, (mmap.data_a.base, mmap.data_a.size), hidden=hidden)
    except ValueError as e:
        raise CodegenError(f"DATA_A: {e}") from None
    ir = IrProgram(_Lowerer(tm, layout).run(), layout, instruction_budget(tm))
    ir.validate(mmap.data_a)
    return ir


# -- emission --------------------------------------------------------------------

def _resolve(arg, layout):
    return layout[arg.var].addr + arg.offset if isinstance(arg, Ref) else arg


def emit_a(ir: IrProgram, mmap: MemoryMap = DEFAULT_MAP,
           stack_cap: int = vm_a.STACK_CAPACITY) -> ImageA:
    base = mmap.code_a.base
    # pass 1: label addresses
    labels, pc = {}, base
    for o in ir.ops:
        if o.op == "LABEL":
            labels[o.args[0]] = pc
        else:
            pc += vm_a.instr_size(o.op)
    if pc - base > mmap.code_a.size:
        raise CodegenError(f"code needs {pc - base} bytes but CODE_A holds {mmap.code_a.size}")
    out = bytearray()
    for o in ir.ops:
        if o.op == "LABEL":
            continue
        if o.op == "CLR":
            slot = ir.layout[o.args[0].var]
            args = (slot.addr, slot.size)
        elif o.op in ("LDXW", "STXW", "LDXB", "STXB"):
            args = (_resolve(o.args[0], ir.layout), o.args[1])
        elif o.op in ("JMP", "JZ"):
            args = (labels[o.args[0]],)
        elif o.op == "LOOP":
            args = (_resolve(o.args[0], ir.layout), o.args[1], labels[o.args[2]])
        else:
            args = tuple(_resolve(a, ir.layout) for a in o.args)
        for a in args:
            if not -(2**31) <= a < 2**31:
                raise CodegenError(f"immediate {a} of {o.op} does not fit 32 bits")
        out += vm_a.encode(o.op, *args)
    code = bytes(out)
    depth = stack_depth(code, base)
    if depth > stack_cap:
        raise CodegenError(f"stack depth {depth} exceeds capacity {stack_cap}")
    return ImageA(code, base, base, ir.layout, depth, ir.budget, ir)


def stack_depth(code: bytes, base: int) -> int:
    """Maximum operand-stack depth over all control paths; rejects inconsistent joins."""
    instrs = {i.addr: i for i in vm_a.decode(code, base)}
    depth_at = {base: 0}
    work = [base]
    top = 0
    while work:
        pc = work.pop()
        d = depth_at[pc]
        ins = instrs.get(pc)
        if ins is None:
            raise CodegenError(f"control reaches {pc:#06x}, which is not an instruction")
        pops = {"STORE": 1, "STXW": 2, "STXB": 2, "JZ": 1, "LDXW": 1, "LDXB": 1,
                "NEG": 1, "NOT": 1, "RANGECHK": 1}.get(ins.name)
        if pops is None:
            pops = 2 if vm_a.STACK_EFFECT[ins.name] == -1 else 0
        if d < pops:
            raise CodegenError(f"stack underflow at {pc:#06x}")
        d2 = d + vm_a.STACK_EFFECT[ins.name]
        top = max(top, d2)
        if ins.name == "HALT":
            succ = []
        elif ins.name == "JMP":
            succ = [ins.args[0]]
        elif ins.name == "JZ":
            succ = [pc + ins.size, ins.args[0]]
        elif ins.name == "LOOP":
            succ = [pc + ins.size, ins.args[2]]
        else:
            succ = [pc + ins.size]
        for n in succ:
            if n in depth_at:
                if depth_at[n] != d2:
                    raise CodegenError(f"inconsistent stack depth at {n:#06x}")
            else:
                depth_at[n] = d2
                work.append(n)
    return top


def compile_a(tm: TypedModel, mmap: MemoryMap = DEFAULT_MAP) -> ImageA:
    return emit_a(lower(tm, mmap), mmap)


def listing_a(img: ImageA, title: str = "") -> str:
    head = [f"; chain A image {title}".rstrip(),
            f"; entry {img.entry:04X}  stack depth {img.stack_depth}  budget {img.budget}"]
    for s in img.layout.slots:
        head.append(f"; {s.addr:04X} {s.name} ({s.kind}, {s.size} bytes)")
    return "\n".join(head) + "\n" + vm_a.listing(img.code, img.base)
