"""Placement of model variables inside a VM data region.

Both chains store scalars and INT array elements as 4-byte words and pack
BOOL arrays one bit per element, but they differ on purpose: VM-A allocates
in declaration order, little-endian, LSB-first bits; VM-B allocates in
reverse order, big-endian, MSB-first bits, followed by a spill area.

The canonical serialization (used for digests and state resync) is
independent of either: declaration order, every element as a 32-bit
little-endian two's complement word, booleans as 0/1.
"""

from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass

import numpy as np


class RegionOverflow(ValueError):
    pass


@dataclass(frozen=True)
class Slot:
    name: str
    kind: str        # input | output | state | loop
    addr: int
    size: int        # bytes
    count: int       # elements (1 for scalars)
    is_array: bool
    is_bool: bool
    lo: int
    hi: int

    @property
    def packed(self) -> bool:
        return self.is_array and self.is_bool


@dataclass(frozen=True)
class DataLayout:
    slots: tuple          # in canonical (declaration) order, loop slots last
    endian: str           # "<" or ">"
    bitorder: str         # "little" or "big"
    base: int
    used: int             # bytes from base through the end of the last slot
    scratch_addr: int = 0
    scratch_size: int = 0

    def __getitem__(self, name: str) -> Slot:
        for s in self.slots:
            if s.name == name:
                return s
        raise KeyError(name)

    def of_kind(self, *kinds) -> list:
        return [s for s in self.slots if s.kind in kinds]

    def to_json(self) -> dict:
        return {"endian": self.endian, "bitorder": self.bitorder, "base": self.base,
                "used": self.used, "scratch_addr": self.scratch_addr,
                "scratch_size": self.scratch_size,
                "slots": [asdict(s) for s in self.slots]}

    @classmethod
    def from_json(cls, d: dict) -> "DataLayout":
        return cls(tuple(Slot(**s) for s in d["slots"]), d["endian"], d["bitorder"],
                   d["base"], d["used"], d.get("scratch_addr", 0), d.get("scratch_size", 0))


def slot_size(count: int, is_array: bool, is_bool: bool) -> int:
    if is_array and is_bool:
        return ((count + 31) // 32) * 4
    return 4 * count


def allocate(tm, region, *, reverse=False, endian="<", bitorder="little",
             scratch_words=0, hidden=()) -> DataLayout:
    """Lay out ``tm``'s variables (plus loop indices and ``hidden`` words) in ``region``.

    ``region`` is a (base, size) pair.
    """
    base, size = region
    entries = [(s.name, s.kind, s.length, s.is_array, s.is_bool, s.lo, s.hi)
               for s in tm.variables]
    entries += [(name, "loop", 1, False, False, -(2**31), 2**31 - 1)
                for name in list(tm.loop_slots) + list(hidden)]
    order = list(reversed(entries)) if reverse else entries
    addr = base
    placed = {}
    for name, kind, count, is_array, is_bool, lo, hi in order:
        n = slot_size(count, is_array, is_bool)
        placed[name] = Slot(name, kind, addr, n, count, is_array, is_bool, lo, hi)
        addr += n
    scratch_addr = addr
    addr += 4 * scratch_words
    if addr - base > size:
        raise RegionOverflow(
            f"data needs {addr - base} bytes but the region holds {size}")
    slots = tuple(placed[e[0]] for e in entries)
    return DataLayout(slots, endian, bitorder, base, addr - base, scratch_addr,
                      4 * scratch_words)


# -- reading and writing values in a memory image -----------------------------------

def read_slot(mem: np.ndarray, slot: Slot, layout: DataLayout) -> np.ndarray:
    """Element values of ``slot`` as an int64 array."""
    raw = mem[slot.addr:slot.addr + slot.size]
    if slot.packed:
        bits = np.unpackbits(raw, bitorder=layout.bitorder)[:slot.count]
        return bits.astype(np.int64)
    return raw.view(layout.endian + "i4").astype(np.int64)


def write_slot(mem: np.ndarray, slot: Slot, layout: DataLayout, values) -> None:
    vals = np.asarray(values, dtype=np.int64).reshape(-1)
    if vals.size != slot.count:
        raise ValueError(f"'{slot.name}' needs {slot.count} values, got {vals.size}")
    if slot.packed:
        packed = np.packbits(vals.astype(np.uint8), bitorder=layout.bitorder)
        region = np.zeros(slot.size, np.uint8)
        region[:packed.size] = packed
        mem[slot.addr:slot.addr + slot.size] = region
    else:
        mem[slot.addr:slot.addr + slot.size] = (
            vals.astype(layout.endian + "i4").view(np.uint8))


def canonical_bytes(mem: np.ndarray, layout: DataLayout, slots) -> bytes:
    parts = [read_slot(mem, s, layout).astype("<i4").tobytes() for s in slots]
    return b"".join(parts)


def crc32(data: bytes) -> int:
    """CRC-32, polynomial 0x04C11DB7 reflected, init and final xor 0xFFFFFFFF."""
    return zlib.crc32(data) & 0xFFFFFFFF


def values_from_canonical(data: bytes, slots) -> dict:
    arr = np.frombuffer(data, "<i4").astype(np.int64)
    out, pos = {}, 0
    for s in slots:
        out[s.name] = arr[pos:pos + s.count]
        pos += s.count
    return out


def as_python(slot: Slot, values: np.ndarray):
    return [int(v) for v in values] if slot.is_array else int(values[0])
