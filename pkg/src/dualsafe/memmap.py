"""Memory map of one controller: four disjoint regions in a flat address space."""

from __future__ import annotations

from dataclasses import dataclass

REGIONS = ("CODE_A", "CODE_B", "DATA_A", "DATA_B")
SPACE = 0x10000


class MapError(ValueError):
    def __init__(self, kind: str, message: str):
        self.kind = kind          # overlap | out-of-range | empty
        super().__init__(f"{kind}: {message}")


@dataclass(frozen=True)
class Region:
    base: int
    size: int

    @property
    def end(self) -> int:
        return self.base + self.size

    def contains(self, addr: int, n: int = 1) -> bool:
        return self.base <= addr and addr + n <= self.end


@dataclass(frozen=True)
class MemoryMap:
    code_a: Region
    code_b: Region
    data_a: Region
    data_b: Region
    space: int = SPACE

    @classmethod
    def from_pairs(cls, code_a, code_b, data_a, data_b, space: int = SPACE) -> "MemoryMap":
        return cls(Region(*code_a), Region(*code_b), Region(*data_a), Region(*data_b), space)

    def regions(self) -> dict:
        return dict(zip(REGIONS, (self.code_a, self.code_b, self.data_a, self.data_b)))

    def validate(self) -> "MemoryMap":
        """Raise MapError unless every region is nonempty, in range and disjoint."""
        regs = self.regions()
        for name, r in regs.items():
            if r.size <= 0:
                raise MapError("empty", f"{name} has size {r.size}")
            if r.base < 0 or r.end > self.space:
                raise MapError("out-of-range",
                               f"{name} [{r.base:#x}, {r.end:#x}) outside [0, {self.space:#x})")
        names = list(regs)
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                ra, rb = regs[a], regs[b]
                if ra.base < rb.end and rb.base < ra.end:
                    raise MapError("overlap", f"{a} and {b} overlap")
        return self

    def to_json(self) -> dict:
        out = {name: {"base": r.base, "size": r.size} for name, r in self.regions().items()}
        out["space"] = self.space
        return out

    @classmethod
    def from_json(cls, d: dict) -> "MemoryMap":
        return cls(*(Region(d[n]["base"], d[n]["size"]) for n in REGIONS),
                   d.get("space", SPACE))


# Large code regions leave room for the interlocking benchmark's unrolled templates.
DEFAULT_MAP = MemoryMap.from_pairs((0x0000, 0x6000), (0x6000, 0x6000),
                                   (0xC000, 0x2000), (0xE000, 0x2000))
