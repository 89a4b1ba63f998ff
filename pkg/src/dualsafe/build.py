"""Full pipeline from source text to loadable program and on-disk artifacts."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from . import hexfmt, vm_b
from .codegen_a import ImageA, compile_a, listing_a
from .codegen_b import ImageB, compile_b
from .frontend import compile_source
from .frontend.typecheck import TypedModel
from .layout import DataLayout
from .mcu import Program
from .memmap import DEFAULT_MAP, MemoryMap

ARTIFACTS = ("image_a.hex", "image_b.hex", "listing_a.txt", "listing_b.asm", "map.json",
             "fingerprint.txt")


def _map_doc(mmap, img_a, img_b, inits) -> dict:
    return {"map": mmap.to_json(), "layout_a": img_a.layout.to_json(),
            "layout_b": img_b.layout.to_json(), "budget": img_a.budget,
            "stack_depth": img_a.stack_depth, "registers_used": img_b.registers_used,
            "inits": inits}


def fingerprint(code_a: bytes, code_b: bytes, doc: dict) -> str:
    """Content hash over both images and the map document."""
    h = hashlib.sha256()
    h.update(code_a)
    h.update(b"\0")
    h.update(code_b)
    h.update(json.dumps(doc, sort_keys=True).encode())
    return h.hexdigest()[:16]


def build_program(tm: TypedModel, mmap: MemoryMap = DEFAULT_MAP) -> Program:
    mmap.validate()
    img_a = compile_a(tm, mmap)
    img_b = compile_b(tm, mmap)
    inits = {s.name: list(s.init) for s in tm.state}
    fp = fingerprint(img_a.code, img_b.code, _map_doc(mmap, img_a, img_b, inits))
    return Program(mmap, img_a, img_b, inits, fp)


def build_source(source: str, mmap: MemoryMap = DEFAULT_MAP) -> tuple:
    """Returns (TypedModel, Program); raises ModelError or CodegenError."""
    tm = compile_source(source)
    return tm, build_program(tm, mmap)


def write_artifacts(program: Program, out_dir, record_bytes: int = 4, title: str = "") -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    a, b, fp = program.image_a, program.image_b, program.fingerprint
    doc = _map_doc(program.mmap, a, b, program.inits)
    doc["fingerprint"] = fp
    files = {
        "image_a.hex": hexfmt.encode(a.code, a.base, 16),
        "image_b.hex": hexfmt.encode(b.code, b.base, record_bytes),
        "listing_a.txt": f"; fingerprint {fp}\n" + listing_a(a, title),
        "listing_b.asm": f"; fingerprint {fp}\n" + b.listing.text(),
        "map.json": json.dumps(doc, indent=2, sort_keys=True) + "\n",
        "fingerprint.txt": fp + "\n",
    }
    paths = {}
    for name, text in files.items():
        p = out / name
        p.write_text(text)
        paths[name] = p
    return paths


class ArtifactError(ValueError):
    pass


def load_artifacts(build_dir) -> Program:
    """Rebuild a Program from a build directory, verifying its fingerprint."""
    d = Path(build_dir)
    try:
        doc = json.loads((d / "map.json").read_text())
        base_a, code_a = hexfmt.decode((d / "image_a.hex").read_text())
        base_b, code_b = hexfmt.decode((d / "image_b.hex").read_text())
    except (OSError, ValueError) as e:
        raise ArtifactError(f"{d}: {e}") from None
    mmap = MemoryMap.from_json(doc["map"])
    la = DataLayout.from_json(doc["layout_a"])
    lb = DataLayout.from_json(doc["layout_b"])
    img_a = ImageA(code_a, base_a, base_a, la, doc["stack_depth"], doc["budget"])
    img_b = ImageB(vm_b.from_bytes(code_b), base_b, base_b, lb, doc["budget"],
                   doc["registers_used"])
    inits = doc["inits"]
    fp = fingerprint(code_a, code_b, _map_doc(mmap, img_a, img_b, inits))
    if fp != doc.get("fingerprint"):
        raise ArtifactError(f"{d}: fingerprint mismatch ({fp} != {doc.get('fingerprint')})")
    return Program(mmap, img_a, img_b, inits, fp)
