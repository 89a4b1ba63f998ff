"""Intel-style HEX records (types 00 and 01, 16-bit addressing).

Lines look like ``:LLAAAATT<data>CC``: byte count, load offset, record
type, payload and a checksum that makes the byte sum of the record zero
modulo 256.
"""

from __future__ import annotations

from dataclasses import dataclass

DATA = 0x00
EOF = 0x01

EOF_LINE = ":00000001FF"


class HexError(ValueError):
    """Malformed HEX text. ``line`` is 1-based, or None for file-level errors."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass(frozen=True)
class HexRecord:
    length: int
    address: int
    rectype: int
    payload: bytes
    checksum: int

    @classmethod
    def make(cls, address: int, rectype: int, payload: bytes = b"") -> "HexRecord":
        return cls(len(payload), address, rectype, bytes(payload),
                   checksum(len(payload), address, rectype, payload))

    def to_line(self) -> str:
        return (f":{self.length:02X}{self.address:04X}{self.rectype:02X}"
                f"{self.payload.hex().upper()}{self.checksum:02X}")


def checksum(length: int, address: int, rectype: int, payload: bytes) -> int:
    total = length + (address >> 8) + (address & 0xFF) + rectype + sum(payload)
    return (-total) & 0xFF


def encode(image: bytes, base_address: int = 0, bytes_per_record: int = 16) -> str:
    """Encode ``image`` loaded at ``base_address``; the result ends with the EOF record."""
    if not 1 <= bytes_per_record <= 32:
        raise ValueError(f"bytes_per_record must be in 1..32, got {bytes_per_record}")
    if not 0 <= base_address <= 0xFFFF:
        raise ValueError(f"base address {base_address:#x} outside 16-bit space")
    if base_address + len(image) > 0x10000:
        raise ValueError(
            f"address overflow: {len(image)} bytes at {base_address:#06x} exceed 64 KiB")
    lines = []
    for off in range(0, len(image), bytes_per_record):
        chunk = bytes(image[off:off + bytes_per_record])
        lines.append(HexRecord.make(base_address + off, DATA, chunk).to_line())
    lines.append(EOF_LINE)
    return "\n".join(lines) + "\n"


def parse_line(line: str, lineno: int = 0) -> HexRecord:
    if not line.startswith(":"):
        raise HexError("record does not start with ':'", lineno)
    body = line[1:]
    if len(body) % 2 or len(body) < 10:
        raise HexError("truncated record", lineno)
    try:
        raw = bytes.fromhex(body)
    except ValueError:
        raise HexError("bad character in record", lineno) from None
    if body != body.upper():
        raise HexError("hex digits must be uppercase", lineno)
    length, rectype = raw[0], raw[3]
    address = (raw[1] << 8) | raw[2]
    payload = raw[4:-1]
    if len(payload) != length:
        raise HexError(f"length field {length} but {len(payload)} payload bytes", lineno)
    if sum(raw) & 0xFF:
        raise HexError(
            f"bad checksum {raw[-1]:02X}, expected {checksum(length, address, rectype, payload):02X}",
            lineno)
    if rectype not in (DATA, EOF):
        raise HexError(f"unsupported record type {rectype:02X}", lineno)
    if rectype == EOF and (length or address):
        raise HexError("EOF record must have empty payload and address 0", lineno)
    return HexRecord(length, address, rectype, payload, raw[-1])


def records(text: str) -> list[HexRecord]:
    """Parse every record up to and including EOF."""
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if out and out[-1].rectype == EOF:
            raise HexError("data after EOF record", lineno)
        out.append(parse_line(line, lineno))
    if not out or out[-1].rectype != EOF:
        raise HexError("missing EOF record")
    return out


def decode(text: str) -> tuple[int, bytes]:
    """Return ``(base_address, image)``; data records must tile a contiguous span."""
    data = sorted((r for r in records(text) if r.rectype == DATA and r.length),
                  key=lambda r: r.address)
    if not data:
        return 0, b""
    base = data[0].address
    image = bytearray()
    for rec in data:
        expected = base + len(image)
        if rec.address < expected:
            raise HexError(f"record at {rec.address:#06x} overlaps previous data")
        if rec.address > expected:
            raise HexError(f"gap before record at {rec.address:#06x}")
        image += rec.payload
    if base + len(image) > 0x10000:
        raise HexError("image exceeds 16-bit address space")
    return base, bytes(image)


def data_record_count(text: str) -> int:
    return sum(1 for r in records(text) if r.rectype == DATA)
