import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualsafe import hexfmt
from dualsafe.hexfmt import HexError


def oracle_checksum(record_hex: str) -> int:
    """Independent: two's complement of the byte sum of the record body."""
    total = sum(int(record_hex[i:i + 2], 16) for i in range(0, len(record_hex), 2))
    return (0x100 - total % 0x100) % 0x100


def test_golden_record():
    assert oracle_checksum("0300300002337A") == 0x1E
    assert hexfmt.encode(bytes([0x02, 0x33, 0x7A]), 0x0030) == ":0300300002337A1E\n:00000001FF\n"


def test_empty_image_is_eof_only():
    assert hexfmt.encode(b"") == ":00000001FF\n"
    assert hexfmt.decode(":00000001FF\n") == (0, b"")


def test_record_arithmetic():
    text = hexfmt.encode(bytes(range(8)), 0, 4)
    assert hexfmt.data_record_count(text) == 2
    assert text.splitlines()[-1] == hexfmt.EOF_LINE


def test_bad_checksum_names_line():
    with pytest.raises(HexError) as e:
        hexfmt.decode(":0300300002337A1F\n:00000001FF\n")
    assert e.value.line == 1
    assert "checksum" in str(e.value)


def test_missing_eof():
    with pytest.raises(HexError, match="missing EOF"):
        hexfmt.decode(":0300300002337A1E\n")


@pytest.mark.parametrize("text,needle", [
    (":03003000G2337A1E\n:00000001FF\n", "bad character"),
    ("0300300002337A1E\n:00000001FF\n", "':'"),
    (":0300300002337a1e\n:00000001FF\n", "uppercase"),
    (":040030\n:00000001FF\n", "truncated"),
    (":0400300002337A1D\n:00000001FF\n", "length field"),
    (":0000000201FD\n:00000001FF\n", "length field"),
    (":00000002FE\n:00000001FF\n", "record type"),
    (":00000001FF\n:0300300002337A1E\n", "after EOF"),
])
def test_malformed_records(text, needle):
    with pytest.raises(HexError, match=needle):
        hexfmt.decode(text)


def test_overlap_and_gap_rejected():
    a = hexfmt.HexRecord.make(0x10, 0, b"\x01\x02").to_line()
    b = hexfmt.HexRecord.make(0x11, 0, b"\x03").to_line()
    c = hexfmt.HexRecord.make(0x14, 0, b"\x03").to_line()
    with pytest.raises(HexError, match="overlaps"):
        hexfmt.decode(f"{a}\n{b}\n:00000001FF\n")
    with pytest.raises(HexError, match="gap"):
        hexfmt.decode(f"{a}\n{c}\n:00000001FF\n")


def test_address_overflow():
    with pytest.raises(ValueError, match="overflow"):
        hexfmt.encode(b"\0" * 17, 0xFFF0)
    with pytest.raises(ValueError):
        hexfmt.encode(b"\0", 0, 33)
    assert hexfmt.decode(hexfmt.encode(b"\xAA" * 16, 0xFFF0))[1] == b"\xAA" * 16


def test_every_sum_changing_digit_substitution_is_rejected():
    line = ":0300300002337A1E"
    for pos in range(1, len(line)):
        for digit in "0123456789ABCDEF":
            if digit == line[pos]:
                continue
            bad = line[:pos] + digit + line[pos + 1:]
            body = bytes.fromhex(bad[1:])
            if sum(body) % 256 == 0 and len(body) - 5 == body[0]:
                continue        # substitution that keeps the sum: undetectable by design
            with pytest.raises(HexError):
                hexfmt.decode(bad + "\n:00000001FF\n")


@settings(max_examples=300, deadline=None)
@given(data=st.binary(max_size=2048), base=st.integers(0, 0xF000),
       per=st.integers(1, 32))
def test_round_trip(data, base, per):
    text = hexfmt.encode(data, base, per)
    got_base, got = hexfmt.decode(text)
    assert got == data
    if data:
        assert got_base == base
    assert hexfmt.data_record_count(text) == -(-len(data) // per)


@settings(max_examples=50, deadline=None)
@given(data=st.binary(min_size=1, max_size=64))
def test_records_carry_valid_checksums(data):
    for line in hexfmt.encode(data, 0x100, 7).splitlines():
        assert oracle_checksum(line[1:-2]) == int(line[-2:], 16)
