import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualsafe.build import build_program
from dualsafe.frontend import compile_source
from dualsafe.mcu import LoadError, load
from dualsafe.memmap import DEFAULT_MAP, MapError, MemoryMap

TOY = dict(code_a=(0, 4096), code_b=(4096, 4096), data_a=(8192, 4096), data_b=(12288, 4096))
COPY = "MACHINE M INPUTS i:BOOL OUTPUTS o:BOOL OPERATION user_logic BEGIN o := i END"


def toy(**changes):
    return MemoryMap.from_pairs(**{**TOY, **changes})


def test_disjoint_map_is_accepted():
    mmap = toy().validate()
    load(build_program(compile_source(COPY), mmap))


def test_overlap_is_rejected():
    with pytest.raises(MapError) as e:
        toy(code_b=(4095, 4096)).validate()
    assert e.value.kind == "overlap"


def test_out_of_range_is_rejected():
    with pytest.raises(MapError) as e:
        toy(data_b=(65000, 1000)).validate()
    assert e.value.kind == "out-of-range"


def test_empty_region_is_rejected():
    with pytest.raises(MapError) as e:
        toy(data_a=(8192, 0)).validate()
    assert e.value.kind == "empty"


def test_loader_rejects_a_bad_map(seal_program):
    from dataclasses import replace
    bad = replace(seal_program, mmap=toy(code_b=(4095, 4096)))
    with pytest.raises(LoadError) as e:
        load(bad)
    assert e.value.kind == "overlap"


def test_loader_rejects_images_outside_their_region(seal_program):
    from dataclasses import replace
    small = MemoryMap.from_pairs((0, 4), (0x6000, 0x6000), (0xC000, 0x2000), (0xE000, 0x2000))
    with pytest.raises(LoadError) as e:
        load(replace(seal_program, mmap=small))
    assert e.value.kind == "image-too-large"


def test_json_round_trip():
    assert MemoryMap.from_json(DEFAULT_MAP.to_json()) == DEFAULT_MAP


def overlaps(a, b):
    return a[0] < b[0] + b[1] and b[0] < a[0] + a[1]


region = st.tuples(st.integers(-2, 20), st.integers(-1, 20)).map(lambda p: (p[0] * 256, p[1] * 256))


@settings(max_examples=400, deadline=None)
@given(regs=st.lists(region, min_size=4, max_size=4))
def test_validate_agrees_with_interval_oracle(regs):
    space = 4096
    legal = all(s > 0 and b >= 0 and b + s <= space for b, s in regs) and not any(
        overlaps(regs[i], regs[j]) for i in range(4) for j in range(i + 1, 4))
    mmap = MemoryMap.from_pairs(*regs, space=space)
    if legal:
        mmap.validate()
    else:
        with pytest.raises(MapError):
            mmap.validate()
