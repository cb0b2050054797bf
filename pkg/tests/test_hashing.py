"""Hashing primitives against independently computed references."""

from __future__ import annotations

from hypothesis import given
from hypothesis import strategies as st

from qaforge.hashing import MASK64, SplitMix64, hash64, mix64, to_unit_interval


def reference_fnv1a(data: bytes) -> int:
    """Independent straight-line FNV-1a 64 for cross-checking."""
    state = 0xCBF29CE484222325
    for byte in data:
        state = ((state ^ byte) * 0x100000001B3) % (1 << 64)
    return state


def test_fnv_empty_input_is_offset_basis():
    assert hash64(b"") == 0xCBF29CE484222325


def test_fnv_single_byte_hand_run():
    # state = basis ^ 0x61, then * prime mod 2^64
    state = (0xCBF29CE484222325 ^ 0x61) * 0x100000001B3 % (1 << 64)
    assert state == 0xAF63DC4C8601EC8C
    assert hash64("a") == 0xAF63DC4C8601EC8C


def test_fnv_equal_inputs_equal_outputs():
    assert hash64("نص عربي") == hash64("نص عربي")


@given(st.binary(max_size=64))
def test_fnv_matches_reference(data):
    assert hash64(data) == reference_fnv1a(data)


def test_mix64_reference_values():
    # SplitMix64 finalizer applied by hand to 1:
    # widely published first output of splitmix64 seeded with 0
    # (state advances by the golden gamma, then finalizes).
    rng = SplitMix64(0)
    assert rng.next_u64() == 0xE220A8397B1DCDAF


def test_mix64_stays_in_range():
    for value in (0, 1, MASK64, 0x123456789ABCDEF0):
        assert 0 <= mix64(value) <= MASK64


def test_to_unit_interval_bounds():
    assert to_unit_interval(0) == 0.0
    assert 0.0 <= to_unit_interval(MASK64) < 1.0


def test_splitmix_streams_are_reproducible():
    a = SplitMix64(1234)
    b = SplitMix64(1234)
    assert [a.next_u64() for _ in range(10)] == [b.next_u64() for _ in range(10)]


def test_sample_without_replacement_is_distinct_and_in_range():
    rng = SplitMix64(7)
    picked = rng.sample_without_replacement(20, 8)
    assert len(picked) == len(set(picked)) == 8
    assert all(0 <= i < 20 for i in picked)


def test_shuffle_is_a_permutation():
    rng = SplitMix64(9)
    items = list(range(50))
    rng.shuffle(items)
    assert sorted(items) == list(range(50))
    assert items != list(range(50))
