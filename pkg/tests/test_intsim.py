"""Exact integer accumulation, overflow witnesses, two's-complement wrapping."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from accq.errors import (
    EnumerationBudgetError,
    LengthMismatchError,
    NonFiniteInputError,
)
from accq.intsim import (
    DEFAULT_ENUM_BUDGET,
    AccumulatorSpec,
    check_accumulator,
    enumeration_budget,
    exact_dot,
    exhaustive_check,
    extremal_max_input,
    extremal_min_input,
    verify_domination,
    wrap,
    wrapping_dot,
)

from oracles import brute_extremes


def test_spec_register_range():
    spec = AccumulatorSpec(P=4)
    assert (spec.lo, spec.hi) == (-8, 7)
    assert AccumulatorSpec(P=2).lo == -2


def test_exact_dot_is_plain_integer_arithmetic():
    assert exact_dot([3, -1, 2], [2, 5, -4]) == 3 * 2 - 5 - 8
    assert exact_dot([], []) == 0
    # stays exact far past float53
    big = 1 << 60
    assert exact_dot([big, big], [3, 5]) == 8 * big


def test_extremal_inputs_frozen():
    # unsigned N=2: positive weights take 3, negatives take 0 (max side)
    assert extremal_max_input([2, -1, 0], 2, False) == [3, 0, 3]
    assert extremal_min_input([2, -1, 0], 2, False) == [0, 3, 0]
    # signed N=1 codes are {-1, 0}: max pairs negatives with -1
    assert extremal_max_input([2, -1], 1, True) == [0, -1]
    assert extremal_min_input([2, -1], 1, True) == [-1, 0]


@given(
    q=st.lists(st.integers(min_value=-9, max_value=9), min_size=1, max_size=6),
    N=st.integers(min_value=1, max_value=3),
    signed=st.booleans(),
)
@settings(max_examples=150, deadline=None)
def test_extremal_inputs_match_brute_force(q, N, signed):
    hi, lo = brute_extremes(q, N, signed)
    assert exact_dot(extremal_max_input(q, N, signed), q) == hi
    assert exact_dot(extremal_min_input(q, N, signed), q) == lo


def test_wrap_frozen():
    assert wrap(12, 4) == -4
    assert wrap(7, 4) == 7
    assert wrap(8, 4) == -8
    assert wrap(-9, 4) == 7
    assert wrap(-8, 4) == -8


@given(v=st.integers(min_value=-(1 << 70), max_value=1 << 70), P=st.integers(2, 64))
def test_wrap_is_congruent_and_in_range(v, P):
    w = wrap(v, P)
    lo, hi = -(1 << (P - 1)), (1 << (P - 1)) - 1
    assert lo <= w <= hi
    assert (w - v) % (1 << P) == 0


def test_wrapping_dot_frozen():
    spec = AccumulatorSpec(P=4)
    assert wrapping_dot([3], [4], spec) == (-4, True)
    assert wrapping_dot([1, 1], [2, 3], spec) == (5, False)


def test_check_accumulator_fits():
    wit = check_accumulator([1, -1], 2, False, AccumulatorSpec(P=3))
    assert (wit.true_max, wit.true_min) == (3, -3)
    assert not wit.overflowed
    assert wit.fits_max_side and wit.fits_min_side and wit.fits_span
    assert wit.wrapped_max == 3


def test_check_accumulator_overflow_witness():
    wit = check_accumulator([4], 2, False, AccumulatorSpec(P=4))
    assert wit.overflowed
    assert wit.true_max == 12 and wit.wrapped_max == -4
    assert wit.witness_x_max == (3,)
    assert not wit.fits_max_side
    # replaying the witness through the wrapping register reproduces the corruption
    assert wrapping_dot(wit.witness_x_max, [4], AccumulatorSpec(P=4)) == (-4, True)


@given(
    q=st.lists(st.integers(min_value=-9, max_value=9), min_size=1, max_size=5),
    N=st.integers(min_value=1, max_value=3),
    signed=st.booleans(),
    P=st.integers(min_value=2, max_value=8),
)
@settings(max_examples=150, deadline=None)
def test_side_conditions_imply_span_condition(q, N, signed, P):
    # the span of a signed register is exactly (hi - lo), so the two one-sided
    # checks passing forces the span check to pass as well
    wit = check_accumulator(q, N, signed, AccumulatorSpec(P=P))
    if wit.fits_max_side and wit.fits_min_side:
        assert wit.fits_span
        assert not wit.overflowed
    else:
        assert wit.overflowed
    assert wit.fits_span == (wit.true_max - wit.true_min <= (1 << P) - 1)


@given(
    q=st.lists(st.integers(min_value=-7, max_value=7), min_size=1, max_size=4),
    N=st.integers(min_value=1, max_value=3),
    signed=st.booleans(),
    P=st.integers(min_value=2, max_value=10),
)
@settings(max_examples=150, deadline=None)
def test_exhaustive_agrees_with_extremal(q, N, signed, P):
    spec = AccumulatorSpec(P=P)
    fast = check_accumulator(q, N, signed, spec)
    full = exhaustive_check(q, N, signed, spec)
    assert (full.true_max, full.true_min) == (fast.true_max, fast.true_min)
    assert full.overflowed == fast.overflowed
    assert full.fits_span == fast.fits_span


def test_exhaustive_int64_split_path_matches():
    # 16^6 input vectors forces the chunked integer path under the default budget
    q = [3, -5, 2, -2, 4, -1]
    fast = check_accumulator(q, 4, False, AccumulatorSpec(P=10))
    full = exhaustive_check(q, 4, False, AccumulatorSpec(P=10))
    assert (full.true_max, full.true_min) == (fast.true_max, fast.true_min)
    assert exact_dot(full.witness_x_max, q) == full.true_max
    assert exact_dot(full.witness_x_min, q) == full.true_min


def test_exhaustive_bigint_fallback_matches():
    # entries near 2^61 overflow int64 products, falling back to python ints
    big = (1 << 61) - 3
    spec = AccumulatorSpec(P=64)
    fast = check_accumulator([big, -big], 1, False, spec)
    full = exhaustive_check([big, -big], 1, False, spec)
    assert (full.true_max, full.true_min) == (fast.true_max, fast.true_min)
    assert full.true_max == big


def test_enumeration_budget_guard(monkeypatch):
    monkeypatch.delenv("ACCQ_ENUM_BUDGET", raising=False)
    assert enumeration_budget(None) == DEFAULT_ENUM_BUDGET
    assert enumeration_budget(100) == 100
    with pytest.raises(EnumerationBudgetError):
        exhaustive_check([1] * 9, 4, False, AccumulatorSpec(P=16))
    monkeypatch.setenv("ACCQ_ENUM_BUDGET", "8")
    with pytest.raises(EnumerationBudgetError):
        exhaustive_check([1, 1], 2, False, AccumulatorSpec(P=8))
    monkeypatch.setenv("ACCQ_ENUM_BUDGET", "64")
    exhaustive_check([1, 1], 2, False, AccumulatorSpec(P=8))


def test_explicit_budget_beats_env(monkeypatch):
    monkeypatch.setenv("ACCQ_ENUM_BUDGET", "2")
    wit = exhaustive_check([1, -1], 2, False, AccumulatorSpec(P=8), budget=16)
    assert wit.true_max == 3


def test_non_integer_weights_rejected():
    with pytest.raises(NonFiniteInputError):
        check_accumulator([1.5], 2, False, AccumulatorSpec(P=8))
    with pytest.raises(NonFiniteInputError):
        check_accumulator([float("nan")], 2, False, AccumulatorSpec(P=8))
    # integral floats are fine (quantized codes arrive as float arrays)
    wit = check_accumulator(np.array([2.0, -1.0]), 2, False, AccumulatorSpec(P=8))
    assert wit.true_max == 6


def test_verify_domination():
    assert verify_domination([0.5, -0.7], s=0.25, q=[2, -2])
    # magnitude grows: 3 * 0.25 > 0.7
    assert not verify_domination([0.5, -0.7], s=0.25, q=[2, -3])
    # sign flip on a nonzero code
    assert not verify_domination([0.5, -0.7], s=0.25, q=[2, 2])
    # zero codes dominate anything
    assert verify_domination([1e-9, -1e-9], s=1.0, q=[0, 0])
    with pytest.raises(LengthMismatchError):
        verify_domination([0.5], s=0.25, q=[1, 1])
    with pytest.raises(NonFiniteInputError):
        verify_domination([0.5], s=0.0, q=[1])


@given(
    q=st.lists(st.integers(min_value=-3, max_value=3), min_size=1, max_size=3),
    N=st.integers(min_value=1, max_value=2),
    signed=st.booleans(),
)
@settings(max_examples=100, deadline=None)
def test_witness_inputs_are_valid_codes(q, N, signed):
    wit = check_accumulator(q, N, signed, AccumulatorSpec(P=6))
    lo = -(1 << (N - 1)) if signed else 0
    hi = (1 << (N - 1)) - 1 if signed else (1 << N) - 1
    for x in (wit.witness_x_max, wit.witness_x_min):
        assert all(lo <= xi <= hi for xi in x)
