from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cantor_ergodic.core import ExplicitPrefix, Periodic, Sampled, is_prefix
from cantor_ergodic.measures import Markov, MarkovSpec
from cantor_ergodic.transforms import (
    FuelExhausted,
    MonotoneMachine,
    Trajectory,
    check_monotone,
    iterate_prefix,
    machine_by_name,
    shift_machine,
)

from oracles import all_words

# the same map as the shift, but without the library's fast path
generic_shift = MonotoneMachine(lambda x: x[1:], "generic-shift")


def test_shift_step():
    T = shift_machine()
    assert T("10110") == "0110"
    assert T("") == ""
    assert machine_by_name("shift").name == "shift"
    with pytest.raises(ValueError):
        machine_by_name("baker")


def test_monotone_exhaustive():
    assert check_monotone(shift_machine(), 10) is None
    # brute force over all comparable pairs up to length 8
    T = shift_machine()
    for n in range(8):
        for x in all_words(n):
            for m in range(n, 9):
                for y in all_words(m - n):
                    assert is_prefix(T(x), T(x + y))


def test_monotone_violation_found():
    bad = MonotoneMachine(lambda x: x[::-1], "reverse")
    assert check_monotone(bad, 4) is not None


def test_iterate_examples():
    for machine in (shift_machine(), generic_shift):
        assert iterate_prefix(Trajectory(Periodic("011"), machine), 2, 4) == "1011"
        assert iterate_prefix(Trajectory(Periodic("0110"), machine), 0, 5) == "01100"
        src = ExplicitPrefix("110100111", pad="0")
        assert iterate_prefix(Trajectory(src, machine), 7, 3) == src.prefix(10)[7:]
        assert iterate_prefix(Trajectory(src, machine), 7, 3) == "110"


@given(st.integers(0, 6), st.integers(0, 6), st.integers(0, 8), st.integers(0, 1000))
def test_semigroup_law(k1, k2, n, seed):
    src = Sampled(Markov(MarkovSpec(Fraction(1, 3))), seed)
    tr = Trajectory(src, generic_shift)
    fast = Trajectory(src, shift_machine())
    whole = tr.iterate_prefix(k1 + k2, n)
    # apply T k2 more times to a long enough prefix of T^{k1} omega
    x = tr.iterate_prefix(k1, n + k2)
    for _ in range(k2):
        x = generic_shift(x)
    assert whole == x[:n] == fast.iterate_prefix(k1 + k2, n)


def test_fuel_exhaustion():
    silent = MonotoneMachine(lambda x: "", "silent", fuel=40)
    with pytest.raises(FuelExhausted):
        Trajectory(Periodic("01"), silent).iterate_prefix(1, 3)
    with pytest.raises(FuelExhausted):
        Trajectory(Periodic("01"), shift_machine(fuel=5)).iterate_prefix(3, 3)
    # the default budget 2(k+n)+64 is ample for the shift
    assert Trajectory(Periodic("01"), shift_machine()).iterate_prefix(100, 5) == "01010"


def test_delayed_machine_needs_lookahead():
    # emits the input shifted by one but withholds the last bit
    lag = MonotoneMachine(lambda x: x[1:-1] if len(x) > 1 else "", "lagged")
    assert check_monotone(lag, 8) is None
    tr = Trajectory(Periodic("011"), lag)
    assert tr.iterate_prefix(2, 4) == Periodic("011").prefix(6)[2:]


def test_shift_preserves_stationary_measures():
    # measure of the preimage {0x, 1x} equals the measure of x
    P = Markov(MarkovSpec(Fraction(1, 5)))
    for n in range(7):
        for x in all_words(n):
            assert P.prob("0" + x) + P.prob("1" + x) == P.prob(x)
