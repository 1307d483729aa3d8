import math
from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cantor_ergodic.core import IntervalSet, Periodic
from cantor_ergodic.measures import Markov, MarkovSpec, Mixture, Uniform
from cantor_ergodic.observables import SimpleFunction, constant, first_bit, from_values
from cantor_ergodic.regulators import (
    DepthInfeasible,
    ExceedanceQuery,
    PFinderFailure,
    Regulator,
    StageBudgetExhausted,
    average_distribution,
    band_test,
    ergodic_regulator,
    ergodic_regulator_details,
    exceedance_probability,
    find_p,
    hoeffding_regulator,
    l1_norm_of_average,
    monte_carlo_exceedance,
    oscillation_set,
    shift_average_sequence,
    test_from_regulator as regulator_test,
    verify_regulator_pointwise,
)

from oracles import all_words

Q = Fraction
centered = first_bit() - constant(Q(1, 2))


def hoeffding_oracle(delta, eps):
    with mpmath.workdps(60):
        return int(mpmath.floor(mpmath.log(mpmath.mpf(2) / (mpmath.mpf(eps.numerator) / eps.denominator
                                                              * delta.numerator / delta.denominator))
                                / (2 * mpmath.mpf(delta.numerator) ** 2 / delta.denominator**2)))


def brute_exceedance(q: ExceedanceQuery) -> Fraction:
    """Sum of P(x) over all words of the determining depth on which the event happens."""
    D = max(q.f.depth, 1)
    total = Fraction(0)
    for x in all_words(q.stop + D - 1):
        px = q.measure.prob(x)
        if not px:
            continue
        vals = [q.f(x[k : k + D]) for k in range(q.stop)]
        S = [sum(vals[:n]) / n for n in range(1, q.stop + 1)]
        win = S[q.start - 1 :]
        if q.form == "limit":
            gaps = [abs(s - q.center) for s in win]
        elif q.form == "pair":
            gaps = [abs(s - S[q.base - 1]) for s in win]
        else:
            gaps = [max(win[: k + 1]) - min(win[: k + 1]) for k in range(len(win))]
        if any(g > q.delta if q.strict else g >= q.delta for g in gaps):
            total += px
    return total


# ---------------------------------------------------------------------------
# Hoeffding regulator


def test_hoeffding_examples():
    assert hoeffding_regulator(Q(1, 2), Q(1, 2)) == 4
    assert hoeffding_regulator(Q(1, 4), Q(1, 4)) == 27
    assert hoeffding_regulator(Q(2), Q(1)) == 0  # argument exactly 1
    assert hoeffding_regulator(Q(4), Q(1)) == 0  # negative logarithm clamps
    with pytest.raises(ValueError):
        hoeffding_regulator(0, Q(1, 2))


GRID = [(Q(1, d), Q(1, e)) for d in (2, 3, 4, 5, 8) for e in (2, 3, 4, 8, 16)]


@pytest.mark.parametrize("delta,eps", GRID)
def test_hoeffding_matches_high_precision_oracle(delta, eps):
    assert hoeffding_regulator(delta, eps) == hoeffding_oracle(delta, eps)


@pytest.mark.parametrize("delta,eps", GRID)
def test_hoeffding_scaling(delta, eps):
    assert hoeffding_regulator(delta / 2, eps) >= 2 * hoeffding_regulator(delta, eps)


def test_hoeffding_floor_near_integer():
    # delta = 1 and eps close to 2/e^2 put the value within 1e-40 of the integer 1,
    # which 53-bit intervals cannot separate
    eps = Q(2) / Q(int(mpmath.e**2 * 10**40), 10**40)
    assert hoeffding_regulator(Q(1), eps) == hoeffding_oracle(Q(1), eps)


@pytest.mark.parametrize("delta,eps", [(Q(1, 2), Q(1, 2)), (Q(1, 2), Q(1, 8)), (Q(1, 3), Q(1, 4)),
                                       (Q(1, 4), Q(1, 4)), (Q(3, 4), Q(1, 8)), (Q(1, 4), Q(1, 8))])
def test_hoeffding_chain(delta, eps):
    m = max(hoeffding_regulator(delta, eps), 1)
    for strict in (True, False):
        q = ExceedanceQuery(Uniform(), first_bit(), delta, m, m + 10, center=Q(1, 2), strict=strict)
        assert exceedance_probability(q) < eps


def test_regulator_wrappers():
    h = Regulator.hoeffding()
    assert h(Q(1, 2), Q(1, 2)) == 4 and h.provenance == "hoeffding"
    t = Regulator.from_table({(Q(1, 2), Q(1, 4)): 7})
    assert t("1/2", "1/4") == 7 and t.provenance == "table"
    with pytest.raises(KeyError):
        t(Q(1, 3), Q(1, 4))


# ---------------------------------------------------------------------------
# exceedance engines


def test_query_validation():
    with pytest.raises(ValueError):
        ExceedanceQuery(Uniform(), first_bit(), Q(1, 2), 0, 3, center=Q(1, 2))
    with pytest.raises(ValueError):
        ExceedanceQuery(Uniform(), first_bit(), Q(1, 2), 2, 3)
    with pytest.raises(ValueError):
        ExceedanceQuery(Uniform(), first_bit(), Q(1, 2), 2, 3, form="pair", base=3)
    with pytest.raises(ValueError):
        ExceedanceQuery(Uniform(), first_bit(), Q(1, 2), 2, 3, form="other")
    q = ExceedanceQuery(Uniform(), from_values(3, lambda x: 1), Q(1, 2), 2, 5, center=0)
    assert q.depth == 7


observables = st.sampled_from([
    first_bit(),
    centered,
    constant(Q(1, 3)),
    SimpleFunction({"00": Q(0), "01": Q(2), "10": Q(-1), "11": Q(1, 2)}),
    SimpleFunction({"0": Q(1), "10": Q(-1), "11": Q(3)}),
])
flips = st.fractions(min_value=0, max_value=1, max_denominator=8)


@st.composite
def queries(draw):
    P = draw(st.sampled_from(["uniform", "markov", "mixture"]))
    if P == "uniform":
        measure = Uniform()
    elif P == "markov":
        measure = Markov(MarkovSpec(draw(flips)))
    else:
        measure = Mixture([MarkovSpec(draw(flips)), MarkovSpec(draw(flips))], MarkovSpec(draw(flips)))
    f = draw(observables)
    stop = draw(st.integers(1, 7))
    start = draw(st.integers(1, stop))
    form = draw(st.sampled_from(["limit", "pair", "cauchy"]))
    delta = draw(st.fractions(min_value=0, max_value=2, max_denominator=6))
    kw = {}
    if form == "limit":
        kw["center"] = draw(st.fractions(min_value=-1, max_value=2, max_denominator=4))
    if form == "pair":
        kw["base"] = draw(st.integers(1, start))
    return ExceedanceQuery(measure, f, delta, start, stop, form, strict=draw(st.booleans()), **kw)


@settings(max_examples=120)
@given(queries())
def test_engines_match_brute_force(q):
    oracle = brute_exceedance(q)
    assert exceedance_probability(q, "enumerate") == oracle
    assert exceedance_probability(q, "lumped") == oracle


def test_enumeration_depth_cap():
    q = ExceedanceQuery(Uniform(), first_bit(), Q(1, 4), 30, 30, center=Q(1, 2))
    with pytest.raises(DepthInfeasible):
        exceedance_probability(q, "enumerate")
    assert 0 < exceedance_probability(q, "lumped") < 1


def test_generator_mixture_rejected():
    from cantor_ergodic.measures import NotExact

    q = ExceedanceQuery(Mixture(lambda i: MarkovSpec(0)), first_bit(), Q(1, 4), 2, 2, center=Q(1, 2))
    with pytest.raises(NotExact):
        exceedance_probability(q)


# ---------------------------------------------------------------------------
# L1 norms and the ergodic regulator


def test_l1_examples():
    assert l1_norm_of_average(centered, Uniform(), 1) == Q(1, 2)
    assert l1_norm_of_average(centered, Uniform(), 2) == Q(1, 4)
    assert l1_norm_of_average(centered, Uniform(), 4) == Q(3, 16)


@pytest.mark.parametrize("p", range(1, 13))
def test_l1_matches_binomial_oracle(p):
    oracle = sum(Q(math.comb(p, k), 2**p) * abs(Q(k, p) - Q(1, 2)) for k in range(p + 1))
    assert l1_norm_of_average(centered, Uniform(), p) == oracle
    if p <= 10:
        assert l1_norm_of_average(centered, Uniform(), p, engine="enumerate") == oracle


def test_l1_non_increasing():
    norms = [l1_norm_of_average(centered, Uniform(), p) for p in range(1, 13)]
    assert all(a >= b for a, b in zip(norms, norms[1:]))


def test_average_distribution_total_mass():
    P = Markov(MarkovSpec(Q(1, 3)))
    f = SimpleFunction({"00": Q(0), "01": Q(2), "10": Q(-1), "11": Q(1, 2)})
    for p in (1, 3, 6):
        lumped, enum = average_distribution(P, f, p), average_distribution(P, f, p, "enumerate")
        assert lumped == enum and sum(lumped.values()) == 1


def test_find_p_doubling_search():
    p, hist = find_p(centered, Uniform(), Q(1, 8))
    assert p == 16
    assert [h[0] for h in hist] == [1, 2, 4, 8, 16]
    assert hist[-1][1] <= Q(1, 8) < hist[-2][1]
    with pytest.raises(PFinderFailure):
        find_p(centered, Uniform(), Q(1, 8), cap=8)


def test_ergodic_regulator_examples():
    res = ergodic_regulator_details(first_bit(), Uniform(), Q(1, 2), Q(1, 2))
    assert (res.p, res.r, res.mean, res.m) == (16, 1, Q(1, 2), 60)
    assert res.m == 4 * (res.p - 1)
    assert ergodic_regulator(constant(Q(2, 3)), Uniform(), Q(1, 2), Q(1, 2)) == 0
    assert ergodic_regulator(constant(0), Markov(MarkovSpec(Q(1, 5))), Q(1, 9), Q(1, 9)) == 0


def test_ergodic_regulator_linear_in_r():
    base = ergodic_regulator(first_bit(), Uniform(), Q(1, 2), Q(1, 2), r=1)
    assert ergodic_regulator(first_bit(), Uniform(), Q(1, 2), Q(1, 2), r=2) == 2 * base
    assert ergodic_regulator(first_bit(), Uniform(), Q(1, 2), Q(1, 2), r=Q(3, 4)) == base * 3 // 4
    with pytest.raises(ValueError):
        ergodic_regulator(first_bit(), Uniform(), Q(1, 2), Q(1, 2), r=Q(1, 2))


def test_ergodic_regulator_custom_finder():
    calls = []

    def finder(g, P, target):
        calls.append(target)
        return 3, [(3, Q(0))]

    assert ergodic_regulator(first_bit(), Uniform(), Q(1, 4), Q(1, 2), p_finder=finder) == 16
    assert calls == [Q(1, 16)]


# ---------------------------------------------------------------------------
# verification


def test_verify_window_4_4():
    q = ExceedanceQuery(Uniform(), first_bit(), Q(1, 2), 4, 4, center=Q(1, 2), strict=False)
    v = verify_regulator_pointwise(q, 4, Q(1, 2))
    assert v.verdict == "pass" and v.probability == Q(1, 8) and v.window == (4, 4)
    assert verify_regulator_pointwise(q, 4, Q(1, 8)).verdict == "fail"
    assert v.to_json()["probability"] == "1/8"


def test_verify_large_delta_is_trivial():
    for c in (Q(0), Q(1, 3), Q(1)):
        q = ExceedanceQuery(Uniform(), first_bit(), Q(1), 1, 8, center=c)
        v = verify_regulator_pointwise(q, 1, Q(1, 1000))
        assert v.verdict == "pass" and v.probability == 0


def test_verify_moves_window_start():
    q = ExceedanceQuery(Uniform(), first_bit(), Q(1, 4), 1, 10, center=Q(1, 2))
    v = verify_regulator_pointwise(q, 6, Q(1, 2))
    assert v.window == (6, 10)
    assert v.probability == exceedance_probability(
        ExceedanceQuery(Uniform(), first_bit(), Q(1, 4), 6, 10, center=Q(1, 2)))


def test_verify_monte_carlo_verdicts():
    q = ExceedanceQuery(Uniform(), first_bit(), Q(1, 2), 4, 4, center=Q(1, 2), strict=False)
    ok = verify_regulator_pointwise(q, 4, Q(1, 2), mode="mc", trials=20_000, seed=1)
    assert ok.verdict == "pass"
    lo, hi = ok.interval
    assert lo < 1 / 8 < hi
    assert verify_regulator_pointwise(q, 4, Q(1, 16), mode="mc", trials=20_000, seed=1).verdict == "fail"
    assert verify_regulator_pointwise(q, 4, Q(1, 8), mode="mc", trials=2_000, seed=1).verdict == "inconclusive"
    with pytest.raises(ValueError):
        verify_regulator_pointwise(q, 4, Q(1, 2), mode="bogus")


def test_monte_carlo_is_deterministic_and_unbiased():
    q = ExceedanceQuery(Markov(MarkovSpec(Q(1, 3))), SimpleFunction({"0": Q(1), "10": Q(-1), "11": Q(3)}),
                        Q(1, 2), 2, 6, form="cauchy")
    exact = exceedance_probability(q)
    a = monte_carlo_exceedance(q, 8000, seed=3, chunk=1000)
    assert a == monte_carlo_exceedance(q, 8000, seed=3, chunk=1000)
    from cantor_ergodic.stats import within_sigmas

    assert within_sigmas(a, 8000, float(exact), k=4)


def test_monte_carlo_exact_recheck_at_threshold():
    # S_2 - 1/2 equals delta exactly on half the paths; floats must not decide those
    q = ExceedanceQuery(Uniform(), first_bit(), Q(1, 2), 2, 2, center=Q(1, 2), strict=True)
    assert monte_carlo_exceedance(q, 500, seed=0) == 0
    q2 = ExceedanceQuery(Uniform(), first_bit(), Q(1, 2), 2, 2, center=Q(1, 2), strict=False)
    assert 0 < monte_carlo_exceedance(q2, 500, seed=0) < 500


# ---------------------------------------------------------------------------
# tests built from regulators


def test_oscillation_set():
    a, b = first_bit(), constant(Q(1, 2))
    assert oscillation_set(a, b, 3) == IntervalSet.of("0", "1")
    assert oscillation_set(a, b, 2) == IntervalSet()


def test_constant_sequence_gives_empty_sets():
    t = regulator_test(lambda n: first_bit(), Regulator(lambda d, e: 1))
    for i in range(1, 4):
        for s in range(6):
            assert t.stage(i, s) == IntervalSet()


def test_hoeffding_regulator_test_bound():
    t = regulator_test(shift_average_sequence(first_bit()), Regulator.hoeffding())
    for s in range(1, 9):
        assert t.measure_of(3, s) <= Q(1, 8)
    assert t.check(4, 8) == []


def _table_regulator(fn, j_max=12):
    return Regulator.from_table({(Q(1, 2 * j), Q(1, 2**j)): fn(j) for j in range(1, j_max + 1)})


def test_invalid_regulator_is_flagged():
    t = regulator_test(shift_average_sequence(first_bit()), _table_regulator(lambda j: 1))
    bad = t.check(2, 8)
    assert bad and bad[0][0] == 1 and bad[0][2] > Q(1, 2)


def test_convergent_point_leaves_levels():
    t = regulator_test(shift_average_sequence(first_bit()), _table_regulator(lambda j: 2 * j))
    w = Periodic("01").prefix(12)
    for i in (1, 2, 3):
        assert all(t.rejects(w, i, s) is not True for s in range(1, 10))
    # a point whose averages jump is caught at level 1
    assert t.rejects("0000" + "1" * 8, 1, 9) is True


def test_stage_budget():
    t = regulator_test(shift_average_sequence(first_bit()), _table_regulator(lambda j: 1), max_depth=4)
    with pytest.raises(StageBudgetExhausted):
        t.stage(1, 6)


# ---------------------------------------------------------------------------
# band test


def test_band_test_levels():
    bt = band_test(first_bit(), Uniform(), Q(3, 4), Q(5, 4), 4)
    hs = [bt.horizons[m] for m in range(1, 5)]
    assert hs == sorted(hs) and all(h >= m for m, h in enumerate(hs, 1))
    for m in range(1, 5):
        assert bt.closed_measures[m] < Q(1, 2**m)
        oracle = sum(Q(math.comb(bt.horizons[m], k), 2 ** bt.horizons[m])
                     for k in range(bt.horizons[m] + 1) if Q(3, 4) <= Q(k, bt.horizons[m]) <= Q(5, 4))
        assert bt.closed_measures[m] == oracle
    assert bt.test.check(4, 0) == []
    assert bt.test.rejects("1" * 20, 4, 0) is True
    assert bt.test.rejects(Periodic("01").prefix(20), 4, 0) is False


def test_band_test_rejects_band_with_mean():
    with pytest.raises(ValueError):
        band_test(first_bit(), Uniform(), Q(1, 4), Q(3, 4), 3)
    with pytest.raises(StageBudgetExhausted):
        band_test(first_bit(), Uniform(), Q(1, 2), Q(1), 6, n_cap=4)
