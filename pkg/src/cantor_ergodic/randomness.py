"""Staged Martin-Löf tests and integral tests with exact measure accounting.

Nothing here completes an infinite union or supremum.  A Martin-Löf test is
a family of finite interval sets indexed by level ``m`` and stage ``s``; an
integral test is a family of simple functions indexed by stage.  Verdicts
are of the form "rejected at level m, stage s".
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

from .core import (
    InfiniteSource,
    IntervalSet,
    SourceExhausted,
    concat_sets,
    format_rational,
)
from .measures import Uniform, cylinders
from .observables import SimpleFunction, combine, constant, from_values, indicator


class StagedMLTest:
    """``(m, s) -> IntervalSet``, non-decreasing in ``s``, measure ``<= 2**-m``."""

    def __init__(self, generator: Callable[[int, int], IntervalSet], measure=None, first_level: int = 1):
        self.generator = generator
        self.measure = measure or Uniform()
        self.first_level = first_level

    def stage(self, m: int, s: int) -> IntervalSet:
        return self.generator(m, s)

    def measure_of(self, m: int, s: int) -> Fraction:
        return self.stage(m, s).measure(self.measure)

    def check(self, m_max: int, s_max: int) -> list[tuple[int, int, Fraction]]:
        """Violations ``(m, s, measure)`` of the level bound or of stage nesting."""
        bad = []
        for m in range(self.first_level, m_max + 1):
            prev = IntervalSet()
            for s in range(s_max + 1):
                cur = self.stage(m, s)
                mu = cur.measure(self.measure)
                if mu > Fraction(1, 2**m) or not cur.includes(prev):
                    bad.append((m, s, mu))
                prev = cur
        return bad

    def rejects(self, omega_prefix: str, m: int, s: int) -> bool | None:
        return self.stage(m, s).contains(omega_prefix)

    def nested(self) -> "StagedMLTest":
        """``U'_m = union_{i > m} U_i``, staged as ``i <= m + s + 1``.

        Its measure is at most ``sum_{i>m} 2**-i = 2**-m`` and the levels
        decrease.
        """
        def gen(m, s):
            out = IntervalSet()
            for i in range(max(m + 1, self.first_level), m + s + 2):
                out = out | self.stage(i, s)
            return out

        return StagedMLTest(gen, self.measure, first_level=max(self.first_level - 1, 0))

    def manifest(self, m_max: int, s: int) -> dict:
        """JSON-ready listing of each level's words and exact measure."""
        levels = []
        for m in range(self.first_level, m_max + 1):
            U = self.stage(m, s)
            levels.append({
                "m": m,
                "stage": s,
                "words": [w if w else "-" for w in U],
                "measure": format_rational(U.measure(self.measure)),
                "bound": format_rational(Fraction(1, 2**m)),
            })
        return {"levels": levels}


class StagedIntegralTest:
    """Non-decreasing simple approximants with expectation ``<= 1``.

    Subclasses give ``depth(stage)`` and ``value(stage, prefix)``; the
    approximant at a stage is the simple function those determine.
    """

    def __init__(self, measure=None):
        self.measure = measure or Uniform()

    def depth(self, stage: int) -> int:
        raise NotImplementedError

    def value(self, stage: int, omega_prefix: str) -> Fraction:
        raise NotImplementedError

    def approximant(self, stage: int) -> SimpleFunction:
        return from_values(self.depth(stage), lambda x: self.value(stage, x))

    def expectation(self, stage: int, P=None) -> Fraction:
        P = P or self.measure
        return sum(
            (px * self.value(stage, x) for x, px in cylinders(P, self.depth(stage))),
            Fraction(0),
        )


class FunctionIntegralTest(StagedIntegralTest):
    """An integral test given directly by ``stage -> SimpleFunction``."""

    def __init__(self, approximants: Callable[[int], SimpleFunction], measure=None):
        super().__init__(measure)
        self._approx = approximants

    def approximant(self, stage):
        return self._approx(stage)

    def depth(self, stage):
        return self._approx(stage).depth

    def value(self, stage, omega_prefix):
        return self._approx(stage)(omega_prefix)

    def expectation(self, stage, P=None):
        return self._approx(stage).expectation(P or self.measure)


ZERO_TEST = FunctionIntegralTest(lambda s: constant(0))


# ---------------------------------------------------------------------------
# concatenation sets


def kucera_sets(U: IntervalSet, r: Fraction, m: int) -> IntervalSet:
    """The ``m``-fold concatenation ``U_m`` of a prefix-free set with itself.

    Requires ``L(U) < r < 1``; then ``L(U_m) = L(U)**m < r**m``.
    """
    r = Fraction(r)
    mu = U.uniform_measure()
    if not (mu < r < 1):
        raise ValueError(f"need L(U) < r < 1, got L(U) = {mu}, r = {r}")
    if m < 1:
        raise ValueError("m must be >= 1")
    out = U
    for _ in range(m - 1):
        out = concat_sets(out, U)
    return out


@dataclass
class KuceraRow:
    m: int
    measure: Fraction
    bound: Fraction

    @property
    def ok(self) -> bool:
        return self.measure < self.bound


def kucera_table(U: IntervalSet, r: Fraction, m_max: int) -> list[KuceraRow]:
    r = Fraction(r)
    return [KuceraRow(m, kucera_sets(U, r, m).uniform_measure(), r**m) for m in range(1, m_max + 1)]


def kucera_test(U: IntervalSet, r: Fraction) -> StagedMLTest:
    """A Martin-Löf test from the concatenation sets.

    Level ``k`` is ``U_j`` for the least ``j`` with ``r**j <= 2**-k``.  The
    stage argument is ignored: each level is already a finite set.
    """
    r = Fraction(r)
    kucera_sets(U, r, 1)  # validates r

    def gen(k, s):
        j = 1
        while r**j > Fraction(1, 2**k):
            j += 1
        return kucera_sets(U, r, j)

    return StagedMLTest(gen, Uniform())


# ---------------------------------------------------------------------------
# recurrence


@dataclass
class RecurrenceResult:
    visits: list[int]
    undecided: list[int] = field(default_factory=list)


def recurrence_check(U: IntervalSet, src: InfiniteSource, horizon: int) -> RecurrenceResult:
    """Times ``0 <= n <= horizon`` with ``T^n omega`` in ``E = complement(U)``.

    ``E`` is given through its open complement ``U``, a finite interval set,
    so membership of ``T^n omega`` is decided by ``depth(U)`` bits.  Times
    whose bits the source cannot supply are reported as undecided.
    """
    if U.uniform_measure() >= 1:
        raise ValueError("the closed set E must have positive measure")
    D = U.depth
    visits, undecided = [], []
    for n in range(horizon + 1):
        try:
            window = src.prefix(n + D)[n:]
        except SourceExhausted:
            undecided.append(n)
            continue
        if U.contains(window) is False:
            visits.append(n)
    return RecurrenceResult(visits, undecided)


# ---------------------------------------------------------------------------
# conversions between test kinds


def ml_from_integral(t: StagedIntegralTest, m: int, s: int) -> IntervalSet:
    """``{omega : approximant_s(omega) > 2**m}`` (strict threshold)."""
    level = Fraction(2) ** m
    return t.approximant(s).where(lambda v: v > level)


def integral_from_ml(t: StagedMLTest, s: int, cutoff: int) -> SimpleFunction:
    """``sum_{m=1}^{cutoff}`` of the indicators of the stage-``s`` sets."""
    total = constant(0)
    for m in range(1, cutoff + 1):
        total = combine(total, indicator(t.stage(m, s)), lambda a, b: a + b)
    return total.compact()


def ml_test_from_integral(t: StagedIntegralTest) -> StagedMLTest:
    return StagedMLTest(lambda m, s: ml_from_integral(t, m, s), t.measure)


def integral_test_from_ml(t: StagedMLTest, cutoff: Callable[[int], int] = lambda s: s) -> FunctionIntegralTest:
    """Stage ``s`` sums the first ``cutoff(s)`` levels at stage ``s``."""
    return FunctionIntegralTest(lambda s: integral_from_ml(t, s, cutoff(s)), t.measure)


def deficiency_estimate(t: StagedIntegralTest, src: InfiniteSource, stage: int) -> Fraction:
    """Lower bound on the integral test at ``omega``, non-decreasing in stage."""
    return t.value(stage, src.prefix(t.depth(stage)))


def manifest_json(t: StagedMLTest, m_max: int, s: int) -> str:
    return json.dumps(t.manifest(m_max, s), indent=2, sort_keys=True)
