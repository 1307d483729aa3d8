"""Upcrossing counts, admissible sequences and the upcrossing integral test.

For a trajectory with running averages ``s_0, s_1, ..., s_n`` and rationals
``alpha < beta`` this module computes the greedy crossing times
``u_1 < v_1 < u_2 < ...``, the count ``sigma_n``, the deviation sums
``a(u) = sum_{s<=u} (f_s - alpha)`` and ``b(v) = sum_{s<=v} (f_s - beta)``,
cumulative sums over admissible index sequences, their supremum
``lambda_n``, and the lengthening step that turns any admissible sequence
into a longer one without lowering its cumulative sum.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence

from .core import PrefixTooShort
from .measures import cylinders
from .observables import AverageSeries, SimpleFunction, shift_values
from .randomness import StagedIntegralTest


@dataclass(frozen=True)
class UpcrossingRecord:
    alpha: Fraction
    beta: Fraction
    n: int
    times: tuple[tuple[int, int], ...]  # completed (u_i, v_i) with v_i <= n

    @property
    def count(self) -> int:
        return len(self.times)

    @property
    def u(self) -> list[int]:
        return [p[0] for p in self.times]

    @property
    def v(self) -> list[int]:
        return [p[1] for p in self.times]


def count_upcrossings(series: AverageSeries, alpha, beta, n: int | None = None) -> UpcrossingRecord:
    """Greedy scan of ``s_0..s_n`` for upward crossings of ``(alpha, beta)``.

    Crossing times are non-negative; inequalities are strict on both sides.
    """
    alpha, beta = Fraction(alpha), Fraction(beta)
    if not alpha < beta:
        raise ValueError("need alpha < beta")
    if n is None:
        n = series.horizon
    if n > series.horizon:
        raise ValueError(f"series only reaches index {series.horizon}")
    times = []
    u = None
    for m in range(n + 1):
        s = series[m]
        if u is None:
            if s < alpha:
                u = m
        elif s > beta:
            times.append((u, m))
            u = None
    return UpcrossingRecord(alpha, beta, n, tuple(times))


def sigma(series: AverageSeries, alpha, beta, n: int | None = None) -> int:
    return count_upcrossings(series, alpha, beta, n).count


# ---------------------------------------------------------------------------
# deviation sums and admissible sequences


class DeviationSums:
    """Prefix sums ``a(u)`` and ``b(v)`` with ``a(-1) = b(-1) = 0``."""

    def __init__(self, values: Sequence[Fraction], alpha, beta):
        self.alpha, self.beta = Fraction(alpha), Fraction(beta)
        self.values = [Fraction(v) for v in values]
        a, b = [Fraction(0)], [Fraction(0)]
        for v in self.values:
            a.append(a[-1] + v - self.alpha)
            b.append(b[-1] + v - self.beta)
        self._a, self._b = a, b

    @property
    def horizon(self) -> int:
        return len(self.values) - 1

    def a(self, u: int) -> Fraction:
        if u < -1:
            raise IndexError(u)
        return self._a[u + 1]

    def b(self, v: int) -> Fraction:
        if v < -1:
            raise IndexError(v)
        return self._b[v + 1]

    def shifted(self) -> "DeviationSums":
        """Deviation sums of the shifted trajectory ``T omega``."""
        return DeviationSums(self.values[1:], self.alpha, self.beta)


@dataclass(frozen=True)
class AdmissibleSequence:
    """Pairs ``-1 <= s_1 < t_1 <= s_2 < t_2 <= ... <= s_k < t_k``."""

    pairs: tuple[tuple[int, int], ...] = ()

    @property
    def length(self) -> int:
        return len(self.pairs)

    def is_admissible(self, n: int) -> bool:
        last = -1
        for s, t in self.pairs:
            if not (last <= s < t <= n):
                return False
            last = t
        return True

    def flat(self) -> list[int]:
        return [i for p in self.pairs for i in p]


def enumerate_admissible(n: int, lo: int = -1) -> Iterator[AdmissibleSequence]:
    """Every admissible sequence with indices in ``[lo, n]``, empty one first."""

    def rec(start: int) -> Iterator[tuple[tuple[int, int], ...]]:
        yield ()
        for s in range(start, n + 1):
            for t in range(s + 1, n + 1):
                for rest in rec(t):
                    yield ((s, t),) + rest

    for pairs in rec(lo):
        yield AdmissibleSequence(pairs)


def cumulative_sum(d: AdmissibleSequence, dev: DeviationSums) -> Fraction:
    """``S(d) = sum_j b(t_j) - a(s_j)``."""
    return sum((dev.b(t) - dev.a(s) for s, t in d.pairs), Fraction(0))


class LengthenError(ValueError):
    pass


def lengthen_with_case(
    q: AdmissibleSequence, record: UpcrossingRecord, dev: DeviationSums
) -> tuple[AdmissibleSequence, str]:
    """One lengthening step; also names the construction used.

    With ``q = (s_1, t_1, ..., s_m, t_m)`` and the auxiliary ``s_{m+1} = n``,
    take the smallest ``i`` with ``v_i <= s_i``.  ``i = 1`` prepends
    ``(u_1, v_1)``; otherwise pair ``i-1`` of ``q`` is split around
    ``(v_{i-1}, u_i)`` when ``u_i < t_{i-1}``, and ``(u_i, v_i)`` is inserted
    before pair ``i`` (or appended when ``i = m+1``) when ``u_i >= t_{i-1}``.
    """
    m = q.length
    if m >= record.count:
        raise LengthenError(f"q has length {m} but only {record.count} upcrossings")
    s = [None] + [p[0] for p in q.pairs] + [record.n]
    t = [None] + [p[1] for p in q.pairs]
    u = [None] + record.u
    v = [None] + record.v
    i = next(i for i in range(1, m + 2) if v[i] <= s[i])
    pairs = list(q.pairs)
    if i == 1:
        d, case = [(u[1], v[1])] + pairs, "prepend"
    elif u[i] < t[i - 1]:
        d = pairs[: i - 2] + [(s[i - 1], v[i - 1]), (u[i], t[i - 1])] + pairs[i - 1 :]
        case = "split"
    elif i <= m:
        d, case = pairs[: i - 1] + [(u[i], v[i])] + pairs[i - 1 :], "insert"
    else:
        d, case = pairs + [(u[i], v[i])], "append"
    return AdmissibleSequence(tuple(d)), case


def lengthen(q: AdmissibleSequence, record: UpcrossingRecord, dev: DeviationSums) -> AdmissibleSequence:
    return lengthen_with_case(q, record, dev)[0]


def shift_reindex(d: AdmissibleSequence) -> tuple[AdmissibleSequence, bool]:
    """Reindex ``d`` for the shifted trajectory.

    Returns ``(d', starts_at_minus_one)``; the exact identity is
    ``S(omega, d) = S(T omega, d') + a - (beta - alpha) * m_d`` with
    ``a = f(omega) - alpha`` when ``s_1 = -1`` and ``a = 0`` otherwise.
    """
    if not d.pairs:
        return d, False
    (s1, t1), rest = d.pairs[0], d.pairs[1:]
    tail = [(s - 1, t - 1) for s, t in rest]
    if s1 >= 0:
        return AdmissibleSequence(((s1 - 1, t1 - 1), *tail)), False
    if t1 > 0:
        return AdmissibleSequence(((-1, t1 - 1), *tail)), True
    return AdmissibleSequence(tuple(tail)), True


def lambda_n(dev: DeviationSums, n: int | None = None, method: str = "dp") -> Fraction:
    """``max_d S(d)`` over admissible ``d`` with indices in ``[-1, n]``.

    ``method="enumerate"`` is brute force over all admissible sequences
    (feasible to about ``n = 14``); ``"dp"`` scans indices keeping the best
    sum with no pair open and with one pair open.
    """
    if n is None:
        n = dev.horizon
    if n > dev.horizon:
        raise ValueError(f"deviation sums only reach index {dev.horizon}")
    if method == "enumerate":
        return max(cumulative_sum(d, dev) for d in enumerate_admissible(n))
    if method != "dp":
        raise ValueError(f"unknown method {method!r}")
    closed = Fraction(0)
    open_ = None  # best sum with a pair opened at an earlier index
    for x in range(-1, n + 1):
        if open_ is not None and x >= 0:
            closed = max(closed, open_ + dev.b(x))
        cand = closed - dev.a(x)
        open_ = cand if open_ is None else max(open_, cand)
    return closed


@dataclass
class PointwiseReport:
    ok: bool
    sigma: int
    positive_part: Fraction  # (f(omega) - alpha)^+
    lambda_omega: Fraction
    lambda_shifted: Fraction
    lhs: Fraction
    rhs: Fraction


def check_pointwise_inequality(
    values: Sequence[Fraction], alpha, beta, n: int, method: str = "dp"
) -> PointwiseReport:
    """``(beta-alpha) sigma_n(omega) <= (f(omega)-alpha)^+ + lambda_n(T omega) - lambda_n(omega)``.

    ``values`` are the orbit values ``f(T^k omega)`` for ``k = 0..n+1``.
    """
    alpha, beta = Fraction(alpha), Fraction(beta)
    if len(values) < n + 2:
        raise PrefixTooShort(f"need {n + 2} orbit values, have {len(values)}")
    values = list(values[: n + 2])
    series = AverageSeries(values[: n + 1])
    sig = count_upcrossings(series, alpha, beta, n).count
    dev = DeviationSums(values[: n + 1], alpha, beta)
    lam = lambda_n(dev, n, method)
    lam_t = lambda_n(DeviationSums(values[1:], alpha, beta), n, method)
    pos = max(values[0] - alpha, Fraction(0))
    lhs, rhs = (beta - alpha) * sig, pos + lam_t - lam
    return PointwiseReport(lhs <= rhs, sig, pos, lam, lam_t, lhs, rhs)


@dataclass
class IntegratedReport:
    ok: bool
    lhs: Fraction  # integral of (beta - alpha) sigma_n
    rhs: Fraction  # integral of (f - alpha)^+
    depth: int
    cylinders: int


def check_integrated_inequality(P, f: SimpleFunction, alpha, beta, n: int) -> IntegratedReport:
    """Exact integrals of both sides by summing over determining cylinders."""
    alpha, beta = Fraction(alpha), Fraction(beta)
    depth = n + f.depth
    lhs = rhs = Fraction(0)
    count = 0
    for x, px in cylinders(P, depth):
        count += 1
        vals = shift_values(f, x, n + 1)
        sig = count_upcrossings(AverageSeries(vals), alpha, beta, n).count
        lhs += px * (beta - alpha) * sig
        rhs += px * max(vals[0] - alpha, Fraction(0))
    return IntegratedReport(lhs <= rhs, lhs, rhs, depth, count)


# ---------------------------------------------------------------------------
# the assembled integral test


def dyadic_pairs(M: int) -> Iterator[tuple[Fraction, Fraction]]:
    """Fixed enumeration of all dyadic pairs ``-M < alpha < beta < M``.

    Level ``L = 0, 1, 2, ...`` uses the grid ``j / 2**L``; it lists, in
    lexicographic order, the pairs of grid points not already listed at an
    earlier level.  Every dyadic pair appears exactly once.
    """
    L = 0
    while True:
        den = 2**L
        grid = [Fraction(j, den) for j in range(-M * den + 1, M * den)]
        for i, a in enumerate(grid):
            for b in grid[i + 1 :]:
                if L == 0 or a.denominator == den or b.denominator == den:
                    yield a, b
        L += 1


def first_pairs(M: int, count: int) -> list[tuple[Fraction, Fraction]]:
    out = []
    for pair in dyadic_pairs(M):
        if len(out) == count:
            break
        out.append(pair)
    return out


class UpcrossingIntegralTest(StagedIntegralTest):
    """``p_{n,I} = (1/2M) sum_{i<=I} (beta_i - alpha_i) sigma_n(.|alpha_i, beta_i) / (i(i+1))``.

    The stage is the horizon ``n``; the pair cutoff ``I`` is fixed per
    instance.  Non-decreasing in both.
    """

    def __init__(self, P, f: SimpleFunction, M: int, cutoff: int, horizon: int | None = None):
        if M < 1:
            raise ValueError("M must be a positive integer")
        super().__init__(P)
        self.f, self.M, self.cutoff = f, M, cutoff
        self.horizon = horizon
        self.pairs = first_pairs(M, cutoff)
        self.weights = [
            (b - a) / (2 * M * i * (i + 1)) for i, (a, b) in enumerate(self.pairs, start=1)
        ]

    def depth(self, stage: int) -> int:
        return stage + self.f.depth

    def value(self, stage: int, omega_prefix: str) -> Fraction:
        series = AverageSeries.from_word(self.f, omega_prefix, stage)
        total = Fraction(0)
        for w, (a, b) in zip(self.weights, self.pairs):
            k = count_upcrossings(series, a, b, stage).count
            if k:
                total += w * k
        return total

    def __call__(self, omega_prefix: str) -> Fraction:
        if self.horizon is None:
            raise ValueError("no default horizon set")
        return self.value(self.horizon, omega_prefix)


def assemble_integral_test(P, f: SimpleFunction, M: int, n: int, cutoff: int) -> UpcrossingIntegralTest:
    """The staged upcrossing test ``p_{n,I}`` (callable at horizon ``n``)."""
    return UpcrossingIntegralTest(P, f, M, cutoff, horizon=n)
