"""Simple-function observables and their time averages along trajectories."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

from .core import (
    EMPTY,
    IntervalSet,
    PrefixTooShort,
    check_word,
    format_rational,
    parse_rational,
    words_of_length,
)
from .transforms import Trajectory, _shift_step


class SimpleFunction:
    """A function constant on each cylinder of a finite prefix-free cover.

    ``pieces`` maps each cover word to its rational value.  The cover is
    validated on construction: the words must be pairwise incomparable and
    their Kraft sum must be exactly 1.
    """

    def __init__(self, pieces: dict[str, Fraction] | Iterable[tuple[str, Fraction]]):
        items = pieces.items() if isinstance(pieces, dict) else pieces
        table: dict[str, Fraction] = {}
        for w, r in items:
            check_word(w)
            if w in table:
                raise ValueError(f"duplicate cover word {w!r}")
            table[w] = Fraction(r)
        if sum((Fraction(1, 2 ** len(w)) for w in table), Fraction(0)) != 1:
            raise ValueError("cover words do not have Kraft sum 1")
        if not _prefix_free(table):
            raise ValueError("cover words are not prefix-free")
        self._table = table
        self.depth = max((len(w) for w in table), default=0)

    @property
    def pieces(self) -> list[tuple[str, Fraction]]:
        return sorted(self._table.items(), key=lambda kv: (len(kv[0]), kv[0]))

    @property
    def bound(self) -> Fraction:
        """``max |r_i|`` over the pieces."""
        return max(abs(r) for r in self._table.values())

    def lookup(self, x: str) -> Fraction | None:
        """Value on the piece that is a prefix of ``x``, if one is."""
        t = self._table
        for k in range(min(len(x), self.depth) + 1):
            v = t.get(x[:k])
            if v is not None:
                return v
        return None

    def __call__(self, omega_prefix: str) -> Fraction:
        v = self.lookup(omega_prefix)
        if v is None:
            raise PrefixTooShort(f"prefix {omega_prefix!r} determines no piece")
        return v

    def expectation(self, P) -> Fraction:
        return sum((r * P.prob(w) for w, r in self._table.items()), Fraction(0))

    def map(self, fn: Callable[[Fraction], Fraction]) -> "SimpleFunction":
        return SimpleFunction({w: fn(r) for w, r in self._table.items()})

    def refine(self, depth: int) -> dict[str, Fraction]:
        """Values on every word of length ``depth >= self.depth``."""
        if depth < self.depth:
            raise ValueError("cannot refine below the cover depth")
        return {x: self(x) for x in words_of_length(depth)}

    def compact(self) -> "SimpleFunction":
        """Merge sibling pieces carrying equal values."""
        table = dict(self._table)
        changed = True
        while changed:
            changed = False
            for w in sorted(table, key=len, reverse=True):
                if not w or w not in table or w[-1] != "0":
                    continue
                sib = w[:-1] + "1"
                if sib in table and table[sib] == table[w]:
                    table[w[:-1]] = table.pop(w)
                    table.pop(sib)
                    changed = True
        return SimpleFunction(table)

    def where(self, pred: Callable[[Fraction], bool]) -> IntervalSet:
        return IntervalSet(frozenset(w for w, r in self._table.items() if pred(r)))

    def __eq__(self, other):
        if not isinstance(other, SimpleFunction):
            return NotImplemented
        return combine(self, other, lambda a, b: a == b).where(lambda v: not v).words == frozenset()

    def __hash__(self):
        return hash(frozenset(self.compact()._table.items()))

    def __add__(self, other):
        if isinstance(other, SimpleFunction):
            return combine(self, other, lambda a, b: a + b)
        return self.map(lambda r: r + other)

    def __sub__(self, other):
        if isinstance(other, SimpleFunction):
            return combine(self, other, lambda a, b: a - b)
        return self.map(lambda r: r - other)

    def __mul__(self, c):
        return self.map(lambda r: r * c)

    __rmul__ = __mul__

    def __repr__(self):
        body = ", ".join(f"{w or 'λ'}: {r}" for w, r in self.pieces[:6])
        more = ", ..." if len(self._table) > 6 else ""
        return f"SimpleFunction({{{body}{more}}})"

    def to_config(self) -> list[list[str]]:
        return [[w, format_rational(r)] for w, r in self.pieces]


def _prefix_free(words) -> bool:
    ws = set(words)
    return not any(w[:k] in ws for w in ws for k in range(len(w)))


def combine(f: SimpleFunction, g: SimpleFunction, op) -> SimpleFunction:
    """Pointwise ``op(f, g)`` on the common refinement of the two covers."""
    out: dict[str, Fraction] = {}

    def rec(x: str):
        a, b = f.lookup(x), g.lookup(x)
        if a is not None and b is not None:
            out[x] = op(a, b)
            return
        rec(x + "0")
        rec(x + "1")

    rec(EMPTY)
    return SimpleFunction(out)


def constant(c) -> SimpleFunction:
    return SimpleFunction({EMPTY: Fraction(c)})


def first_bit() -> SimpleFunction:
    """``f(omega) = omega_1``."""
    return SimpleFunction({"0": Fraction(0), "1": Fraction(1)})


def indicator(U: IntervalSet, value=1) -> SimpleFunction:
    value = Fraction(value)
    pieces = {w: value for w in U.words}
    pieces.update({w: Fraction(0) for w in U.complement().words})
    return SimpleFunction(pieces)


def from_values(depth: int, fn: Callable[[str], Fraction]) -> SimpleFunction:
    return SimpleFunction({x: Fraction(fn(x)) for x in words_of_length(depth)})


def simple_from_config(items: Sequence[Sequence[str]]) -> SimpleFunction:
    """Load ``[[word, "p/q"], ...]``; the empty word may be given as ``-``."""
    return SimpleFunction(
        [("" if w in ("-", "λ") else w, parse_rational(r)) for w, r in items]
    )


def eval_simple(h: SimpleFunction, omega_prefix: str) -> Fraction:
    return h(omega_prefix)


# ---------------------------------------------------------------------------
# approximation schedules


@dataclass
class ApproxSchedule:
    """Monotone simple approximants from below and above.

    ``lower(n)`` is non-decreasing in ``n``, ``upper(n)`` non-increasing, and
    ``upper(n) - lower(n) <= gap(n)`` pointwise.
    """

    lower: Callable[[int], SimpleFunction]
    upper: Callable[[int], SimpleFunction]
    gap: Callable[[int], Fraction]

    def check(self, n_max: int) -> int | None:
        """First index violating an invariant up to ``n_max``, else None."""
        for n in range(n_max + 1):
            lo, hi = self.lower(n), self.upper(n)
            diff = combine(hi, lo, lambda a, b: a - b)
            if any(v < 0 or v > self.gap(n) for _, v in diff.pieces):
                return n
            if n < n_max:
                if any(v < 0 for _, v in combine(self.lower(n + 1), lo, lambda a, b: a - b).pieces):
                    return n
                if any(v > 0 for _, v in combine(self.upper(n + 1), hi, lambda a, b: a - b).pieces):
                    return n
        return None

    def at_accuracy(self, eps: Fraction, n_max: int = 64) -> tuple[int, SimpleFunction]:
        """First index whose pointwise gap is below ``eps``, with its lower approximant."""
        eps = Fraction(eps)
        for n in range(n_max + 1):
            lo, hi = self.lower(n), self.upper(n)
            diff = combine(hi, lo, lambda a, b: a - b)
            if max(v for _, v in diff.pieces) < eps:
                return n, lo
        raise ValueError(f"accuracy {eps} not reached by index {n_max}")


# ---------------------------------------------------------------------------
# averages along trajectories


def shift_values(f: SimpleFunction, word: str, count: int) -> list[Fraction]:
    """``f(T^k omega)`` for ``k < count`` under the shift, read off ``word``."""
    D = f.depth
    need = count + D - 1 if count and D else 0
    if len(word) < need:
        raise PrefixTooShort(f"need {need} bits, have {len(word)}")
    return [f(word[k : k + D]) for k in range(count)]


def observe(tr: Trajectory, f: SimpleFunction, count: int) -> list[Fraction]:
    """The orbit values ``f(omega), f(T omega), ..., f(T^{count-1} omega)``."""
    if tr.machine.step is _shift_step:
        need = count + f.depth - 1 if count and f.depth else 0
        return shift_values(f, tr.source.prefix(need), count)
    return [f(tr.iterate_prefix(k, f.depth)) for k in range(count)]


def time_average(tr: Trajectory, f: SimpleFunction, n: int) -> Fraction:
    """``S_n^f(omega) = (1/n) sum_{k<n} f(T^k omega)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return sum(observe(tr, f, n), Fraction(0)) / n


class AverageSeries:
    """Running averages ``s_m = S_{m+1}^f`` for ``m = 0..n``; ``s_{-1} = 0``."""

    def __init__(self, values: Sequence[Fraction]):
        self.values = [Fraction(v) for v in values]
        self.s: list[Fraction] = []
        total = Fraction(0)
        for m, v in enumerate(self.values):
            total += v
            self.s.append(total / (m + 1))

    @classmethod
    def from_trajectory(cls, tr: Trajectory, f: SimpleFunction, n: int) -> "AverageSeries":
        return cls(observe(tr, f, n + 1))

    @classmethod
    def from_word(cls, f: SimpleFunction, word: str, n: int) -> "AverageSeries":
        return cls(shift_values(f, word, n + 1))

    @property
    def horizon(self) -> int:
        return len(self.values) - 1

    def __getitem__(self, m: int) -> Fraction:
        if m == -1:
            return Fraction(0)
        if m < 0:
            raise IndexError(m)
        return self.s[m]

    def __len__(self):
        return len(self.s)


def averaged_observable(f: SimpleFunction, p: int) -> SimpleFunction:
    """``g = S_p^f`` under the shift, on the cover of depth ``depth(f) + p - 1``."""
    if p < 1:
        raise ValueError("p must be >= 1")
    if p == 1:
        return f
    D = f.depth
    return SimpleFunction(
        {x: sum((f(x[k : k + D]) for k in range(p)), Fraction(0)) / p
         for x in words_of_length(D + p - 1)}
    )


@dataclass
class ExpansionReport:
    ok: bool
    direct: Fraction  # S_n^g from the averaged observable
    double_sum: Fraction  # (1/np) sum_k sum_s f(T^{k+s} omega)
    decomposition: Fraction  # S_n^f + boundary correction
    time_average: Fraction  # S_n^f
    correction: Fraction
    bound_ok: bool


def check_expansion_identity(f: SimpleFunction, p: int, n: int, omega_prefix: str) -> ExpansionReport:
    """Exact check of the boundary-term decomposition of ``S_n^g``, ``g = S_p^f``."""
    if p < 1 or n < 1:
        raise ValueError("p and n must be >= 1")
    g = averaged_observable(f, p)
    gv = shift_values(g, omega_prefix, n)
    fv = shift_values(f, omega_prefix, n + p - 1)
    direct = sum(gv, Fraction(0)) / n
    double_sum = sum((fv[k + s] for k in range(p) for s in range(n)), Fraction(0)) / (n * p)
    s_f = sum(fv[:n], Fraction(0)) / n
    head = sum(((p - k) * fv[k + n - 1] for k in range(1, p)), Fraction(0))
    tail = sum(((p - k) * fv[k - 1] for k in range(1, p)), Fraction(0))
    correction = (head - tail) / (n * p)
    decomposition = s_f + correction
    bound_ok = abs(direct - s_f) <= Fraction(p - 1, n) * f.bound
    ok = direct == double_sum == decomposition
    return ExpansionReport(ok, direct, double_sum, decomposition, s_f, correction, bound_ok)
