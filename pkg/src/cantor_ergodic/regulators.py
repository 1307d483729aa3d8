"""Convergence regulators and their finite-window verification.

Exceedance probabilities of time averages are computed exactly by two
independent engines:

* ``"enumerate"``: depth-first search over cylinders, valid for any measure
  with exact cylinder values; a branch is closed as soon as the event is
  decided on it, contributing its whole cylinder mass.
* ``"lumped"``: for Markov (and uniform) measures, paths are merged by the
  state that matters (recent bits, running sum, event bookkeeping).

Mixtures with a finite exact decomposition are handled componentwise.
A Monte Carlo mode with Wilson intervals covers horizons beyond exact reach.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping

import mpmath
import numpy as np

from .core import EMPTY, IntervalSet, format_rational
from .measures import CylinderMeasure, Markov, Mixture, NotExact
from .observables import SimpleFunction, combine
from .randomness import StagedMLTest
from .stats import wilson_interval


class PrecisionFailure(RuntimeError):
    pass


class DepthInfeasible(RuntimeError):
    pass


class PFinderFailure(RuntimeError):
    pass


class StageBudgetExhausted(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# regulators


def hoeffding_regulator(delta, eps, max_prec: int = 4096) -> int:
    """``floor(ln(2/(eps*delta)) / (2*delta**2))``, rounded rigorously.

    The logarithm is evaluated in outward-rounded interval arithmetic and the
    working precision doubled until both interval ends share one floor.
    Negative values (only when ``eps*delta > 2``) are clamped to 0.
    """
    delta, eps = Fraction(delta), Fraction(eps)
    if delta <= 0 or eps <= 0:
        raise ValueError("delta and eps must be positive")
    arg = 2 / (eps * delta)
    if arg == 1:
        return 0
    scale = 2 * delta * delta
    prec = 53
    while prec <= max_prec:
        lo, hi = _floor_bounds(arg, scale, prec)
        if lo == hi:
            return max(int(lo), 0)
        prec *= 2
    raise PrecisionFailure(f"floor undecided at {max_prec} bits")


def _floor_bounds(arg: Fraction, scale: Fraction, prec: int) -> tuple[int, int]:
    """Floors of both ends of an enclosure of ``ln(arg) / scale`` at ``prec`` bits."""
    iv = mpmath.iv
    saved = iv.prec
    iv.prec = prec
    try:
        x = iv.mpf(arg.numerator) / iv.mpf(arg.denominator)
        val = iv.log(x) / (iv.mpf(scale.numerator) / iv.mpf(scale.denominator))
        # endpoints carry prec bits, so converting at the same precision is exact
        with mpmath.workprec(prec):
            return int(mpmath.floor(mpmath.mpf(val.a))), int(mpmath.floor(mpmath.mpf(val.b)))
    finally:
        iv.prec = saved


@dataclass(frozen=True)
class Regulator:
    """``m(delta, eps)`` with its provenance (hoeffding, ergodic or table)."""

    fn: Callable[[Fraction, Fraction], int]
    provenance: str = "user"

    def __call__(self, delta, eps) -> int:
        return int(self.fn(Fraction(delta), Fraction(eps)))

    @classmethod
    def hoeffding(cls) -> "Regulator":
        return cls(hoeffding_regulator, "hoeffding")

    @classmethod
    def from_table(cls, table: Mapping[tuple[Fraction, Fraction], int]) -> "Regulator":
        tab = {(Fraction(d), Fraction(e)): int(m) for (d, e), m in table.items()}

        def fn(d, e):
            try:
                return tab[(d, e)]
            except KeyError:
                raise KeyError(f"regulator table has no entry for ({d}, {e})") from None

        return cls(fn, "table")


# ---------------------------------------------------------------------------
# exceedance queries


@dataclass(frozen=True)
class ExceedanceQuery:
    """``P{exists n in [start, stop] : event(n)}`` for shift averages of ``f``.

    ``form`` selects the event:

    * ``"limit"``: ``|S_n - center| > delta``
    * ``"pair"``: ``|S_base - S_n| > delta`` with ``base <= start``
    * ``"cauchy"``: ``max S - min S > delta`` over the window seen so far

    ``strict=False`` turns ``>`` into ``>=``.
    """

    measure: CylinderMeasure
    f: SimpleFunction
    delta: Fraction
    start: int
    stop: int
    form: str = "limit"
    center: Fraction | None = None
    base: int | None = None
    strict: bool = True

    def __post_init__(self):
        object.__setattr__(self, "delta", Fraction(self.delta))
        if self.center is not None:
            object.__setattr__(self, "center", Fraction(self.center))
        if not 1 <= self.start <= self.stop:
            raise ValueError("need 1 <= start <= stop")
        if self.form == "limit" and self.center is None:
            raise ValueError("limit form needs a center")
        if self.form == "pair" and (self.base is None or not 1 <= self.base <= self.start):
            raise ValueError("pair form needs 1 <= base <= start")
        if self.form not in ("limit", "pair", "cauchy"):
            raise ValueError(f"unknown form {self.form!r}")

    @property
    def depth(self) -> int:
        return self.stop + max(self.f.depth, 1) - 1

    def _exceeds(self, gap: Fraction) -> bool:
        return gap > self.delta if self.strict else gap >= self.delta

    def update(self, n: int, s: Fraction, extra):
        """Advance bookkeeping after ``S_n = s``; returns ``(hit, extra)``."""
        if self.form == "limit":
            return (self.start <= n and self._exceeds(abs(s - self.center))), None
        if self.form == "pair":
            if n == self.base:
                extra = s
            if n >= self.start and self._exceeds(abs(s - extra)):
                return True, extra
            return False, extra
        if n < self.start:
            return False, None
        lo, hi = (s, s) if extra is None else (min(extra[0], s), max(extra[1], s))
        return self._exceeds(hi - lo), (lo, hi)


def _depth1(f: SimpleFunction) -> SimpleFunction:
    # engines read one new f-value per bit; constant observables get depth 1
    if f.depth:
        return f
    c = f(EMPTY)
    return SimpleFunction({"0": c, "1": c})


def _exceed_enumerate(q: ExceedanceQuery, P, max_depth: int) -> Fraction:
    f = _depth1(q.f)
    D = f.depth
    if q.depth > max_depth:
        raise DepthInfeasible(f"depth {q.depth} exceeds enumeration cap {max_depth}")
    total = Fraction(0)
    # (word, prob, running sum, extra)
    stack = [(EMPTY, P.prob(EMPTY), Fraction(0), None)]
    while stack:
        x, px, acc, extra = stack.pop()
        if px == 0:
            continue
        L = len(x)
        if L >= D:
            n = L - D + 1
            acc = acc + f(x[L - D :])
            hit, extra = q.update(n, acc / n, extra)
            if hit:
                total += px
                continue
            if n == q.stop:
                continue
        for b in "01":
            y = x + b
            stack.append((y, P.prob(y), acc, extra))
    return total


def _exceed_lumped(q: ExceedanceQuery, kernel) -> Fraction:
    (init0, init1), flip = kernel
    f = _depth1(q.f)
    D = f.depth
    stay = 1 - flip
    total = Fraction(0)
    states: dict = {}
    for b, pb in (("0", init0), ("1", init1)):
        if pb:
            states[(b, Fraction(0), None)] = pb
    L = 1
    while True:
        if L >= D:
            n = L - D + 1
            nxt: dict = {}
            for (w, acc, extra), pr in states.items():
                acc2 = acc + f(w[-D:])
                hit, extra2 = q.update(n, acc2 / n, extra)
                if hit:
                    total += pr
                else:
                    key = (w, acc2, extra2)
                    nxt[key] = nxt.get(key, 0) + pr
            states = nxt
            if n == q.stop or not states:
                return total
        grown: dict = {}
        for (w, acc, extra), pr in states.items():
            last = w[-1]
            for b, pb in (("0", stay if last == "0" else flip), ("1", stay if last == "1" else flip)):
                if pb:
                    key = ((w + b)[-D:], acc, extra)
                    grown[key] = grown.get(key, 0) + pr * pb
        states = grown
        L += 1


def exceedance_probability(q: ExceedanceQuery, engine: str = "auto", max_depth: int = 22) -> Fraction:
    """Exact probability of the query's event."""
    P = q.measure
    if isinstance(P, Mixture):
        if not P.exact:
            raise NotExact("generator mixtures have no exact exceedance")
        parts = P.exact_decomposition()
        return sum(
            (w * exceedance_probability(_with_measure(q, Markov(s)), engine, max_depth) for w, s in parts),
            Fraction(0),
        )
    kernel = P.markov_kernel()
    if engine == "auto":
        engine = "lumped" if kernel is not None else "enumerate"
    if engine == "lumped":
        if kernel is None:
            raise ValueError(f"{P!r} is not a Markov measure")
        return _exceed_lumped(q, kernel)
    if engine == "enumerate":
        return _exceed_enumerate(q, P, max_depth)
    raise ValueError(f"unknown engine {engine!r}")


def _with_measure(q: ExceedanceQuery, P) -> ExceedanceQuery:
    return ExceedanceQuery(P, q.f, q.delta, q.start, q.stop, q.form, q.center, q.base, q.strict)


def average_distribution(P, f: SimpleFunction, p: int, engine: str = "auto", max_depth: int = 22) -> dict[Fraction, Fraction]:
    """Exact law of ``S_p^f`` under ``P``: ``{value: probability}``."""
    if isinstance(P, Mixture):
        out: dict[Fraction, Fraction] = {}
        for w, s in P.exact_decomposition():
            for v, pr in average_distribution(Markov(s), f, p, engine, max_depth).items():
                out[v] = out.get(v, 0) + w * pr
        return out
    g = _depth1(f)
    D = g.depth
    kernel = P.markov_kernel()
    if engine == "auto":
        engine = "lumped" if kernel is not None else "enumerate"
    out = {}
    if engine == "enumerate":
        depth = p + D - 1
        if depth > max_depth:
            raise DepthInfeasible(f"depth {depth} exceeds enumeration cap {max_depth}")
        from .measures import cylinders
        from .observables import shift_values

        for x, px in cylinders(P, depth):
            v = sum(shift_values(g, x, p), Fraction(0)) / p
            out[v] = out.get(v, 0) + px
        return out
    if engine != "lumped":
        raise ValueError(f"unknown engine {engine!r}")
    # reuse the lumped walk with an event that never fires, reading final sums
    (init0, init1), flip = kernel
    stay = 1 - flip
    states: dict = {}
    for b, pb in (("0", init0), ("1", init1)):
        if pb:
            states[(b, Fraction(0))] = pb
    L = 1
    while True:
        if L >= D:
            nxt: dict = {}
            for (w, acc), pr in states.items():
                key = (w, acc + g(w[-D:]))
                nxt[key] = nxt.get(key, 0) + pr
            states = nxt
            if L - D + 1 == p:
                break
        grown: dict = {}
        for (w, acc), pr in states.items():
            last = w[-1]
            for b, pb in (("0", stay if last == "0" else flip), ("1", stay if last == "1" else flip)):
                if pb:
                    key = ((w + b)[-D:], acc)
                    grown[key] = grown.get(key, 0) + pr * pb
        states = grown
        L += 1
    for (_, acc), pr in states.items():
        v = acc / p
        out[v] = out.get(v, 0) + pr
    return out


def l1_norm_of_average(f: SimpleFunction, P, p: int, engine: str = "auto", max_depth: int = 22) -> Fraction:
    """Exact ``||S_p^f||_1`` under ``P``."""
    return sum((abs(v) * pr for v, pr in average_distribution(P, f, p, engine, max_depth).items()), Fraction(0))


def find_p(f: SimpleFunction, P, target: Fraction, cap: int = 1024, engine: str = "auto") -> tuple[int, list[tuple[int, Fraction]]]:
    """Search ``p = 1, 2, 4, ...`` for ``||S_p^f||_1 <= target``.

    Returns ``p`` and the exact norms tried.  Hitting ``cap`` is a search
    limit of this tool, not a statement about the measure.
    """
    target = Fraction(target)
    history = []
    p = 1
    while p <= cap:
        norm = l1_norm_of_average(f, P, p, engine)
        history.append((p, norm))
        if norm <= target:
            return p, history
        p *= 2
    raise PFinderFailure(f"no p <= {cap} with L1 norm <= {target}; tried {history}")


@dataclass
class ErgodicRegulatorResult:
    m: int
    p: int
    r: Fraction
    mean: Fraction
    norms: list[tuple[int, Fraction]]


def ergodic_regulator_details(f: SimpleFunction, P, delta, eps, p_finder=find_p, r=None) -> ErgodicRegulatorResult:
    """``m = ceil(2 (p - 1) r / delta)`` with ``||S_p^{f-c}||_1 <= delta eps / 2``.

    ``f`` is centred at ``c = E_P f`` first.  ``r`` must exceed
    ``sup |f - c|``; by default it is the least integer that does.
    """
    delta, eps = Fraction(delta), Fraction(eps)
    c = f.expectation(P)
    g = f - c
    if r is None:
        r = Fraction(math.floor(g.bound) + 1)
    r = Fraction(r)
    if not r > g.bound:
        raise ValueError(f"r = {r} must exceed sup|f - c| = {g.bound}")
    if g.bound == 0:
        p, norms = 1, [(1, Fraction(0))]
    else:
        p, norms = p_finder(g, P, delta * eps / 2)
    m = math.ceil(2 * (p - 1) * r / delta)
    return ErgodicRegulatorResult(m, p, r, c, norms)


def ergodic_regulator(f: SimpleFunction, P, delta, eps, p_finder=find_p, r=None) -> int:
    return ergodic_regulator_details(f, P, delta, eps, p_finder, r).m


# ---------------------------------------------------------------------------
# verification


@dataclass
class RegulatorVerdict:
    verdict: str  # pass | fail | inconclusive
    eps: Fraction
    m_candidate: int
    window: tuple[int, int]
    mode: str
    probability: Fraction | None = None
    estimate: float | None = None
    interval: tuple[float, float] | None = None
    trials: int | None = None
    hits: int | None = None

    def to_json(self) -> dict:
        out = {
            "verdict": self.verdict,
            "eps": format_rational(self.eps),
            "m_candidate": self.m_candidate,
            "window": list(self.window),
            "mode": self.mode,
        }
        if self.probability is not None:
            out["probability"] = format_rational(self.probability)
        if self.estimate is not None:
            out.update(estimate=self.estimate, interval=list(self.interval), trials=self.trials, hits=self.hits)
        return out


def _orbit_values_batch(f: SimpleFunction, bits: np.ndarray, count: int) -> np.ndarray:
    """Float f-values ``f(T^k omega)`` for ``k < count`` on each row."""
    g = _depth1(f)
    D = g.depth
    codes = np.zeros((bits.shape[0], count), dtype=np.int64)
    for j in range(D):
        codes = (codes << 1) | bits[:, j : j + count]
    table = np.array([float(g(format(c, f"0{D}b"))) for c in range(2**D)])
    return table[codes]


def _mc_hits(q: ExceedanceQuery, bits: np.ndarray) -> np.ndarray:
    vals = _orbit_values_batch(q.f, bits, q.stop)
    csum = np.cumsum(vals, axis=1)
    n = np.arange(1, q.stop + 1)
    S = csum / n
    win = S[:, q.start - 1 : q.stop]
    d = float(q.delta)
    if q.form == "limit":
        gap = np.abs(win - float(q.center)).max(axis=1)
    elif q.form == "pair":
        gap = np.abs(win - S[:, q.base - 1 : q.base]).max(axis=1)
    else:
        gap = win.max(axis=1) - win.min(axis=1)
    hits = gap > d if q.strict else gap >= d
    # float comparisons near the threshold are redone exactly
    close = np.nonzero(np.abs(gap - d) < 1e-9)[0]
    for row in close:
        hits[row] = _exact_row(q, bits[row])
    return hits


def _exact_row(q: ExceedanceQuery, row: np.ndarray) -> bool:
    g = _depth1(q.f)
    word = "".join(map(str, row.tolist()))
    acc, extra = Fraction(0), None
    for k in range(q.stop):
        acc += g(word[k : k + g.depth])
        hit, extra = q.update(k + 1, acc / (k + 1), extra)
        if hit:
            return True
    return False


def monte_carlo_exceedance(q: ExceedanceQuery, trials: int, seed: int, chunk: int = 2000) -> int:
    """Number of sampled trajectories on which the event occurs.

    Chunks draw from independent child seeds of ``seed``, so the count
    depends only on ``(seed, trials, chunk)``.
    """
    ss = np.random.SeedSequence(seed)
    n_chunks = -(-trials // chunk)
    hits = 0
    for i, child in enumerate(ss.spawn(n_chunks)):
        size = min(chunk, trials - i * chunk)
        rng = np.random.default_rng(child)
        bits = q.measure.sample_batch(q.depth, size, rng)
        hits += int(_mc_hits(q, bits).sum())
    return hits


def verify_regulator_pointwise(
    q: ExceedanceQuery,
    m_candidate: int,
    eps,
    mode: str = "exact",
    trials: int = 10_000,
    seed: int = 0,
    confidence: float = 0.99,
    engine: str = "auto",
) -> RegulatorVerdict:
    """Check ``P{event on [m_candidate, stop]} < eps``.

    The query's window start is replaced by ``m_candidate`` (kept at least
    as large as ``base`` for the pair form).
    """
    eps = Fraction(eps)
    start = max(m_candidate, 1, q.base or 1)
    q = ExceedanceQuery(q.measure, q.f, q.delta, start, max(q.stop, start), q.form, q.center, q.base, q.strict)
    window = (q.start, q.stop)
    if mode == "exact":
        prob = exceedance_probability(q, engine)
        return RegulatorVerdict("pass" if prob < eps else "fail", eps, m_candidate, window, mode, probability=prob)
    if mode != "mc":
        raise ValueError(f"unknown mode {mode!r}")
    hits = monte_carlo_exceedance(q, trials, seed)
    lo, hi = wilson_interval(hits, trials, confidence)
    if hi < eps:
        verdict = "pass"
    elif lo >= eps:
        verdict = "fail"
    else:
        verdict = "inconclusive"
    return RegulatorVerdict(verdict, eps, m_candidate, window, mode, estimate=hits / trials,
                            interval=(lo, hi), trials=trials, hits=hits)


# ---------------------------------------------------------------------------
# Martin-Löf test from a regulator


def oscillation_set(fn: SimpleFunction, fm: SimpleFunction, j: int) -> IntervalSet:
    """``W = {omega : |f_n(omega) - f_n'(omega)| > 1/j}``."""
    thr = Fraction(1, j)
    return combine(fn, fm, lambda a, b: abs(a - b)).where(lambda v: v > thr)


def test_from_regulator(
    f_seq: Callable[[int], SimpleFunction],
    reg: Regulator,
    measure=None,
    max_depth: int = 16,
) -> StagedMLTest:
    """Staged test ``U_i = union_{j>i} V_j`` with ``V_j`` the oscillation sets
    for ``n, n' >= m(1/(2j), 2**-j)``.

    At stage ``s`` the unions run over ``i < j <= s`` and
    ``m_j <= n < n' <= s``.  Whether the level bounds hold is a property of
    the regulator; check with :meth:`StagedMLTest.check`.
    """
    from .measures import Uniform

    measure = measure or Uniform()
    m_cache: dict[int, int] = {}
    w_cache: dict[tuple[int, int, int], IntervalSet] = {}

    def m_of(j):
        if j not in m_cache:
            m_cache[j] = reg(Fraction(1, 2 * j), Fraction(1, 2**j))
        return m_cache[j]

    def W(n, n2, j):
        key = (n, n2, j)
        if key not in w_cache:
            fa, fb = f_seq(n), f_seq(n2)
            if max(fa.depth, fb.depth) > max_depth:
                raise StageBudgetExhausted(f"f_{n2} has depth {fb.depth} > {max_depth}")
            w_cache[key] = oscillation_set(fa, fb, j)
        return w_cache[key]

    def gen(i, s):
        out = IntervalSet()
        for j in range(i + 1, s + 1):
            mj = max(m_of(j), 1)
            for n in range(mj, s + 1):
                for n2 in range(n + 1, s + 1):
                    out = out | W(n, n2, j)
        return out

    return StagedMLTest(gen, measure)


def shift_average_sequence(f: SimpleFunction) -> Callable[[int], SimpleFunction]:
    """``n -> S_n^f`` as simple functions (shift), for use with regulator tests."""
    from .observables import averaged_observable

    cache: dict[int, SimpleFunction] = {}

    def fn(n):
        if n not in cache:
            cache[n] = averaged_observable(f, n)
        return cache[n]

    return fn


# ---------------------------------------------------------------------------
# band test: averages that settle on a value other than the mean


@dataclass
class BandTest:
    """``U_m = {r1 < S_n < r2}`` for the first ``n >= m`` with ``P{r1 <= S_n <= r2} < 2**-m``."""

    test: StagedMLTest
    horizons: dict[int, int]
    closed_measures: dict[int, Fraction]


def band_test(f: SimpleFunction, P, r1, r2, m_max: int, n_cap: int = 18, engine: str = "auto") -> BandTest:
    """Finite-stage test catching sequences whose averages stay inside ``(r1, r2)``.

    Requires the band to avoid the mean ``c = E_P f`` (``c <= r1`` or
    ``c >= r2``).  Each level searches ``n = m, m+1, ...`` up to ``n_cap``
    using the exact law of ``S_n``.
    """
    from .observables import averaged_observable

    r1, r2 = Fraction(r1), Fraction(r2)
    if not r1 < r2:
        raise ValueError("need r1 < r2")
    c = f.expectation(P)
    if r1 < c < r2:
        raise ValueError(f"band ({r1}, {r2}) contains the mean {c}")
    horizons, closed = {}, {}
    for m in range(1, m_max + 1):
        n = max(m, horizons.get(m - 1, 1))
        while True:
            if n > n_cap:
                raise StageBudgetExhausted(f"no n <= {n_cap} with P(closed band) < 2^-{m}")
            dist = average_distribution(P, f, n, engine)
            mass = sum((pr for v, pr in dist.items() if r1 <= v <= r2), Fraction(0))
            if mass < Fraction(1, 2**m):
                horizons[m], closed[m] = n, mass
                break
            n += 1
    sets = {m: averaged_observable(f, n).where(lambda v: r1 < v < r2) for m, n in horizons.items()}

    def gen(m, s):
        if m not in sets:
            raise StageBudgetExhausted(f"level {m} beyond m_max = {m_max}")
        return sets[m]

    return BandTest(StagedMLTest(gen, P), horizons, closed)
