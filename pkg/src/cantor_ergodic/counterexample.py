"""A stationary mixture of two-state chains with no computable regulator,
made runnable by replacing the universal machine with a finite table.

Component ``i`` is the symmetric Markov chain with flip probability
``alpha_i``.  ``alpha_i = 0`` (the machine never halts on input ``i``) makes
the component a point pair ``{000..., 111...}``; otherwise
``alpha_i = 2**-k(i)`` where ``k(i)`` is the length of the zero block before
the first 1-bit of ``alpha_i``'s binary expansion.  A long zero block keeps
trajectories frozen at their first bit for about ``k(i)`` steps, which
defeats any candidate regulator value ``m <= k(i)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping

from .core import format_rational
from .measures import Markov, MarkovSpec, Mixture
from .observables import first_bit
from .regulators import ExceedanceQuery, exceedance_probability, monte_carlo_exceedance
from .stats import wilson_interval

DELTA = Fraction(1, 4)


def mixture_threshold(i: int) -> Fraction:
    """The accuracy ``2**-(i+1)`` used against component ``i``."""
    return Fraction(1, 2 ** (i + 1))


@dataclass(frozen=True)
class OracleEntry:
    u: int  # output value
    t: int | None = None  # halting step, if recorded

    def __post_init__(self):
        if self.u < 1:
            raise ValueError("oracle outputs must be >= 1")
        if self.t is not None and self.t < 1:
            raise ValueError("halting steps must be >= 1")


@dataclass(frozen=True)
class HaltingOracle:
    """Finite table ``i -> (u, t)``; absent indices never halt."""

    table: Mapping[int, OracleEntry] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "table", dict(sorted(self.table.items())))
        if any(i < 1 for i in self.table):
            raise ValueError("oracle indices start at 1")

    @classmethod
    def from_pairs(cls, pairs: Mapping[int, int]) -> "HaltingOracle":
        return cls({int(i): OracleEntry(int(u)) for i, u in pairs.items()})

    @classmethod
    def from_text(cls, text: str) -> "HaltingOracle":
        """Lines ``i u`` or ``i u t``; ``#`` starts a comment."""
        table = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (2, 3) or not all(p.isdigit() for p in parts):
                raise ValueError(f"oracle line {lineno}: expected 'i u [t]', got {raw!r}")
            i, u = int(parts[0]), int(parts[1])
            if i in table:
                raise ValueError(f"oracle line {lineno}: duplicate index {i}")
            table[i] = OracleEntry(u, int(parts[2]) if len(parts) == 3 else None)
        return cls(table)

    @classmethod
    def load(cls, path: str | Path) -> "HaltingOracle":
        return cls.from_text(Path(path).read_text())

    def get(self, i: int) -> OracleEntry | None:
        return self.table.get(i)


def zero_block_length(u: int, t: int | None = None) -> int:
    """Zeros before the first 1-bit of ``alpha_i``.

    Bit ``s`` is 1 exactly when the computation has halted within ``s``
    steps with output ``u`` and ``s > u``.  The first such ``s`` is
    ``max(t, u + 1)``; with no recorded halting step ``t`` we take the
    computation to have halted by step ``u + 1``, so the block is ``u``.
    """
    first_one = u + 1 if t is None else max(t, u + 1)
    return first_one - 1


def k_of(oracle: HaltingOracle, i: int) -> int | None:
    e = oracle.get(i)
    return None if e is None else zero_block_length(e.u, e.t)


def alpha_from_oracle(oracle: HaltingOracle, i: int) -> Fraction:
    k = k_of(oracle, i)
    return Fraction(0) if k is None else Fraction(1, 2**k)


def counterexample_measure(oracle: HaltingOracle) -> Mixture:
    """The mixture ``sum_i 2**-i P_i``; exact because the tail is frozen (alpha 0)."""
    K = max(oracle.table, default=0)
    comps = [MarkovSpec(alpha_from_oracle(oracle, i)) for i in range(1, K + 1)]
    return Mixture(comps, tail=MarkovSpec(Fraction(0)))


def zero_run_probability(alpha: Fraction, k: int) -> Fraction:
    """``P(0^k) = (1/2)(1 - alpha)**(k - 1)`` for the symmetric chain."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return Fraction(1, 2) * (1 - Fraction(alpha)) ** (k - 1)


def frozen_probability(k: int) -> Fraction:
    """``P{S_k in {0, 1}}`` under the chain with ``alpha = 2**-k``."""
    return 2 * zero_run_probability(Fraction(1, 2**k), k)


def zero_block_threshold(bound: Fraction = Fraction(2, 5), k_max: int = 64) -> int:
    """Least ``k*`` with ``P(0^k) > bound`` for all ``k*<= k <= k_max`` (``alpha = 2**-k``)."""
    bound = Fraction(bound)
    k_star = None
    for k in range(k_max, 0, -1):
        if zero_run_probability(Fraction(1, 2**k), k) > bound:
            k_star = k
        else:
            break
    if k_star is None:
        raise ValueError(f"bound {bound} fails at k = {k_max}")
    return k_star


@dataclass
class DefeatReport:
    i: int
    k: int
    alpha: Fraction
    n: int
    mode: str
    zero_run: Fraction
    frozen: Fraction
    frozen_exceeds: bool
    deviation: Fraction | None = None
    estimate: float | None = None
    interval: tuple[float, float] | None = None
    trials: int | None = None
    hits: int | None = None
    mixture_lower: Fraction | float | None = None
    eps: Fraction = Fraction(0)
    m_candidate: int | None = None
    verdict: str = "inconclusive"  # defeated | not-defeated | inconclusive | not-applicable

    def to_json(self) -> dict:
        out = {
            "i": self.i,
            "k": self.k,
            "alpha": format_rational(self.alpha),
            "n": self.n,
            "mode": self.mode,
            "zero_run": format_rational(self.zero_run),
            "frozen": format_rational(self.frozen),
            "frozen_float": float(self.frozen),
            "frozen_exceeds_4_5": self.frozen_exceeds,
            "eps": format_rational(self.eps),
            "m_candidate": self.m_candidate,
            "verdict": self.verdict,
        }
        if self.deviation is not None:
            out["deviation"] = format_rational(self.deviation)
            out["mixture_lower"] = format_rational(self.mixture_lower)
        if self.estimate is not None:
            out.update(
                estimate=self.estimate,
                interval=list(self.interval),
                trials=self.trials,
                hits=self.hits,
                mixture_lower=self.mixture_lower,
            )
        return out


def defeat_candidate(
    oracle: HaltingOracle,
    i: int,
    n: int,
    mode: str = "mc",
    trials: int = 100_000,
    seed: int = 0,
    confidence: float = 0.99,
    m_candidate: int | None = None,
    chunk: int = 500,
) -> DefeatReport:
    """Show the mixture mass that defeats a regulator value ``m <= k(i)``.

    With ``delta = 1/4`` and ``eps = 2**-(i+1)`` a valid regulator needs
    ``P{|S_k - S_n| > 1/4} < eps`` for all ``n > k >= m``.  Component
    ``i`` alone contributes ``2**-i`` times its own probability, so the
    candidate fails once that probability is above 1/2.
    """
    k = k_of(oracle, i)
    if k is None:
        raise ValueError(f"oracle has no entry for i = {i}; alpha_{i} = 0")
    if n <= k:
        raise ValueError(f"need n > k(i) = {k}")
    alpha = Fraction(1, 2**k)
    z = zero_run_probability(alpha, k)
    fr = 2 * z
    rep = DefeatReport(i, k, alpha, n, mode, z, fr, fr > Fraction(4, 5),
                       eps=mixture_threshold(i), m_candidate=m_candidate)
    q = ExceedanceQuery(Markov(MarkovSpec(alpha)), first_bit(), DELTA, n, n, form="pair", base=k)
    weight = Fraction(1, 2**i)
    if mode == "exact":
        prob = exceedance_probability(q, engine="lumped")
        rep.deviation = prob
        rep.mixture_lower = weight * prob
        supported = prob > Fraction(1, 2)
        undecided = False
    elif mode == "mc":
        hits = monte_carlo_exceedance(q, trials, seed, chunk=chunk)
        lo, hi = wilson_interval(hits, trials, confidence)
        rep.estimate, rep.interval, rep.trials, rep.hits = hits / trials, (lo, hi), trials, hits
        rep.mixture_lower = float(weight) * lo
        supported = lo > 0.5
        undecided = not supported and hi > 0.5
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if m_candidate is not None and m_candidate > k:
        rep.verdict = "not-applicable"
    elif supported:
        rep.verdict = "defeated"
    elif undecided:
        rep.verdict = "inconclusive"
    else:
        rep.verdict = "not-defeated"
    return rep
