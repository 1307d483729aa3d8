"""Computable probability measures on the Cantor space.

A measure is given by its values on cylinders.  Uniform and two-state Markov
measures evaluate exactly; countable mixtures evaluate to rational bounds of
any requested width, and exactly when all but finitely many components share
one specification (which is the case for every finite halting-oracle table).
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from .core import EMPTY, check_word, format_rational, parse_rational, words_of_length

HALF = Fraction(1, 2)


class NotExact(Exception):
    """The measure only supports interval evaluation."""


class ZeroProbability(Exception):
    """Sampling reached a cylinder of measure zero."""


def truncation_index(eps: Fraction) -> int:
    """Smallest K with ``2**-K <= eps``, i.e. ``ceil(log2(1/eps))``."""
    eps = Fraction(eps)
    if eps <= 0:
        raise ValueError("precision must be positive")
    K = 0
    while Fraction(1, 2**K) > eps:
        K += 1
    return K


def _draw(rng: random.Random, p: Fraction) -> str:
    # exact Bernoulli(p) for rational p
    if p <= 0:
        return "0"
    if p >= 1:
        return "1"
    return "1" if rng.randrange(p.denominator) < p.numerator else "0"


class CylinderMeasure:
    """Base class.  Subclasses provide ``prob`` or ``bounds`` (or both)."""

    exact = True

    def prob(self, x: str) -> Fraction:
        raise NotExact(f"{self!r} has no exact evaluator")

    def __call__(self, x: str) -> Fraction:
        return self.prob(x)

    def bounds(self, x: str, eps: Fraction) -> tuple[Fraction, Fraction]:
        v = self.prob(x)
        return v, v

    def markov_kernel(self):
        """``(initial, flip)`` when the measure is a two-state Markov chain."""
        return None

    def describe(self) -> dict:
        raise NotImplementedError

    # sampling -------------------------------------------------------------

    def sampler_state(self, rng: random.Random):
        return None

    def draw_bit(self, x: str, state, rng: random.Random) -> str:
        px = self.prob(x)
        if px == 0:
            raise ZeroProbability(f"P({x or 'λ'}) = 0")
        return _draw(rng, self.prob(x + "1") / px)

    def sample(self, n: int, seed: int) -> str:
        rng = random.Random(seed)
        state = self.sampler_state(rng)
        x = ""
        for _ in range(n):
            x += self.draw_bit(x, state, rng)
        return x

    def sample_batch(self, n: int, size: int, rng: np.random.Generator) -> np.ndarray:
        """``size`` independent length-``n`` samples as a uint8 array."""
        seeds = rng.integers(0, 2**63 - 1, size=size)
        return np.array(
            [[int(b) for b in self.sample(n, int(s))] for s in seeds], dtype=np.uint8
        ).reshape(size, n)


class Uniform(CylinderMeasure):
    """The uniform Bernoulli measure, ``L(x) = 2**-len(x)``."""

    def prob(self, x: str) -> Fraction:
        return Fraction(1, 2 ** len(x))

    def markov_kernel(self):
        return (HALF, HALF), HALF

    def draw_bit(self, x, state, rng):
        return "1" if rng.getrandbits(1) else "0"

    def sample_batch(self, n, size, rng):
        return rng.integers(0, 2, size=(size, n), dtype=np.uint8)

    def describe(self):
        return {"kind": "uniform"}

    def __repr__(self):
        return "Uniform()"


@dataclass(frozen=True)
class MarkovSpec:
    """Stationary-candidate two-state chain with symmetric flip probability.

    ``flip`` is the probability of changing value between consecutive bits.
    Values in ``[0, 1/2]`` are the tested range; up to 1 is accepted.
    """

    flip: Fraction
    initial0: Fraction = HALF
    initial1: Fraction = HALF

    def __post_init__(self):
        for name in ("flip", "initial0", "initial1"):
            object.__setattr__(self, name, Fraction(getattr(self, name)))
        if not 0 <= self.flip <= 1:
            raise ValueError("flip probability must lie in [0, 1]")
        if self.initial0 < 0 or self.initial1 < 0 or self.initial0 + self.initial1 != 1:
            raise ValueError("initial probabilities must be non-negative and sum to 1")


def eval_uniform(x: str) -> Fraction:
    return Fraction(1, 2 ** len(check_word(x)))


def eval_markov(spec: MarkovSpec, x: str) -> Fraction:
    """Chain-rule evaluation of a Markov cylinder probability."""
    if not x:
        return Fraction(1)
    p = spec.initial0 if x[0] == "0" else spec.initial1
    stay = 1 - spec.flip
    for a, b in zip(x, x[1:]):
        p *= spec.flip if a != b else stay
        if p == 0:
            break
    return p


class Markov(CylinderMeasure):
    def __init__(self, spec: MarkovSpec | Fraction | str):
        if not isinstance(spec, MarkovSpec):
            spec = MarkovSpec(parse_rational(spec))
        self.spec = spec

    def prob(self, x: str) -> Fraction:
        return eval_markov(self.spec, x)

    def markov_kernel(self):
        return (self.spec.initial0, self.spec.initial1), self.spec.flip

    def draw_bit(self, x, state, rng):
        if not x:
            return _draw(rng, self.spec.initial1)
        flip = _draw(rng, self.spec.flip) == "1"
        return ("1" if x[-1] == "0" else "0") if flip else x[-1]

    def sample_batch(self, n, size, rng):
        return _markov_batch(self.spec, n, size, rng)

    def describe(self):
        return {
            "kind": "markov",
            "flip": format_rational(self.spec.flip),
            "initial0": format_rational(self.spec.initial0),
        }

    def __repr__(self):
        return f"Markov(flip={self.spec.flip})"


def _markov_batch(spec: MarkovSpec, n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    if n == 0:
        return np.zeros((size, 0), dtype=np.uint8)
    first = (rng.random(size) < float(spec.initial1)).astype(np.int64)
    out = np.empty((size, n), dtype=np.uint8)
    out[:, 0] = first
    if n > 1:
        flips = rng.random((size, n - 1)) < float(spec.flip)
        csum = np.cumsum(flips, axis=1, dtype=np.int64)
        out[:, 1:] = (first[:, None] + csum) & 1
    return out


class Mixture(CylinderMeasure):
    """``P(x) = sum_i 2**-i P_i(x)`` over Markov components ``i = 1, 2, ...``.

    ``components`` is either a finite list (components ``1..K``) together
    with a ``tail`` spec shared by every index above ``K``, or a callable
    ``i -> MarkovSpec`` describing an arbitrary computable family.  Only the
    first form evaluates exactly.
    """

    def __init__(
        self,
        components: Sequence[MarkovSpec] | Callable[[int], MarkovSpec],
        tail: MarkovSpec | None = None,
        label: str | None = None,
    ):
        if callable(components):
            if tail is not None:
                raise ValueError("a tail only makes sense with a finite component list")
            self._gen = components
            self._head: tuple[MarkovSpec, ...] = ()
        else:
            self._head = tuple(components)
            self._gen = None
            if tail is None:
                raise ValueError("a finite component list needs a tail spec")
        self.tail = tail
        self.label = label

    @property
    def exact(self) -> bool:
        return self._gen is None

    def component(self, i: int) -> MarkovSpec:
        if i < 1:
            raise ValueError("components are indexed from 1")
        if self._gen is not None:
            return self._gen(i)
        return self._head[i - 1] if i <= len(self._head) else self.tail

    def exact_decomposition(self) -> list[tuple[Fraction, MarkovSpec]]:
        """Finite list of (weight, spec) summing to the mixture exactly."""
        if not self.exact:
            raise NotExact("generator mixtures have no finite decomposition")
        K = len(self._head)
        parts = [(Fraction(1, 2**i), s) for i, s in enumerate(self._head, start=1)]
        parts.append((Fraction(1, 2**K), self.tail))
        return parts

    def prob(self, x: str) -> Fraction:
        return sum((w * eval_markov(s, x) for w, s in self.exact_decomposition()), Fraction(0))

    def bounds(self, x: str, eps: Fraction) -> tuple[Fraction, Fraction]:
        K = truncation_index(eps)
        lower = sum(
            (Fraction(1, 2**i) * eval_markov(self.component(i), x) for i in range(1, K + 1)),
            Fraction(0),
        )
        return lower, lower + Fraction(1, 2**K)

    def sampler_state(self, rng):
        i = 1
        while not rng.getrandbits(1):
            i += 1
        return Markov(self.component(i))

    def draw_bit(self, x, state, rng):
        return state.draw_bit(x, None, rng)

    def sample_batch(self, n, size, rng):
        idx = rng.geometric(0.5, size=size)
        out = np.empty((size, n), dtype=np.uint8)
        for i in np.unique(idx):
            rows = np.nonzero(idx == i)[0]
            out[rows] = _markov_batch(self.component(int(i)), n, len(rows), rng)
        return out

    def describe(self):
        if self.exact:
            return {
                "kind": "mixture",
                "components": [{"flip": format_rational(s.flip)} for s in self._head],
                "tail": {"flip": format_rational(self.tail.flip)},
            }
        return {"kind": "mixture", "rule": self.label or "generator"}

    def __repr__(self):
        if self.exact:
            return f"Mixture({len(self._head)} components, tail flip={self.tail.flip})"
        return f"Mixture({self.label or 'generator'})"


class FunctionMeasure(CylinderMeasure):
    """Wrap an arbitrary exact evaluator ``word -> Fraction``."""

    def __init__(self, evaluator: Callable[[str], Fraction], name: str = "function"):
        self.evaluator = evaluator
        self.name = name

    def prob(self, x):
        return Fraction(self.evaluator(x))

    def describe(self):
        return {"kind": self.name}

    def __repr__(self):
        return f"FunctionMeasure({self.name})"


def eval_mixture(components, x: str, eps: Fraction) -> tuple[Fraction, Fraction]:
    """Lower/upper bounds on a mixture cylinder value of width ``<= eps``."""
    m = components if isinstance(components, Mixture) else Mixture(components)
    return m.bounds(x, Fraction(eps))


# ---------------------------------------------------------------------------
# checks


@dataclass
class CheckReport:
    ok: bool
    checked: int
    witness: str | None = None
    detail: str = ""

    def __bool__(self):
        return self.ok


def _words_upto(d: int) -> Iterator[str]:
    for n in range(d + 1):
        yield from words_of_length(n)


def _overlap(a: tuple[Fraction, Fraction], b: tuple[Fraction, Fraction]) -> bool:
    return a[0] <= b[1] and b[0] <= a[1]


def check_additivity(P: CylinderMeasure, depth: int, eps: Fraction | None = None) -> CheckReport:
    """``P(x) = P(x0) + P(x1)`` on every word of length ``<= depth``.

    Bounds-only measures need ``eps``; they pass when the interval for
    ``P(x)`` meets the summed intervals of the children.
    """
    exact = P.exact and eps is None
    if not exact and eps is None:
        raise ValueError("interval measures need a precision")
    checked = 0
    root = P.prob(EMPTY) if exact else P.bounds(EMPTY, eps)
    if (exact and root != 1) or (not exact and not root[0] <= 1 <= root[1]):
        return CheckReport(False, 0, EMPTY, f"P(λ) = {root}")
    for x in _words_upto(depth):
        checked += 1
        if exact:
            px, p0, p1 = P.prob(x), P.prob(x + "0"), P.prob(x + "1")
            if not 0 <= px <= 1:
                return CheckReport(False, checked, x, f"P(x) = {px} outside [0, 1]")
            if px != p0 + p1:
                return CheckReport(False, checked, x, f"P(x) = {px} != {p0 + p1}")
        else:
            bx, b0, b1 = P.bounds(x, eps), P.bounds(x + "0", eps), P.bounds(x + "1", eps)
            if not _overlap(bx, (b0[0] + b1[0], b0[1] + b1[1])):
                return CheckReport(False, checked, x, f"{bx} vs children {b0}, {b1}")
    return CheckReport(True, checked)


def check_stationarity(P: CylinderMeasure, depth: int, eps: Fraction | None = None) -> CheckReport:
    """Shift-preimage identity ``P(x) = P(0x) + P(1x)`` up to ``depth``."""
    exact = P.exact and eps is None
    if not exact and eps is None:
        raise ValueError("interval measures need a precision")
    checked = 0
    for x in _words_upto(depth):
        checked += 1
        if exact:
            px, a, b = P.prob(x), P.prob("0" + x), P.prob("1" + x)
            if px != a + b:
                return CheckReport(False, checked, x, f"P(x) = {px} != P(0x) + P(1x) = {a + b}")
        else:
            bx, ba, bb = P.bounds(x, eps), P.bounds("0" + x, eps), P.bounds("1" + x, eps)
            if not _overlap(bx, (ba[0] + bb[0], ba[1] + bb[1])):
                return CheckReport(False, checked, x, f"{bx} vs preimage {ba}, {bb}")
    return CheckReport(True, checked)


def sample(P: CylinderMeasure, n: int, seed: int) -> str:
    return P.sample(n, seed)


# ---------------------------------------------------------------------------
# config loading

_MEASURE_KEYS = {
    "uniform": {"kind"},
    "markov": {"kind", "flip", "initial0"},
    "mixture": {"kind", "components", "tail", "rule", "k_table"},
}


def _markov_from(d: dict) -> MarkovSpec:
    extra = set(d) - {"flip", "initial0"}
    if extra:
        raise ValueError(f"unknown Markov fields {sorted(extra)}")
    init0 = parse_rational(d.get("initial0", "1/2"))
    return MarkovSpec(parse_rational(d["flip"]), init0, 1 - init0)


def measure_from_config(cfg: dict) -> CylinderMeasure:
    """Build a measure from a JSON-style descriptor.

    Accepted forms::

        {"kind": "uniform"}
        {"kind": "markov", "flip": "1/4", "initial0": "1/2"}
        {"kind": "mixture", "components": [{"flip": "1/4"}], "tail": {"flip": "0"}}
        {"kind": "mixture", "rule": "alpha_i = 2^-k(i)", "k_table": {"1": 10}}
        {"kind": "mixture", "rule": "alpha_i = 2^-i"}
    """
    kind = cfg.get("kind")
    if kind not in _MEASURE_KEYS:
        raise ValueError(f"unknown measure kind {kind!r}")
    extra = set(cfg) - _MEASURE_KEYS[kind]
    if extra:
        raise ValueError(f"unknown measure fields {sorted(extra)}")
    if kind == "uniform":
        return Uniform()
    if kind == "markov":
        return Markov(_markov_from({k: v for k, v in cfg.items() if k != "kind"}))
    rule = cfg.get("rule")
    if rule is None:
        comps = [_markov_from(c) for c in cfg.get("components", [])]
        return Mixture(comps, tail=_markov_from(cfg.get("tail", {"flip": "0"})))
    rule = rule.replace(" ", "")
    if rule == "alpha_i=2^-k(i)":
        table = {int(i): int(k) for i, k in cfg.get("k_table", {}).items()}
        K = max(table, default=0)
        comps = [
            MarkovSpec(Fraction(1, 2 ** table[i]) if i in table else Fraction(0))
            for i in range(1, K + 1)
        ]
        return Mixture(comps, tail=MarkovSpec(0))
    if rule == "alpha_i=2^-i":
        return Mixture(lambda i: MarkovSpec(Fraction(1, 2**i)), label="alpha_i = 2^-i")
    raise ValueError(f"unknown mixture rule {cfg['rule']!r}")


def load_measure(path: str | Path) -> CylinderMeasure:
    return measure_from_config(json.loads(Path(path).read_text()))


def cylinders(P: CylinderMeasure, depth: int) -> Iterator[tuple[str, Fraction]]:
    """``(x, P(x))`` for every word of length ``depth`` with ``P(x) > 0``.

    Zero-probability subtrees are pruned, so degenerate measures (flip 0)
    enumerate only their support.
    """
    stack = [(EMPTY, P.prob(EMPTY))]
    while stack:
        x, px = stack.pop()
        if px == 0:
            continue
        if len(x) == depth:
            yield x, px
            continue
        for b in "10":
            y = x + b
            stack.append((y, P.prob(y)))
