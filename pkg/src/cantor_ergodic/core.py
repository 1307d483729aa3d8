"""Binary words, exact rationals, infinite-sequence sources and interval sets.

Words are plain ``str`` objects over the alphabet ``"01"``; the empty word
is ``""``.  A word ``x`` stands for the cylinder of all infinite sequences
extending it.  Every probability, average and threshold in the package is a
:class:`fractions.Fraction`.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Callable, Iterable, Iterator

Rational = Fraction
EMPTY = ""


class SourceExhausted(Exception):
    """A stream source could not supply the requested bit."""


class PrefixTooShort(Exception):
    """A finite prefix does not determine the requested value."""


def check_word(x: str) -> str:
    if not isinstance(x, str) or x.strip("01"):
        raise ValueError(f"not a binary word: {x!r}")
    return x


def is_prefix(x: str, y: str) -> bool:
    """True when ``x`` is a (not necessarily proper) prefix of ``y``."""
    return y.startswith(x)


def comparable(x: str, y: str) -> bool:
    return x.startswith(y) or y.startswith(x)


def words_of_length(n: int) -> Iterator[str]:
    """All 2**n words of length n in lexicographic order."""
    if n == 0:
        yield EMPTY
        return
    for bits in product("01", repeat=n):
        yield "".join(bits)


def parse_rational(text: str | int | Fraction) -> Fraction:
    """Parse ``"p/q"`` (or a bare integer) into an exact rational.

    Decimal strings such as ``"0.25"`` are rejected on purpose: every
    configured constant must be stated exactly.
    """
    if isinstance(text, Fraction):
        return text
    if isinstance(text, int) and not isinstance(text, bool):
        return Fraction(text)
    if not isinstance(text, str):
        raise ValueError(f"expected a 'p/q' string, got {text!r}")
    s = text.strip()
    num, sep, den = s.partition("/")
    try:
        if sep:
            return Fraction(int(num), int(den))
        return Fraction(int(num))
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"bad rational {text!r}") from exc


def format_rational(q: Fraction | int) -> str:
    q = Fraction(q)
    return f"{q.numerator}/{q.denominator}"


# ---------------------------------------------------------------------------
# infinite sources


class InfiniteSource:
    """An infinite binary sequence given by a finite description.

    Bits are indexed from 1 as in ``omega = omega_1 omega_2 ...``.
    """

    def bit(self, i: int) -> str:
        raise NotImplementedError

    def prefix(self, n: int) -> str:
        if n < 0:
            raise ValueError("prefix length must be >= 0")
        return "".join(self.bit(i) for i in range(1, n + 1))


@dataclass(frozen=True)
class Periodic(InfiniteSource):
    period: str

    def __post_init__(self):
        check_word(self.period)
        if not self.period:
            raise ValueError("period must be non-empty")

    def bit(self, i: int) -> str:
        return self.period[(i - 1) % len(self.period)]

    def prefix(self, n: int) -> str:
        if n < 0:
            raise ValueError("prefix length must be >= 0")
        reps = n // len(self.period) + 1
        return (self.period * reps)[:n]


@dataclass(frozen=True)
class ExplicitPrefix(InfiniteSource):
    """A fixed finite word followed by a constant padding bit."""

    word: str
    pad: str = "0"

    def __post_init__(self):
        check_word(self.word)
        if self.pad not in ("0", "1"):
            raise ValueError("pad must be '0' or '1'")

    def bit(self, i: int) -> str:
        return self.word[i - 1] if i <= len(self.word) else self.pad

    def prefix(self, n: int) -> str:
        if n < 0:
            raise ValueError("prefix length must be >= 0")
        if n <= len(self.word):
            return self.word[:n]
        return self.word + self.pad * (n - len(self.word))


class Sampled(InfiniteSource):
    """A sequence drawn from a measure, extended lazily and reproducibly.

    Bit ``j`` is drawn with the exact conditional probability
    ``P(x1)/P(x)`` given the prefix ``x`` already drawn.
    """

    def __init__(self, measure, seed: int):
        self.measure = measure
        self.seed = seed
        self._rng = random.Random(seed)
        self._bits = ""
        self._state = measure.sampler_state(self._rng)

    def _extend(self, n: int) -> None:
        while len(self._bits) < n:
            self._bits += self.measure.draw_bit(self._bits, self._state, self._rng)

    def bit(self, i: int) -> str:
        self._extend(i)
        return self._bits[i - 1]

    def prefix(self, n: int) -> str:
        if n < 0:
            raise ValueError("prefix length must be >= 0")
        self._extend(n)
        return self._bits[:n]

    def __repr__(self):
        return f"Sampled({self.measure!r}, seed={self.seed})"


class Stream(InfiniteSource):
    """Bits supplied by a callback ``i -> '0' | '1'``; may run dry.

    The callback signals exhaustion by returning ``None`` or raising
    :class:`SourceExhausted`.
    """

    def __init__(self, callback: Callable[[int], str | None]):
        self.callback = callback
        self._cache: list[str] = []

    def bit(self, i: int) -> str:
        while len(self._cache) < i:
            j = len(self._cache) + 1
            b = self.callback(j)
            if b is None:
                raise SourceExhausted(f"stream cannot supply bit {j}")
            b = str(b)
            if b not in ("0", "1"):
                raise ValueError(f"stream returned non-bit {b!r}")
            self._cache.append(b)
        return self._cache[i - 1]


def prefix(src: InfiniteSource, n: int) -> str:
    return src.prefix(n)


# ---------------------------------------------------------------------------
# interval sets


def _normalize(words: Iterable[str]) -> frozenset[str]:
    ws = sorted({check_word(w) for w in words}, key=lambda w: (len(w), w))
    kept: set[str] = set()
    for w in ws:
        # shorter words come first, so any absorbing prefix is already kept
        if any(w[:k] in kept for k in range(len(w) + 1)):
            continue
        kept.add(w)
    # merge complete sibling pairs, deepest first
    by_len: dict[int, set[str]] = {}
    for w in kept:
        by_len.setdefault(len(w), set()).add(w)
    for n in range(max(by_len, default=0), 0, -1):
        level = by_len.get(n, set())
        for w in sorted(level):
            if w not in level or w[-1] != "0":
                continue
            sib = w[:-1] + "1"
            if sib in level:
                level.discard(w)
                level.discard(sib)
                by_len.setdefault(n - 1, set()).add(w[:-1])
    return frozenset(w for level in by_len.values() for w in level)


@dataclass(frozen=True)
class IntervalSet:
    """A finite prefix-free union of cylinders in canonical form.

    Construction always normalizes: absorbed words are dropped and complete
    sibling pairs ``x0, x1`` are merged into ``x``.  Two interval sets denote
    the same subset of the Cantor space exactly when their word sets agree.
    """

    words: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "words", _normalize(self.words))

    @classmethod
    def of(cls, *words: str) -> "IntervalSet":
        return cls(frozenset(words))

    def __iter__(self):
        return iter(sorted(self.words, key=lambda w: (len(w), w)))

    def __len__(self):
        return len(self.words)

    def __bool__(self):
        return bool(self.words)

    def __repr__(self):
        inner = ", ".join(w or "λ" for w in self)
        return f"IntervalSet({{{inner}}})"

    @property
    def depth(self) -> int:
        return max((len(w) for w in self.words), default=0)

    def measure(self, P) -> Fraction:
        """Exact measure; ``P`` is any measure with an exact ``prob``."""
        return sum((P.prob(w) for w in self.words), Fraction(0))

    def uniform_measure(self) -> Fraction:
        return sum((Fraction(1, 2 ** len(w)) for w in self.words), Fraction(0))

    def measure_bounds(self, P, eps: Fraction) -> tuple[Fraction, Fraction]:
        lo = hi = Fraction(0)
        for w in self.words:
            a, b = P.bounds(w, eps)
            lo += a
            hi += b
        return lo, min(hi, Fraction(1))

    def contains(self, omega_prefix: str) -> bool | None:
        """Membership of any sequence extending ``omega_prefix``.

        Returns None when the prefix is too short to decide.
        """
        for k in range(len(omega_prefix) + 1):
            if omega_prefix[:k] in self.words:
                return True
        if any(w.startswith(omega_prefix) for w in self.words):
            return None
        return False

    def union(self, other: "IntervalSet") -> "IntervalSet":
        return IntervalSet(self.words | other.words)

    def __or__(self, other):
        return self.union(other)

    def includes(self, other: "IntervalSet") -> bool:
        """Set inclusion ``other ⊆ self``."""
        return all(self.contains(w) is True for w in other.words)

    def complement(self) -> "IntervalSet":
        """The complement, itself a finite union of cylinders."""
        if not self.words:
            return IntervalSet.of(EMPTY)
        out = []

        def rec(x: str):
            if x in self.words:
                return
            if not any(w.startswith(x) for w in self.words):
                out.append(x)
                return
            rec(x + "0")
            rec(x + "1")

        rec(EMPTY)
        return IntervalSet(frozenset(out))

    def to_text(self) -> str:
        """Newline-separated sorted words; the empty word is written ``-``."""
        return "\n".join(w if w else "-" for w in self)

    @classmethod
    def from_text(cls, text: str) -> "IntervalSet":
        words = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            words.append("" if line == "-" else line)
        return cls(frozenset(words))


def normalize(words: Iterable[str]) -> IntervalSet:
    return IntervalSet(frozenset(words))


def concat_sets(A: IntervalSet, B: IntervalSet) -> IntervalSet:
    """The set ``{ab : a in A, b in B}``; prefix-free when A and B are."""
    return IntervalSet(frozenset(a + b for a in A.words for b in B.words))
