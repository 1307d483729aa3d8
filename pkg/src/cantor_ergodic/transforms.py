"""Computable transformations as monotone word machines.

A machine maps an input prefix to the longest output prefix it determines.
This is the functional reading of an enumerable relation of word pairs
``(x, y)``: ``T(omega)`` is the supremum of the outputs over the prefixes of
``omega``.  Only deterministic machines (one canonical output per input) are
supported.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .core import InfiniteSource, is_prefix


class FuelExhausted(Exception):
    """The machine did not emit enough output within its input budget."""


@dataclass(frozen=True)
class MonotoneMachine:
    step: Callable[[str], str]
    name: str = "machine"
    fuel: int | None = None  # max input bits per query; None = default rule

    def __call__(self, x: str) -> str:
        return self.step(x)

    def budget(self, k: int, n: int) -> int:
        return self.fuel if self.fuel is not None else 2 * (k + n) + 64


def _shift_step(x: str) -> str:
    return x[1:]


def shift_machine(fuel: int | None = None) -> MonotoneMachine:
    """The left shift ``omega_1 omega_2 ... -> omega_2 omega_3 ...``."""
    return MonotoneMachine(_shift_step, "shift", fuel)


MACHINES = {"shift": shift_machine}


def machine_by_name(name: str) -> MonotoneMachine:
    try:
        return MACHINES[name]()
    except KeyError:
        raise ValueError(f"unknown transformation {name!r}") from None


def check_monotone(machine: MonotoneMachine, max_len: int) -> tuple[str, str] | None:
    """Exhaustive monotonicity check on one-bit extensions up to ``max_len``.

    One-bit extensions suffice because the prefix order is the transitive
    closure of them.  Returns a violating pair or None.
    """
    frontier = [""]
    for _ in range(max_len):
        nxt = []
        for x in frontier:
            y = machine(x)
            for b in "01":
                if not is_prefix(y, machine(x + b)):
                    return x, x + b
                nxt.append(x + b)
        frontier = nxt
    return None


class Trajectory:
    """The orbit ``omega, T omega, T^2 omega, ...`` of a source.

    Prefixes of each iterate are cached; one instance per thread.
    """

    def __init__(self, source: InfiniteSource, machine: MonotoneMachine | None = None):
        self.source = source
        self.machine = machine or shift_machine()
        self._cache: dict[int, str] = {}

    def _level(self, k: int, n: int) -> str:
        cached = self._cache.get(k, "")
        if len(cached) >= n:
            return cached[:n]
        if k == 0:
            out = self.source.prefix(n)
        else:
            cap = self.machine.budget(k, n)
            L, extra = n, 0
            while True:
                if L > cap:
                    raise FuelExhausted(
                        f"{self.machine.name}: no {n} output bits of T^{k} within {cap} input bits"
                    )
                out = self.machine(self._level(k - 1, L))
                if len(out) >= n:
                    out = out[:n]
                    break
                extra = 1 if extra == 0 else 2 * extra
                L = n + extra
        if len(out) > len(cached):
            self._cache[k] = out
        return out[:n]

    def iterate_prefix(self, k: int, n: int) -> str:
        """Length-``n`` prefix of ``T^k omega``."""
        if k < 0 or n < 0:
            raise ValueError("k and n must be non-negative")
        if self.machine.step is _shift_step:
            if k + n > self.machine.budget(k, n):
                raise FuelExhausted(f"shift: T^{k} needs {k + n} input bits")
            return self.source.prefix(k + n)[k:]
        return self._level(k, n)


def iterate_prefix(tr: Trajectory, k: int, n: int) -> str:
    return tr.iterate_prefix(k, n)
