"""Binomial confidence intervals for Monte Carlo summaries."""

from __future__ import annotations

import math
from statistics import NormalDist


def z_value(confidence: float) -> float:
    return NormalDist().inv_cdf(0.5 + confidence / 2)


def wilson_interval(successes: int, trials: int, confidence: float = 0.99) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("need at least one trial")
    z = z_value(confidence)
    phat = successes / trials
    denom = 1 + z * z / trials
    centre = phat + z * z / (2 * trials)
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials))
    return max(0.0, (centre - half) / denom), min(1.0, (centre + half) / denom)


def within_sigmas(count: int, trials: int, p: float, k: float = 3.0) -> bool:
    """Is ``count`` within ``k`` binomial standard deviations of ``trials * p``?"""
    sd = math.sqrt(trials * p * (1 - p))
    return abs(count - trials * p) <= k * sd
