"""Exact, stage-bounded experiments on ergodic averages over binary sequences."""

__version__ = "0.1.0"

from .core import IntervalSet, Periodic, ExplicitPrefix, Sampled, Stream, format_rational, parse_rational
from .measures import Uniform, Markov, MarkovSpec, Mixture, FunctionMeasure, measure_from_config
from .observables import SimpleFunction, first_bit, constant, indicator, AverageSeries
from .transforms import Trajectory, shift_machine

__all__ = [
    "IntervalSet", "Periodic", "ExplicitPrefix", "Sampled", "Stream", "format_rational", "parse_rational",
    "Uniform", "Markov", "MarkovSpec", "Mixture", "FunctionMeasure", "measure_from_config",
    "SimpleFunction", "first_bit", "constant", "indicator", "AverageSeries",
    "Trajectory", "shift_machine",
]
