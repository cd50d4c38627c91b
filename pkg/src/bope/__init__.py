"""Preference-guided multi-objective Bayesian optimization.

The optimizer alternates between evaluating an expensive multi-output
function and asking a decision maker to compare pairs of observed outputs.
A positive-weight (monotone) neural network ensemble learns the decision
maker's utility from those comparisons; independent Gaussian processes
model the outputs.
"""

from bope.errors import (
    BopeError,
    ConfigError,
    InputError,
    NumericalError,
    StateError,
    TrainingError,
)

__version__ = "0.1.0"

__all__ = [
    "BopeError",
    "ConfigError",
    "InputError",
    "NumericalError",
    "StateError",
    "TrainingError",
    "__version__",
]
