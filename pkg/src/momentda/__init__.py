"""Moment-based distances and domain adaptation methods.

Modules:

* :mod:`momentda.metrics` - central moment discrepancy (CMD), MMD, CORAL
* :mod:`momentda.maxent` - maximum-entropy densities on [0, 1]
* :mod:`momentda.mann` - one-hidden-layer network with a CMD penalty
* :mod:`momentda.dipals` - domain-invariant partial least squares
* :mod:`momentda.scitsm` - parameter-dependent corrections of time series
* :mod:`momentda.experiments` - reproducible experiments and reports
"""

from .errors import (ConvergenceFailure, DegenerateComponentError, DivergenceError,
                     IllConditionedError, InvalidArgument, RankError)
from .metrics import (KernelSpec, central_moments, cmd, cmd_term_bound, cmd_terms, coral,
                      default_weights, l1_moment_distance, mmd_squared)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceFailure", "DegenerateComponentError", "DivergenceError",
    "IllConditionedError", "InvalidArgument", "RankError", "KernelSpec",
    "central_moments", "cmd", "cmd_term_bound", "cmd_terms", "coral",
    "default_weights", "l1_moment_distance", "mmd_squared",
]
