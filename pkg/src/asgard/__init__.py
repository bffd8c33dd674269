"""Unified accelerated primal-dual method for ``min_x f(x) + g(Kx)``."""

from .errors import CapabilityError, NumericalError, UsageError
from .linops import LinearMap, estimate_opnorm
from .problem import SaddleProblem
from .proxlib import ProxFriendlyFn
from .schedule import Regime, RegimeTag, Schedule
from .solver import RunRecord, SolverState, TraceRow, init, run, step

__version__ = "0.1.0"
