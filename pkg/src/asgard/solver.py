"""Unified accelerated smoothed gap reduction (ASGARD+) iteration.

Each step does one prox of ``g*``, one prox of ``f``, one application of
``K`` and one of ``K^T``. The products ``K x^k``, ``K xhat^k`` and
``K^T ytilde^k`` are carried in the state and updated by linearity, which
makes the primal and dual objective values free to record.
"""

import csv
import math
import time
from dataclasses import dataclass, field, fields
from typing import Callable, List, Optional

import numpy as np

from . import diagnostics as diag
from .errors import NumericalError, UsageError
from .schedule import ScheduleState, advance, check_param_cond, initial_state

__all__ = ["SolverState", "TraceRow", "RunRecord", "init", "step", "run", "write_trace_csv",
           "TRACE_COLUMNS"]

#: prox step standing in for prox_{f/L} when L = 0 (zero operator)
LARGE_GAMMA = 1e12


@dataclass(frozen=True)
class SolverState:
    """Iterates at step ``k`` plus cached operator products.

    ``y`` is the most recent ``y^k`` (``ytilde^0`` before the first step).
    """

    k: int
    x: np.ndarray
    x_prev: np.ndarray
    xhat: np.ndarray
    ytilde: np.ndarray
    y: np.ndarray
    schedule: ScheduleState
    Kx: np.ndarray = field(repr=False)
    Kxhat: np.ndarray = field(repr=False)
    KTytilde: np.ndarray = field(repr=False)

    @property
    def x_k(self):
        return self.x

    @property
    def xhat_k(self):
        return self.xhat

    @property
    def ytilde_k(self):
        return self.ytilde

    @property
    def y_k1(self):
        return self.y


@dataclass(frozen=True)
class TraceRow:
    k: int
    tau_k: float
    beta_k: float
    L_k: float
    eta_k: float
    F_primal: float
    F_smoothed: float
    D_dual: float
    gap_cert: float
    lyapunov: float
    bound_theorem: float
    wallclock_s: float
    algorithm: str = "asgard+"


TRACE_COLUMNS = tuple(f.name for f in fields(TraceRow))


@dataclass
class RunRecord:
    problem: object
    trace: List[TraceRow]
    final: object
    states: Optional[list] = None
    stopped_early: bool = False
    algorithm: str = "asgard+"
    anchor: Optional[np.ndarray] = None

    @property
    def primal_values(self):
        return np.array([r.F_primal for r in self.trace])

    @property
    def dual_values(self):
        return np.array([r.D_dual for r in self.trace])

    def column(self, name):
        return np.array([getattr(r, name) for r in self.trace])


def init(problem, x0, ytilde0=None, beta0=1.0, tau0=None, validate=True, tau_rule=None):
    """Initial state: ``xhat^0 = x^0`` and ``L_0 = ||K||^2 / (mu_g* + beta_0)``.

    With ``validate`` (the default) the step-size conditions are checked at
    ``k = 1`` and a ``beta0`` that violates them is rejected; this is what
    catches a too-small ``beta0`` in the strongly convex primal regime.
    """
    x0 = np.array(x0, dtype=float)
    if x0.shape != (problem.p,):
        raise UsageError("x0 must have length %d" % problem.p)
    if ytilde0 is None:
        ytilde0 = np.zeros(problem.n)
    ytilde0 = np.array(ytilde0, dtype=float)
    if ytilde0.shape != (problem.n,):
        raise UsageError("ytilde0 must have length %d" % problem.n)
    if not np.isfinite(problem.f.value(x0)):
        raise UsageError("x0 is outside dom f")
    if not np.isfinite(problem.gstar.value(ytilde0)):
        raise UsageError("ytilde0 is outside dom g*")
    if not beta0 > 0:
        raise UsageError("beta0 must be positive")
    sched = initial_state(problem.regime, float(beta0), problem.opnorm, tau0, tau_rule)
    if validate:
        cond = check_param_cond(sched, problem.regime)
        if not cond.passed:
            msg = "beta0=%g violates the step-size conditions at k=1 for %s (slacks %.3e, %.3e)" % (
                beta0, problem.regime.tag.value, cond.slack1, cond.slack2)
            if problem.regime.case == 2:
                msg += "; this regime needs beta0 >= 0.382 ||K||^2 / mu_f = %g" % (
                    0.382 * problem.opnorm ** 2 / problem.regime.mu_f)
            raise UsageError(msg)
    Kx = problem.K.apply(x0)
    return SolverState(0, x0, x0.copy(), x0.copy(), ytilde0, ytilde0.copy(), sched,
                       Kx, Kx.copy(), problem.K.adjoint(ytilde0))


def step(state, problem, tau_rule=None):
    """One pass of the primal-dual step, extrapolation and dual averaging."""
    sch = state.schedule
    K = problem.K
    beta, L, tau = sch.beta_k, sch.L_k, sch.tau_k
    y = problem.gstar.prox(problem.ycenter + state.Kxhat / beta, 1.0 / beta)
    KTy = K._adj(y)
    gamma = 1.0 / L if L > 0 else LARGE_GAMMA
    x = problem.f.prox(state.xhat - gamma * KTy, gamma)
    Kx = K._fwd(x)
    eta = sch.eta_next
    xhat = x + eta * (x - state.x)
    Kxhat = Kx + eta * (Kx - state.Kx)
    ytilde = (1.0 - tau) * state.ytilde + tau * y
    KTyt = (1.0 - tau) * state.KTytilde + tau * KTy
    nxt = advance(sch, problem.regime, problem.opnorm, tau_rule)
    return SolverState(state.k + 1, x, state.x, xhat, ytilde, y, nxt, Kx, Kxhat, KTyt)


def _eta_k(state, prev_sched):
    return prev_sched.eta_next if prev_sched is not None else math.nan


def _row(problem, state, prev_sched, t0, anchor, K_anchor, f_anchor, bound_spec, bound_which,
         full=True, dual=True):
    sch = state.schedule
    F = diag.primal_value(problem, state.x, Kx=state.Kx)
    Fs = math.nan
    if full or anchor is not None:
        beta = sch.beta_k if state.k == 0 else sch.beta_prev
        Fs = diag.smoothed_objective(problem, beta, state.x, state.Kx)
    D = math.nan
    if dual:
        D = diag.dual_value(problem, state.ytilde, KTy=state.KTytilde) \
            if problem.f.conj_value is not None else math.inf
    gap = F + D
    V = math.nan
    if anchor is not None and state.k >= 1:
        V = diag.lyapunov(problem, sch, state.x, state.x_prev, state.ytilde, anchor,
                          Kx=state.Kx, K_anchor=K_anchor, f_anchor=f_anchor, F_smoothed=Fs)
    bound = math.nan
    if bound_spec is not None and state.k >= 1:
        bound = diag.theorem_bound(bound_spec, state.k, bound_which)
    return TraceRow(state.k, sch.tau_k, sch.beta_k, sch.L_k, _eta_k(state, prev_sched), F, Fs, D,
                    gap, V, bound, time.perf_counter() - t0)


def _check_finite(state):
    if not (math.isfinite(float(state.x @ state.x)) and math.isfinite(float(state.y @ state.y))):
        raise NumericalError("non-finite iterate at iteration %d" % state.k, iteration=state.k)


def run(problem, x0, ytilde0=None, beta0=1.0, k_max=1000, stop_tol=None, observer=None, *,
        anchor=None, bound_spec=None, bound_which="primal", keep_iterates=False, tau0=None,
        validate=True, tau_rule=None, trace_level="full"):
    """Run ``k_max`` iterations and return the trace.

    Parameters
    ----------
    stop_tol : float, optional
        Stop once ``F(x^k) + D(ytilde^k) <= stop_tol`` (both finite).
    observer : callable, optional
        Called as ``observer(row, state)`` after every iteration, including
        ``k = 0``. Must not mutate the state. A true return value ends the
        run after the current iteration.
    anchor : array, optional
        Point at which the Lyapunov function is recorded in the trace.
    bound_spec : BoundSpec, optional
        If given, the theorem bound of kind `bound_which` is recorded.
    keep_iterates : bool
        Keep every `SolverState`; required by the contraction and
        one-iteration checks.
    trace_level : {"full", "primal"}
        ``"primal"`` records only ``F(x^k)`` (plus the dual value when
        `stop_tol` needs it), which is what long reference runs use.
    """
    if k_max < 1:
        raise UsageError("k_max must be >= 1")
    if trace_level not in ("full", "primal"):
        raise UsageError("trace_level must be 'full' or 'primal'")
    full = trace_level == "full"
    t0 = time.perf_counter()
    state = init(problem, x0, ytilde0, beta0, tau0=tau0, validate=validate, tau_rule=tau_rule)
    K_anchor = f_anchor = None
    if anchor is not None:
        anchor = np.asarray(anchor, dtype=float)
        K_anchor = problem.K.apply(anchor)
        f_anchor = problem.f.value(anchor)
    args = (t0, anchor, K_anchor, f_anchor, bound_spec, bound_which, full, full or stop_tol is not None)
    row = _row(problem, state, None, *args)
    trace = [row]
    states = [state] if keep_iterates else None
    if observer is not None:
        observer(row, state)
    stopped = False
    for _ in range(k_max):
        prev = state.schedule
        state = step(state, problem, tau_rule)
        _check_finite(state)
        row = _row(problem, state, prev, *args)
        trace.append(row)
        if keep_iterates:
            states.append(state)
        if observer is not None and observer(row, state):
            stopped = True
            break
        if stop_tol is not None and math.isfinite(row.gap_cert) and row.gap_cert <= stop_tol:
            stopped = True
            break
    return RunRecord(problem, trace, state, states, stopped, "asgard+", anchor)


def _fmt(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def write_trace_csv(path, records, include_wallclock=True):
    """Write one or more run records as a single CSV with the trace columns."""
    if isinstance(records, RunRecord):
        records = [records]
    cols = TRACE_COLUMNS if include_wallclock else tuple(c for c in TRACE_COLUMNS if c != "wallclock_s")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for rec in records:
            for r in rec.trace:
                w.writerow([_fmt(getattr(r, c)) for c in cols])
