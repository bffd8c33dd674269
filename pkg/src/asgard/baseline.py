"""Nesterov's smoothing with a fixed parameter, minimized by FISTA.

The smoothed term ``g_gamma(u) = max_v <u, v> - g*(v) - (gamma / 2) ||v||^2``
is the ``ydot = 0`` smoothing of the same ``g*`` the primal-dual solver
uses, so ``g = ||. - b||`` gives the usual ball-constrained form.
"""

import math
import time
from dataclasses import dataclass

import numpy as np

from .diagnostics import primal_value
from .errors import NumericalError, UsageError
from .smoothing import SmoothedG, smoothed_grad, smoothed_value
from .solver import RunRecord, TraceRow

__all__ = ["BaselineConfig", "gamma_star", "run_baseline", "smoothed_objective", "descent_slack",
           "PROX_DIAMETER"]

#: prox-diameter of the unit Euclidean ball for ``||v||^2 / 2``
PROX_DIAMETER = 0.5


def gamma_star(opnorm, dist0, k_max, D_V=PROX_DIAMETER):
    """``sqrt(2) ||K|| dist0 / (k_max sqrt(D_V))``, the smoothing that balances the FISTA bound."""
    if opnorm <= 0 or dist0 <= 0 or k_max <= 0:
        raise UsageError("gamma_star needs positive inputs")
    return math.sqrt(2.0) * opnorm * dist0 / (k_max * math.sqrt(D_V))


@dataclass(frozen=True)
class BaselineConfig:
    gamma: float
    k_max: int
    x0: np.ndarray

    def __post_init__(self):
        if not self.gamma > 0:
            raise UsageError("gamma must be positive")
        if self.k_max < 1:
            raise UsageError("k_max must be >= 1")


def _smoother(problem, gamma):
    return SmoothedG(problem.gstar, gamma, np.zeros(problem.n))


def smoothed_objective(problem, gamma, x, Kx=None):
    """``f(x) + g_gamma(Kx)``."""
    if Kx is None:
        Kx = problem.K.apply(x)
    return problem.f.value(x) + smoothed_value(_smoother(problem, gamma), Kx)


def descent_slack(problem, gamma, z):
    """Model minus objective after one prox-gradient step from ``z``; nonnegative.

    The model is the quadratic upper approximation of the smooth part at
    ``z`` with curvature ``||K||^2 / gamma``.
    """
    s = _smoother(problem, gamma)
    K = problem.K
    Kz = K.apply(z)
    v = smoothed_grad(s, Kz)
    grad = K.adjoint(v)
    step = gamma / problem.opnorm ** 2
    x = problem.f.prox(z - step * grad, step)
    d = x - z
    model = smoothed_value(s, Kz) + float(grad @ d) + 0.5 / step * float(d @ d) + problem.f.value(x)
    return model - smoothed_objective(problem, gamma, x), max(1.0, abs(model))


def run_baseline(problem, config, observer=None, trace_level="full"):
    """FISTA on ``f + g_gamma(K .)`` with step ``gamma / ||K||^2``.

    Trace rows carry ``beta_k = gamma``, ``L_k = ||K||^2 / gamma``, the
    momentum weight in ``eta_k`` and ``F_smoothed = f + g_gamma(K .)``;
    ``tau_k`` and ``D_dual`` are not defined for this method. As in the
    primal-dual solver, an observer returning true ends the run.
    """
    g = float(config.gamma)
    K = problem.K
    L = problem.opnorm ** 2 / g
    step = 1.0 / L if L > 0 else 1e12
    s = _smoother(problem, g)
    t0 = time.perf_counter()
    x = np.array(config.x0, dtype=float)
    if x.shape != (problem.p,):
        raise UsageError("x0 must have length %d" % problem.p)
    Kx = K.apply(x)
    z, Kz = x, Kx
    t = 1.0
    nan = math.nan
    full = trace_level == "full"

    def row(k, x, Kx, mom):
        F = primal_value(problem, x, Kx)
        Phi = problem.f.value(x) + smoothed_value(s, Kx) if full else nan
        return TraceRow(k, nan, g, L, mom, F, Phi, nan, nan, nan, nan, time.perf_counter() - t0,
                        algorithm="nesterov")

    r = row(0, x, Kx, nan)
    trace = [r]
    if observer is not None:
        observer(r, x)
    stopped = False
    for k in range(1, config.k_max + 1):
        grad = K._adj(smoothed_grad(s, Kz))
        x_new = problem.f.prox(z - step * grad, step)
        Kx_new = K._fwd(x_new)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        mom = (t - 1.0) / t_new
        z = x_new + mom * (x_new - x)
        Kz = Kx_new + mom * (Kx_new - Kx)
        x, Kx, t = x_new, Kx_new, t_new
        if not math.isfinite(float(x @ x)):
            raise NumericalError("non-finite iterate at iteration %d" % k, iteration=k)
        r = row(k, x, Kx, mom)
        trace.append(r)
        if observer is not None and observer(r, x):
            stopped = True
            break
    return RunRecord(problem, trace, x, None, stopped, "nesterov")
