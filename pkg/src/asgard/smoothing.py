"""Smoothed approximation ``g_beta(u, ydot)`` of ``g`` through the prox of ``g*``.

Values are always obtained from the exact maximizer
``y* = prox_{g*/beta}(ydot + u / beta)``, never by an inner iterative solve.
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["SmoothedG", "smoothed_grad", "smoothed_value", "smoothed_F"]


@dataclass(frozen=True)
class SmoothedG:
    gstar: object
    beta: float
    ycenter: np.ndarray

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        yc = np.asarray(self.ycenter, dtype=float)
        if not np.all(np.isfinite(yc)):
            raise ValueError("ycenter must be finite")
        object.__setattr__(self, "ycenter", yc)

    def grad(self, u):
        return smoothed_grad(self, u)

    def __call__(self, u):
        return smoothed_value(self, u)


def smoothed_grad(s, u):
    """Gradient of ``g_beta(., ydot)`` at ``u``, which is also the maximizer."""
    return s.gstar.prox(s.ycenter + u / s.beta, 1.0 / s.beta)


def _value_at(s, u, y):
    d = y - s.ycenter
    return float(np.dot(u, y)) - s.gstar.value(y) - 0.5 * s.beta * float(np.dot(d, d))


def smoothed_value(s, u):
    return _value_at(s, u, smoothed_grad(s, u))


def smoothed_F(problem, beta, x, Kx=None):
    """``f(x) + g_beta(Kx, ydot)``; ``+inf`` outside ``dom f``."""
    fx = problem.f.value(x)
    if not np.isfinite(fx):
        return np.inf
    if Kx is None:
        Kx = problem.K.apply(x)
    return fx + smoothed_value(SmoothedG(problem.gstar, beta, problem.ycenter), Kx)

