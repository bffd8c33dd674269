"""The saddle-point problem ``min_x max_y f(x) + <Kx, y> - g*(y)``."""

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import UsageError
from .linops import LinearMap
from .proxlib import ProxFriendlyFn
from .schedule import Regime

__all__ = ["SaddleProblem", "fenchel_young_slack"]


@dataclass(frozen=True)
class SaddleProblem:
    """Bundle of ``f``, ``g*``, ``K`` and the fixed dual center.

    ``g_value`` defaults to the conjugate value carried by ``gstar``.
    ``regime`` defaults to the one implied by the moduli of ``f`` and
    ``gstar``; an explicit regime may use smaller moduli than the terms
    actually have, never larger ones.
    """

    f: ProxFriendlyFn
    gstar: ProxFriendlyFn
    K: LinearMap
    ycenter: Optional[np.ndarray] = None
    g_value: Optional[Callable] = None
    regime: Optional[Regime] = None
    name: str = field(default="problem", compare=False)

    def __post_init__(self):
        if self.ycenter is None:
            object.__setattr__(self, "ycenter", np.zeros(self.K.rows))
        else:
            yc = np.asarray(self.ycenter, dtype=float)
            if yc.shape != (self.K.rows,):
                raise UsageError("ycenter must have length %d" % self.K.rows)
            object.__setattr__(self, "ycenter", yc)
        if self.g_value is None:
            if self.gstar.conj_value is None:
                raise UsageError("g_value is required when gstar carries no conjugate value")
            object.__setattr__(self, "g_value", self.gstar.conj_value)
        if self.regime is None:
            object.__setattr__(self, "regime",
                               Regime.from_moduli(self.f.mu, self.gstar.mu, self.K.opnorm))
        r = self.regime
        if r.mu_f > self.f.mu or r.mu_gstar > self.gstar.mu:
            raise UsageError("regime moduli (%g, %g) exceed those of f and g* (%g, %g)"
                             % (r.mu_f, r.mu_gstar, self.f.mu, self.gstar.mu))

    @property
    def p(self):
        return self.K.cols

    @property
    def n(self):
        return self.K.rows

    @property
    def opnorm(self):
        return self.K.opnorm

    def with_regime(self, regime):
        return replace(self, regime=regime)

    def general_convex(self):
        """Same problem, solved with the general-convex schedule."""
        return self.with_regime(Regime.general_convex())


def fenchel_young_slack(problem, u, y):
    """``g(u) - (<u, y> - g*(y))``; nonnegative when ``g_value`` and ``gstar`` are conjugate."""
    return problem.g_value(u) - (float(np.dot(u, y)) - problem.gstar.value(y))
