"""Rate-function drivers: I(x), I^h(x), the skeleton ODE and small-time rates."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ._parallel import ordered_map
from .action import ActionSpec
from .errors import ConfigurationError, DomainError, StepRestrictionError
from .minimize import MinimizeOptions, MinimizeResult, minimize_action
from .model import Model

__all__ = [
    "RateQuery",
    "SkeletonSolution",
    "rate_continuous",
    "rate_discrete",
    "rate_on_grid",
    "solve_skeleton",
    "theta_skeleton",
    "small_time_rate",
    "small_time_rate_result",
    "check_step_restriction",
]

# relative slack so that h = 1/(2L) computed as T/N passes
_STEP_SLACK = 1e-12


@dataclass(frozen=True)
class RateQuery:
    """One rate-function evaluation.

    ``N`` is the theta-method step count (h = T/N); ``path_N`` is the
    optimizer grid used for the continuous action.
    """

    model: Model
    x0: np.ndarray
    T: float
    x: np.ndarray
    theta: float = 0.0
    N: int = 1
    path_N: int = 256
    quadrature: str = "gauss-legendre-2"
    options: MinimizeOptions = field(default_factory=MinimizeOptions)

    def __post_init__(self):
        object.__setattr__(self, "x0", _point(self.x0, self.model.d, "x0"))
        object.__setattr__(self, "x", _point(self.x, self.model.d, "x"))
        if not self.T > 0:
            raise ConfigurationError("T must be positive")
        if not 0.0 <= self.theta <= 1.0:
            raise ConfigurationError("theta must lie in [0, 1]")
        if int(self.N) < 1 or int(self.path_N) < 1:
            raise ConfigurationError("N and path_N must be positive integers")

    @property
    def h(self) -> float:
        return self.T / self.N

    def at(self, x) -> "RateQuery":
        return replace(self, x=x)


def _point(v, d, name):
    arr = np.atleast_1d(np.asarray(v, dtype=float)).reshape(-1)
    if arr.shape != (d,):
        raise ConfigurationError(f"{name} must be a point in R^{d}")
    return arr


@dataclass(frozen=True)
class SkeletonSolution:
    times: np.ndarray
    states: np.ndarray

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]


def check_step_restriction(h: float, L: float) -> None:
    if h > (1.0 + _STEP_SLACK) / (2.0 * L):
        raise StepRestrictionError(
            f"step h={h:.6g} violates h ≤ 1/(2L) = {1.0 / (2.0 * L):.6g}"
        )


def rate_continuous(query: RateQuery):
    """I(x) by minimizing the continuous action; returns ``(value, result)``."""
    result = minimize_action(
        ActionSpec.continuous(query.quadrature), query.model,
        query.x0, query.x, query.T, query.path_N, query.options,
    )
    return max(result.value, 0.0), result


def _discrete(query: RateQuery):
    spec = ActionSpec.discrete(query.theta, query.N)
    result = minimize_action(spec, query.model, query.x0, query.x, query.T, query.N, query.options)
    return max(result.value, 0.0), result


def rate_discrete(query: RateQuery):
    """I^h(x) by exact minimization of B_h over theta-grid node vectors."""
    check_step_restriction(query.h, query.model.lipschitz_L)
    return _discrete(query)


def rate_on_grid(query: RateQuery, xs, kind: str = "continuous", workers=None):
    """Evaluate a rate function at each point of ``xs`` (order preserved)."""
    fn = {"continuous": rate_continuous, "discrete": rate_discrete}[kind]
    if kind == "discrete":
        check_step_restriction(query.h, query.model.lipschitz_L)
    points = [query.at(x) for x in xs]
    return ordered_map(fn, points, workers)


def solve_skeleton(model: Model, x0, T: float, steps: int) -> SkeletonSolution:
    """Classical fourth-order Runge-Kutta for x' = b(x)."""
    if steps < 1:
        raise ConfigurationError("steps must be >= 1")
    h = T / steps
    x = _point(x0, model.d, "x0")[None, :]
    states = [x[0].copy()]
    b = model.drift
    for _ in range(steps):
        k1 = b(x)
        k2 = b(x + 0.5 * h * k1)
        k3 = b(x + 0.5 * h * k2)
        k4 = b(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        states.append(x[0].copy())
    return SkeletonSolution(np.linspace(0.0, T, steps + 1), np.array(states))


def theta_skeleton(model: Model, x0, T: float, N: int, theta: float,
                   tol: float = 1e-14, max_iters: int = 200) -> np.ndarray:
    """Noise-free theta-scheme terminal value, the unique zero of I^h."""
    from .montecarlo import step_theta

    h = T / N
    x = _point(x0, model.d, "x0")[None, :]
    zero = np.zeros_like(x)
    for _ in range(N):
        x = step_theta(model, x, zero, h, theta, tol, max_iters)
    return x[0]


def small_time_rate_result(model_Y: Model, y0, y, h: float, theta: float = 0.0,
                           options: Optional[MinimizeOptions] = None):
    """Like :func:`small_time_rate` but also returns the minimizer result."""
    if not 0.0 < h <= 1.0:
        raise DomainError("small-time step h must lie in (0, 1]")
    N = int(round(1.0 / h))
    if abs(N * h - 1.0) > 1e-12:
        raise DomainError("1/h must be an integer")
    query = RateQuery(model_Y.without_drift(), y0, 1.0, y, theta=theta, N=N,
                      options=options or MinimizeOptions())
    # no drift, so the implicit solve is trivial and h <= 1 is admissible
    return _discrete(query)


def small_time_rate(model_Y: Model, y0, y, h: float, theta: float = 0.0,
                    options: Optional[MinimizeOptions] = None) -> float:
    """Discrete small-time rate for Y: I^h of dZ = sqrt(eps) sigma(Z) dW on [0, 1].

    The drift of ``model_Y`` is dropped and the horizon fixed to 1.
    """
    return small_time_rate_result(model_Y, y0, y, h, theta, options)[0]
