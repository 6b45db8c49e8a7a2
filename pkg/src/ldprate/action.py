"""Continuous and theta-method action functionals on piecewise-linear paths.

The continuous action is

    A(phi) = 1/2 int_0^T |sigma^{-1}(phi) (phi' - b(phi))|^2 dt

evaluated by a per-interval quadrature rule.  The discrete action freezes
sigma^{-1} at the left theta-grid node and b at the theta-average of the two
bracketing theta-grid nodes,

    B_h(phi) = 1/2 int_0^T |sigma^{-1}(phi(t^)) (phi' - b((1-theta) phi(t^) + theta phi(t~)))|^2 dt,

so on a path whose grid refines the theta-grid the integrand is constant on
every path interval and the integral is a finite sum.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError
from .model import Model
from .path import GridPath

__all__ = [
    "ActionSpec",
    "QUADRATURES",
    "continuous_action",
    "discrete_action",
    "action_value",
    "action_gradient",
    "action_value_and_gradient",
]

QUADRATURES = ("midpoint", "gauss-legendre-2", "gauss-legendre-3")
CONTINUOUS = "continuous"
DISCRETE = "discrete"


@lru_cache(maxsize=None)
def _rule(quadrature: str):
    """Nodes in [0, 1] and weights summing to one."""
    if quadrature == "midpoint":
        return np.array([0.5]), np.array([1.0])
    if quadrature in ("gauss-legendre-2", "gauss-legendre-3"):
        k = int(quadrature[-1])
        x, w = np.polynomial.legendre.leggauss(k)
        return 0.5 * (x + 1.0), 0.5 * w
    raise ConfigurationError(
        f"unknown quadrature {quadrature!r}; expected one of {', '.join(QUADRATURES)}"
    )


@dataclass(frozen=True)
class ActionSpec:
    """Which functional to evaluate.

    ``theta`` and ``h_grid_N`` only matter for the discrete kind and
    ``quadrature`` only for the continuous one.
    """

    kind: str = CONTINUOUS
    theta: float = 0.0
    h_grid_N: int = 1
    quadrature: str = "gauss-legendre-2"

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, DISCRETE):
            raise ConfigurationError(f"action kind must be 'continuous' or 'discrete', got {self.kind!r}")
        if self.kind == DISCRETE:
            if not 0.0 <= self.theta <= 1.0:
                raise ConfigurationError("theta must lie in [0, 1]")
            if int(self.h_grid_N) < 1:
                raise ConfigurationError("h_grid_N must be a positive integer")
        else:
            _rule(self.quadrature)

    @classmethod
    def continuous(cls, quadrature: str = "gauss-legendre-2") -> "ActionSpec":
        return cls(CONTINUOUS, quadrature=quadrature)

    @classmethod
    def discrete(cls, theta: float, h_grid_N: int) -> "ActionSpec":
        return cls(DISCRETE, theta=float(theta), h_grid_N=int(h_grid_N))

    @property
    def is_discrete(self) -> bool:
        return self.kind == DISCRETE

    def with_grid(self, h_grid_N: int) -> "ActionSpec":
        return ActionSpec(self.kind, self.theta, int(h_grid_N), self.quadrature)


def _continuous(model: Model, nodes: np.ndarray, T: float, quadrature: str, grad: bool):
    s, w = _rule(quadrature)
    N, d = nodes.shape[0] - 1, nodes.shape[1]
    h = T / N
    inc = np.diff(nodes, axis=0)
    v = inc / h
    X = (nodes[:-1, None, :] + s[None, :, None] * inc[:, None, :]).reshape(-1, d)
    S = model.diffusion_inverse(X)
    u = np.repeat(v, len(s), axis=0) - model.drift(X)
    r = np.einsum("nij,nj->ni", S, u)
    wq = np.tile(w, N)
    value = 0.5 * h * float(np.dot(wq, np.sum(r * r, axis=1)))
    if not grad:
        return value, None

    p = np.einsum("nji,nj->ni", S, r)
    gx = -2.0 * (
        np.einsum("ni,nijk,nj->nk", p, model.diffusion_derivative(X), r)
        + np.einsum("nik,ni->nk", model.drift_jacobian(X), p)
    )
    gv = 2.0 * p
    sq = np.tile(s, N)[:, None]
    coef = (0.5 * h * wq)[:, None]
    to_left = (coef * ((1.0 - sq) * gx - gv / h)).reshape(N, len(s), d).sum(axis=1)
    to_right = (coef * (sq * gx + gv / h)).reshape(N, len(s), d).sum(axis=1)
    g = np.zeros_like(nodes)
    g[:-1] += to_left
    g[1:] += to_right
    return value, g


def _check_grid(path_N: int, h_grid_N: int) -> int:
    if h_grid_N < 1 or path_N % h_grid_N:
        raise ConfigurationError(
            f"path grid with N={path_N} does not refine the theta-grid with N={h_grid_N}"
        )
    return path_N // h_grid_N


def _discrete(model: Model, nodes: np.ndarray, T: float, theta: float, h_grid_N: int, grad: bool):
    if not 0.0 <= theta <= 1.0:
        raise ConfigurationError("theta must lie in [0, 1]")
    M, d = nodes.shape[0] - 1, nodes.shape[1]
    N = int(h_grid_N)
    m = _check_grid(M, N)
    delta = T / M
    coarse = nodes[::m]
    left, right = coarse[:-1], coarse[1:]
    S = model.diffusion_inverse(left)
    z = (1.0 - theta) * left + theta * right
    c = model.drift(z)
    v = (np.diff(nodes, axis=0) / delta).reshape(N, m, d)
    r = np.einsum("nij,nmj->nmi", S, v - c[:, None, :])
    value = 0.5 * delta * float(np.sum(r * r))
    if not grad:
        return value, None

    p = np.einsum("nji,nmj->nmi", S, r)
    g = np.zeros_like(nodes)
    flat_p = p.reshape(M, d)
    g[:-1] -= flat_p
    g[1:] += flat_p
    g_left = -delta * np.einsum("nmi,nijk,nmj->nk", p, model.diffusion_derivative(left), r)
    g_z = -delta * np.einsum("nik,nmi->nk", model.drift_jacobian(z), p)
    g[:-1:m] += g_left + (1.0 - theta) * g_z
    g[m::m] += theta * g_z
    return value, g


def continuous_action(model: Model, path: GridPath, quadrature: str = "gauss-legendre-2") -> float:
    """Quadrature approximation of the continuous action A."""
    return _continuous(model, path.nodes, path.T, quadrature, grad=False)[0]


def discrete_action(model: Model, path: GridPath, theta: float, h_grid_N: int) -> float:
    """Exact value of the theta-method action B_h with h = T / h_grid_N."""
    return _discrete(model, path.nodes, path.T, float(theta), int(h_grid_N), grad=False)[0]


def action_value(spec: ActionSpec, model: Model, path: GridPath) -> float:
    if spec.is_discrete:
        return discrete_action(model, path, spec.theta, spec.h_grid_N)
    return continuous_action(model, path, spec.quadrature)


def action_value_and_gradient(spec: ActionSpec, model: Model, nodes: np.ndarray, T: float):
    """Value and gradient with respect to all ``N + 1`` nodes (endpoints included)."""
    if spec.is_discrete:
        return _discrete(model, nodes, T, spec.theta, spec.h_grid_N, grad=True)
    return _continuous(model, nodes, T, spec.quadrature, grad=True)


def action_gradient(spec: ActionSpec, model: Model, path: GridPath) -> np.ndarray:
    """Gradient with respect to the interior nodes, shape ``(N - 1, d)``."""
    _, g = action_value_and_gradient(spec, model, path.nodes, path.T)
    return g[1:-1]
