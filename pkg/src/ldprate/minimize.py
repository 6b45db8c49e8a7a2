"""Minimum action method: minimize an action over interior path nodes.

Endpoints stay pinned at ``x0`` and ``x``.  The search direction is a
limited-memory BFGS update whose initial inverse Hessian is the inverse of
the discrete H1 metric (the tridiagonal Laplacian scaled by 1/h), which keeps
iteration counts roughly independent of the grid size.  Steps are accepted
by Armijo backtracking.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

from ._parallel import ordered_map
from .action import ActionSpec, action_value, action_value_and_gradient
from .errors import ConfigurationError, NumericalFailure
from .model import Model
from .path import GridPath, h1_seminorm, refine, straight_line

__all__ = [
    "MinimizeOptions",
    "MinimizeResult",
    "minimize_action",
    "minimize_discrete_single_step",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MinimizeOptions:
    """Settings for :func:`minimize_action`.

    ``initial_path`` of ``None`` means the straight line from x0 to x.
    ``multistart`` extra runs start from smooth random perturbations of
    that line (magnitude ``multistart_scale``); the lowest value wins.
    """

    max_iterations: int = 2000
    gradient_tolerance: float = 1e-9
    continuation_levels: int = 3
    initial_path: Optional[GridPath] = None
    shrink: float = 0.5
    sufficient_decrease: float = 1e-4
    memory: int = 10
    multistart: int = 0
    multistart_scale: float = 0.5
    multistart_seed: int = 0
    workers: Optional[int] = 1

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be positive")
        if not self.gradient_tolerance > 0:
            raise ConfigurationError("gradient_tolerance must be positive")
        if self.continuation_levels < 0:
            raise ConfigurationError("continuation_levels must be >= 0")
        if not 0.0 < self.shrink < 1.0:
            raise ConfigurationError("shrink must lie in (0, 1)")
        if not 0.0 < self.sufficient_decrease < 1.0:
            raise ConfigurationError("sufficient_decrease must lie in (0, 1)")
        if self.multistart < 0:
            raise ConfigurationError("multistart must be >= 0")


@dataclass
class MinimizeResult:
    path: GridPath
    value: float
    gradient_norm: float
    iterations: int
    converged: bool
    h1_seminorm: float = 0.0
    history: list = field(default_factory=list, repr=False)


class _H1Preconditioner:
    """Applies the inverse of (1/h) tridiag(-1, 2, -1) to each coordinate."""

    def __init__(self, n_interior: int, h: float):
        self.n = n_interior
        if n_interior:
            ab = np.zeros((2, n_interior))
            ab[0, 1:] = -1.0 / h
            ab[1, :] = 2.0 / h
            self.factor = cholesky_banded(ab)

    def solve(self, v: np.ndarray) -> np.ndarray:
        if self.n == 0:
            return v
        return cho_solve_banded((self.factor, False), v)


def _lbfgs(spec: ActionSpec, model: Model, start: GridPath, options: MinimizeOptions) -> MinimizeResult:
    nodes = np.array(start.nodes)
    T = start.T
    n_int = nodes.shape[0] - 2
    precond = _H1Preconditioner(n_int, start.h)

    def evaluate(interior):
        nodes[1:-1] = interior
        f, g = action_value_and_gradient(spec, model, nodes, T)
        return f, g[1:-1].copy()

    x = nodes[1:-1].copy()
    f, g = evaluate(x)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise NumericalFailure("non-finite action or gradient at the initial path", iterate=x)
    gnorm = float(np.max(np.abs(g))) if n_int else 0.0
    history = [f]
    memory = deque(maxlen=options.memory)
    gamma = 1.0
    it = 0
    converged = gnorm <= options.gradient_tolerance

    while not converged and it < options.max_iterations:
        direction = -_two_loop(g, memory, gamma, precond)
        gd = float(np.sum(g * direction))
        if gd >= 0.0:
            memory.clear()
            direction = -gamma * precond.solve(g)
            gd = float(np.sum(g * direction))
        noise = 1e-13 * (1.0 + abs(f))

        alpha = 1.0
        accepted = False
        for _ in range(60):
            trial = x + alpha * direction
            f_new, g_new = evaluate(trial)
            if np.isfinite(f_new):
                if f_new <= f + options.sufficient_decrease * alpha * gd:
                    accepted = True
                    break
                # below round-off the Armijo test is meaningless; demand a
                # smaller gradient and no visible increase instead
                if abs(alpha * gd) <= noise and f_new <= f + noise:
                    if np.all(np.isfinite(g_new)) and np.max(np.abs(g_new)) < gnorm:
                        accepted = True
                        break
            alpha *= options.shrink
        if not accepted:
            log.debug("line search stalled at iteration %d, |g|=%.3e", it, gnorm)
            nodes[1:-1] = x
            break
        if not np.all(np.isfinite(g_new)):
            raise NumericalFailure("non-finite gradient during minimization", iterate=trial)

        s = trial - x
        y = g_new - g
        sy = float(np.sum(s * y))
        if sy > 1e-300:
            hy = precond.solve(y)
            yhy = float(np.sum(y * hy))
            memory.append((s, y, 1.0 / sy))
            gamma = sy / yhy if yhy > 0 else gamma
        x, f, g = trial, f_new, g_new
        gnorm = float(np.max(np.abs(g)))
        history.append(f)
        it += 1
        converged = gnorm <= options.gradient_tolerance

    nodes[1:-1] = x
    path = start.with_nodes(nodes)
    return MinimizeResult(path, f, gnorm, it, bool(converged), h1_seminorm(path), history)


def _two_loop(g, memory, gamma, precond):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(memory):
        a = rho * float(np.sum(s * q))
        alphas.append(a)
        q -= a * y
    r = gamma * precond.solve(q)
    for (s, y, rho), a in zip(memory, reversed(alphas)):
        b = rho * float(np.sum(y * r))
        r += (a - b) * s
    return r


def _levels(spec: ActionSpec, path_N: int, requested: int) -> int:
    levels = requested
    while levels > 0:
        factor = 2**levels
        coarse = path_N // factor
        if path_N % factor == 0 and coarse >= 2:
            if not spec.is_discrete or spec.h_grid_N % factor == 0:
                break
        levels -= 1
    return levels


def _solve(spec, model, x0, x, T, path_N, options, start=None) -> MinimizeResult:
    if start is not None:
        return _lbfgs(spec, model, start, options)
    levels = _levels(spec, path_N, options.continuation_levels)
    N = path_N // 2**levels
    current = straight_line(x0, x, T, N)
    result = None
    for level in range(levels + 1):
        level_spec = spec.with_grid(spec.h_grid_N // 2 ** (levels - level)) if spec.is_discrete else spec
        result = _lbfgs(level_spec, model, current, options)
        if level < levels:
            current = refine(result.path, 2)
    return result


def _perturbed_start(x0, x, T, path_N, d, scale, rng) -> GridPath:
    base = straight_line(x0, x, T, path_N)
    t = base.times / T
    modes = np.sin(np.pi * np.outer(t, np.arange(1, 4)))
    coeffs = rng.normal(scale=scale, size=(3, d)) / np.arange(1, 4)[:, None]
    return base.with_nodes(base.nodes + modes @ coeffs)


def minimize_action(
    spec: ActionSpec,
    model: Model,
    x0,
    x,
    T: float,
    path_N: int,
    options: MinimizeOptions = MinimizeOptions(),
) -> MinimizeResult:
    """Minimize the action of ``spec`` over paths from ``x0`` (t=0) to ``x`` (t=T).

    For the discrete kind ``path_N`` must equal ``spec.h_grid_N``; piecewise
    linear paths on the theta-grid already attain the infimum there.
    """
    path_N = int(path_N)
    if path_N < 1:
        raise ConfigurationError("path_N must be >= 1")
    if spec.is_discrete and path_N != spec.h_grid_N:
        raise ConfigurationError(
            f"discrete minimization needs path_N == h_grid_N, got {path_N} and {spec.h_grid_N}"
        )
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x0.shape != (model.d,) or x.shape != (model.d,):
        raise ConfigurationError(f"endpoints must be points in R^{model.d}")

    start = None
    if options.initial_path is not None:
        user = options.initial_path
        if path_N % user.N:
            raise ConfigurationError("initial path grid must divide path_N")
        user = refine(user, path_N // user.N)
        nodes = np.array(user.nodes)
        nodes[0], nodes[-1] = x0, x
        start = GridPath(T, nodes)

    runs = [lambda: _solve(spec, model, x0, x, T, path_N, options, start)]
    if options.multistart:
        rng = np.random.default_rng(options.multistart_seed)
        starts = [
            _perturbed_start(x0, x, T, path_N, model.d, options.multistart_scale, rng)
            for _ in range(options.multistart)
        ]
        single = replace(options, multistart=0)
        runs += [lambda p=p: _lbfgs(spec, model, p, single) for p in starts]
    results = ordered_map(lambda run: run(), runs, options.workers)
    return min(results, key=lambda r: (r.value, r.h1_seminorm))


def minimize_discrete_single_step(model: Model, x0, x, T: float, theta: float) -> float:
    """B_h for N = 1: the only piecewise-linear path is the straight line."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    path = GridPath(T, np.vstack([x0, x]))
    return action_value(ActionSpec.discrete(theta, 1), model, path)
