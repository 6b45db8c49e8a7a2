"""Convergence-order and tail-decay studies."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._parallel import ordered_map
from .errors import ConfigurationError, LdpError, OptimizerFailure
from .minimize import MinimizeOptions
from .model import ModelRegistryEntry
from .montecarlo import SimConfig, TailEstimate, sample_terminal, tail_probability
from .rate import RateQuery, check_step_restriction, rate_continuous, rate_discrete, solve_skeleton

__all__ = [
    "ConvergenceReport",
    "TailStudy",
    "fit_order",
    "run_convergence_study",
    "run_tail_study",
    "rate_floor_C",
    "NOISE_FLOOR",
]

NOISE_FLOOR = 1e-10
CLOSED_FORM = "closed-form"
FINE_GRID = "fine-grid"


def fit_order(h_values, errors, floor: float = NOISE_FLOOR) -> Optional[float]:
    """Least-squares slope of log(error) against log(h).

    Errors below ``floor`` are dropped; fewer than three usable points
    give ``None``.
    """
    h = np.asarray(h_values, dtype=float)
    e = np.asarray(errors, dtype=float)
    keep = e >= floor
    if np.count_nonzero(keep) < 3:
        return None
    slope, _ = np.polyfit(np.log(h[keep]), np.log(e[keep]), 1)
    return float(slope)


@dataclass
class ConvergenceReport:
    model_name: str
    theta: float
    x_grid: list
    h_values: list
    errors: list
    fitted_order: Optional[float]
    reference_kind: str
    h_ref: Optional[float] = None
    values: np.ndarray = field(default=None, repr=False)
    reference: np.ndarray = field(default=None, repr=False)

    @property
    def error_ratios(self):
        e = self.errors
        return [e[i + 1] / e[i] for i in range(len(e) - 1)]


def _steps(T, h):
    N = int(round(T / h))
    if N < 1 or abs(N * h - T) > 1e-9 * T:
        raise ConfigurationError(f"T/h must be an integer, got T={T}, h={h}")
    return N


def run_convergence_study(
    entry: ModelRegistryEntry,
    theta: float,
    x_grid,
    h_values,
    reference_kind: str = CLOSED_FORM,
    h_ref: Optional[float] = None,
    x0=0.0,
    T: float = 1.0,
    options: MinimizeOptions = MinimizeOptions(),
    workers=None,
) -> ConvergenceReport:
    """Sup-norm error of I^h against a reference over ``x_grid`` for each h."""
    model = entry.model
    h_values = [float(h) for h in h_values]
    if any(b >= a for a, b in zip(h_values, h_values[1:])):
        raise ConfigurationError("h_values must be strictly decreasing")
    for h in h_values:
        check_step_restriction(h, model.lipschitz_L)
    steps = [_steps(T, h) for h in h_values]
    xs = [np.atleast_1d(np.asarray(x, dtype=float)) for x in x_grid]
    base = RateQuery(model, _start(x0, model.d), T, xs[0] if xs else np.zeros(model.d), theta=theta, options=options)

    if reference_kind == CLOSED_FORM:
        if entry.exact_rate is None:
            raise ConfigurationError(f"model {model.name} has no closed-form rate")
        reference = np.array([entry.exact_rate(x, base.x0, T) for x in xs])
        ref_N = None
    elif reference_kind == FINE_GRID:
        if h_ref is None:
            h_ref = min(h_values) / 8.0
        if h_ref > min(h_values) / 8.0 * (1 + 1e-12):
            raise ConfigurationError("fine-grid reference needs h_ref <= min(h_values)/8")
        ref_N = _steps(T, h_ref)
    else:
        raise ConfigurationError(f"unknown reference kind {reference_kind!r}")

    tasks = [(N, i) for N in steps for i in range(len(xs))]
    if ref_N is not None:
        tasks += [(ref_N, i) for i in range(len(xs))]

    def solve(task):
        N, i = task
        try:
            value, result = rate_discrete(RateQuery(model, base.x0, T, xs[i], theta=theta, N=N,
                                                    options=options))
        except LdpError as exc:
            raise OptimizerFailure(f"rate_discrete failed at h={T / N:g}, x={xs[i]}: {exc}",
                                   coordinates=(T / N, xs[i])) from exc
        if not result.converged:
            raise OptimizerFailure(
                f"minimizer did not converge at h={T / N:g}, x={xs[i]} (|g|={result.gradient_norm:.3e})",
                coordinates=(T / N, xs[i]),
            )
        return value

    flat = ordered_map(solve, tasks, workers)
    n_main = len(steps) * len(xs)
    values = np.array(flat[:n_main]).reshape(len(steps), len(xs))
    if ref_N is not None:
        reference = np.array(flat[n_main:])
    errors = [float(np.max(np.abs(row - reference))) if len(xs) else 0.0 for row in values]
    return ConvergenceReport(
        model_name=model.name,
        theta=float(theta),
        x_grid=[x.tolist() for x in xs],
        h_values=h_values,
        errors=errors,
        fitted_order=fit_order(h_values, errors),
        reference_kind=reference_kind,
        h_ref=h_ref if reference_kind == FINE_GRID else None,
        values=values,
        reference=reference,
    )


def _start(x0, d):
    """Broadcast a scalar starting point to R^d."""
    return np.broadcast_to(np.atleast_1d(np.asarray(x0, dtype=float)), (d,)).copy()


def _sphere_points(d: int, count: int = 64):
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        angles = 2 * math.pi * np.arange(count) / count
        return np.column_stack([np.cos(angles), np.sin(angles)])
    g = np.random.default_rng(0).standard_normal((count * d, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def rate_floor_C(entry: ModelRegistryEntry, delta: float, x0=0.0, T: float = 1.0,
                 path_N: int = 256, options: MinimizeOptions = MinimizeOptions(), workers=None):
    """C(delta): smallest continuous rate on the sphere |x - X0(T)| = delta."""
    model = entry.model
    x0 = _start(x0, model.d)
    centre = solve_skeleton(model, x0, T, 1000).terminal
    points = centre + delta * _sphere_points(model.d)
    base = RateQuery(model, x0, T, points[0], path_N=path_N, options=options)
    values = ordered_map(lambda p: rate_continuous(base.at(p))[0], points, workers)
    return float(min(values))


@dataclass
class TailStudy:
    rows: list
    C_delta: float
    model_name: str
    theta: float
    delta: float


def run_tail_study(entry: ModelRegistryEntry, theta: float, delta: float, epsilon_values,
                   N: int, samples: int, seed: int, x0=0.0, T: float = 1.0,
                   workers=None) -> TailStudy:
    """One tail estimate per epsilon, plus the variational constant C(delta)."""
    rows: list[TailEstimate] = []
    x0 = _start(x0, entry.model.d)
    for eps in epsilon_values:
        cfg = SimConfig(entry.model, float(eps), theta, N, T, x0, samples, seed, workers=workers)
        rows.append(tail_probability(cfg, delta, sample_terminal(cfg)))
    C = rate_floor_C(entry, delta, x0, T, workers=workers)
    return TailStudy(rows, C, entry.model.name, float(theta), float(delta))
