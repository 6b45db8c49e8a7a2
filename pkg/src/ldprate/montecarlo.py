"""Stochastic theta-method sampling, tail probabilities and the empirical LMGF.

Randomness is organised in fixed blocks of ``BLOCK_SIZE`` samples.  Block
``k`` draws its Gaussian increments from a Philox stream keyed by
``(seed, k)``, so output depends only on the seed and never on how blocks are
distributed over workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from ._parallel import ordered_map
from .errors import ConfigurationError, NonConvergenceError
from .model import Model

__all__ = [
    "SimConfig",
    "TailEstimate",
    "LegendreResult",
    "BLOCK_SIZE",
    "step_theta",
    "simulate_terminal",
    "brownian_increments",
    "sample_terminal",
    "tail_probability",
    "lmgf_estimate",
    "lmgf_curve",
    "legendre_transform",
]

BLOCK_SIZE = 8192
_Z95 = 1.959963984540054


@dataclass(frozen=True)
class SimConfig:
    model: Model
    epsilon: float
    theta: float
    N: int
    T: float
    x0: np.ndarray
    samples: int
    seed: int
    implicit_tolerance: float = 1e-12
    implicit_max_iters: int = 100
    workers: Optional[int] = None

    def __post_init__(self):
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float)).reshape(-1)
        if x0.shape != (self.model.d,):
            raise ConfigurationError(f"x0 must be a point in R^{self.model.d}")
        object.__setattr__(self, "x0", x0)
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be positive")
        if not 0.0 <= self.theta <= 1.0:
            raise ConfigurationError("theta must lie in [0, 1]")
        if self.N < 1 or self.samples < 1:
            raise ConfigurationError("N and samples must be positive")
        if self.h * self.model.lipschitz_L * self.theta >= 1.0:
            raise ConfigurationError("h·L·theta must be < 1 for the implicit solve to contract")

    @property
    def h(self) -> float:
        return self.T / self.N


@dataclass(frozen=True)
class TailEstimate:
    delta: float
    epsilon: float
    p_hat: float
    log_estimate: float
    ci_half_width: float
    ci_low: float
    ci_high: float
    count: int
    samples: int
    lower_bound_only: bool = False


@dataclass(frozen=True)
class LegendreResult:
    value: float
    argmax: np.ndarray
    on_boundary: bool


def step_theta(model: Model, state, noise, h: float, theta: float,
               tol: float = 1e-12, max_iters: int = 100) -> np.ndarray:
    """One theta step for a batch of states.

    Solves y = state + h b((1-theta) state + theta y) + noise by fixed-point
    iteration started from the explicit Euler predictor; ``noise`` is the
    already scaled term sqrt(eps) sigma(state) dW.
    """
    state = np.asarray(state, dtype=float)
    base = state + noise
    y = base + h * model.drift(state)
    if theta == 0.0:
        return y
    for _ in range(max_iters):
        y_new = base + h * model.drift((1.0 - theta) * state + theta * y)
        diff = float(np.max(np.abs(y_new - y))) if y.size else 0.0
        y = y_new
        if diff <= tol:
            return y
    raise NonConvergenceError(
        f"implicit theta step did not converge in {max_iters} iterations (h={h:g}, theta={theta:g})"
    )


def simulate_terminal(model: Model, x0, T: float, N: int, theta: float, epsilon: float,
                      dW: np.ndarray, tol: float = 1e-12, max_iters: int = 100) -> np.ndarray:
    """Terminal values driven by explicit increments ``dW`` of shape (n, N, d)."""
    h = T / N
    n = dW.shape[0]
    x = np.broadcast_to(np.asarray(x0, dtype=float), (n, model.d)).copy()
    scale = math.sqrt(epsilon)
    additive = model.is_additive
    sigma_const = model.diffusion(x[:1])[0] if additive else None
    for k in range(N):
        if additive:
            noise = scale * dW[:, k, :] @ sigma_const.T
        else:
            noise = scale * np.einsum("nij,nj->ni", model.diffusion(x), dW[:, k, :])
        x = step_theta(model, x, noise, h, theta, tol, max_iters)
    return x


def _block_rng(seed: int, block: int) -> np.random.Generator:
    key = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, block])
    return np.random.Generator(np.random.Philox(key))


def brownian_increments(seed: int, block: int, n: int, N: int, d: int, h: float) -> np.ndarray:
    """Increments for one block; row ``i`` is the substream of sample ``i``."""
    return math.sqrt(h) * _block_rng(seed, block).standard_normal((n, N, d))


def sample_terminal(config: SimConfig, zero_noise: bool = False) -> np.ndarray:
    """``config.samples`` independent theta-scheme terminal values, shape (samples, d)."""
    n_blocks = -(-config.samples // BLOCK_SIZE)
    d = config.model.d

    def run(block):
        n = min(BLOCK_SIZE, config.samples - block * BLOCK_SIZE)
        if zero_noise:
            dW = np.zeros((n, config.N, d))
        else:
            dW = brownian_increments(config.seed, block, n, config.N, d, config.h)
        return simulate_terminal(config.model, config.x0, config.T, config.N, config.theta,
                                 config.epsilon, dW, config.implicit_tolerance,
                                 config.implicit_max_iters)

    return np.concatenate(ordered_map(run, range(n_blocks), config.workers), axis=0)


def _wilson(count: int, n: int):
    p = count / n
    z2 = _Z95**2
    centre = (p + z2 / (2 * n)) / (1 + z2 / n)
    half = _Z95 * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / (1 + z2 / n)
    # the bounds are exactly 0 and 1 at the extremes; avoid rounding residue
    low = 0.0 if count == 0 else max(centre - half, 0.0)
    high = 1.0 if count == n else min(centre + half, 1.0)
    return low, high


def tail_probability(config: SimConfig, delta: float, terminals: Optional[np.ndarray] = None,
                     skeleton_steps: int = 1000) -> TailEstimate:
    """Empirical P(|X_N - X0(T)| >= delta) and -eps ln of it.

    With no hits the estimate is only a lower bound: -eps ln p > eps ln(samples).
    """
    from .rate import solve_skeleton

    if delta < 0:
        raise ConfigurationError("delta must be non-negative")
    if terminals is None:
        terminals = sample_terminal(config)
    n = terminals.shape[0]
    target = solve_skeleton(config.model, config.x0, config.T, skeleton_steps).terminal
    dist = np.linalg.norm(terminals - target, axis=1)
    count = int(np.count_nonzero(dist >= delta))
    p_hat = count / n
    eps = config.epsilon
    if count == 0:
        log_estimate = eps * math.log(n)
    else:
        log_estimate = abs(-eps * math.log(p_hat))
    if count < 10 or n - count < 10:
        low, high = _wilson(count, n)
        half = 0.5 * (high - low)
    else:
        half = _Z95 * math.sqrt(p_hat * (1 - p_hat) / n)
        low, high = max(p_hat - half, 0.0), min(p_hat + half, 1.0)
    return TailEstimate(float(delta), float(eps), p_hat, log_estimate, half, low, high,
                        count, n, lower_bound_only=count == 0)


def lmgf_curve(config: SimConfig, lambdas, terminals: Optional[np.ndarray] = None,
               chunk: int = 64) -> np.ndarray:
    """eps ln mean exp(<X_N, lambda>/eps) for every row of ``lambdas``."""
    if terminals is None:
        terminals = sample_terminal(config)
    lam = np.asarray(lambdas, dtype=float)
    lam = lam.reshape(-1, 1) if lam.ndim <= 1 and config.model.d == 1 else lam.reshape(-1, config.model.d)
    eps = config.epsilon
    log_n = math.log(terminals.shape[0])
    out = np.empty(lam.shape[0])
    for start in range(0, lam.shape[0], chunk):
        block = lam[start:start + chunk]
        exponents = (block @ terminals.T) / eps
        out[start:start + chunk] = eps * (logsumexp(exponents, axis=1) - log_n)
    # lambda = 0 is exactly zero, not a rounding residue
    out[np.all(lam == 0.0, axis=1)] = 0.0
    return out


def lmgf_estimate(config: SimConfig, lam, terminals: Optional[np.ndarray] = None) -> float:
    return float(lmgf_curve(config, np.atleast_1d(np.asarray(lam, dtype=float))[None, :], terminals)[0])


def legendre_transform(lambdas, values, x) -> LegendreResult:
    """Grid supremum of <x, lambda> - Lambda(lambda).

    ``lambdas`` is a 1-D grid or an (K, d) list of tensor-grid points; the
    result is flagged when the maximiser sits on the edge of that grid.
    """
    lam = np.asarray(lambdas, dtype=float)
    if lam.ndim == 1:
        lam = lam[:, None]
    vals = np.asarray(values, dtype=float).reshape(-1)
    x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(-1)
    if lam.shape[0] != vals.shape[0] or lam.shape[1] != x.shape[0]:
        raise ConfigurationError("lambda grid, values and x have inconsistent shapes")
    objective = lam @ x - vals
    i = int(np.argmax(objective))
    best = lam[i]
    on_boundary = bool(np.any((best == lam.min(axis=0)) | (best == lam.max(axis=0))))
    return LegendreResult(float(objective[i]), best.copy(), on_boundary)
