"""SDE coefficients and the built-in benchmark models.

All coefficient maps are batched: they take an array of shape ``(n, d)``
and return ``(n, d)`` for the drift, ``(n, d, d)`` for the diffusion, its
inverse and the drift Jacobian, and ``(n, d, d, d)`` for the diffusion
derivative, whose entry ``[.., i, j, k]`` is the partial derivative of
``sigma_ij`` with respect to ``x_k``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import UnknownModelError

__all__ = [
    "Model",
    "ModelRegistryEntry",
    "builtin_model",
    "check_lipschitz",
    "as_points",
    "BUILTIN_NAMES",
]

BUILTIN_NAMES = ("brownian", "ou-additive", "mult-sine")


def as_points(x, d: int) -> np.ndarray:
    """Coerce a scalar, a point or a batch of points to shape ``(n, d)``."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, d) if d > 1 else arr.reshape(-1, 1)
    if arr.shape[-1] != d:
        raise ValueError(f"expected points in R^{d}, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Model:
    """Coefficients of dX = b(X) dt + sqrt(eps) sigma(X) dW with metadata.

    ``lipschitz_L`` is declared by the author of the model, never inferred;
    :func:`check_lipschitz` spot-checks it.
    """

    d: int
    drift: Callable[[np.ndarray], np.ndarray]
    diffusion: Callable[[np.ndarray], np.ndarray]
    diffusion_inverse: Callable[[np.ndarray], np.ndarray]
    drift_jacobian: Callable[[np.ndarray], np.ndarray]
    diffusion_derivative: Callable[[np.ndarray], np.ndarray]
    lipschitz_L: float
    is_additive: bool
    name: str
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("state dimension must be positive")
        if not self.lipschitz_L > 0:
            raise ValueError("lipschitz_L must be positive")

    def without_drift(self) -> "Model":
        """The driftless model dZ = sigma(Z) dW used for small-time asymptotics."""
        d = self.d

        def zero_drift(x):
            return np.zeros_like(np.asarray(x, dtype=float))

        def zero_jac(x):
            x = np.asarray(x, dtype=float)
            return np.zeros(x.shape[:-1] + (d, d))

        sigma_L = self.params.get("sigma_lipschitz", self.lipschitz_L)
        return Model(
            d=d,
            drift=zero_drift,
            diffusion=self.diffusion,
            diffusion_inverse=self.diffusion_inverse,
            drift_jacobian=zero_jac,
            diffusion_derivative=self.diffusion_derivative,
            lipschitz_L=sigma_L,
            is_additive=self.is_additive,
            name=f"{self.name}-driftless",
            params=dict(self.params),
        )


@dataclass(frozen=True)
class ModelRegistryEntry:
    model: Model
    exact_rate: Optional[Callable] = None
    description: str = ""


def _identity_diffusion(d):
    eye = np.eye(d)

    def sigma(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(eye, x.shape[:-1] + (d, d)).copy()

    def dsigma(x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (d, d, d))

    return sigma, dsigma


def _linear_drift(a, d):
    jac = a * np.eye(d)

    def drift(x):
        return a * np.asarray(x, dtype=float)

    def drift_jacobian(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(jac, x.shape[:-1] + (d, d)).copy()

    return drift, drift_jacobian


def _brownian(d: int = 1) -> ModelRegistryEntry:
    d = int(d)
    drift, jac = _linear_drift(0.0, d)
    sigma, dsigma = _identity_diffusion(d)
    # true constant is 0; any positive value is valid, 0.5 admits every h <= 1
    model = Model(d, drift, sigma, sigma, jac, dsigma, 0.5, True, "brownian",
                  {"d": d, "sigma_lipschitz": 0.5})

    def exact_rate(x, x0, T):
        dx = np.asarray(x, dtype=float) - np.asarray(x0, dtype=float)
        return float(np.sum(dx**2) / (2.0 * T))

    return ModelRegistryEntry(model, exact_rate, "b = 0, sigma = I")


def _ou_additive(a: float = -1.0, d: int = 1) -> ModelRegistryEntry:
    a = float(a)
    d = int(d)
    drift, jac = _linear_drift(a, d)
    sigma, dsigma = _identity_diffusion(d)
    L = abs(a) if a != 0.0 else 0.5
    model = Model(d, drift, sigma, sigma, jac, dsigma, L, True,
                  f"ou-additive({a:g})", {"a": a, "d": d, "sigma_lipschitz": 0.5})

    def exact_rate(x, x0, T):
        x = np.asarray(x, dtype=float)
        x0 = np.asarray(x0, dtype=float)
        if a == 0.0:
            return float(np.sum((x - x0) ** 2) / (2.0 * T))
        gap = math.exp(-a * T) * x - x0
        return float(a * np.sum(gap**2) / (-math.expm1(-2.0 * a * T)))

    return ModelRegistryEntry(model, exact_rate, "b(x) = a x, sigma = I")


def _mult_sine(rate: float = 1.0, offset: float = 2.0) -> ModelRegistryEntry:
    rate = float(rate)
    offset = float(offset)
    if offset <= 1.0:
        raise ValueError("mult-sine needs offset > 1 so that sigma stays invertible")

    def drift(x):
        return -rate * np.asarray(x, dtype=float)

    def drift_jacobian(x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1] + (1, 1), -rate)

    def sigma(x):
        x = np.asarray(x, dtype=float)
        return (offset + np.sin(x))[..., None]

    def sigma_inv(x):
        x = np.asarray(x, dtype=float)
        return (1.0 / (offset + np.sin(x)))[..., None]

    def dsigma(x):
        x = np.asarray(x, dtype=float)
        return np.cos(x)[..., None, None]

    model = Model(1, drift, sigma, sigma_inv, drift_jacobian, dsigma,
                  abs(rate) + 1.0, False, "mult-sine",
                  {"rate": rate, "offset": offset, "sigma_lipschitz": 1.0})
    return ModelRegistryEntry(model, None, "b(x) = -k x, sigma(x) = c + sin x")


_REGISTRY = {
    "brownian": (_brownian, ("d",)),
    "ou-additive": (_ou_additive, ("a", "d")),
    "mult-sine": (_mult_sine, ("rate", "offset")),
}

_CALL_FORM = re.compile(r"^\s*([a-z\-]+)\s*\((.*)\)\s*$")


def builtin_model(name: str, **params) -> ModelRegistryEntry:
    """Look up a built-in model.

    ``name`` is ``"brownian"``, ``"ou-additive"`` or ``"mult-sine"``; the
    call form ``"ou-additive(-1)"`` passes positional parameters.
    """
    args = ()
    match = _CALL_FORM.match(name)
    if match:
        name = match.group(1)
        inner = match.group(2).strip()
        args = tuple(float(v) for v in inner.split(",")) if inner else ()
    try:
        factory, keys = _REGISTRY[name]
    except KeyError:
        raise UnknownModelError(
            f"unknown model {name!r}; known models: {', '.join(BUILTIN_NAMES)}"
        ) from None
    unknown = set(params) - set(keys)
    if unknown:
        raise UnknownModelError(f"model {name!r} has no parameters {sorted(unknown)}")
    return factory(*args, **params)


def check_lipschitz(model: Model, samples: int, radius: float, rng_seed: int) -> float:
    """Largest sampled ratio (|b(x)-b(y)| + |sigma(x)-sigma(y)|) / |x-y|.

    Points are drawn uniformly from the cube [-radius, radius]^d; matrix
    differences use the spectral norm.
    """
    if samples < 2:
        raise ValueError("samples must be >= 2")
    rng = np.random.default_rng(rng_seed)
    x = rng.uniform(-radius, radius, size=(samples, model.d))
    y = rng.uniform(-radius, radius, size=(samples, model.d))
    dist = np.linalg.norm(x - y, axis=-1)
    keep = dist > 0
    x, y, dist = x[keep], y[keep], dist[keep]
    db = np.linalg.norm(model.drift(x) - model.drift(y), axis=-1)
    ds = np.linalg.norm(model.diffusion(x) - model.diffusion(y), ord=2, axis=(-2, -1))
    return float(np.max((db + ds) / dist)) if dist.size else 0.0
