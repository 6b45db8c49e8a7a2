"""Piecewise-linear paths on a uniform time grid."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = [
    "GridPath",
    "straight_line",
    "hat",
    "check",
    "interpolate",
    "h1_seminorm",
    "refine",
    "to_csv",
    "from_csv",
]


@dataclass(frozen=True, eq=False)
class GridPath:
    """Node values ``nodes[n]`` at ``t_n = n*T/N``, ``n = 0..N``.

    ``nodes`` always has shape ``(N + 1, d)``; 1-D input is read as a
    scalar path.
    """

    T: float
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        if nodes.ndim != 2 or nodes.shape[0] < 2:
            raise ValueError("a path needs at least two nodes")
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "T", float(self.T))

    @property
    def N(self) -> int:
        return self.nodes.shape[0] - 1

    @property
    def d(self) -> int:
        return self.nodes.shape[1]

    @property
    def h(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N + 1)

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.nodes, axis=0)

    def with_nodes(self, nodes) -> "GridPath":
        return GridPath(self.T, nodes)

    def __eq__(self, other):
        if not isinstance(other, GridPath):
            return NotImplemented
        return self.T == other.T and np.array_equal(self.nodes, other.nodes)

    __hash__ = None


def straight_line(x0, x, T: float, N: int) -> GridPath:
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    s = np.linspace(0.0, 1.0, int(N) + 1)[:, None]
    nodes = (1.0 - s) * x0 + s * x
    nodes[-1] = x
    return GridPath(T, nodes)


def _grid_index(t, T, N):
    # nearest-node snapping absorbs the rounding of n*T/N
    u = np.asarray(t, dtype=float) * N / T
    r = np.rint(u)
    return u, np.where(np.abs(u - r) <= 1e-12 * max(N, 1), r, u)


def hat(t, T: float, N: int):
    """Largest grid time ``<= t``."""
    _, u = _grid_index(t, T, N)
    return np.floor(u) * (T / N)


def check(t, T: float, N: int):
    """Smallest grid time ``>= t``."""
    _, u = _grid_index(t, T, N)
    return np.ceil(u) * (T / N)


def interpolate(path: GridPath, t):
    """Value of the piecewise-linear interpolant at time(s) ``t``.

    Returns shape ``(d,)`` for scalar ``t`` and ``(len(t), d)`` otherwise.
    """
    tt = np.asarray(t, dtype=float)
    if np.any(tt < 0.0) or np.any(tt > path.T) or np.any(np.isnan(tt)):
        raise DomainError(f"t must lie in [0, {path.T}]")
    flat = np.atleast_1d(tt)
    _, u = _grid_index(flat, path.T, path.N)
    k = np.clip(np.floor(u).astype(int), 0, path.N - 1)
    s = (u - k)[:, None]
    out = (1.0 - s) * path.nodes[k] + s * path.nodes[k + 1]
    exact = s[:, 0] == 0.0
    out[exact] = path.nodes[k[exact]]
    exact_end = s[:, 0] == 1.0
    out[exact_end] = path.nodes[k[exact_end] + 1]
    return out[0] if tt.ndim == 0 else out


def h1_seminorm(path: GridPath) -> float:
    """L2 norm of the derivative of the interpolant."""
    inc = path.increments
    return float(np.sqrt(np.sum(inc**2) / path.h))


def refine(path: GridPath, factor: int) -> GridPath:
    """Resample the interpolant on a grid with ``N * factor`` intervals."""
    factor = int(factor)
    if factor < 1:
        raise ValueError("refinement factor must be >= 1")
    if factor == 1:
        return path
    s = (np.arange(factor) / factor)[None, :, None]
    left = path.nodes[:-1, None, :]
    inc = path.increments[:, None, :]
    inner = (left + s * inc).reshape(-1, path.d)
    nodes = np.vstack([inner, path.nodes[-1:]])
    # keep old nodes bit-exact
    nodes[::factor] = path.nodes
    return GridPath(path.T, nodes)


def to_csv(path: GridPath) -> str:
    """One row per node with columns ``t, x1..xd``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t"] + [f"x{i + 1}" for i in range(path.d)])
    for t, row in zip(path.times, path.nodes):
        writer.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])
    return buf.getvalue()


def from_csv(text: str) -> GridPath:
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    return GridPath(data[-1, 0], data[:, 1:])
