"""Synthetic minimization benchmarks: ackley, rosenbrock, rastrigin, levy.

Standard definitions with the usual benchmark boxes: ackley [-5, 10]^d,
rosenbrock [-10, 10]^d, rastrigin [-5.12, 5.12]^d, levy [-10, 10]^d.
"""

from __future__ import annotations

import numpy as np

from .core import Bounds, ConfigError, DomainError, Objective


def ackley(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    out = (
        -20.0 * np.exp(-0.2 * np.sqrt(np.mean(x**2)))
        - np.exp(np.mean(np.cos(2.0 * np.pi * x)))
        + 20.0
        + np.e
    )
    return float(out)


def rosenbrock(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise DomainError("rosenbrock needs dim >= 2")
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))


def rastrigin(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    return float(10.0 * x.size + np.sum(x**2 - 10.0 * np.cos(2.0 * np.pi * x)))


def levy(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    w = 1.0 + (x - 1.0) / 4.0
    head = np.sin(np.pi * w[0]) ** 2
    tail = (w[-1] - 1.0) ** 2 * (1.0 + np.sin(2.0 * np.pi * w[-1]) ** 2)
    mid = 0.0
    if x.size > 1:
        wi = w[:-1]
        mid = np.sum((wi - 1.0) ** 2 * (1.0 + 10.0 * np.sin(np.pi * wi + 1.0) ** 2))
    return float(head + mid + tail)


# function, default (lower, upper), minimum dimension
_REGISTRY = {
    "ackley": (ackley, (-5.0, 10.0), 1),
    "rosenbrock": (rosenbrock, (-10.0, 10.0), 2),
    "rastrigin": (rastrigin, (-5.12, 5.12), 1),
    "levy": (levy, (-10.0, 10.0), 1),
}


def objective_names() -> list[str]:
    return sorted(_REGISTRY)


def default_bounds(name: str, dim: int) -> Bounds:
    if name not in _REGISTRY:
        raise ConfigError(f"unknown objective {name!r}; valid: {', '.join(objective_names())}")
    lo, hi = _REGISTRY[name][1]
    return Bounds(np.full(dim, lo), np.full(dim, hi))


def make_objective(name: str, dim: int, bounds: Bounds | None = None) -> Objective:
    """Build a named benchmark objective at the given dimensionality."""
    if name not in _REGISTRY:
        raise ConfigError(f"unknown objective {name!r}; valid: {', '.join(objective_names())}")
    fn, _, min_dim = _REGISTRY[name]
    if dim < min_dim:
        raise ConfigError(f"{name} requires dim >= {min_dim}")
    if bounds is None:
        bounds = default_bounds(name, dim)
    if bounds.dim != dim:
        raise ConfigError("bounds dimension mismatch")
    return Objective(fn=fn, bounds=bounds, name=f"{name}-{dim}d", mode="minimize")
