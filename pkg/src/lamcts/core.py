"""Core domain types: bounds, evaluations, datasets, objectives, RNG streams.

The optimizer maximizes an internal *reward*; minimization problems are mapped
to reward space by negating the objective value. All randomness is drawn from
named streams derived from a single master seed so that runs replay exactly.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


# --------------------------------------------------------------------------- #
# Errors
# --------------------------------------------------------------------------- #


class DomainError(ValueError):
    """A point violates the search-space bounds or has the wrong shape."""


class EvaluationError(RuntimeError):
    """The objective returned a non-finite value."""


class StateError(RuntimeError):
    """An operation was called on an object in an unusable state."""


class ConfigError(ValueError):
    """Invalid configuration value."""


class SplitDegenerateError(RuntimeError):
    """A node's samples cannot be split into two non-empty regions."""


class InfeasibleRegionError(RuntimeError):
    """Sampling inside a region failed within the allotted tries.

    ``accepted`` carries whatever points were accepted before giving up.
    """

    def __init__(self, message: str, accepted: Optional[np.ndarray] = None):
        super().__init__(message)
        self.accepted = accepted if accepted is not None else np.empty((0, 0))


class NumericalError(RuntimeError):
    """A linear-algebra routine failed beyond recoverable jitter."""


class ComparisonError(ValueError):
    """Summaries are not comparable (mismatched objective or budget)."""


# --------------------------------------------------------------------------- #
# RNG streams
# --------------------------------------------------------------------------- #


def rng_stream(seed: int, tag: str, counter: int = 0) -> np.random.Generator:
    """Deterministic generator for component ``tag``, call ``counter``.

    Every stochastic component draws from its own stream derived from
    (master seed, tag, counter), so adding draws in one component never
    perturbs another.
    """
    key = zlib.crc32(tag.encode("utf-8"))
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(key, int(counter)))
    return np.random.default_rng(ss)


class RngFactory:
    """Hands out per-tag streams, bumping a call counter per tag."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._counters: dict[str, int] = {}

    def get(self, tag: str) -> np.random.Generator:
        c = self._counters.get(tag, 0)
        self._counters[tag] = c + 1
        return rng_stream(self.seed, tag, c)


# --------------------------------------------------------------------------- #
# Bounds and points
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class Bounds:
    """Axis-aligned box constraints, one (lower, upper) pair per dimension."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if lo.ndim != 1 or hi.ndim != 1 or lo.shape != hi.shape:
            raise ConfigError("lower/upper must be 1-d arrays of equal length")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ConfigError("bounds must be finite")
        if not (lo < hi).all():
            raise ConfigError("need lower[i] < upper[i] in every dimension")

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def range(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(x.shape == self.lower.shape and (x >= self.lower).all() and (x <= self.upper).all())

    def contains_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return (x >= self.lower).all(axis=1) & (x <= self.upper).all(axis=1)

    def sample_uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        u = rng.random((n, self.dim))
        return self.lower + u * self.range

    def to_unit(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.lower) / self.range

    def from_unit(self, u: np.ndarray) -> np.ndarray:
        return self.lower + np.asarray(u, dtype=float) * self.range

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)


@dataclass
class Evaluation:
    """One objective evaluation: raw value plus its reward-space image."""

    point: np.ndarray
    value: float
    reward: float
    index: int


# --------------------------------------------------------------------------- #
# Objective and dataset
# --------------------------------------------------------------------------- #


@dataclass
class Objective:
    """A deterministic scalar function over a box, with a min/max mode."""

    fn: Callable[[np.ndarray], float]
    bounds: Bounds
    name: str = "objective"
    mode: str = "minimize"

    def __post_init__(self):
        if self.mode not in ("minimize", "maximize"):
            raise ConfigError(f"unknown mode {self.mode!r}")

    @property
    def dim(self) -> int:
        return self.bounds.dim

    def __call__(self, x: np.ndarray) -> float:
        return float(self.fn(np.asarray(x, dtype=float)))

    def reward_of(self, value: float) -> float:
        return -value if self.mode == "minimize" else value

    def value_of(self, reward: float) -> float:
        return -reward if self.mode == "minimize" else reward


@dataclass
class Dataset:
    """Ordered archive of evaluations over a common search box."""

    bounds: Bounds
    evals: list[Evaluation] = field(default_factory=list)

    def __post_init__(self):
        self._best: Optional[Evaluation] = None
        for e in self.evals:
            if self._best is None or e.reward > self._best.reward:
                self._best = e
        self._points_cache: Optional[np.ndarray] = None
        self._rewards_cache: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.evals)

    def append(self, ev: Evaluation) -> None:
        if ev.index != len(self.evals):
            raise StateError(f"expected index {len(self.evals)}, got {ev.index}")
        self.evals.append(ev)
        if self._best is None or ev.reward > self._best.reward:
            self._best = ev
        self._points_cache = None
        self._rewards_cache = None

    def points(self) -> np.ndarray:
        """All evaluated points as an (n, d) array."""
        if self._points_cache is None or len(self._points_cache) != len(self.evals):
            self._points_cache = (
                np.stack([e.point for e in self.evals]) if self.evals else np.empty((0, self.bounds.dim))
            )
        return self._points_cache

    def rewards(self) -> np.ndarray:
        if self._rewards_cache is None or len(self._rewards_cache) != len(self.evals):
            self._rewards_cache = np.array([e.reward for e in self.evals], dtype=float)
        return self._rewards_cache

    def values(self) -> np.ndarray:
        return np.array([e.value for e in self.evals], dtype=float)


def evaluate(objective: Objective, point: np.ndarray, dataset: Dataset) -> Evaluation:
    """Evaluate ``objective`` at ``point`` and append the result to ``dataset``."""
    x = np.asarray(point, dtype=float).copy()
    if x.shape != (objective.dim,):
        raise DomainError(f"point has shape {x.shape}, expected ({objective.dim},)")
    if not np.isfinite(x).all():
        raise DomainError("point has non-finite coordinates")
    if not objective.bounds.contains(x):
        raise DomainError(f"point {x} outside bounds of {objective.name}")
    value = objective(x)
    if not np.isfinite(value):
        raise EvaluationError(f"{objective.name} returned non-finite value {value} at {x}")
    ev = Evaluation(point=x, value=value, reward=objective.reward_of(value), index=len(dataset))
    dataset.append(ev)
    return ev


def best_so_far(dataset: Dataset) -> Evaluation:
    """Evaluation with maximal reward; ties go to the earliest index."""
    if not dataset.evals:
        raise StateError("best_so_far on empty dataset")
    return dataset._best
