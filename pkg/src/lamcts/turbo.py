"""Trust-region local optimizer (single trust region) confined to a region.

A local run seeds the region by rejection sampling, then loops: condition a
local GP, draw candidates in the ARD-weighted trust-region box intersected
with the region, pick one by a joint-posterior Thompson draw (or EI),
evaluate, and grow/shrink the box on streaks of successes/failures. The run
ends when the box side falls below its floor or the budget runs out, and
every evaluation it made is returned to the caller.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    Dataset,
    Evaluation,
    InfeasibleRegionError,
    Objective,
    evaluate,
)
from .gp import GpManager, GpModel, expected_improvement, posterior_sample, predict
from .sampling import SobolState, rejection_sample
from .tree import Region


@dataclass
class TurboConfig:
    """Trust-region constants; dimension-dependent defaults resolve lazily."""

    length_init: float = 0.8
    length_min: float = 2.0**-7
    length_max: float = 1.6
    tau_succ: int = 3
    tau_fail: Optional[int] = None  # default max(5, min(d, 30))
    n_init: int = 30
    n_candidates: Optional[int] = None  # default min(100 * d, 512)
    perturb_prob: Optional[float] = None  # default min(20 / d, 1)
    acquisition: str = "ts"  # "ts" (joint Thompson draw) or "ei"
    gp_window: int = 500
    refit_every: int = 20
    hyperfit_cap: int = 256
    warm_steps: int = 30

    def tau_fail_for(self, dim: int) -> int:
        return self.tau_fail if self.tau_fail is not None else max(5, min(dim, 30))

    def candidates_for(self, dim: int) -> int:
        return self.n_candidates if self.n_candidates is not None else min(100 * dim, 512)

    def perturb_for(self, dim: int) -> float:
        return self.perturb_prob if self.perturb_prob is not None else min(20.0 / dim, 1.0)


@dataclass
class TrustRegionState:
    """Mutable per-run state: box size, streak counters, local archive."""

    config: TurboConfig
    dim: int
    length: float
    success_count: int = 0
    failure_count: int = 0
    local_data: list[Evaluation] = field(default_factory=list)
    center: Optional[np.ndarray] = None
    _best_reward: float = -np.inf
    _sobol: Optional[SobolState] = None

    @property
    def active(self) -> bool:
        return self.length >= self.config.length_min

    @property
    def best_reward(self) -> float:
        return self._best_reward

    def absorb(self, ev: Evaluation) -> None:
        self.local_data.append(ev)
        if ev.reward > self._best_reward:
            self._best_reward = ev.reward
            self.center = ev.point


def tr_init(
    region: Region,
    objective: Objective,
    dataset: Dataset,
    n_init: int,
    rng: np.random.Generator,
    config: Optional[TurboConfig] = None,
) -> TrustRegionState:
    """Seed a fresh trust region with rejection-sampled points in the region.

    All evaluations are appended to the shared dataset. Raises
    InfeasibleRegionError when rejection sampling cannot produce the seeds.
    """
    config = config or TurboConfig()
    points = rejection_sample(region, n_init, max_tries=10_000 * n_init, rng=rng)
    state = TrustRegionState(config=config, dim=objective.dim, length=config.length_init)
    state._sobol = SobolState(objective.dim)
    for p in points:
        state.absorb(evaluate(objective, p, dataset))
    return state


def tr_box(state: TrustRegionState, model: GpModel) -> tuple[np.ndarray, np.ndarray]:
    """Trust-region box around the center, sides weighted by ARD lengthscales.

    Side lengths are L * ls_i / geomean(ls) in unit-cube coordinates; the box
    is clipped to the global bounds and returned in original coordinates.
    """
    ls = model.params.lengthscales
    weights = ls / np.exp(np.mean(np.log(ls)))
    center_unit = model.bounds.to_unit(state.center)
    half = 0.5 * state.length * weights
    lo = np.clip(center_unit - half, 0.0, 1.0)
    hi = np.clip(center_unit + half, 0.0, 1.0)
    return model.bounds.from_unit(lo), model.bounds.from_unit(hi)


def tr_propose(
    state: TrustRegionState,
    model: GpModel,
    region: Region,
    rng: np.random.Generator,
) -> np.ndarray:
    """Next point: best scored region-feasible candidate from the box.

    Candidates are Sobol points in the box combined with the center through a
    coordinate perturbation mask, filtered by region membership. If ten
    rounds of candidates all fall outside the region, falls back to the
    region-feasible local point nearest the box center (the center itself in
    the worst case, which is feasible by construction).
    """
    cfg = state.config
    d = state.dim
    lo, hi = tr_box(state, model)
    m = cfg.candidates_for(d)
    prob = cfg.perturb_for(d)
    cand = None
    for _ in range(10):
        pert = lo + state._sobol.next(m) * (hi - lo)
        if prob < 1.0:
            mask = rng.random((m, d)) <= prob
            bare = ~mask.any(axis=1)
            if bare.any():
                mask[np.nonzero(bare)[0], rng.integers(0, d, size=int(bare.sum()))] = True
            trial = np.broadcast_to(state.center, (m, d)).copy()
            trial[mask] = pert[mask]
        else:
            trial = pert
        keep = region.contains_batch(trial)
        if keep.any():
            cand = trial[keep]
            break
    if cand is None:
        box_center = 0.5 * (lo + hi)
        local = np.stack([e.point for e in state.local_data])
        return local[int(np.argmin(((local - box_center) ** 2).sum(axis=1)))].copy()
    if len(cand) == 1:
        return cand[0]
    if cfg.acquisition == "ei":
        mean, var = predict(model, cand)
        score = expected_improvement(mean, var, state.best_reward)
    else:
        score = posterior_sample(model, cand, rng)
    return cand[int(np.argmax(score))]


def tr_update(state: TrustRegionState, new_eval: Evaluation) -> TrustRegionState:
    """Fold in one evaluation: adjust streaks, rescale the box, recenter."""
    improved = new_eval.reward > state.best_reward
    state.absorb(new_eval)
    if improved:
        state.success_count += 1
        state.failure_count = 0
    else:
        state.failure_count += 1
        state.success_count = 0
    if state.success_count >= state.config.tau_succ:
        state.length = min(2.0 * state.length, state.config.length_max)
        state.success_count = 0
        state.failure_count = 0
    elif state.failure_count >= state.config.tau_fail_for(state.dim):
        state.length /= 2.0
        state.success_count = 0
        state.failure_count = 0
    return state


def _perturb_seed_fallback(
    region: Region,
    dataset: Dataset,
    n: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Cold-start seeds by jittering known in-region points (sigma 1e-3 span)."""
    pts = dataset.points()
    if len(pts) == 0:
        raise InfeasibleRegionError("no dataset points available to perturb")
    mask = region.contains_batch(pts)
    if not mask.any():
        raise InfeasibleRegionError("region contains no known points to perturb")
    base = pts[mask]
    sigma = 1e-3 * region.bounds.range
    out: list[np.ndarray] = []
    for _ in range(100 * n):
        if len(out) >= n:
            break
        b = base[int(rng.integers(0, len(base)))]
        p = region.bounds.clip(b + sigma * rng.standard_normal(len(sigma)))
        if region.contains(p):
            out.append(p)
    if not out:
        raise InfeasibleRegionError("perturbation seeding failed")
    return np.stack(out)


def run_local(
    region: Region,
    objective: Objective,
    dataset: Dataset,
    eval_budget: int,
    rng: np.random.Generator,
    config: Optional[TurboConfig] = None,
) -> list[Evaluation]:
    """One trust-region lifecycle inside ``region``.

    Runs until the trust region collapses or ``eval_budget`` evaluations have
    been spent; returns every evaluation made (all already in the dataset).
    If rejection sampling cannot seed the region, known in-region points are
    perturbed instead; with none available the error propagates to the
    caller.
    """
    if eval_budget < 1:
        return []
    config = config or TurboConfig()
    n0 = min(config.n_init, eval_budget)
    try:
        state = tr_init(region, objective, dataset, n0, rng, config)
    except InfeasibleRegionError:
        seeds = _perturb_seed_fallback(region, dataset, n0, rng)
        state = TrustRegionState(config=config, dim=objective.dim, length=config.length_init)
        state._sobol = SobolState(objective.dim)
        for p in seeds:
            state.absorb(evaluate(objective, p, dataset))
    evals = list(state.local_data)
    if len(evals) >= eval_budget or len(evals) < 2:
        return evals

    manager = GpManager(
        bounds=objective.bounds,
        rng=rng,
        window=config.gp_window,
        refit_every=config.refit_every,
        hyperfit_cap=config.hyperfit_cap,
        warm_steps=config.warm_steps,
    )
    while len(evals) < eval_budget and state.active:
        x_all = np.stack([e.point for e in state.local_data])
        y_all = np.array([e.reward for e in state.local_data])
        model = manager.update(x_all, y_all)
        x_next = tr_propose(state, model, region, rng)
        ev = evaluate(objective, x_next, dataset)
        evals.append(ev)
        tr_update(state, ev)
    return evals
