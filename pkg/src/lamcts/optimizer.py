"""Meta-algorithm outer loop: build tree, select a region by UCB, sample it.

Each outer iteration rebuilds the partition tree over everything evaluated so
far, walks it by UCB to pick a leaf region, and hands that region to a local
sampler (a trust-region run, expected-improvement steps on a local GP, or
plain rejection sampling). All evaluations flow back into the shared dataset,
refining the learned boundaries on the next rebuild. Plain single-solver
baselines over the whole box live here too.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .core import (
    ConfigError,
    Dataset,
    Evaluation,
    InfeasibleRegionError,
    Objective,
    RngFactory,
    StateError,
    best_so_far,
    evaluate,
)
from .gp import GpManager, append_observation as gp_append, fit as gp_fit
from .sampling import ExpansionConfig, optimize_acquisition, rejection_sample
from .tree import PartitionTree, Region, TreeConfig, build_tree, select_path
from .turbo import TurboConfig, run_local

SAMPLERS = ("turbo", "bo", "random")


@dataclass
class LamctsConfig:
    """Knobs for one optimizer run.

    ``cp`` scales UCB exploration (0 means pure greedy descent; useful values
    are typically 1% to 10% of the objective's magnitude). ``theta`` is the
    leaf size above which a node is split. The turbo sampler runs each
    selected region until its trust region collapses, capped at
    ``turbo_iteration_cap`` evaluations per outer iteration; bo and random
    spend ``local_budget_per_iteration`` evaluations between tree rebuilds.
    """

    eval_budget: int
    cp: float = 1.0
    theta: int = 20
    svm_kernel: str = "rbf"
    svm_c: float = 1.0
    sampler: str = "turbo"
    n_init: int = 30
    local_budget_per_iteration: int = 10
    turbo_iteration_cap: int = 300
    seed: int = 0
    turbo: TurboConfig = field(default_factory=TurboConfig)
    expansion: ExpansionConfig = field(default_factory=ExpansionConfig)
    bo_min_points: int = 5
    bo_window: int = 300

    def validate(self) -> None:
        if self.theta < 2:
            raise ConfigError("theta must be >= 2")
        if self.cp < 0.0:
            raise ConfigError("cp must be >= 0")
        if self.eval_budget < self.n_init:
            raise ConfigError("eval_budget must be >= n_init")
        if self.sampler not in SAMPLERS:
            raise ConfigError(f"sampler must be one of {SAMPLERS}")


@dataclass
class RunTrace:
    """Per-evaluation and per-iteration records of one run.

    eval_rows: (index, value, best_value) — best_value is monotone
    (non-increasing under minimization).
    iter_rows: (iteration, tree_depth, num_splits, leaf_mean, leaf_size) —
    leaf_mean is the selected leaf's mean objective value, for regret plots.
    """

    eval_rows: list[tuple[int, float, float]] = field(default_factory=list)
    iter_rows: list[tuple[int, int, int, float, int]] = field(default_factory=list)

    def record_evals(self, dataset: Dataset, objective: Objective, start: int) -> None:
        best_reward = -np.inf if not self.eval_rows else objective.reward_of(self.eval_rows[-1][2])
        for ev in dataset.evals[start:]:
            if ev.reward > best_reward:
                best_reward = ev.reward
            self.eval_rows.append((ev.index, ev.value, objective.value_of(best_reward)))

    def best_values(self) -> np.ndarray:
        return np.array([row[2] for row in self.eval_rows])


def _dispatch_sampler(
    config: LamctsConfig,
    region: Region,
    objective: Objective,
    dataset: Dataset,
    rngs: RngFactory,
) -> None:
    remaining = config.eval_budget - len(dataset)
    if remaining <= 0:
        return
    if config.sampler == "turbo":
        run_local(
            region,
            objective,
            dataset,
            min(remaining, config.turbo_iteration_cap),
            rngs.get("turbo"),
            config.turbo,
        )
    elif config.sampler == "random":
        k = min(config.local_budget_per_iteration, remaining)
        points = rejection_sample(region, k, max_tries=10_000 * k, rng=rngs.get("random-sampler"))
        for p in points:
            evaluate(objective, p, dataset)
    else:  # bo
        k = min(config.local_budget_per_iteration, remaining)
        gp_rng = rngs.get("bo-gp")
        acq_rng = rngs.get("bo-acq")
        pts = dataset.points()
        rewards = dataset.rewards()
        mask = region.contains_batch(pts)
        idx = np.nonzero(mask)[0]
        if len(idx) == 0:
            idx = np.arange(len(pts))
        elif len(idx) < config.bo_min_points:
            # pad with the nearest outside points so the GP has support
            inside = pts[idx]
            out_idx = np.nonzero(~mask)[0]
            d2 = ((pts[out_idx][:, None, :] - inside[None, :, :]) ** 2).sum(axis=2).min(axis=1)
            extra = out_idx[np.argsort(d2, kind="stable")][: config.bo_min_points - len(idx)]
            idx = np.concatenate([idx, extra])
        w = config.bo_window
        x_local = [pts[i] for i in idx]
        y_local = [float(rewards[i]) for i in idx]
        model = gp_fit(np.stack(x_local[-w:]), np.array(y_local[-w:]), objective.bounds, gp_rng)
        for _ in range(k):
            x_next = optimize_acquisition(model, region, dataset, config.expansion, acq_rng)
            ev = evaluate(objective, x_next, dataset)
            model = gp_append(model, ev.point, ev.reward)


def optimize(objective: Objective, config: LamctsConfig) -> tuple[Evaluation, RunTrace]:
    """Run the full meta-algorithm and return (best evaluation, trace).

    Identical (objective, config, seed) runs produce bit-identical traces.
    If a selected region cannot be sampled, its sibling region is tried once,
    then the bounds-only region; a failure even there aborts the run.
    """
    config.validate()
    rngs = RngFactory(config.seed)
    dataset = Dataset(bounds=objective.bounds)
    trace = RunTrace()

    n0 = min(config.n_init, config.eval_budget)
    for p in objective.bounds.sample_uniform(rngs.get("init"), n0):
        evaluate(objective, p, dataset)
    trace.record_evals(dataset, objective, 0)

    iteration = 0
    while len(dataset) < config.eval_budget:
        tree = build_tree(
            dataset,
            TreeConfig(theta=config.theta, cp=config.cp, svm_kernel=config.svm_kernel, svm_c=config.svm_c),
        )
        leaf_id, region = select_path(tree)
        leaf = tree.nodes[leaf_id]
        trace.iter_rows.append(
            (iteration, tree.depth, tree.num_splits, objective.value_of(leaf.mean_reward), leaf.n)
        )
        start = len(dataset)
        candidates: list[Region] = [region]
        sibling = tree.sibling_of(leaf_id)
        if sibling is not None:
            candidates.append(tree.region_of(sibling))
        candidates.append(Region(bounds=objective.bounds))
        for attempt, reg in enumerate(candidates):
            try:
                _dispatch_sampler(config, reg, objective, dataset, rngs)
                break
            except InfeasibleRegionError:
                if attempt == len(candidates) - 1:
                    raise StateError("no sampleable region, even unconstrained") from None
        trace.record_evals(dataset, objective, start)
        iteration += 1
    return best_so_far(dataset), trace


def regret_trace(trace: RunTrace, v_star: float) -> list[tuple[int, float]]:
    """Per-iteration (num_splits, |selected leaf mean value - v_star|) pairs."""
    if not trace.eval_rows:
        raise StateError("empty trace")
    return [(row[2], abs(row[3] - v_star)) for row in trace.iter_rows]


def run_baseline(
    objective: Objective,
    which: str,
    budget: int,
    seed: int,
    turbo_config: Optional[TurboConfig] = None,
    expansion: Optional[ExpansionConfig] = None,
    n_init: int = 30,
    bo_window: int = 300,
) -> tuple[Evaluation, RunTrace]:
    """Single-solver baselines over the whole box: random, plain_turbo, plain_bo.

    plain_turbo restarts from scratch (fresh uniform seeds) every time its
    trust region collapses; plain_bo is GP + expected improvement with
    expansion anchors drawn from the full archive.
    """
    if budget < 1:
        raise ConfigError("budget must be >= 1")
    rngs = RngFactory(seed)
    dataset = Dataset(bounds=objective.bounds)
    trace = RunTrace()
    bounds_region = Region(bounds=objective.bounds)

    if which == "random":
        for p in objective.bounds.sample_uniform(rngs.get("random"), budget):
            evaluate(objective, p, dataset)
        trace.record_evals(dataset, objective, 0)
    elif which == "plain_turbo":
        cfg = turbo_config or TurboConfig()
        while len(dataset) < budget:
            start = len(dataset)
            run_local(bounds_region, objective, dataset, budget - start, rngs.get("turbo"), cfg)
            trace.record_evals(dataset, objective, start)
    elif which == "plain_bo":
        cfg = expansion or ExpansionConfig()
        tcfg = turbo_config or TurboConfig()
        gp_rng = rngs.get("bo-gp")
        acq_rng = rngs.get("bo-acq")
        n0 = min(n_init, budget)
        for p in objective.bounds.sample_uniform(rngs.get("init"), n0):
            evaluate(objective, p, dataset)
        manager = GpManager(
            bounds=objective.bounds,
            rng=gp_rng,
            window=bo_window,
            refit_every=10,
            hyperfit_cap=tcfg.hyperfit_cap,
            warm_steps=tcfg.warm_steps,
        )
        while len(dataset) < budget:
            model = manager.update(dataset.points(), dataset.rewards())
            x_next = optimize_acquisition(model, bounds_region, dataset, cfg, acq_rng)
            evaluate(objective, x_next, dataset)
        trace.record_evals(dataset, objective, 0)
    else:
        raise ConfigError(f"unknown baseline {which!r}")
    return best_so_far(dataset), trace
