"""Experiment runner: seeded repeats, CSV traces, JSON summaries, comparisons.

Subcommands:
  run      execute one (objective, method) configuration over several seeds
  compare  tabulate median best values of several summaries per checkpoint
  verify   recompute a summary from its trace files and check it matches

Repeats run on a worker pool (capped by LAMCTS_THREADS); every repeat owns
its optimizer instance and trace files, so re-running a command reproduces
the output byte for byte.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass
from multiprocessing import Pool
from pathlib import Path

import numpy as np

from .core import ComparisonError, ConfigError
from .objectives import make_objective, objective_names
from .optimizer import LamctsConfig, RunTrace, optimize, run_baseline

METHODS = ("lamcts-turbo", "lamcts-bo", "turbo", "bo", "random")
CHECKPOINT_FRACTIONS = (0.10, 0.25, 0.50, 1.00)

EVAL_HEADER = "index,value,best_value"
ITER_HEADER = "iteration,tree_depth,num_splits,leaf_mean,leaf_size"


@dataclass
class ExperimentConfig:
    objective: str
    dim: int
    method: str
    budget: int
    repeats: int = 1
    seed: int = 0
    cp: float = 1.0
    theta: int = 20
    kernel: str = "rbf"
    svm_c: float = 1.0
    n_init: int = 30
    out: str = "results"

    def validate(self) -> None:
        if self.objective not in objective_names():
            raise ConfigError(
                f"unknown objective {self.objective!r}; valid: {', '.join(objective_names())}"
            )
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; valid: {', '.join(METHODS)}")
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if self.budget < 1:
            raise ConfigError("budget must be >= 1")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls(**json.loads(text))

    @property
    def tag(self) -> str:
        return f"{self.objective}-{self.dim}d_{self.method}"


def _execute(config: ExperimentConfig, seed: int) -> RunTrace:
    objective = make_objective(config.objective, config.dim)
    if config.method.startswith("lamcts-"):
        sampler = config.method.split("-", 1)[1]
        lc = LamctsConfig(
            eval_budget=config.budget,
            cp=config.cp,
            theta=config.theta,
            svm_kernel=config.kernel,
            svm_c=config.svm_c,
            sampler=sampler,
            n_init=config.n_init,
            seed=seed,
        )
        _, trace = optimize(objective, lc)
    else:
        which = {"turbo": "plain_turbo", "bo": "plain_bo", "random": "random"}[config.method]
        _, trace = run_baseline(objective, which, config.budget, seed, n_init=config.n_init)
    return trace


def _write_trace(trace: RunTrace, evals_path: Path, iters_path: Path) -> None:
    with open(evals_path, "w", newline="") as f:
        f.write(EVAL_HEADER + "\n")
        for idx, value, best in trace.eval_rows:
            f.write(f"{idx},{value!r},{best!r}\n")
    with open(iters_path, "w", newline="") as f:
        f.write(ITER_HEADER + "\n")
        for it, depth, splits, leaf_mean, leaf_size in trace.iter_rows:
            f.write(f"{it},{depth},{splits},{leaf_mean!r},{leaf_size}\n")


def _checkpoint_indices(budget: int) -> dict[str, int]:
    return {f"{frac:.2f}": max(1, math.ceil(frac * budget)) - 1 for frac in CHECKPOINT_FRACTIONS}


def _run_repeat(payload: tuple[dict, int]) -> dict:
    cfg_dict, seed = payload
    config = ExperimentConfig(**cfg_dict)
    trace = _execute(config, seed)
    out = Path(config.out)
    evals_path = out / f"{config.tag}_seed{seed}_evals.csv"
    iters_path = out / f"{config.tag}_seed{seed}_iters.csv"
    _write_trace(trace, evals_path, iters_path)
    best = trace.best_values()
    return {
        "seed": seed,
        "evals_file": evals_path.name,
        "iters_file": iters_path.name,
        "best_at": {k: float(best[i]) for k, i in _checkpoint_indices(config.budget).items()},
    }


def _summarize(config: ExperimentConfig, repeats: list[dict]) -> dict:
    checkpoints = {}
    for key in _checkpoint_indices(config.budget):
        vals = np.array([r["best_at"][key] for r in repeats])
        checkpoints[key] = {
            "median": float(np.median(vals)),
            "q25": float(np.percentile(vals, 25)),
            "q75": float(np.percentile(vals, 75)),
        }
    return {
        "config": asdict(config),
        "checkpoints": checkpoints,
        "per_seed": {str(r["seed"]): r["best_at"] for r in repeats},
        "files": {
            str(r["seed"]): {"evals": r["evals_file"], "iters": r["iters_file"]} for r in repeats
        },
    }


def _workers(repeats: int) -> int:
    cap = os.environ.get("LAMCTS_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(repeats, limit))


def cmd_run(args: argparse.Namespace) -> int:
    config = ExperimentConfig(
        objective=args.objective,
        dim=args.dim,
        method=args.method,
        budget=args.budget,
        repeats=args.repeats,
        seed=args.seed,
        cp=args.cp,
        theta=args.theta,
        kernel=args.kernel,
        svm_c=args.svm_c,
        n_init=args.n_init,
        out=args.out,
    )
    config.validate()
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    payloads = [(asdict(config), config.seed + r) for r in range(config.repeats)]
    workers = _workers(config.repeats)
    if workers > 1:
        with Pool(processes=workers) as pool:
            repeats = pool.map(_run_repeat, payloads)
    else:
        repeats = [_run_repeat(p) for p in payloads]
    summary = _summarize(config, repeats)
    summary_path = out / f"{config.tag}_summary.json"
    summary_path.write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    final = summary["checkpoints"]["1.00"]
    print(f"{config.tag}: {config.repeats} repeat(s) -> {summary_path}")
    print(f"  final best median={final['median']!r} iqr=[{final['q25']!r}, {final['q75']!r}]")
    return 0


def _load_summary(path: str) -> dict:
    with open(path) as f:
        return json.load(f)


def cmd_compare(args: argparse.Namespace) -> int:
    if len(args.summaries) < 2:
        raise ComparisonError("compare needs at least two summary files")
    summaries = [_load_summary(p) for p in args.summaries]
    ref = summaries[0]["config"]
    for s in summaries[1:]:
        c = s["config"]
        if (c["objective"], c["dim"], c["budget"]) != (ref["objective"], ref["dim"], ref["budget"]):
            raise ComparisonError(
                "summaries are not comparable: objective/dim/budget mismatch "
                f"({c['objective']}-{c['dim']}d @{c['budget']} vs {ref['objective']}-{ref['dim']}d @{ref['budget']})"
            )
    keys = sorted(summaries[0]["checkpoints"], key=float)
    print(f"objective={ref['objective']}-{ref['dim']}d budget={ref['budget']}")
    header = "method".ljust(16) + "".join(k.rjust(14) for k in keys)
    print(header)
    rows = []
    for s in summaries:
        med = {k: s["checkpoints"][k]["median"] for k in keys}
        rows.append((s["config"]["method"], med))
        print(s["config"]["method"].ljust(16) + "".join(f"{med[k]:14.6g}" for k in keys))
    final_key = keys[-1]
    order = sorted(rows, key=lambda r: r[1][final_key])
    parts = [order[0][0]]
    for prev, cur in zip(order, order[1:]):
        sep = " = " if cur[1][final_key] == prev[1][final_key] else " < "
        parts.append(sep + cur[0])
    print("ordering @final (best value, lower is better): " + "".join(parts))
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    summary = _load_summary(args.summary)
    base = Path(args.summary).parent
    budget = summary["config"]["budget"]
    idx = _checkpoint_indices(budget)
    ok = True
    best_at: dict[str, list[float]] = {k: [] for k in idx}
    for seed, files in sorted(summary["files"].items(), key=lambda kv: int(kv[0])):
        data = np.genfromtxt(base / files["evals"], delimiter=",", names=True)
        if data.size != budget:
            print(f"FAIL seed {seed}: {data.size} rows, expected {budget}")
            ok = False
            continue
        value = np.atleast_1d(data["value"])
        best = np.atleast_1d(data["best_value"])
        if not np.array_equal(np.minimum.accumulate(value), best):
            print(f"FAIL seed {seed}: best_value column is not the running minimum")
            ok = False
        for k, i in idx.items():
            best_at[k].append(float(best[i]))
    for k in sorted(idx, key=float):
        stored = summary["checkpoints"][k]
        recomputed = {
            "median": float(np.median(best_at[k])),
            "q25": float(np.percentile(best_at[k], 25)),
            "q75": float(np.percentile(best_at[k], 75)),
        }
        if any(abs(stored[f] - recomputed[f]) > 1e-12 for f in recomputed):
            print(f"FAIL checkpoint {k}: stored {stored} != recomputed {recomputed}")
            ok = False
        else:
            print(f"OK checkpoint {k}: median={stored['median']!r}")
    print("verify: PASS" if ok else "verify: FAIL")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lamcts", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one configuration over seeded repeats")
    p_run.add_argument("--objective", required=True, help=f"one of: {', '.join(objective_names())}")
    p_run.add_argument("--dim", type=int, default=20)
    p_run.add_argument("--method", required=True, help=f"one of: {', '.join(METHODS)}")
    p_run.add_argument("--budget", type=int, required=True)
    p_run.add_argument("--repeats", type=int, default=1)
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--cp", type=float, default=1.0)
    p_run.add_argument("--theta", type=int, default=20)
    p_run.add_argument("--kernel", choices=["linear", "poly", "rbf"], default="rbf")
    p_run.add_argument("--svm-c", type=float, default=1.0)
    p_run.add_argument("--n-init", type=int, default=30)
    p_run.add_argument("--out", default="results")
    p_run.set_defaults(fn=cmd_run)

    p_cmp = sub.add_parser("compare", help="compare summaries of the same objective/budget")
    p_cmp.add_argument("summaries", nargs="+")
    p_cmp.set_defaults(fn=cmd_compare)

    p_ver = sub.add_parser("verify", help="recompute a summary from its trace files")
    p_ver.add_argument("summary")
    p_ver.set_defaults(fn=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ComparisonError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
