"""Samplers for learned regions: Sobol sequence, rejection sampling, and the
rectangle-expansion heuristic for optimizing an acquisition inside a region.

Rectangle expansion grows a tiny box around each in-region anchor, fills it
with Sobol points, and rescales box and points together until more than a set
fraction of the points leaves the region (or the box swallows the bounds);
the surviving in-region points become acquisition candidates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _sobol_table
from .core import ConfigError, InfeasibleRegionError, rng_stream
from .gp import GpModel, expected_improvement, predict
from .tree import Region

SOBOL_BITS = 32
_SOBOL_SCALE = float(2**SOBOL_BITS)
_DIRECTION_CACHE: dict[int, np.ndarray] = {}


class SobolState:
    """Unscrambled Sobol sequence in Gray-code order (zero point skipped).

    Direction numbers come from the bundled Joe-Kuo table; dimensions up to
    ``_sobol_table.MAX_DIM`` are supported. Two states with the same dim
    always produce identical streams.
    """

    def __init__(self, dim: int):
        if not 1 <= dim <= _sobol_table.MAX_DIM:
            raise ConfigError(f"Sobol table covers dims 1..{_sobol_table.MAX_DIM}, got {dim}")
        self.dim = dim
        self.index = 0
        self._x = np.zeros(dim, dtype=np.uint64)
        if dim not in _DIRECTION_CACHE:
            _DIRECTION_CACHE[dim] = self._direction_numbers(dim)
        self._v = _DIRECTION_CACHE[dim]

    @staticmethod
    def _direction_numbers(dim: int) -> np.ndarray:
        v = np.zeros((dim, SOBOL_BITS), dtype=np.uint64)
        v[0] = [1 << (SOBOL_BITS - k - 1) for k in range(SOBOL_BITS)]
        for j in range(1, dim):
            poly = _sobol_table.POLY[j]
            s = poly.bit_length() - 1
            a = (poly ^ (1 << s)) >> 1  # inner coefficient bits
            m = list(_sobol_table.M_INIT[j])
            for k in range(s, SOBOL_BITS):
                new = m[k - s] ^ (m[k - s] << s)
                for i in range(1, s):
                    if (a >> (s - 1 - i)) & 1:
                        new ^= m[k - i] << i
                m.append(new)
            for k in range(SOBOL_BITS):
                v[j, k] = m[k] << (SOBOL_BITS - k - 1)
        return v

    def next(self, n: int) -> np.ndarray:
        """The next ``n`` points of the sequence, shape (n, dim), in [0, 1)."""
        out = np.empty((n, self.dim))
        for row in range(n):
            # rightmost zero bit of the current index drives the Gray-code step
            c = ((self.index + 1) & ~self.index).bit_length() - 1
            self._x ^= self._v[:, c]
            self.index += 1
            out[row] = self._x / _SOBOL_SCALE
        return out


def sobol_next(state: SobolState, n: int) -> np.ndarray:
    return state.next(n)


# --------------------------------------------------------------------------- #
# Rejection sampling
# --------------------------------------------------------------------------- #


def rejection_sample(
    region: Region,
    n: int,
    max_tries: int,
    rng: np.random.Generator,
    batch: int = 2048,
) -> np.ndarray:
    """Uniform draws in the bounds, kept iff the region accepts them.

    Stops at ``n`` accepted points; raises InfeasibleRegionError (carrying the
    partial set) if ``max_tries`` total draws are exhausted first.
    """
    if n < 1:
        raise ConfigError("need n >= 1")
    accepted: list[np.ndarray] = []
    count = 0
    tries = 0
    while count < n and tries < max_tries:
        m = min(batch, max_tries - tries)
        cand = region.bounds.sample_uniform(rng, m)
        tries += m
        keep = cand[region.contains_batch(cand)]
        if len(keep):
            accepted.append(keep)
            count += len(keep)
    points = np.vstack(accepted)[:n] if accepted else np.empty((0, region.bounds.dim))
    if count < n:
        raise InfeasibleRegionError(
            f"accepted {count}/{n} points after {tries} draws", accepted=points
        )
    return points


# --------------------------------------------------------------------------- #
# Rectangle expansion
# --------------------------------------------------------------------------- #


@dataclass
class ExpansionConfig:
    delta: float = 1e-4
    outside_fraction: float = 0.10
    growth_factor: float = 1.5
    samples_per_anchor: int = 64
    max_rounds: int = 50
    max_anchors: int = 20  # acquisition anchors kept (best rewards first)

    def __post_init__(self):
        if not 0.0 < self.outside_fraction < 1.0:
            raise ConfigError("outside_fraction must be in (0, 1)")
        if self.growth_factor <= 1.0:
            raise ConfigError("growth_factor must exceed 1")


def _certified_inside(region: Region, anchors: np.ndarray, radius: float, margins: np.ndarray) -> np.ndarray:
    """Constraints certifiably satisfied across a whole box: |margin| > Lip * radius.

    ``margins`` is (n_anchors, n_constraints) of decision values at the
    anchors. Returns a bool array of the same shape; True entries need no
    per-point evaluation because the anchor's margin outruns the maximal
    decision change over the box.
    """
    out = np.zeros(margins.shape, dtype=bool)
    domain_radius = float(np.linalg.norm(np.maximum(np.abs(region.bounds.lower), np.abs(region.bounds.upper))))
    for ci, (action, _) in enumerate(region.constraints):
        lip = action.model.lipschitz_bound(domain_radius)
        out[:, ci] = np.abs(margins[:, ci]) > lip * radius
    return out


def expand_and_sample(
    region: Region,
    anchors: np.ndarray,
    cfg: ExpansionConfig,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Candidate points inside ``region`` grown from the given anchors.

    Every anchor must already satisfy the region. All anchors expand in
    lockstep; each keeps the in-region points of the rectangle it last
    reached. The same Sobol block is re-mapped every round, so results are
    a pure function of (region, anchors, cfg).
    """
    anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
    if len(anchors) == 0:
        return np.empty((0, region.bounds.dim))
    inside = region.contains_batch(anchors)
    if not inside.all():
        raise ConfigError("every anchor must satisfy the region")
    d = region.bounds.dim
    lower, upper = region.bounds.lower, region.bounds.upper
    span = region.bounds.range

    sobol = SobolState(d)
    unit = np.stack([sobol.next(cfg.samples_per_anchor) for _ in range(len(anchors))])  # (A, S, d)

    # decision values at the anchors let the Lipschitz test skip whole boxes
    margins = np.empty((len(anchors), len(region.constraints)))
    for ci, (action, _) in enumerate(region.constraints):
        margins[:, ci] = action.model.decision_function(anchors)

    kept: list[np.ndarray] = []
    active = np.arange(len(anchors))
    ext0 = cfg.delta * span
    for rounds in range(cfg.max_rounds):
        ext = ext0 * cfg.growth_factor**rounds
        anc = anchors[active]
        lo = np.maximum(anc - ext, lower)
        hi = np.minimum(anc + ext, upper)
        pts = lo[:, None, :] + unit[active] * (hi - lo)[:, None, :]  # (a, S, d)
        covers = ((anc - ext) <= lower).all(axis=1) & ((anc + ext) >= upper).all(axis=1)

        flat = pts.reshape(-1, d)
        ok = np.ones(len(flat), dtype=bool)
        if region.constraints:
            radius = float(np.linalg.norm(ext))
            cert = _certified_inside(region, anc, radius, margins[active])
            for ci, (action, want_good) in enumerate(region.constraints):
                need = ~cert[:, ci]
                if not need.any():
                    continue
                sel = np.repeat(need, cfg.samples_per_anchor) & ok
                if not sel.any():
                    continue
                good = action.classify_batch(flat[sel])
                ok[np.nonzero(sel)[0][good != want_good]] = False

        inside_mask = ok.reshape(len(active), cfg.samples_per_anchor)
        frac_outside = 1.0 - inside_mask.mean(axis=1)
        stop = (frac_outside > cfg.outside_fraction) | covers | (rounds == cfg.max_rounds - 1)
        for a_local in np.nonzero(stop)[0]:
            kept.append(pts[a_local][inside_mask[a_local]])
        active = active[~stop]
        if len(active) == 0:
            break
    if not kept:
        return np.empty((0, d))
    return np.vstack(kept)


def optimize_acquisition(
    model: GpModel,
    region: Region,
    dataset,
    cfg: ExpansionConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Point maximizing expected improvement over expansion candidates.

    Anchors are the dataset points inside the region (capped at
    ``cfg.max_anchors``, best rewards first); when the region holds no data,
    anchors come from rejection sampling. Raises InfeasibleRegionError if no
    candidate can be produced.
    """
    pts = dataset.points()
    rewards = dataset.rewards()
    mask = region.contains_batch(pts) if len(pts) else np.zeros(0, dtype=bool)
    if mask.any():
        idx = np.nonzero(mask)[0]
        order = idx[np.argsort(-rewards[idx], kind="stable")]
        anchors = pts[order[: cfg.max_anchors]]
        best_reward = float(rewards[idx].max())
    else:
        k = min(cfg.max_anchors, 5)
        anchors = rejection_sample(region, k, max_tries=10_000 * k, rng=rng)
        best_reward = float(rewards.max()) if len(rewards) else 0.0
    cands = expand_and_sample(region, anchors, cfg, rng)
    if len(cands) == 0:
        raise InfeasibleRegionError("rectangle expansion produced no in-region candidates")
    mean, var = predict(model, cands)
    ei = expected_improvement(mean, var, best_reward)
    return cands[int(np.argmax(ei))]
