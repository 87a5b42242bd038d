"""Latent actions: split a set of evaluated points into a good and a bad region.

Pipeline per node: (1) 2-means clustering on standardized [x, reward] features
labels each sample good or bad (the cluster with the higher mean reward is
good); (2) a soft-margin SVM trained on (x, label) generalizes the split to
the whole region. The SVM boundary is the latent action; the children's
sample sets are re-derived from the SVM's own predictions so node statistics
describe exactly what the classifier routes to each side.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from .core import ConfigError, Evaluation, SplitDegenerateError

# exhaustive 2-partition search below this size; Lloyd's algorithm above
_EXACT_KMEANS_MAX = 16
_LLOYD_MAX_ITER = 100
_ALPHA_ZERO = 0.0  # alphas are pruned only when exactly untouched


# --------------------------------------------------------------------------- #
# Feature scaling
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class FeatureScaler:
    """Column-wise z-scoring; constant columns get unit scale."""

    mean: np.ndarray
    std: np.ndarray

    def transform(self, f: np.ndarray) -> np.ndarray:
        return (f - self.mean) / self.std


def fit_feature_scaler(features: np.ndarray) -> FeatureScaler:
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    std = np.where(std > 0.0, std, 1.0)
    return FeatureScaler(mean=mean, std=std)


# --------------------------------------------------------------------------- #
# 2-means clustering on [x, reward]
# --------------------------------------------------------------------------- #


@dataclass
class ClusterLabels:
    """Good/bad assignment per sample plus the cluster mean rewards."""

    good_mask: np.ndarray  # bool, True = good cluster
    good_mean_reward: float
    bad_mean_reward: float


def _sse(features: np.ndarray, mask: np.ndarray) -> float:
    a = features[mask]
    b = features[~mask]
    return float(((a - a.mean(axis=0)) ** 2).sum() + ((b - b.mean(axis=0)) ** 2).sum())


def _exact_two_partition(features: np.ndarray) -> np.ndarray:
    """SSE-optimal 2-partition by enumeration (small n only)."""
    n = len(features)
    best_mask, best = None, np.inf
    # fix sample 0 in cluster A to halve the enumeration
    for k in range(0, n - 1):
        for rest in combinations(range(1, n), k):
            mask = np.zeros(n, dtype=bool)
            mask[0] = True
            mask[list(rest)] = True
            s = _sse(features, mask)
            if s < best - 1e-15:
                best, best_mask = s, mask
    return best_mask


def _lloyd_two_partition(features: np.ndarray) -> np.ndarray:
    """Lloyd's k=2 with deterministic farthest-pair initialization."""
    sq = (features**2).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * features @ features.T
    i, j = np.unravel_index(np.argmax(d2), d2.shape)
    centers = features[[min(i, j), max(i, j)]].copy()
    assign = None
    for _ in range(_LLOYD_MAX_ITER):
        da = ((features - centers[0]) ** 2).sum(axis=1)
        db = ((features - centers[1]) ** 2).sum(axis=1)
        new_assign = da <= db  # ties go to cluster A
        if new_assign.all():  # keep both clusters populated
            new_assign[np.argmax(da)] = False
        elif not new_assign.any():
            new_assign[np.argmax(db)] = True
        if assign is not None and (new_assign == assign).all():
            break
        assign = new_assign
        centers[0] = features[assign].mean(axis=0)
        centers[1] = features[~assign].mean(axis=0)
    return assign


def kmeans2(samples: Sequence[Evaluation], rng: Optional[np.random.Generator] = None) -> ClusterLabels:
    """Two-cluster split of samples on standardized [x, reward] features.

    Initialization is deterministic (farthest standardized pair), so ``rng``
    is accepted only for interface symmetry. For tiny sample sets the
    SSE-optimal partition is found by enumeration, which coincides with the
    best-case Lloyd fixed point. Raises SplitDegenerateError when every
    feature vector is identical.
    """
    if len(samples) < 2:
        raise SplitDegenerateError("need at least 2 samples to cluster")
    x = np.stack([e.point for e in samples])
    r = np.array([e.reward for e in samples], dtype=float)
    features = np.hstack([x, r[:, None]])
    scaler = fit_feature_scaler(features)
    z = scaler.transform(features)
    if np.allclose(z, z[0], rtol=0.0, atol=1e-12):
        raise SplitDegenerateError("all feature vectors identical")
    if len(samples) <= _EXACT_KMEANS_MAX:
        mask = _exact_two_partition(z)
    else:
        mask = _lloyd_two_partition(z)
    mean_a = float(r[mask].mean())
    mean_b = float(r[~mask].mean())
    if mean_a >= mean_b:
        return ClusterLabels(good_mask=mask, good_mean_reward=mean_a, bad_mean_reward=mean_b)
    return ClusterLabels(good_mask=~mask, good_mean_reward=mean_b, bad_mean_reward=mean_a)


# --------------------------------------------------------------------------- #
# Soft-margin SVM via sequential minimal optimization
# --------------------------------------------------------------------------- #


def kernel_matrix(
    name: str,
    x: np.ndarray,
    y: np.ndarray,
    gamma: float = 1.0,
    degree: int = 3,
    coef0: float = 1.0,
) -> np.ndarray:
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    if name == "linear":
        return x @ y.T
    if name == "poly":
        return (gamma * (x @ y.T) + coef0) ** degree
    if name == "rbf":
        sq = (x**2).sum(axis=1)[:, None] + (y**2).sum(axis=1)[None, :] - 2.0 * (x @ y.T)
        np.maximum(sq, 0.0, out=sq)
        return np.exp(-gamma * sq)
    raise ConfigError(f"unknown kernel {name!r}")


@dataclass
class SvmModel:
    """Binary soft-margin SVM in dual form.

    ``dual_coef`` holds alpha_i * y_i for the retained support vectors;
    ``alphas``/``labels`` keep the full training multipliers so dual
    feasibility (0 <= alpha <= C, sum alpha_i y_i = 0) can be audited.
    """

    kernel: str
    gamma: float
    degree: int
    coef0: float
    c: float
    support_vectors: np.ndarray
    dual_coef: np.ndarray
    bias: float
    alphas: np.ndarray
    labels: np.ndarray
    converged: bool
    training_accuracy: float
    _lipschitz: Optional[float] = field(default=None, repr=False)

    def decision_function(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if len(self.support_vectors) == 0:
            return np.full(len(x), self.bias)
        k = kernel_matrix(self.kernel, x, self.support_vectors, self.gamma, self.degree, self.coef0)
        return k @ self.dual_coef + self.bias

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Class labels in {-1, +1}; a decision value of exactly 0 maps to +1."""
        d = self.decision_function(x)
        return np.where(d >= 0.0, 1.0, -1.0)

    def lipschitz_bound(self, domain_radius: float) -> float:
        """Upper bound on |grad decision_function| over a ball of the given radius.

        Used to certify that a whole rectangle lies on one side of the
        boundary without evaluating every point in it.
        """
        if self._lipschitz is not None:
            return self._lipschitz
        a = np.abs(self.dual_coef)
        if self.kernel == "linear":
            w = self.dual_coef @ self.support_vectors
            lip = float(np.linalg.norm(w))
        elif self.kernel == "rbf":
            lip = float(a.sum() * np.sqrt(2.0 * self.gamma / np.e))
        else:  # poly
            sv_norm = np.linalg.norm(self.support_vectors, axis=1)
            lip = float(
                np.sum(
                    a
                    * self.degree
                    * self.gamma
                    * sv_norm
                    * (self.gamma * domain_radius * sv_norm + abs(self.coef0)) ** (self.degree - 1)
                )
            )
        self._lipschitz = lip
        return lip


def _default_gamma(x: np.ndarray) -> float:
    v = float(x.var())
    if v <= 0.0:
        v = 1.0
    return 1.0 / (x.shape[1] * v)


def train_svm(
    points: np.ndarray,
    labels,
    kernel: str = "rbf",
    c: float = 1.0,
    gamma: Optional[float] = None,
    degree: int = 3,
    coef0: float = 1.0,
    tol: float = 1e-3,
) -> SvmModel:
    """Train a binary SVM with Platt-style sequential minimal optimization.

    Parameters
    ----------
    points : (n, d) array of raw inputs.
    labels : ClusterLabels, boolean mask, or +-1 array (True/+1 = good class).
    kernel : 'linear', 'poly' (degree, coef0) or 'rbf' (gamma).
    c      : soft-margin penalty.
    gamma  : rbf/poly scale; defaults to 1 / (d * var(points)).
    tol    : KKT violation tolerance.

    Pairs are selected deterministically: the maximally KKT-violating index
    against the second-order (largest dual gain) partner, so training has no
    random component. Optimization stops when the violation gap falls below
    ``tol``; if the iteration cap is hit first the model is flagged
    ``converged=False`` but remains usable.
    """
    x = np.asarray(points, dtype=float)
    if x.ndim != 2 or len(x) < 2:
        raise ConfigError("need a 2-d array with at least two points")
    if isinstance(labels, ClusterLabels):
        y = np.where(labels.good_mask, 1.0, -1.0)
    else:
        lab = np.asarray(labels)
        y = np.where(lab.astype(float) > 0.0, 1.0, -1.0) if lab.dtype != bool else np.where(lab, 1.0, -1.0)
    if not ((y > 0).any() and (y < 0).any()):
        raise ConfigError("both classes must be present")
    n = len(x)
    if gamma is None:
        gamma = _default_gamma(x)

    k = kernel_matrix(kernel, x, x, gamma, degree, coef0)
    kd = np.diag(k).copy()
    alphas = np.zeros(n)
    f = np.zeros(n)  # sum_j alpha_j y_j K(x_t, x_j), bias-free margins
    max_iter = 200 * n
    converged = False
    for _ in range(max_iter):
        yf = y - f
        up = ((y > 0) & (alphas < c)) | ((y < 0) & (alphas > 0))
        low = ((y > 0) & (alphas > 0)) | ((y < 0) & (alphas < c))
        if not up.any() or not low.any():
            converged = True
            break
        up_vals = np.where(up, yf, -np.inf)
        i = int(np.argmax(up_vals))
        gap_hi = up_vals[i]
        gap_lo = np.where(low, yf, np.inf).min()
        if gap_hi - gap_lo <= tol:
            converged = True
            break
        # second-order partner: maximal gain (m - yf_t)^2 / a_it over I_low
        bvec = gap_hi - yf
        avec = np.maximum(kd[i] + kd - 2.0 * k[i], 1e-12)
        gain = np.where(low & (yf < gap_hi), bvec * bvec / avec, -np.inf)
        j = int(np.argmax(gain))
        step = bvec[j] / avec[j]
        lim_i = (c - alphas[i]) if y[i] > 0 else alphas[i]
        lim_j = alphas[j] if y[j] > 0 else (c - alphas[j])
        step = min(step, lim_i, lim_j)
        if step <= 1e-15:
            break
        alphas[i] += step if y[i] > 0 else -step
        alphas[j] -= step if y[j] > 0 else -step
        f += step * (k[:, i] - k[:, j])

    free = (alphas > 1e-12) & (alphas < c - 1e-12)
    yf = y - f
    if free.any():
        b = float(yf[free].mean())
    else:
        up = ((y > 0) & (alphas < c)) | ((y < 0) & (alphas > 0))
        low = ((y > 0) & (alphas > 0)) | ((y < 0) & (alphas < c))
        hi = float(np.where(up, yf, -np.inf).max()) if up.any() else 0.0
        lo = float(np.where(low, yf, np.inf).min()) if low.any() else 0.0
        b = 0.5 * (hi + lo)

    sv_mask = alphas > _ALPHA_ZERO
    model = SvmModel(
        kernel=kernel,
        gamma=float(gamma),
        degree=degree,
        coef0=coef0,
        c=float(c),
        support_vectors=x[sv_mask].copy(),
        dual_coef=(alphas * y)[sv_mask].copy(),
        bias=float(b),
        alphas=alphas,
        labels=y,
        converged=converged,
        training_accuracy=0.0,
    )
    model.training_accuracy = float((model.predict(x) == y).mean())
    return model


# --------------------------------------------------------------------------- #
# Latent action
# --------------------------------------------------------------------------- #


@dataclass
class LatentAction:
    """A trained boundary plus the side designated as the good region."""

    model: SvmModel
    good_side: str = "positive"  # which sign of the decision function is good

    def classify_batch(self, x: np.ndarray) -> np.ndarray:
        """Boolean mask: True where x falls in the good region (0 -> good)."""
        d = self.model.decision_function(x)
        return d >= 0.0 if self.good_side == "positive" else d <= 0.0

    def classify(self, x: np.ndarray) -> bool:
        return bool(self.classify_batch(np.atleast_2d(x))[0])


def classify(action: LatentAction, x: np.ndarray) -> str:
    """Side assignment for a single point: 'good' or 'bad'."""
    return "good" if action.classify(x) else "bad"


def learn_latent_action(
    samples: Sequence[Evaluation],
    kernel: str = "rbf",
    c: float = 1.0,
    rng: Optional[np.random.Generator] = None,
) -> tuple[LatentAction, np.ndarray, np.ndarray]:
    """Cluster, fit the boundary, and re-partition the samples by it.

    Returns (action, good_idx, bad_idx) where the index arrays partition the
    input samples according to the SVM's own predictions. If the SVM maps
    every sample to one side, or if the predicted split inverts the reward
    ordering it is flipped so the good side always has the higher observed
    mean reward. Raises SplitDegenerateError when no usable split exists.
    """
    labels = kmeans2(samples, rng)
    x = np.stack([e.point for e in samples])
    model = train_svm(x, labels, kernel=kernel, c=c)
    pred_good = model.decision_function(x) >= 0.0
    if pred_good.all() or (~pred_good).all():
        raise SplitDegenerateError("SVM routed every sample to one side")
    rewards = np.array([e.reward for e in samples], dtype=float)
    good_side = "positive"
    if rewards[pred_good].mean() < rewards[~pred_good].mean():
        good_side = "negative"
        pred_good = ~pred_good
    action = LatentAction(model=model, good_side=good_side)
    return action, np.nonzero(pred_good)[0], np.nonzero(~pred_good)[0]
