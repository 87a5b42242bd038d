"""Gaussian-process regression with a Matern-5/2 ARD kernel.

Inputs are normalized to the unit cube and targets standardized per fit;
hyperparameters are chosen by maximizing the log marginal likelihood with
gradient ascent (backtracking line search) from a default start plus random
restarts. Predictions, joint posterior draws, and expected improvement all
operate in reward space (maximization).

The posterior solves go through a Cholesky factor of K + (noise + jitter) I,
with the jitter escalated 1e-6 -> 1e-4 -> 1e-2 before giving up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import ndtr

from .core import Bounds, ConfigError, NumericalError

SQRT5 = math.sqrt(5.0)
MIN_LENGTHSCALE = 5e-3
NOISE_FLOOR = 1e-6
JITTER_LADDER = (0.0, 1e-6, 1e-4, 1e-2)


@dataclass
class KernelParams:
    """ARD Matern-5/2 hyperparameters (unit-cube input space)."""

    lengthscales: np.ndarray
    signal_variance: float
    noise_variance: float


@dataclass
class GpModel:
    x_unit: np.ndarray
    y_std: np.ndarray
    params: KernelParams
    chol: np.ndarray
    alpha: np.ndarray
    y_mean: float
    y_scale: float
    bounds: Bounds
    jitter: float
    lml: float
    warn_constant_y: bool = False
    warn_duplicates: bool = False

    @property
    def n(self) -> int:
        return len(self.y_std)


# --------------------------------------------------------------------------- #
# Kernel
# --------------------------------------------------------------------------- #


def _scaled_sq_dists(xa: np.ndarray, xb: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    a = xa / lengthscales
    b = xb / lengthscales
    sq = (a**2).sum(axis=1)[:, None] + (b**2).sum(axis=1)[None, :] - 2.0 * a @ b.T
    np.maximum(sq, 0.0, out=sq)
    return sq


def matern52(xa: np.ndarray, xb: np.ndarray, params: KernelParams) -> np.ndarray:
    r = np.sqrt(_scaled_sq_dists(xa, xb, params.lengthscales))
    return params.signal_variance * (1.0 + SQRT5 * r + 5.0 / 3.0 * r**2) * np.exp(-SQRT5 * r)


def _factorize(k: np.ndarray, noise: float) -> tuple[np.ndarray, float]:
    n = len(k)
    for jitter in JITTER_LADDER:
        try:
            return np.linalg.cholesky(k + (noise + jitter) * np.eye(n)), jitter
        except np.linalg.LinAlgError:
            continue
    raise NumericalError("Cholesky failed after jitter escalation to 1e-2")


# --------------------------------------------------------------------------- #
# Marginal likelihood and its gradient
# --------------------------------------------------------------------------- #


def log_marginal_likelihood(params: KernelParams, x_unit: np.ndarray, y_std: np.ndarray) -> float:
    k = matern52(x_unit, x_unit, params)
    chol, _ = _factorize(k, params.noise_variance)
    alpha = cho_solve((chol, True), y_std)
    n = len(y_std)
    return float(
        -0.5 * y_std @ alpha - np.log(np.diag(chol)).sum() - 0.5 * n * math.log(2.0 * math.pi)
    )


def _lml_and_grad(log_p: np.ndarray, x_unit: np.ndarray, y_std: np.ndarray) -> tuple[float, np.ndarray]:
    """Value and gradient of the log marginal likelihood in log-parameters.

    log_p = [log lengthscales (d), log signal variance, log noise variance].
    Gradients use d(lml)/d(theta) = 0.5 tr((alpha alpha^T - A^-1) dA/dtheta)
    with the per-dimension lengthscale terms folded into one matmul.
    """
    n, d = x_unit.shape
    ls = np.exp(log_p[:d])
    sf2 = math.exp(log_p[d])
    sn2 = math.exp(log_p[d + 1])

    xs = x_unit / ls
    sq = (xs**2).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * xs @ xs.T
    np.maximum(d2, 0.0, out=d2)
    r = np.sqrt(d2)
    e = np.exp(-SQRT5 * r)
    k = sf2 * (1.0 + SQRT5 * r + 5.0 / 3.0 * d2) * e

    chol, jitter = _factorize(k, sn2)
    alpha = cho_solve((chol, True), y_std)
    a_inv = cho_solve((chol, True), np.eye(n))
    w = np.outer(alpha, alpha) - a_inv
    lml = float(-0.5 * y_std @ alpha - np.log(np.diag(chol)).sum() - 0.5 * n * math.log(2.0 * math.pi))

    grad = np.empty(d + 2)
    # dK/dlog(ls_k) = (5/3) sf2 (1 + sqrt5 r) e * (x_ik - x_jk)^2 / ls_k^2
    g = (5.0 / 3.0) * sf2 * (1.0 + SQRT5 * r) * e
    m = w * g
    row = m.sum(axis=1)
    mx = m @ xs
    # sum_ij m_ij (xs_ik - xs_jk)^2 = 2 sum_i row_i xs_ik^2 - 2 sum_i xs_ik (m xs)_ik
    per_dim = 2.0 * (row @ (xs**2)) - 2.0 * np.einsum("ik,ik->k", xs, mx)
    grad[:d] = 0.5 * per_dim
    grad[d] = 0.5 * float((w * k).sum())
    grad[d + 1] = 0.5 * sn2 * float(np.trace(w))
    return lml, grad


def _clamp_log_params(log_p: np.ndarray, d: int) -> np.ndarray:
    out = log_p.copy()
    max_ls = 2.0 * math.sqrt(d)  # twice the unit-cube diameter
    out[:d] = np.clip(out[:d], math.log(MIN_LENGTHSCALE), math.log(max_ls))
    out[d] = min(max(out[d], math.log(1e-8)), math.log(1e6))
    out[d + 1] = min(max(out[d + 1], math.log(NOISE_FLOOR)), math.log(1e2))
    return out


def _ascend(log_p0: np.ndarray, x_unit: np.ndarray, y_std: np.ndarray, steps: int) -> tuple[np.ndarray, float]:
    d = x_unit.shape[1]
    p = _clamp_log_params(log_p0, d)
    val, grad = _lml_and_grad(p, x_unit, y_std)
    t = 0.5
    for _ in range(steps):
        improved = False
        while t > 1e-10:
            cand = _clamp_log_params(p + t * grad, d)
            try:
                cand_val = log_marginal_likelihood(
                    KernelParams(np.exp(cand[:d]), math.exp(cand[d]), math.exp(cand[d + 1])),
                    x_unit,
                    y_std,
                )
            except NumericalError:
                cand_val = -np.inf
            if cand_val > val:
                improved = True
                break
            t *= 0.5
        if not improved:
            break
        p = cand
        prev = val
        val, grad = _lml_and_grad(p, x_unit, y_std)
        t = min(t * 2.0, 1.0)
        if val - prev < 1e-10 * (1.0 + abs(val)):
            break
    return p, val


# --------------------------------------------------------------------------- #
# Fit / predict / sample
# --------------------------------------------------------------------------- #


def fit(
    x: np.ndarray,
    y: np.ndarray,
    bounds: Bounds,
    rng: Optional[np.random.Generator] = None,
    steps: int = 50,
    restarts: int = 2,
    init_params: Optional[KernelParams] = None,
) -> GpModel:
    """Fit the GP to reward observations.

    ``init_params`` warm-starts the ascent (the default start is used
    otherwise); ``restarts`` adds random initializations on top. Raises
    NumericalError if the kernel cannot be factorized even at maximal
    jitter.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if len(x) != len(y) or len(x) < 2:
        raise ConfigError("fit needs at least 2 matching points")
    n, d = x.shape
    if rng is None:
        rng = np.random.default_rng(0)

    x_unit = bounds.to_unit(x)
    y_mean = float(y.mean())
    y_scale = float(y.std())
    warn_constant = y_scale < 1e-12
    if warn_constant:
        y_scale = 1.0
    y_std = (y - y_mean) / y_scale

    warn_dup = bool(np.allclose(x_unit, x_unit[0], rtol=0.0, atol=1e-12))
    noise_init = 1e-2 if warn_dup else 1e-3

    if init_params is not None:
        start = np.concatenate(
            [
                np.log(init_params.lengthscales),
                [math.log(init_params.signal_variance), math.log(init_params.noise_variance)],
            ]
        )
    else:
        start = np.concatenate([np.full(d, math.log(0.5)), [0.0, math.log(noise_init)]])

    if steps == 0 and restarts == 0:
        # condition-only path: keep the provided hyperparameters as-is
        best_p = _clamp_log_params(start, d)
        best_val = log_marginal_likelihood(
            KernelParams(np.exp(best_p[:d]), math.exp(best_p[d]), math.exp(best_p[d + 1])),
            x_unit,
            y_std,
        )
    else:
        starts = [start]
        for _ in range(restarts):
            ls = rng.uniform(math.log(0.05), math.log(2.0), size=d)
            sf2 = rng.uniform(math.log(0.2), math.log(5.0))
            sn2 = rng.uniform(math.log(max(NOISE_FLOOR, noise_init * 1e-1)), math.log(1e-2))
            starts.append(np.concatenate([ls, [sf2, sn2]]))

        best_p, best_val = None, -np.inf
        for p0 in starts:
            p, val = _ascend(p0, x_unit, y_std, steps)
            if val > best_val:
                best_p, best_val = p, val

    params = KernelParams(
        lengthscales=np.exp(best_p[:d]),
        signal_variance=math.exp(best_p[d]),
        noise_variance=max(math.exp(best_p[d + 1]), 1e-2 if warn_dup else NOISE_FLOOR),
    )
    k = matern52(x_unit, x_unit, params)
    chol, jitter = _factorize(k, params.noise_variance)
    alpha = cho_solve((chol, True), y_std)
    return GpModel(
        x_unit=x_unit,
        y_std=y_std,
        params=params,
        chol=chol,
        alpha=alpha,
        y_mean=y_mean,
        y_scale=y_scale,
        bounds=bounds,
        jitter=jitter,
        lml=best_val,
        warn_constant_y=warn_constant,
        warn_duplicates=warn_dup,
    )


def predict(model: GpModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and (clamped non-negative) variance in reward space.

    Accepts a single point (d,) or a batch (m, d); returns matching scalars
    or arrays.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xq = model.bounds.to_unit(np.atleast_2d(x))
    ks = matern52(xq, model.x_unit, model.params)
    mean_std = ks @ model.alpha
    v = solve_triangular(model.chol, ks.T, lower=True)
    var_std = model.params.signal_variance - (v**2).sum(axis=0)
    np.maximum(var_std, 0.0, out=var_std)
    mean = model.y_mean + model.y_scale * mean_std
    var = model.y_scale**2 * var_std
    if single:
        return float(mean[0]), float(var[0])
    return mean, var


def posterior_sample(model: GpModel, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One joint posterior draw over the given candidate set (reward space)."""
    xq = model.bounds.to_unit(np.atleast_2d(np.asarray(x, dtype=float)))
    ks = matern52(xq, model.x_unit, model.params)
    mean_std = ks @ model.alpha
    v = solve_triangular(model.chol, ks.T, lower=True)
    cov = matern52(xq, xq, model.params) - v.T @ v
    m = len(xq)
    scale = max(float(model.params.signal_variance), 1e-12)
    for jitter in (1e-10, 1e-8, 1e-6, 1e-4):
        try:
            lc = np.linalg.cholesky(cov + jitter * scale * np.eye(m))
            break
        except np.linalg.LinAlgError:
            continue
    else:
        raise NumericalError("posterior covariance could not be factorized")
    draw = mean_std + lc @ rng.standard_normal(m)
    return model.y_mean + model.y_scale * draw


def expected_improvement(mean, variance, best_reward: float):
    """Closed-form EI for maximization; sigma = 0 collapses to max(mean-best, 0)."""
    scalar = np.ndim(mean) == 0
    mean_arr = np.atleast_1d(np.asarray(mean, dtype=float))
    sigma = np.sqrt(np.maximum(np.atleast_1d(np.asarray(variance, dtype=float)), 0.0))
    diff = mean_arr - best_reward
    out = np.maximum(diff, 0.0)
    pos = sigma > 0.0
    if pos.any():
        z = diff[pos] / sigma[pos]
        phi = np.exp(-0.5 * z**2) / math.sqrt(2.0 * math.pi)
        out[pos] = diff[pos] * ndtr(z) + sigma[pos] * phi
    np.maximum(out, 0.0, out=out)
    return float(out[0]) if scalar else out


class GpManager:
    """Keeps a GP current over a growing history at bounded cost.

    Full hyperparameter optimization happens once at the start; afterwards
    hyperparameters are re-optimized (warm-started, on the most recent
    ``hyperfit_cap`` points) only every ``refit_every`` new observations,
    with cheap bordered-Cholesky appends in between. The conditioning set is
    trimmed to the most recent ``window`` points at each refit.
    """

    def __init__(
        self,
        bounds: Bounds,
        rng: np.random.Generator,
        window: int = 500,
        refit_every: int = 20,
        hyperfit_cap: int = 256,
        warm_steps: int = 30,
        full_steps: int = 50,
        full_restarts: int = 2,
    ):
        self.bounds = bounds
        self.rng = rng
        self.window = window
        self.refit_every = refit_every
        self.hyperfit_cap = hyperfit_cap
        self.warm_steps = warm_steps
        self.full_steps = full_steps
        self.full_restarts = full_restarts
        self.model: Optional[GpModel] = None
        self._fitted_n = 0
        self._last_hyper_n = 0

    def update(self, x_all: np.ndarray, y_all: np.ndarray) -> GpModel:
        """Return a model conditioned on the (append-only) history arrays."""
        n = len(y_all)
        if self.model is None:
            w = min(self.window, n)
            self.model = fit(
                x_all[-w:], y_all[-w:], self.bounds, self.rng,
                steps=self.full_steps, restarts=self.full_restarts,
            )
            self._fitted_n = n
            self._last_hyper_n = n
            return self.model
        if n - self._last_hyper_n >= self.refit_every:
            sub = min(self.hyperfit_cap, n)
            params = fit(
                x_all[-sub:], y_all[-sub:], self.bounds, self.rng,
                steps=self.warm_steps, restarts=0, init_params=self.model.params,
            ).params
            w = min(self.window, n)
            self.model = fit(
                x_all[-w:], y_all[-w:], self.bounds, self.rng,
                steps=0, restarts=0, init_params=params,
            )
            self._last_hyper_n = n
        else:
            for i in range(self._fitted_n, n):
                self.model = append_observation(self.model, x_all[i], float(y_all[i]))
        self._fitted_n = n
        return self.model


def append_observation(model: GpModel, x: np.ndarray, y: float) -> GpModel:
    """Condition on one more point without re-optimizing hyperparameters.

    Extends the Cholesky factor by a bordered row (O(n^2)); the original
    standardization constants are kept, so means drift slightly until the
    next full refit.
    """
    x_new = model.bounds.to_unit(np.atleast_2d(np.asarray(x, dtype=float)))
    k_new = matern52(model.x_unit, x_new, model.params).ravel()
    k_ss = model.params.signal_variance + model.params.noise_variance + model.jitter
    l_row = solve_triangular(model.chol, k_new, lower=True)
    diag = k_ss - float(l_row @ l_row)
    diag = math.sqrt(max(diag, 1e-12))
    n = model.n
    chol = np.zeros((n + 1, n + 1))
    chol[:n, :n] = model.chol
    chol[n, :n] = l_row
    chol[n, n] = diag
    x_unit = np.vstack([model.x_unit, x_new])
    y_std = np.append(model.y_std, (float(y) - model.y_mean) / model.y_scale)
    alpha = cho_solve((chol, True), y_std)
    return replace(model, x_unit=x_unit, y_std=y_std, chol=chol, alpha=alpha)
