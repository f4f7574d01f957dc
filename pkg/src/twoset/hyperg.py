"""Posterior summaries for normal linear regression under the hyper-g prior.

Priors: flat on the intercept, ``pi(sigma^2) ~ 1/sigma^2``, and Zellner's
g-prior on the slopes with ``g/(1+g)`` having density proportional to
``(1-t)^{a/2-2}`` (the hyper-g prior, ``a = 3`` by default).

After centering, everything depends on the data through ``n``, ``k``, the
centered total sum of squares and ``R^2``.  Conditional on ``t = g/(1+g)``

* the slope posterior mean is ``t * beta_ols``,
* ``sigma^2`` is inverse gamma with mean ``S (1 - t R^2) / (n - 3)``,
* the Bayes factor against the intercept-only model is
  ``(1-t)^{k/2} (1 - t R^2)^{-(n-1)/2}`` integrated against the prior on t.

The one-dimensional integrals over ``t`` use Gauss-Jacobi rules whose weight
absorbs the ``(1-t)^{(k+a)/2-2}`` endpoint factor.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.special import logsumexp, roots_jacobi

from .linmodel import VarianceEstimates, ols

__all__ = [
    "QuadratureError",
    "HyperGFit",
    "hyperg_fit",
    "estimate_variances",
    "log_marginal_diff",
    "bma_weights",
    "shrinkage_posterior",
]

DEFAULT_A = 3.0
BASE_NODES = 401
QUAD_RTOL = 1e-8
_MAX_LEVELS = 4


class QuadratureError(RuntimeError):
    pass


@lru_cache(maxsize=64)
def _jacobi_rule(n_nodes: int, alpha: float):
    """Nodes in t and log-weights for int_0^1 (1-t)^alpha f(t) dt."""
    x, w = roots_jacobi(n_nodes, alpha, 0.0)
    t = (x + 1.0) / 2.0
    logw = np.log(w) - (alpha + 1.0) * np.log(2.0)
    t.setflags(write=False)
    logw.setflags(write=False)
    return t, logw


def _moments(n: int, k: int, r2: float, a: float, n_nodes: int):
    alpha = (k + a) / 2.0 - 2.0
    t, logw = _jacobi_rule(n_nodes, alpha)
    logf = np.log((a - 2.0) / 2.0) - (n - 1) / 2.0 * np.log1p(-t * r2)
    lw = logw + logf
    log_z = logsumexp(lw)
    p = np.exp(lw - log_z)
    return log_z, float(p @ t)


def shrinkage_posterior(n: int, k: int, r2: float, a: float = DEFAULT_A,
                        n_nodes: int = BASE_NODES) -> tuple[float, float]:
    """Return ``(log Bayes factor vs. null, E[g/(1+g) | y])``.

    The rule is refined by doubling until successive estimates agree to
    ``QUAD_RTOL``.
    """
    if a <= 2:
        raise ValueError("hyper-g parameter a must exceed 2")
    if k + a <= 2:
        raise ValueError("k + a must exceed 2")
    if not 0.0 <= r2 < 1.0:
        raise QuadratureError(f"R^2 = {r2} outside [0, 1)")
    prev = _moments(n, k, r2, a, n_nodes)
    nodes = n_nodes
    for _ in range(_MAX_LEVELS):
        nodes = 2 * nodes - 1
        cur = _moments(n, k, r2, a, nodes)
        d_log = abs(cur[0] - prev[0]) / max(1.0, abs(cur[0]))
        d_t = abs(cur[1] - prev[1]) / cur[1]
        if d_log <= QUAD_RTOL and d_t <= QUAD_RTOL:
            return cur
        prev = cur
    raise QuadratureError(
        f"hyper-g quadrature did not settle (n={n}, k={k}, R^2={r2}) after {nodes} nodes")


def _fingerprint(y: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(y, dtype=float).tobytes()).hexdigest()[:16]


@dataclass(frozen=True)
class HyperGFit:
    """Posterior means for one dataset and one predictor subset.

    ``log_marginal`` is the log Bayes factor against the intercept-only model
    fitted to the same response, so differences are meaningful only within
    one dataset.
    """

    columns: tuple
    beta_mean: np.ndarray
    intercept_mean: float
    sigma_sq_mean: float
    shrinkage_mean: float
    log_marginal: float
    n: int
    r_squared: float
    beta_ols: np.ndarray
    fingerprint: str

    @property
    def k(self) -> int:
        return len(self.beta_mean)

    def coefficient(self, name) -> float:
        return float(self.beta_mean[list(self.columns).index(name)])


def hyperg_fit(X, y, columns: Sequence | None = None, a: float = DEFAULT_A,
               n_nodes: int = BASE_NODES) -> HyperGFit:
    """Fit the hyper-g regression of ``y`` on the non-constant columns ``X``.

    The intercept is integrated out by centering, so ``X`` need not be
    centered on entry.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    X = np.asarray(X, dtype=float).reshape(n, -1)
    k = X.shape[1]
    if columns is None:
        columns = tuple(range(k))
    columns = tuple(columns)
    if len(columns) != k:
        raise ValueError("columns do not match X")
    if n <= k + 1 or n <= 3:
        raise ValueError(f"need n > max(k + 1, 3) observations (n={n}, k={k})")
    ybar = float(y.mean())
    yc = y - ybar
    S = float(yc @ yc)
    if S <= 0:
        raise ValueError("response is constant")
    if k:
        Xc = X - X.mean(axis=0)
        b = ols(Xc, yc)
        resid = yc - Xc @ b
        r2 = max(0.0, 1.0 - float(resid @ resid) / S)
    else:
        b = np.zeros(0)
        r2 = 0.0
    log_bf, t_mean = shrinkage_posterior(n, k, r2, a, n_nodes)
    if k == 0:
        log_bf = 0.0
    return HyperGFit(
        columns=columns,
        beta_mean=t_mean * b,
        intercept_mean=ybar,
        sigma_sq_mean=S * (1.0 - t_mean * r2) / (n - 3),
        shrinkage_mean=t_mean,
        log_marginal=float(log_bf),
        n=n,
        r_squared=r2,
        beta_ols=b,
        fingerprint=_fingerprint(y),
    )


def estimate_variances(fit0: HyperGFit, fit1: HyperGFit,
                       common: Sequence | None = None) -> VarianceEstimates:
    """Plug-in variances for the prediction-error formulas.

    Error variances are the posterior means from each fit.  The coefficient
    variance is the two-point (divide-by-two) variance of each common
    coefficient's posterior means across the datasets, averaged over the
    common coefficients.  ``common`` names the shared columns; by default the
    columns present in both fits.
    """
    if common is None:
        common = [c for c in fit0.columns if c in set(fit1.columns)]
    common = list(common)
    if common:
        b0 = np.array([fit0.coefficient(c) for c in common])
        b1 = np.array([fit1.coefficient(c) for c in common])
        eta = float(np.mean((b1 - b0) ** 2) / 4.0)
    else:
        eta = 0.0
    return VarianceEstimates(fit0.sigma_sq_mean, fit1.sigma_sq_mean, eta)


def log_marginal_diff(fitA: HyperGFit, fitB: HyperGFit) -> float:
    """log m(y | A) - log m(y | B) for two fits of the same response."""
    if fitA.fingerprint != fitB.fingerprint:
        raise ValueError("fits were computed on different responses")
    return fitA.log_marginal - fitB.log_marginal


def bma_weights(log_marginals) -> np.ndarray:
    """Posterior model probabilities under a uniform model prior."""
    lm = np.asarray(log_marginals, dtype=float)
    return np.exp(lm - logsumexp(lm))
