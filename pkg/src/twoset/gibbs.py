"""MCMC for the two-dataset random-coefficients regression.

Model, for dataset j = 0, 1 with specific block ``Z_j`` and common block
``X_j`` (both centered within the dataset)::

    y_j = xi_j + Z_j alpha_j + X_j beta_j + eps_j,   eps_j ~ N(0, sigma_j^2 I)
    (xi_1, beta_1) = (xi_0, beta_0) + eta,            eta ~ N(0, sigma_eta^2 I)

Priors: flat on the intercepts, ``1/sigma_j^2`` on the error variances, a
g-prior ``N(0, g_j sigma_j^2 (D_j'D_j)^{-1})`` on ``theta_j = (alpha_j,
beta_j)`` with ``D_j = [Z_j X_j]``, the hyper-g prior on each ``g_j`` and a
half standard Cauchy prior on ``sigma_eta``.  The Cauchy prior is written as
the inverse-gamma mixture ``sigma_eta^2 | U ~ IG(1/2, 1/U)``,
``U ~ IG(1/2, 1)``.

One sweep updates, in order: coefficients of dataset 0, coefficients of
dataset 1, both error variances, both ``g_j`` (independence Metropolis with
an inverse-gamma proposal), ``sigma_eta^2`` and ``U``.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .dataio import TwoSetData
from .linmodel import ModelPair, VarianceEstimates, grcm_coefficients, FORWARD, BACKWARD

__all__ = [
    "SamplerError",
    "NoCommonPredictorWarning",
    "GibbsData",
    "ChainState",
    "PosteriorDraws",
    "PEPosterior",
    "fc_coef_params",
    "fc_sigma2_params",
    "fc_g_log_density",
    "mh_log_ratio",
    "mh_step_g",
    "fc_sigma_eta2_params",
    "fc_u_params",
    "sigma_eta2_conditional",
    "u_conditional",
    "initial_state",
    "gibbs_run",
    "pe_posterior",
    "batch_means_se",
]

DEFAULT_A = 3.0
_SCALE_FLOOR = 1e-300


class SamplerError(RuntimeError):
    pass


class NoCommonPredictorWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class GibbsData:
    """Sufficient statistics of one dataset for a given model pair."""

    y: np.ndarray
    D: np.ndarray      # [Z X], centered
    n_specific: int
    n_common: int
    ybar: float = field(init=False)
    DtD: np.ndarray = field(init=False)
    Dty: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "ybar", float(self.y.mean()))
        object.__setattr__(self, "DtD", self.D.T @ self.D)
        object.__setattr__(self, "Dty", self.D.T @ self.y)

    @classmethod
    def from_data(cls, data: TwoSetData, pair: ModelPair, j: int) -> "GibbsData":
        if not pair.intercept_in_common:
            raise ValueError("the sampler always links the intercepts across datasets")
        pair.validate(data.n_predictors)
        Xj, yj = data.subset(j)
        cols = list(pair.specific(j)) + list(pair.common)
        D = Xj[:, cols]
        D = D - D.mean(axis=0)
        return cls(yj.copy(), D, len(pair.specific(j)), len(pair.common))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.n_specific + self.n_common


@dataclass
class ChainState:
    xi0: float
    xi1: float
    alpha0: np.ndarray
    alpha1: np.ndarray
    beta0: np.ndarray
    beta1: np.ndarray
    sigma0_sq: float
    sigma1_sq: float
    g0: float
    g1: float
    sigma_eta_sq: float
    u: float

    def xi(self, j: int) -> float:
        return self.xi0 if j == 0 else self.xi1

    def alpha(self, j: int) -> np.ndarray:
        return self.alpha0 if j == 0 else self.alpha1

    def beta(self, j: int) -> np.ndarray:
        return self.beta0 if j == 0 else self.beta1

    def theta(self, j: int) -> np.ndarray:
        return np.concatenate([self.alpha(j), self.beta(j)])

    def sigma_sq(self, j: int) -> float:
        return self.sigma0_sq if j == 0 else self.sigma1_sq

    def g(self, j: int) -> float:
        return self.g0 if j == 0 else self.g1

    def set(self, j: int, **values):
        for name, v in values.items():
            setattr(self, f"{name}{j}", v)

    def validate(self):
        for name in ("sigma0_sq", "sigma1_sq", "g0", "g1", "sigma_eta_sq", "u"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise SamplerError(f"{name} must be positive, got {v}")


def _coef_system(state: ChainState, gd: GibbsData, j: int):
    """Precision and linear term for theta_j, plus the intercept's normal law."""
    s2 = state.sigma_sq(j)
    e2 = state.sigma_eta_sq
    g = state.g(j)
    k, ps = gd.n_common, gd.n_specific
    P = ((1.0 + 1.0 / g) / s2) * gd.DtD
    b = gd.Dty / s2
    if k:
        idx = np.arange(ps, ps + k)
        P[idx, idx] += 1.0 / e2
        b[ps:] += state.beta(1 - j) / e2
    xi_prec = 1.0 / e2 + gd.n / s2
    xi_mean = (state.xi(1 - j) / e2 + gd.n * gd.ybar / s2) / xi_prec
    return P, b, xi_mean, xi_prec


def fc_coef_params(state: ChainState, gd: GibbsData, j: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of ``(xi_j, alpha_j, beta_j)`` given everything else."""
    P, b, xi_mean, xi_prec = _coef_system(state, gd, j)
    p = gd.p
    mean = np.empty(p + 1)
    cov = np.zeros((p + 1, p + 1))
    mean[0] = xi_mean
    cov[0, 0] = 1.0 / xi_prec
    if p:
        try:
            c = scipy.linalg.cho_factor(P)
        except np.linalg.LinAlgError as exc:
            raise SamplerError(f"coefficient precision of dataset {j} is singular") from exc
        mean[1:] = scipy.linalg.cho_solve(c, b)
        cov[1:, 1:] = scipy.linalg.cho_solve(c, np.eye(p))
    return mean, cov


def fc_sigma2_params(state: ChainState, gd: GibbsData, j: int) -> tuple[float, float]:
    """Inverse-gamma ``(shape, scale)`` of ``sigma_j^2`` given the rest.

    The g-prior scales with ``sigma_j^2``, so its quadratic form joins the
    residual sum of squares and its dimension joins the shape.
    """
    theta = state.theta(j)
    e = gd.y - state.xi(j) - gd.D @ theta
    shape = (gd.n + gd.p) / 2.0
    scale = float(e @ e) / 2.0
    if gd.p:
        Dt = gd.D @ theta
        scale += float(Dt @ Dt) / (2.0 * state.g(j))
    return shape, scale


def _g_rate(state: ChainState, gd: GibbsData, j: int) -> float:
    Dt = gd.D @ state.theta(j)
    return float(Dt @ Dt) / (2.0 * state.sigma_sq(j))


def fc_g_log_density(g, p: int, rate: float, a: float = DEFAULT_A):
    """Unnormalized log full conditional of ``g``: g^{-p/2} (1+g)^{-a/2} e^{-rate/g}."""
    g = np.asarray(g, dtype=float)
    return -p / 2.0 * np.log(g) - a / 2.0 * np.log1p(g) - rate / g


def mh_log_ratio(g: float, g_new: float, a: float = DEFAULT_A) -> float:
    """Log acceptance ratio for the ``IG(p/2, rate)`` independence proposal.

    The proposal matches the ``g^{-p/2-1} e^{-rate/g}`` part of the target up
    to one power of ``g``, leaving ``g (1+g)^{-a/2}`` as the importance ratio.
    """
    return (np.log(g_new) - np.log(g)) - a / 2.0 * (np.log1p(g_new) - np.log1p(g))


def mh_step_g(state: ChainState, gd: GibbsData, j: int, rng: np.random.Generator,
              a: float = DEFAULT_A) -> tuple[float, bool]:
    g = state.g(j)
    if gd.p == 0:
        return g, False
    rate = max(_g_rate(state, gd, j), _SCALE_FLOOR)
    g_new = rate / rng.standard_gamma(gd.p / 2.0)
    if not np.isfinite(g_new) or g_new <= 0:
        return g, False
    if np.log(rng.random()) < mh_log_ratio(g, g_new, a):
        return float(g_new), True
    return g, False


def sigma_eta2_conditional(s_eta: float, n_eta: int, u: float) -> tuple[float, float]:
    """``IG((n_eta + 1)/2, s_eta/2 + 1/u)`` for ``n_eta`` linked coefficients."""
    return (n_eta + 1) / 2.0, s_eta / 2.0 + 1.0 / u


def fc_sigma_eta2_params(state: ChainState) -> tuple[float, float]:
    d = state.beta1 - state.beta0
    s_eta = (state.xi1 - state.xi0) ** 2 + float(d @ d)
    return sigma_eta2_conditional(s_eta, 1 + d.size, state.u)


def u_conditional(sigma_eta_sq):
    """``IG(1, 1 + 1/sigma_eta^2)``, the auxiliary variable's full conditional."""
    return 1.0, 1.0 + 1.0 / sigma_eta_sq


def fc_u_params(state: ChainState) -> tuple[float, float]:
    return u_conditional(state.sigma_eta_sq)


def _draw_ig(rng: np.random.Generator, shape: float, scale: float) -> float:
    return max(scale, _SCALE_FLOOR) / rng.standard_gamma(shape)


def initial_state(gds: tuple[GibbsData, GibbsData]) -> ChainState:
    """Per-dataset least squares, ``g_j = n_j``, ``sigma_eta^2 = U = 1``."""
    vals = {}
    for j, gd in enumerate(gds):
        if gd.p:
            theta = np.linalg.lstsq(gd.D, gd.y - gd.ybar, rcond=None)[0]
        else:
            theta = np.zeros(0)
        e = gd.y - gd.ybar - gd.D @ theta
        dof = max(gd.n - gd.p - 1, 1)
        vals[j] = (gd.ybar, theta[:gd.n_specific], theta[gd.n_specific:],
                   max(float(e @ e) / dof, 1e-12), float(gd.n))
    return ChainState(
        xi0=vals[0][0], xi1=vals[1][0],
        alpha0=vals[0][1], alpha1=vals[1][1],
        beta0=vals[0][2], beta1=vals[1][2],
        sigma0_sq=vals[0][3], sigma1_sq=vals[1][3],
        g0=vals[0][4], g1=vals[1][4],
        sigma_eta_sq=1.0, u=1.0,
    )


@dataclass
class PosteriorDraws:
    """Retained iterations stored column-wise.

    Row ``i`` of every array is one retained state; :meth:`state` rebuilds it
    as a :class:`ChainState`.
    """

    xi: np.ndarray
    alpha0: np.ndarray
    alpha1: np.ndarray
    beta0: np.ndarray
    beta1: np.ndarray
    sigma_sq: np.ndarray
    g: np.ndarray
    sigma_eta_sq: np.ndarray
    u: np.ndarray
    iters: int
    burnin: int
    seed: int
    accepted: np.ndarray = field(default_factory=lambda: np.zeros(2, int))
    proposed: np.ndarray = field(default_factory=lambda: np.zeros(2, int))

    def __len__(self):
        return self.sigma_eta_sq.shape[0]

    @property
    def acceptance_rate(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.proposed > 0, self.accepted / np.maximum(self.proposed, 1), np.nan)

    def state(self, i: int) -> ChainState:
        return ChainState(
            xi0=float(self.xi[i, 0]), xi1=float(self.xi[i, 1]),
            alpha0=self.alpha0[i].copy(), alpha1=self.alpha1[i].copy(),
            beta0=self.beta0[i].copy(), beta1=self.beta1[i].copy(),
            sigma0_sq=float(self.sigma_sq[i, 0]), sigma1_sq=float(self.sigma_sq[i, 1]),
            g0=float(self.g[i, 0]), g1=float(self.g[i, 1]),
            sigma_eta_sq=float(self.sigma_eta_sq[i]), u=float(self.u[i]),
        )

    def states(self):
        for i in range(len(self)):
            yield self.state(i)

    def variance_means(self) -> VarianceEstimates:
        return VarianceEstimates(float(self.sigma_sq[:, 0].mean()),
                                 float(self.sigma_sq[:, 1].mean()),
                                 float(self.sigma_eta_sq.mean()))

    def columns(self) -> list[str]:
        names = ["xi0", "xi1"]
        for nm in ("alpha0", "alpha1", "beta0", "beta1"):
            names += [f"{nm}_{i}" for i in range(getattr(self, nm).shape[1])]
        return names + ["sigma0_sq", "sigma1_sq", "g0", "g1", "sigma_eta_sq", "u"]

    def as_matrix(self) -> np.ndarray:
        return np.column_stack([self.xi, self.alpha0, self.alpha1, self.beta0, self.beta1,
                                self.sigma_sq, self.g, self.sigma_eta_sq, self.u])

    def to_csv(self, path: str | Path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration"] + self.columns())
            for i, row in enumerate(self.as_matrix()):
                w.writerow([self.burnin + i + 1] + [f"{v:.17g}" for v in row])


def gibbs_run(pair: ModelPair, data: TwoSetData, iters: int = 20000, burnin: int = 5000,
              seed: int = 0, a: float = DEFAULT_A, fixed_g: tuple | None = None,
              fixed_sigma_eta_sq: float | None = None,
              init: ChainState | None = None) -> PosteriorDraws:
    """Run one chain and keep iterations ``burnin + 1 .. iters``.

    ``fixed_g`` and ``fixed_sigma_eta_sq`` hold those blocks at the given
    values (used to check reduced models against analytic posteriors).
    """
    if not iters > burnin >= 0:
        raise ValueError("need iters > burnin >= 0")
    gds = (GibbsData.from_data(data, pair, 0), GibbsData.from_data(data, pair, 1))
    if pair.k == 0 and fixed_sigma_eta_sq is None:
        warnings.warn("no common predictors: the sigma_eta^2 posterior is heavy-tailed; "
                      "report medians alongside means", NoCommonPredictorWarning, stacklevel=2)
    rng = np.random.Generator(np.random.Philox(seed))
    st = init if init is not None else initial_state(gds)
    st = ChainState(**{k: (v.copy() if isinstance(v, np.ndarray) else v)
                       for k, v in st.__dict__.items()})
    if fixed_g is not None:
        st.g0, st.g1 = map(float, fixed_g)
    if fixed_sigma_eta_sq is not None:
        st.sigma_eta_sq = float(fixed_sigma_eta_sq)
    st.validate()

    m = iters - burnin
    p0s, p1s, k = gds[0].n_specific, gds[1].n_specific, pair.k
    out = PosteriorDraws(
        xi=np.empty((m, 2)), alpha0=np.empty((m, p0s)), alpha1=np.empty((m, p1s)),
        beta0=np.empty((m, k)), beta1=np.empty((m, k)), sigma_sq=np.empty((m, 2)),
        g=np.empty((m, 2)), sigma_eta_sq=np.empty(m), u=np.empty(m),
        iters=iters, burnin=burnin, seed=seed,
    )
    for it in range(iters):
        try:
            for j, gd in enumerate(gds):
                P, b, xi_mean, xi_prec = _coef_system(st, gd, j)
                xi = xi_mean + rng.standard_normal() / np.sqrt(xi_prec)
                if gd.p:
                    L = np.linalg.cholesky(P)
                    mean = scipy.linalg.cho_solve((L, True), b)
                    theta = mean + scipy.linalg.solve_triangular(
                        L, rng.standard_normal(gd.p), lower=True, trans="T")
                else:
                    theta = np.zeros(0)
                st.set(j, xi=float(xi), alpha=theta[:gd.n_specific], beta=theta[gd.n_specific:])
            for j, gd in enumerate(gds):
                draw = _draw_ig(rng, *fc_sigma2_params(st, gd, j))
                if j == 0:
                    st.sigma0_sq = draw
                else:
                    st.sigma1_sq = draw
            if fixed_g is None:
                for j, gd in enumerate(gds):
                    g_new, acc = mh_step_g(st, gd, j, rng, a)
                    if gd.p:
                        out.proposed[j] += 1
                        out.accepted[j] += int(acc)
                    st.set(j, g=g_new)
            if fixed_sigma_eta_sq is None:
                st.sigma_eta_sq = _draw_ig(rng, *fc_sigma_eta2_params(st))
                st.u = _draw_ig(rng, *fc_u_params(st))
            if not (np.isfinite(st.sigma0_sq) and np.isfinite(st.sigma1_sq)
                    and np.isfinite(st.sigma_eta_sq)):
                raise FloatingPointError("non-finite variance draw")
        except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
            raise SamplerError(f"iteration {it + 1}: {exc}") from exc
        if it >= burnin:
            r = it - burnin
            out.xi[r] = (st.xi0, st.xi1)
            out.alpha0[r] = st.alpha0
            out.alpha1[r] = st.alpha1
            out.beta0[r] = st.beta0
            out.beta1[r] = st.beta1
            out.sigma_sq[r] = (st.sigma0_sq, st.sigma1_sq)
            out.g[r] = (st.g0, st.g1)
            out.sigma_eta_sq[r] = st.sigma_eta_sq
            out.u[r] = st.u
    return out


@dataclass(frozen=True)
class PEPosterior:
    samples: np.ndarray
    mean: float
    sd: float
    median: float
    degenerate: bool


def pe_posterior(draws: PosteriorDraws, pair: ModelPair, data: TwoSetData,
                 direction=None) -> PEPosterior:
    """Push each retained ``(sigma0^2, sigma1^2, sigma_eta^2)`` through the error formula.

    ``direction=None`` sums the two directional errors.
    """
    if len(draws) == 0:
        raise ValueError("no retained draws")
    dirs = (FORWARD, BACKWARD) if direction is None else (tuple(direction),)
    coef = sum(grcm_coefficients(pair, data, d).sum(axis=0) for d in dirs)
    V = np.column_stack([draws.sigma_sq[:, 0], draws.sigma_sq[:, 1], draws.sigma_eta_sq])
    samples = V @ coef
    degenerate = samples.size < 2
    sd = 0.0 if degenerate else float(np.std(samples, ddof=1))
    return PEPosterior(samples, float(samples.mean()), sd, float(np.median(samples)), degenerate)


def batch_means_se(x, n_batches: int = 50) -> float:
    """Monte Carlo standard error of a chain average by non-overlapping batch means."""
    x = np.asarray(x, dtype=float)
    m = x.shape[0] // n_batches
    if m < 1:
        raise ValueError("chain too short for the requested number of batches")
    b = x[: m * n_batches].reshape(n_batches, m, *x.shape[1:]).mean(axis=1)
    return np.std(b, axis=0, ddof=1) / np.sqrt(n_batches)
