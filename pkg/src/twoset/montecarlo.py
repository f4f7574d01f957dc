"""Brute-force Monte Carlo for cross-dataset prediction error.

Designs are drawn once and held fixed; each replication draws new
coefficient perturbations and errors, refits the source model with the
two-step least-squares estimator and records the average squared error on
the target.  The fitting here goes through ``numpy.linalg.lstsq`` directly
so it shares no code with the closed-form trace computations.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataio import StandardizedData, TwoSetData, standardize
from .linmodel import BACKWARD, FORWARD, ModelPair, VarianceEstimates, pe_grcm, pe_rcm

__all__ = ["SimConfig", "design_data", "simulate_once", "empirical_pe",
           "closed_form_total", "random_configs", "run_suite", "load_suite"]


@dataclass
class SimConfig:
    """Generative setup: sample sizes, true variances, model blocks and coefficients.

    Column indices in ``pair`` refer to ``n_predictors`` candidate columns.
    Unspecified coefficients default to 0.5 (common), 0.3 (dataset 0
    specific) and -0.4 (dataset 1 specific).
    """

    n0: int
    n1: int
    sigma0_sq: float
    sigma1_sq: float
    sigma_eta_sq: float
    common: tuple = ()
    specific0: tuple = ()
    specific1: tuple = ()
    n_predictors: int | None = None
    intercept: float = 1.0
    intercept_random: bool = False
    beta0: list | None = None
    alpha0: list | None = None
    alpha1: list | None = None
    replications: int = 10000
    seed: int = 0
    redraw_designs: bool = False
    chunk: int = 20000
    designs: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("need at least one replication")
        for v in (self.sigma0_sq, self.sigma1_sq, self.sigma_eta_sq):
            if v < 0:
                raise ValueError("variances must be nonnegative")
        self.common = tuple(self.common)
        self.specific0 = tuple(self.specific0)
        self.specific1 = tuple(self.specific1)
        used = self.common + self.specific0 + self.specific1
        if self.n_predictors is None:
            self.n_predictors = max(used) + 1 if used else 0
        k = len(self.common)
        self.beta0 = list(self.beta0) if self.beta0 is not None else [0.5] * k
        self.alpha0 = list(self.alpha0) if self.alpha0 is not None else [0.3] * len(self.specific0)
        self.alpha1 = list(self.alpha1) if self.alpha1 is not None else [-0.4] * len(self.specific1)
        if len(self.beta0) != k or len(self.alpha0) != len(self.specific0) \
                or len(self.alpha1) != len(self.specific1):
            raise ValueError("coefficient lengths do not match the model blocks")

    @property
    def pair(self) -> ModelPair:
        return ModelPair(self.common, self.specific0, self.specific1,
                         intercept_random=self.intercept_random)

    @property
    def variances(self) -> VarianceEstimates:
        return VarianceEstimates(self.sigma0_sq, self.sigma1_sq, self.sigma_eta_sq)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("designs")
        d["common"], d["specific0"], d["specific1"] = map(list, (self.common, self.specific0, self.specific1))
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        return cls(**{k: v for k, v in d.items() if k != "designs"})


def design_data(cfg: SimConfig, rng: np.random.Generator | None = None) -> StandardizedData:
    """Fixed designs for ``cfg``: given matrices, or iid normal columns standardized per dataset."""
    if cfg.designs is not None:
        X0, X1 = (np.asarray(a, dtype=float) for a in cfg.designs)
    else:
        rng = rng if rng is not None else np.random.Generator(np.random.Philox(cfg.seed))
        X0 = rng.standard_normal((cfg.n0, cfg.n_predictors))
        X1 = rng.standard_normal((cfg.n1, cfg.n_predictors))
    X = np.vstack([X0, X1])
    label = np.r_[np.zeros(X0.shape[0], int), np.ones(X1.shape[0], int)]
    base = TwoSetData(np.zeros(X.shape[0]), X, label,
                      tuple(f"x{i + 1}" for i in range(X.shape[1])))
    return standardize(base)


def _blocks(data: TwoSetData, pair: ModelPair, j: int):
    Xj = data.X[data.label == j]
    A = np.column_stack([Xj[:, list(pair.common)], np.ones(Xj.shape[0])])
    W = Xj[:, list(pair.specific(j))]
    return A, W


def _draw_responses(cfg: SimConfig, data: TwoSetData, rng: np.random.Generator, R: int):
    """Responses for ``R`` replications, shape ``(n_j, R)`` for each dataset."""
    truth = cfg.pair
    k = truth.k
    b0 = np.asarray(cfg.beta0, dtype=float)
    eta = rng.standard_normal((k, R)) * np.sqrt(cfg.sigma_eta_sq)
    eta0 = rng.standard_normal(R) * np.sqrt(cfg.sigma_eta_sq) if cfg.intercept_random else 0.0
    out = []
    for j, alpha in ((0, cfg.alpha0), (1, cfg.alpha1)):
        A, W = _blocks(data, truth, j)
        X = A[:, :k]
        mean = cfg.intercept + X @ b0 + (W @ np.asarray(alpha, dtype=float) if W.shape[1] else 0.0)
        sig = np.sqrt(cfg.sigma0_sq if j == 0 else cfg.sigma1_sq)
        Y = mean[:, None] + sig * rng.standard_normal((A.shape[0], R))
        if j == 1:
            Y += X @ eta + eta0
        out.append(Y)
    return out


def _lstsq(A, B):
    if A.shape[1] == 0:
        return np.zeros((0,) + B.shape[1:])
    return np.linalg.lstsq(A, B, rcond=None)[0]


def simulate_once(cfg: SimConfig, rng: np.random.Generator,
                  data: StandardizedData | None = None) -> TwoSetData:
    """One synthetic dataset from the random-coefficients model."""
    data = data if data is not None else design_data(cfg)
    Y0, Y1 = _draw_responses(cfg, data, rng, 1)
    y = np.empty(data.n)
    y[data.label == 0] = Y0[:, 0]
    y[data.label == 1] = Y1[:, 0]
    return TwoSetData(y, data.X, data.label, data.columns)


def _chunk_errors(Y_s, Y_t, A_s, W_s, A_t, W_t):
    """Average squared target error for each replication column."""
    if W_s.shape[1]:
        A_s = A_s - W_s @ _lstsq(W_s, A_s)
    beta = _lstsq(A_s, Y_s)
    fit = A_t @ beta
    if W_t.shape[1]:
        fit = fit + W_t @ _lstsq(W_t, Y_t - fit)
    r = Y_t - fit
    return np.mean(r * r, axis=0)


def empirical_pe(cfg: SimConfig, pair: ModelPair | None = None, direction=FORWARD,
                 data: StandardizedData | None = None) -> tuple[float, float]:
    """Monte Carlo mean of the average squared prediction error and its standard error."""
    pair = pair if pair is not None else cfg.pair
    t, s = direction
    data = data if data is not None else design_data(cfg)
    errors = []
    n_chunks = -(-cfg.replications // cfg.chunk)
    for c in range(n_chunks):
        R = min(cfg.chunk, cfg.replications - c * cfg.chunk)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.seed, 1, c])))
        if cfg.redraw_designs:
            data = design_data(cfg, rng)
        Y = _draw_responses(cfg, data, rng, R)
        A_s, W_s = _blocks(data, pair, s)
        A_t, W_t = _blocks(data, pair, t)
        errors.append(_chunk_errors(Y[s], Y[t], A_s, W_s, A_t, W_t))
    e = np.concatenate(errors)
    mean = float(np.sum(e) / e.size)
    se = float(np.std(e, ddof=1) / np.sqrt(e.size)) if e.size > 1 else float("nan")
    return mean, se


def closed_form_total(cfg: SimConfig, direction=FORWARD, data=None, formula: str = "grcm") -> float:
    data = data if data is not None else design_data(cfg)
    pair = cfg.pair
    if formula == "rcm":
        if pair.specific0 or pair.specific1:
            raise ValueError("the all-common formula needs empty specific blocks")
        t, s = direction
        A_s, _ = _blocks(data, pair, s)
        A_t, _ = _blocks(data, pair, t)
        return pe_rcm(cfg.variances, A_s, A_t, direction, k=pair.k).total
    return pe_grcm(cfg.variances, pair, data, direction).total


def random_configs(n: int, seed: int, replications: int = 200_000) -> list[SimConfig]:
    """Random setups with n_j in [20, 200], k in [0, 4], specific sizes in [0, 2]."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        k = int(rng.integers(0, 5))
        s0 = int(rng.integers(0, 3))
        s1 = int(rng.integers(0, 3))
        pool = list(range(k, k + 4))
        spec0 = tuple(sorted(rng.choice(pool, s0, replace=False).tolist()))
        spec1 = tuple(sorted(rng.choice(pool, s1, replace=False).tolist()))
        v = rng.uniform(0.01, 4.0, size=3)
        out.append(SimConfig(
            n0=int(rng.integers(20, 201)), n1=int(rng.integers(20, 201)),
            sigma0_sq=float(v[0]), sigma1_sq=float(v[1]), sigma_eta_sq=float(v[2]),
            common=tuple(range(k)), specific0=spec0, specific1=spec1, n_predictors=k + 4,
            beta0=rng.normal(0, 1, k).tolist(), alpha0=rng.normal(0, 1, s0).tolist(),
            alpha1=rng.normal(0, 1, s1).tolist(),
            replications=replications, seed=int(seed * 1000 + i),
        ))
    return out


def run_suite(configs: list[SimConfig], tolerance_se: float = 3.0) -> list[dict]:
    """Compare Monte Carlo and closed form for both directions of every config."""
    rows = []
    for i, cfg in enumerate(configs):
        data = design_data(cfg)
        for direction in (FORWARD, BACKWARD):
            closed = closed_form_total(cfg, direction, data)
            mean, se = empirical_pe(cfg, direction=direction, data=data)
            z = (mean - closed) / se if se > 0 else (0.0 if mean == closed else np.inf)
            rows.append({
                "config": i, "direction": f"S{direction[0]}|S{direction[1]}",
                "closed_form": closed, "mc_mean": mean, "mc_se": se, "z": float(z),
                "pass": bool(abs(z) <= tolerance_se),
            })
    return rows


def load_suite(path: str | Path) -> tuple[list[SimConfig], float]:
    doc = json.loads(Path(path).read_text())
    if isinstance(doc, list):
        doc = {"configs": doc}
    configs = [SimConfig.from_dict(c) for c in doc["configs"]]
    return configs, float(doc.get("tolerance_se", 3.0))
