"""Model-averaged prediction errors and the search for common predictors.

For a candidate common set ``C`` the specific blocks of the two datasets
range over subsets of the remaining predictors.  Each dataset's models are
weighted by their hyper-g marginal likelihoods, so every directional error
is a weighted double sum over (dataset 0 model, dataset 1 model) pairs.

All per-model quantities are computed once in :class:`ModelSpaceCache`:
hyper-g posterior means for every subset of predictors in each dataset,
and the Gram matrices from which annihilated cross-products follow by a
Schur complement.  Because predictors are centered within each dataset,
the constant column is orthogonal to every other column, and its share of
the trace term is exactly ``n_t / n_s``.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
import multiprocessing as mp
from typing import Iterable, Sequence

import numpy as np
from scipy.special import logsumexp

from .dataio import TwoSetData, check_standardized, standardize
from .gibbs import gibbs_run, pe_posterior
from .hyperg import DEFAULT_A, estimate_variances, hyperg_fit
from .linmodel import (BACKWARD, FORWARD, ErrorBreakdown, ModelPair, pe_grcm, pe_rcm)

__all__ = [
    "EnumerationError",
    "CommonSetResult",
    "ModelSpaceCache",
    "bma_error",
    "similarity_search",
    "compat_table",
    "CompatRow",
    "mlsel",
    "comparison_models",
    "compare_approaches",
    "ComparisonRecord",
]

MAX_PREDICTORS = 20
MAX_JOINT_PAIRS = 1 << 20
FAMILIES = ("independent", "disjoint")
OBJECTIVES = ("sum", "maxmin")


class EnumerationError(ValueError):
    """The requested enumeration is too large to evaluate exhaustively."""


def _bits(mask: int) -> list[int]:
    return [i for i in range(mask.bit_length()) if mask >> i & 1]


def _mask(cols: Iterable[int]) -> int:
    m = 0
    for c in cols:
        m |= 1 << int(c)
    return m


def _submasks(mask: int) -> np.ndarray:
    """All submasks of ``mask`` in increasing order."""
    free = _bits(mask)
    idx = np.arange(1 << len(free))
    out = np.zeros(idx.size, dtype=np.int64)
    for i, c in enumerate(free):
        out |= ((idx >> i) & 1) << c
    return out


@dataclass(frozen=True)
class CommonSetResult:
    common: tuple[int, ...]
    names: tuple[str, ...]
    pe_forward: ErrorBreakdown
    pe_backward: ErrorBreakdown
    pe_total: float
    rank: int
    objective: str = "sum"

    @property
    def mask(self) -> int:
        return _mask(self.common)

    @property
    def objective_value(self) -> float:
        if self.objective == "maxmin":
            return max(self.pe_forward.total, self.pe_backward.total)
        return self.pe_total

    def terms(self) -> np.ndarray:
        """Termwise sum over both directions, shape ``(3,)``."""
        f, b = self.pe_forward, self.pe_backward
        return np.array([f.term1 + b.term1, f.term2 + b.term2, f.term3 + b.term3])

    def as_dict(self) -> dict:
        d = {"rank": self.rank, "common": list(self.common), "names": list(self.names),
             "pe_total": self.pe_total, "objective": self.objective,
             "objective_value": self.objective_value}
        for tag, br in (("forward", self.pe_forward), ("backward", self.pe_backward)):
            d[tag] = br.as_dict()
        return d


class ModelSpaceCache:
    """Per-dataset hyper-g fits for every predictor subset plus Gram matrices.

    The data are standardized within each dataset on entry unless they
    already are.  Memory grows as ``2^K``; ``K`` is capped at 20.
    """

    def __init__(self, data: TwoSetData, a: float = DEFAULT_A):
        if data.n_predictors > MAX_PREDICTORS:
            raise EnumerationError(
                f"{data.n_predictors} predictors exceed the exhaustive limit of {MAX_PREDICTORS}; "
                "select a subset of columns first")
        self.data = data if check_standardized(data) else standardize(data)
        self.a = a
        self.K = K = self.data.n_predictors
        M = 1 << K
        self.popcount = np.array([bin(m).count("1") for m in range(M)])
        self.n = []
        self.gram = []
        self.beta = []
        self.sigma_sq = []
        self.log_marginal = []
        for j in (0, 1):
            Xj, yj = self.data.subset(j)
            Xc = Xj - Xj.mean(axis=0)
            beta = np.zeros((M, K))
            sig = np.empty(M)
            lm = np.empty(M)
            for m in range(M):
                cols = _bits(m)
                fit = hyperg_fit(Xc[:, cols], yj, columns=cols, a=a)
                beta[m, cols] = fit.beta_mean
                sig[m] = fit.sigma_sq_mean
                lm[m] = fit.log_marginal
            self.n.append(Xj.shape[0])
            self.gram.append(Xc.T @ Xc)
            self.beta.append(beta)
            self.sigma_sq.append(sig)
            self.log_marginal.append(lm)

    @property
    def full_mask(self) -> int:
        return (1 << self.K) - 1

    def weights(self, j: int, common_mask: int) -> tuple[np.ndarray, np.ndarray]:
        """Specific-set masks and normalized model weights for dataset ``j``."""
        subs = _submasks(self.full_mask & ~common_mask)
        lm = self.log_marginal[j][common_mask | subs]
        return subs, np.exp(lm - logsumexp(lm))

    def annihilated_grams(self, j: int, common: list[int], subs: np.ndarray) -> np.ndarray:
        """``X_C' M_Z X_C`` for every specific set ``Z`` in ``subs``; shape ``(len(subs), c, c)``."""
        G = self.gram[j]
        c = len(common)
        out = np.empty((subs.size, c, c))
        G_cc = G[np.ix_(common, common)]
        for i, s in enumerate(subs):
            Z = _bits(int(s))
            if Z:
                G_cz = G[np.ix_(common, Z)]
                out[i] = G_cc - G_cz @ np.linalg.solve(G[np.ix_(Z, Z)], G_cz.T)
            else:
                out[i] = G_cc
        return out


def _pair_weights(cache, common_mask, family):
    subs0, w0 = cache.weights(0, common_mask)
    subs1, w1 = cache.weights(1, common_mask)
    if subs0.size * subs1.size > MAX_JOINT_PAIRS:
        raise EnumerationError(
            f"{subs0.size * subs1.size} joint model pairs exceed the limit of {MAX_JOINT_PAIRS}; "
            "raise the minimum common-set size or drop predictors")
    W = np.outer(w0, w1)
    if family == "disjoint":
        W = W * ((subs0[:, None] & subs1[None, :]) == 0)
        W /= W.sum()
    elif family != "independent":
        raise ValueError(f"unknown model family {family!r}; choose from {FAMILIES}")
    return (subs0, subs1), W


def _evaluate(cache: ModelSpaceCache, common_mask: int, family: str = "independent",
              intercept_random: bool = False):
    """Averaged terms for both directions: dict direction -> array of three terms."""
    common = _bits(common_mask)
    c = len(common)
    subs, W = _pair_weights(cache, common_mask, family)
    per = []
    for j in (0, 1):
        G = cache.annihilated_grams(j, common, subs[j])
        Gi = np.linalg.inv(G) if c else G
        per.append(dict(
            n=cache.n[j],
            k=cache.popcount[subs[j]],
            sig=cache.sigma_sq[j][common_mask | subs[j]],
            B=cache.beta[j][common_mask | subs[j]][:, common],
            tr=np.trace(G, axis1=1, axis2=2) if c else np.zeros(subs[j].size),
            Gt=G.reshape(subs[j].size, c * c),
            # flattened transpose so that Gi_flat @ Gt_flat.T gives tr(Gi Gt)
            Gi=np.transpose(Gi, (0, 2, 1)).reshape(subs[j].size, c * c),
        ))
    B0, B1 = per[0]["B"], per[1]["B"]
    if c:
        eta = ((B0 ** 2).sum(1)[:, None] + (B1 ** 2).sum(1)[None, :] - 2 * B0 @ B1.T) / (4 * c)
    else:
        eta = np.zeros(W.shape)
    m0, m1 = W.sum(axis=1), W.sum(axis=0)
    out = {}
    for t, s in (FORWARD, BACKWARD):
        P, Q = per[t], per[s]
        nt, ns = P["n"], Q["n"]
        wt = m1 if t == 1 else m0
        # orient everything as [source model, target model]
        Wst = W if t == 1 else W.T
        eta_st = eta if t == 1 else eta.T
        term1 = float(np.sum(wt * (nt - P["k"]) / nt * P["sig"]))
        tr_eta = P["tr"] / nt + (1.0 if intercept_random else 0.0)
        term2 = float(np.sum(Wst * eta_st * tr_eta[None, :]))
        Tr = Q["Gi"] @ P["Gt"].T if c else np.zeros(Wst.shape)
        term3 = float(np.sum(Wst * (Q["sig"][:, None] / nt) * (Tr + nt / ns)))
        out[(t, s)] = np.array([term1, term2, term3])
    return out


def _as_cache(data_or_cache, a=DEFAULT_A) -> ModelSpaceCache:
    if isinstance(data_or_cache, ModelSpaceCache):
        return data_or_cache
    return ModelSpaceCache(data_or_cache, a=a)


def bma_error(data_or_cache, common: Sequence[int], direction=FORWARD,
              family: str = "independent", intercept_random: bool = False) -> ErrorBreakdown:
    """Model-averaged error breakdown for one common set and one direction.

    ``family="independent"`` lets the two specific sets range independently
    over subsets of the non-common predictors; ``"disjoint"`` additionally
    forbids a predictor from being specific to both datasets.
    """
    cache = _as_cache(data_or_cache)
    cmask = _mask(common)
    if cmask > cache.full_mask:
        raise ValueError("common set refers to a column that does not exist")
    terms = _evaluate(cache, cmask, family, intercept_random)[tuple(direction)]
    return ErrorBreakdown(tuple(direction), *map(float, terms))


# worker-side cache, inherited through fork
_WORKER_CACHE: ModelSpaceCache | None = None


def _worker(args):
    masks, family, intercept_random = args
    return [(m, _evaluate(_WORKER_CACHE, m, family, intercept_random)) for m in masks]


def _common_masks(K: int, min_common: int, max_common: int) -> list[int]:
    pc = [bin(m).count("1") for m in range(1 << K)]
    return [m for m in range(1 << K) if min_common <= pc[m] <= max_common]


def default_jobs() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # pragma: no cover - non-Linux
        return os.cpu_count() or 1


def similarity_search(data_or_cache, min_common: int = 1, max_common: int | None = None,
                      objective: str = "sum", family: str = "independent",
                      intercept_random: bool = False, n_jobs: int = 1) -> list[CommonSetResult]:
    """Evaluate every common set with ``min_common <= |C| <= max_common`` and rank them.

    Ranking is ascending in the objective (``sum`` of the two directional
    errors, or ``maxmin``: the larger of the two), ties broken by the
    smaller bitmask.  Results do not depend on ``n_jobs``.
    """
    global _WORKER_CACHE
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}; choose from {OBJECTIVES}")
    if family not in FAMILIES:
        raise ValueError(f"unknown model family {family!r}; choose from {FAMILIES}")
    cache = _as_cache(data_or_cache)
    K = cache.K
    max_common = K if max_common is None else max_common
    if not 0 <= min_common <= max_common <= K:
        raise ValueError(f"need 0 <= min_common <= max_common <= {K}")
    masks = _common_masks(K, min_common, max_common)
    # check the guard up front so a worker never hits it
    worst = min(masks, key=lambda m: bin(m).count("1"))
    free = K - bin(worst).count("1")
    if 4 ** free > MAX_JOINT_PAIRS:
        raise EnumerationError(
            f"common sets of size {K - free} give {4 ** free} joint model pairs "
            f"(limit {MAX_JOINT_PAIRS}); raise --min-common")

    if n_jobs <= 1 or len(masks) < 2:
        evaluated = [(m, _evaluate(cache, m, family, intercept_random)) for m in masks]
    else:
        n_chunks = min(len(masks), 4 * n_jobs)
        chunks = [masks[i::n_chunks] for i in range(n_chunks)]
        _WORKER_CACHE = cache
        try:
            ctx = mp.get_context("fork")
            with ProcessPoolExecutor(max_workers=n_jobs, mp_context=ctx) as ex:
                evaluated = [r for part in ex.map(_worker, [(c, family, intercept_random)
                                                            for c in chunks]) for r in part]
        finally:
            _WORKER_CACHE = None
        evaluated.sort(key=lambda r: r[0])

    rows = []
    for m, terms in evaluated:
        fwd = ErrorBreakdown(FORWARD, *terms[FORWARD])
        bwd = ErrorBreakdown(BACKWARD, *terms[BACKWARD])
        value = fwd.total + bwd.total if objective == "sum" else max(fwd.total, bwd.total)
        rows.append((value, m, fwd, bwd))
    rows.sort(key=lambda r: (r[0], r[1]))
    names = cache.data.columns
    return [CommonSetResult(tuple(_bits(m)), tuple(names[i] for i in _bits(m)), fwd, bwd,
                            fwd.total + bwd.total, rank, objective)
            for rank, (_, m, fwd, bwd) in enumerate(rows, start=1)]


@dataclass(frozen=True)
class CompatRow:
    predictors: tuple[str, ...]
    breakdown: ErrorBreakdown

    def as_dict(self) -> dict:
        d = {"predictors": list(self.predictors)}
        d.update(self.breakdown.as_dict())
        return d


def compat_table(data: TwoSetData, predictor_sets: Sequence[Sequence], a: float = DEFAULT_A,
                 directions=(BACKWARD, FORWARD)) -> list[CompatRow]:
    """Prediction errors when both datasets use the same predictors and the constant.

    Each set is fitted separately in the two datasets by hyper-g regression;
    the posterior means supply the plug-in variances for the all-common
    formula.  Rows come out set by set, ``S0|S1`` before ``S1|S0``.
    """
    std = data if check_standardized(data) else standardize(data)
    rows = []
    for pset in predictor_sets:
        cols = [std.column_index(p) for p in pset]
        if len(set(cols)) != len(cols):
            raise ValueError(f"repeated predictor in {pset}")
        designs, fits = [], []
        for j in (0, 1):
            Xj, yj = std.subset(j)
            A = Xj[:, cols]
            fits.append(hyperg_fit(A, yj, columns=cols, a=a))
            designs.append(np.column_stack([A, np.ones(A.shape[0])]))
        v = estimate_variances(fits[0], fits[1])
        names = tuple(std.columns[c] for c in cols)
        for t, s in directions:
            rows.append(CompatRow(names, pe_rcm(v, designs[s], designs[t], (t, s), k=len(cols))))
    return rows


@dataclass(frozen=True)
class MlselResult:
    dataset: int
    best: tuple[int, ...]
    names: tuple[str, ...]
    ranking: list  # (columns, log marginal), best first

    def as_dict(self, top: int | None = None) -> dict:
        rk = self.ranking if top is None else self.ranking[:top]
        return {"dataset": self.dataset, "best": list(self.best), "names": list(self.names),
                "ranking": [{"columns": list(c), "log_marginal": lm} for c, lm in rk]}


def mlsel(data_or_cache, dataset: int) -> MlselResult:
    """Rank all predictor subsets of one dataset by hyper-g marginal likelihood."""
    if dataset not in (0, 1):
        raise ValueError("dataset must be 0 or 1")
    cache = _as_cache(data_or_cache)
    lm = cache.log_marginal[dataset]
    # stable sort on -lm keeps the smaller mask first among ties
    order = np.argsort(-lm, kind="stable")
    ranking = [(tuple(_bits(int(m))), float(lm[m])) for m in order]
    best = ranking[0][0]
    return MlselResult(dataset, best, tuple(cache.data.columns[i] for i in best), ranking)


def comparison_models(K: int, min_common: int = 7) -> list[ModelPair]:
    """Model pairs with more than ``min_common`` common predictors.

    Each remaining predictor is either left out, specific to dataset 0, or
    specific to dataset 1.  Order: by common-set bitmask, then by the
    base-3 code of the assignment of the remaining predictors.
    """
    out = []
    for cm in range(1 << K):
        if bin(cm).count("1") <= min_common:
            continue
        free = [i for i in range(K) if not cm >> i & 1]
        for code in range(3 ** len(free)):
            s0, s1 = [], []
            for i in free:
                code, r = divmod(code, 3)
                (s0 if r == 1 else s1 if r == 2 else []).append(i)
            out.append(ModelPair(tuple(_bits(cm)), tuple(s0), tuple(s1)))
    return out


@dataclass(frozen=True)
class ComparisonRecord:
    index: int
    pair: ModelPair
    pe_approx: float
    pe_mcmc_mean: float
    pe_mcmc_sd: float
    deviance: float
    approx: tuple[float, float, float]
    mcmc: tuple[float, float, float]
    acceptance: tuple[float, float]

    @property
    def differences(self) -> dict:
        """Posterior mean minus approximated estimate for each variance."""
        keys = ("sigma0_sq", "sigma1_sq", "sigma_eta_sq")
        return {k: m - a for k, m, a in zip(keys, self.mcmc, self.approx)}

    def as_dict(self) -> dict:
        d = {"index": self.index, "common": list(self.pair.common),
             "specific0": list(self.pair.specific0), "specific1": list(self.pair.specific1),
             "pe_approx": self.pe_approx, "pe_mcmc_mean": self.pe_mcmc_mean,
             "pe_mcmc_sd": self.pe_mcmc_sd, "deviance": self.deviance,
             "acceptance0": self.acceptance[0], "acceptance1": self.acceptance[1]}
        for k, v in zip(("sigma0_sq", "sigma1_sq", "sigma_eta_sq"), self.approx):
            d[f"approx_{k}"] = v
        for k, v in zip(("sigma0_sq", "sigma1_sq", "sigma_eta_sq"), self.mcmc):
            d[f"mcmc_{k}"] = v
        for k, v in self.differences.items():
            d[f"diff_{k}"] = v
        return d


def _approx_variances(data, pair, a):
    fits = []
    for j in (0, 1):
        Xj, yj = data.subset(j)
        cols = list(pair.predictors(j))
        fits.append(hyperg_fit(Xj[:, cols], yj, columns=cols, a=a))
    return estimate_variances(fits[0], fits[1], common=list(pair.common))


def _compare_one(args):
    index, pair, data, iters, burnin, seed, a = args
    v = _approx_variances(data, pair, a)
    pe_approx = pe_grcm(v, pair, data, FORWARD).total + pe_grcm(v, pair, data, BACKWARD).total
    draws = gibbs_run(pair, data, iters=iters, burnin=burnin, seed=seed, a=a)
    post = pe_posterior(draws, pair, data)
    vm = draws.variance_means()
    dev = abs(pe_approx - post.mean) / post.sd if post.sd > 0 else float("inf")
    return ComparisonRecord(
        index, pair, pe_approx, post.mean, post.sd, dev,
        approx=(v.sigma0_sq, v.sigma1_sq, v.sigma_eta_sq),
        mcmc=(vm.sigma0_sq, vm.sigma1_sq, vm.sigma_eta_sq),
        acceptance=tuple(float(x) for x in draws.acceptance_rate),
    )


def select_models(n_models: int, size: int | None, seed: int) -> list[int]:
    """Sorted random subset of model indices (all of them if ``size`` is None)."""
    if size is None or size >= n_models:
        return list(range(n_models))
    rng = np.random.Generator(np.random.Philox(seed))
    return sorted(int(i) for i in rng.choice(n_models, size=size, replace=False))


def compare_approaches(data: TwoSetData, min_common: int = 7, iters: int = 20000,
                       burnin: int = 5000, seed: int = 0, subset_size: int | None = None,
                       a: float = DEFAULT_A, n_jobs: int = 1) -> list[ComparisonRecord]:
    """Approximated (hyper-g plug-in) versus full MCMC prediction error per model.

    The error compared is the sum of both directions.  Model ``i`` of the
    family runs its chain with seed ``seed ^ i``, so a record does not depend
    on which other models are evaluated or on ``n_jobs``.
    """
    std = data if check_standardized(data) else standardize(data)
    models = comparison_models(std.n_predictors, min_common)
    if not models:
        raise ValueError(f"no models have more than {min_common} common predictors")
    chosen = select_models(len(models), subset_size, seed)
    jobs = [(i, models[i], std, iters, burnin, seed ^ i, a) for i in chosen]
    if n_jobs <= 1 or len(jobs) < 2:
        return [_compare_one(j) for j in jobs]
    ctx = mp.get_context("fork")
    with ProcessPoolExecutor(max_workers=n_jobs, mp_context=ctx) as ex:
        return list(ex.map(_compare_one, jobs))


def summarize_differences(records: Sequence[ComparisonRecord]) -> dict:
    """Quartiles of MCMC-minus-approximated differences per variance."""
    out = {}
    for key in ("sigma0_sq", "sigma1_sq", "sigma_eta_sq"):
        d = np.array([r.differences[key] for r in records])
        q = np.quantile(d, [0.0, 0.25, 0.5, 0.75, 1.0])
        out[key] = dict(zip(("min", "q1", "median", "q3", "max"), map(float, q)))
        out[key]["mean"] = float(d.mean())
    return out
