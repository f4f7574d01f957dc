"""Least squares, annihilators and expected cross-dataset prediction errors.

Directions are written ``(target, source)``: ``(1, 0)`` is the error made when
dataset 1 is predicted from a model estimated on dataset 0, i.e. PE(S1|S0).

All trace computations use thin QR factorizations and k-by-k Gram matrices;
no n-by-n projector is ever formed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .dataio import TwoSetData

__all__ = [
    "RankDeficientError",
    "ModelPair",
    "VarianceEstimates",
    "ErrorBreakdown",
    "ols",
    "annihilate",
    "fw_fit",
    "pe_rcm",
    "pe_grcm",
    "grcm_coefficients",
    "pair_designs",
    "FORWARD",
    "BACKWARD",
]

RANK_TOL = 1e-10
FORWARD = (1, 0)   # S1 | S0
BACKWARD = (0, 1)  # S0 | S1


class RankDeficientError(np.linalg.LinAlgError):
    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


def _as_2d(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    return A


def _pivoted_qr(X: np.ndarray, what: str = "design"):
    """Thin pivoted QR with a relative rank test on the diagonal of R."""
    Q, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    if d.size and (d[0] == 0 or d[-1] < RANK_TOL * d[0]):
        r = int(np.sum(d >= RANK_TOL * d[0])) if d[0] > 0 else 0
        col = int(piv[r])
        raise RankDeficientError(
            f"{what} is rank deficient: column {col} depends on the others", column=col)
    return Q, R, piv


def ols(X, y) -> np.ndarray:
    """Least-squares coefficients; ``y`` may hold several right-hand sides."""
    X = _as_2d(X)
    y = np.asarray(y, dtype=float)
    if X.shape[0] < X.shape[1]:
        raise RankDeficientError(f"design has {X.shape[0]} rows for {X.shape[1]} columns",
                                 column=X.shape[0])
    if X.shape[1] == 0:
        return np.zeros((0,) + y.shape[1:])
    Q, R, piv = _pivoted_qr(X)
    b = scipy.linalg.solve_triangular(R, Q.T @ y)
    out = np.empty_like(b)
    out[piv] = b
    return out


def annihilate(Z, A) -> np.ndarray:
    """Residuals of the columns of ``A`` after least-squares regression on ``Z``."""
    A = np.asarray(A, dtype=float)
    Z = _as_2d(Z) if np.size(Z) else np.zeros((A.shape[0], 0))
    if Z.shape[1] == 0:
        return A.copy()
    if Z.shape[0] < Z.shape[1]:
        raise RankDeficientError("more columns than rows in Z", column=Z.shape[0])
    Q, _, _ = _pivoted_qr(Z, "Z")
    return A - Q @ (Q.T @ A)


def fw_fit(Z, X, y) -> tuple[np.ndarray, np.ndarray]:
    """Two-step (Frisch-Waugh) fit of ``y`` on ``[Z X]``.

    Returns ``(alpha, beta)`` with ``beta`` estimated from ``X`` annihilated by
    ``Z`` and ``alpha`` from regressing ``y - X beta`` on ``Z``.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    Z = _as_2d(Z) if np.size(Z) else np.zeros((n, 0))
    X = _as_2d(X) if np.size(X) else np.zeros((n, 0))
    if Z.shape[1] + X.shape[1]:
        _pivoted_qr(np.hstack([Z, X]), "[Z X]")
    beta = ols(annihilate(Z, X), y)
    alpha = ols(Z, y - X @ beta)
    return alpha, beta


@dataclass(frozen=True)
class ModelPair:
    """Common and dataset-specific predictor blocks (column indices).

    ``specific0`` are the extra predictors used for dataset 0 and
    ``specific1`` those for dataset 1.  The constant regressor belongs to the
    common block unless ``intercept_in_common`` is false, in which case each
    dataset gets its own intercept inside its specific block.
    """

    common: tuple[int, ...] = ()
    specific0: tuple[int, ...] = ()
    specific1: tuple[int, ...] = ()
    intercept_in_common: bool = True
    intercept_random: bool = False

    def __post_init__(self):
        for name in ("common", "specific0", "specific1"):
            object.__setattr__(self, name, tuple(int(i) for i in getattr(self, name)))
        c = set(self.common)
        if len(c) != len(self.common):
            raise ValueError("duplicate common predictor")
        for s in (self.specific0, self.specific1):
            if len(set(s)) != len(s):
                raise ValueError("duplicate specific predictor")
            if c & set(s):
                raise ValueError("a predictor cannot be both common and specific")
        if self.intercept_random and not self.intercept_in_common:
            raise ValueError("a random intercept must be part of the common block")

    def specific(self, j: int) -> tuple[int, ...]:
        return self.specific0 if j == 0 else self.specific1

    def predictors(self, j: int) -> tuple[int, ...]:
        return self.common + self.specific(j)

    @property
    def k(self) -> int:
        return len(self.common)

    def swapped(self) -> "ModelPair":
        return ModelPair(self.common, self.specific1, self.specific0,
                         self.intercept_in_common, self.intercept_random)

    def validate(self, n_columns: int):
        for i in self.common + self.specific0 + self.specific1:
            if not 0 <= i < n_columns:
                raise ValueError(f"column index {i} out of range for {n_columns} predictors")


@dataclass(frozen=True)
class VarianceEstimates:
    sigma0_sq: float
    sigma1_sq: float
    sigma_eta_sq: float

    def __post_init__(self):
        for v in (self.sigma0_sq, self.sigma1_sq, self.sigma_eta_sq):
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"variances must be finite and nonnegative, got {v}")

    def sigma_sq(self, j: int) -> float:
        return self.sigma0_sq if j == 0 else self.sigma1_sq

    def as_array(self) -> np.ndarray:
        return np.array([self.sigma0_sq, self.sigma1_sq, self.sigma_eta_sq])


@dataclass(frozen=True)
class ErrorBreakdown:
    direction: tuple[int, int]
    term1: float
    term2: float
    term3: float
    total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "direction", tuple(int(d) for d in self.direction))
        object.__setattr__(self, "total", float(self.term1 + self.term2 + self.term3))

    @property
    def label(self) -> str:
        t, s = self.direction
        return f"S{t}|S{s}"

    def as_dict(self) -> dict:
        return {"direction": self.label, "term1": self.term1, "term2": self.term2,
                "term3": self.term3, "total": self.total}


def _check_direction(direction) -> tuple[int, int]:
    t, s = (int(d) for d in direction)
    if {t, s} != {0, 1}:
        raise ValueError(f"direction must be (1, 0) or (0, 1), got {direction}")
    return t, s


def _trace_ratio(Xs: np.ndarray, Xt: np.ndarray) -> float:
    """tr{(Xs'Xs)^{-1} Xt'Xt} via the R factor of Xs."""
    if Xs.shape[1] == 0:
        return 0.0
    _, R, piv = _pivoted_qr(Xs, "source design")
    # (Xs'Xs)^{-1} = P R^{-1} R^{-T} P', so the trace is ||Xt P R^{-1}||_F^2
    B = scipy.linalg.solve_triangular(R, Xt[:, piv].T, trans="T")
    return float(np.sum(B * B))


def pe_rcm(v: VarianceEstimates, X_source, X_target, direction=FORWARD,
           k: int | None = None) -> ErrorBreakdown:
    """Expected prediction error when both datasets share every predictor.

    ``X_source`` and ``X_target`` include the constant column.  ``k`` is the
    number of non-constant predictors; by default it is inferred from the
    target design.
    """
    t, s = _check_direction(direction)
    Xs = _as_2d(X_source)
    Xt = _as_2d(X_target)
    if Xs.shape[1] != Xt.shape[1]:
        raise ValueError("source and target designs must have the same columns")
    if k is None:
        k = int(np.sum(np.ptp(Xt, axis=0) > 0))
    n_t = Xt.shape[0]
    term3 = v.sigma_sq(s) / n_t * _trace_ratio(Xs, Xt)
    return ErrorBreakdown((t, s), v.sigma_sq(t), k * v.sigma_eta_sq, term3)


def pair_designs(data: TwoSetData, pair: ModelPair, j: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(specific, common)`` design blocks of dataset ``j``.

    The constant column is appended to whichever block holds the intercept.
    """
    pair.validate(data.n_predictors)
    Xj = data.X[data.label == j]
    ones = np.ones((Xj.shape[0], 1))
    W = Xj[:, list(pair.specific(j))]
    X = Xj[:, list(pair.common)]
    if pair.intercept_in_common:
        X = np.hstack([X, ones])
    else:
        W = np.hstack([W, ones])
    return W, X


def grcm_coefficients(pair: ModelPair, data: TwoSetData, direction=FORWARD) -> np.ndarray:
    """Linear map from ``(sigma0^2, sigma1^2, sigma_eta^2)`` to the three terms.

    Row ``i`` holds the coefficients of term ``i + 1``; the error is linear in
    the three variances, so posterior draws can be mapped in one product.
    """
    t, s = _check_direction(direction)
    W_s, X_s = pair_designs(data, pair, s)
    W_t, X_t = pair_designs(data, pair, t)
    n_t = X_t.shape[0]
    for W, X, j in ((W_s, X_s, s), (W_t, X_t, t)):
        if W.shape[1] + X.shape[1]:
            _pivoted_qr(np.hstack([W, X]), f"dataset {j} design [W X]")
    Xs_tilde = annihilate(W_s, X_s)
    Xt_tilde = annihilate(W_t, X_t)
    k_t = W_t.shape[1]
    # the constant column (last in X when intercept is common) only carries
    # coefficient randomness when the intercept is random
    eta_cols = Xt_tilde if pair.intercept_random or not pair.intercept_in_common \
        else Xt_tilde[:, :-1]
    coef = np.zeros((3, 3))
    coef[0, t] = (n_t - k_t) / n_t
    coef[1, 2] = float(np.sum(eta_cols * eta_cols)) / n_t
    coef[2, s] = _trace_ratio(Xs_tilde, Xt_tilde) / n_t
    return coef


def pe_grcm(v: VarianceEstimates, pair: ModelPair, data: TwoSetData,
            direction=FORWARD) -> ErrorBreakdown:
    """Expected prediction error under common plus dataset-specific predictors.

    The source model is estimated by the two-step fit: common coefficients
    from the source data after annihilating its specific block, then the
    target's specific coefficients from the target data.
    """
    coef = grcm_coefficients(pair, data, direction)
    terms = coef @ v.as_array()
    return ErrorBreakdown(_check_direction(direction), *map(float, terms))


def total_error(v: VarianceEstimates, pair: ModelPair, data: TwoSetData) -> float:
    """Sum of both directional errors."""
    return pe_grcm(v, pair, data, FORWARD).total + pe_grcm(v, pair, data, BACKWARD).total


def breakdown_from_terms(direction: Sequence[int], terms) -> ErrorBreakdown:
    return ErrorBreakdown(tuple(direction), *map(float, terms))
