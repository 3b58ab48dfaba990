"""Redundancy filtering and cross-validated ridge-to-identity regularization.

The penalty loss for a candidate theta is

    phi_K(theta) = (1/K) sum_k w_k { ln|R_train(theta)| + tr[R_k R_train(theta)^-1] }

with R_train(theta) = (1 - theta) R_train + theta I. With the training
eigendecomposition R_train = U L U' precomputed per fold, each evaluation
reduces to sums over the penalized eigenvalues, so the minimization scales
linearly with the matrix dimension per iteration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .covariance import estimate_covariances, to_correlation
from .data import PlotData, _freeze
from .exceptions import (
    InvalidPenalty,
    InvalidThreshold,
    SingularPenalizedMatrix,
)

PENALTY_LOWER = 1e-6
BRENT_XATOL = 1e-6
DEFAULT_FOLDS = 5


@dataclass(frozen=True, eq=False)
class FilterResult:
    """Outcome of redundancy filtering at threshold ``tau``."""

    kept: np.ndarray
    dropped: np.ndarray
    tau: float

    def __post_init__(self):
        object.__setattr__(self, "kept", _freeze(np.asarray(self.kept, int)))
        object.__setattr__(self, "dropped", _freeze(np.asarray(self.dropped, int)))


@dataclass(frozen=True, eq=False)
class PenaltyFit:
    """Optimal penalty with its cross-validated loss and fold layout."""

    theta: float
    cv_loss: float
    folds: int
    fold_assignment: dict


def redundancy_filter(r_g: np.ndarray, tau: float) -> FilterResult:
    """Greedily drop features until no pair has absolute correlation >= tau.

    Each round removes the feature involved in the most threshold
    violations; ties fall to the larger total absolute correlation, then to
    the lowest index, so the result is deterministic.
    """
    if not 0.0 < tau <= 1.0:
        raise InvalidThreshold(f"tau = {tau} outside (0, 1]")
    r_g = np.asarray(r_g, dtype=float)
    p = r_g.shape[0]
    absr = np.abs(r_g).copy()
    np.fill_diagonal(absr, 0.0)

    kept = np.ones(p, dtype=bool)
    dropped = []
    while True:
        idx = np.flatnonzero(kept)
        sub = absr[np.ix_(idx, idx)]
        counts = (sub >= tau).sum(axis=1)
        worst = counts.max(initial=0)
        if worst == 0:
            break
        cand = np.flatnonzero(counts == worst)
        if cand.size > 1:
            sums = sub[cand].sum(axis=1)
            cand = cand[sums == sums.max()]
        drop = idx[cand[0]]
        kept[drop] = False
        dropped.append(drop)

    result = FilterResult(np.flatnonzero(kept), np.sort(dropped), float(tau))
    sub = absr[np.ix_(result.kept, result.kept)]
    assert sub.max(initial=0.0) < tau
    return result


def penalized_correlation(
    r: np.ndarray, theta: float, target: np.ndarray | None = None
) -> np.ndarray:
    """Convex combination (1 - theta) * r + theta * target (identity by default)."""
    if not 0.0 < theta <= 1.0:
        raise InvalidPenalty(f"theta = {theta} outside (0, 1]")
    r = np.asarray(r, dtype=float)
    if target is None:
        target = np.eye(r.shape[0])
    target = np.asarray(target, dtype=float)
    if target.shape != r.shape:
        raise InvalidPenalty("target shape does not match")
    return (1.0 - theta) * r + theta * target


def penalty_loss_function(r_train_folds, r_heldout_folds, weights):
    """Build the cross-validated loss as a function of theta.

    Training-fold eigendecompositions and the rotated held-out diagonals
    are precomputed once; every subsequent evaluation costs O(K p).
    """
    if not len(r_train_folds) == len(r_heldout_folds) == len(weights):
        raise ValueError("fold lists and weights must have equal length")
    if any(w <= 0 for w in weights):
        raise ValueError("weights must be positive")
    folds = []
    for r_train, r_held, w in zip(r_train_folds, r_heldout_folds, weights):
        vals, vecs = np.linalg.eigh(np.asarray(r_train, float))
        a_diag = np.einsum("ij,jk,ki->i", vecs.T, np.asarray(r_held, float), vecs)
        folds.append((vals, a_diag, float(w)))
    k = len(folds)

    def loss(theta: float) -> float:
        if not 0.0 < theta <= 1.0:
            raise InvalidPenalty(f"theta = {theta} outside (0, 1]")
        total = 0.0
        for vals, a_diag, w in folds:
            lam = (1.0 - theta) * vals + theta
            if lam.min() <= 0.0:
                raise SingularPenalizedMatrix(f"penalized eigenvalue <= 0 at theta={theta}")
            total += w * (np.log(lam).sum() + (a_diag / lam).sum())
        return total / k

    return loss


def cv_penalty_loss(r_train_folds, r_heldout_folds, weights, theta: float) -> float:
    """Evaluate the cross-validated penalty loss at one theta."""
    return penalty_loss_function(r_train_folds, r_heldout_folds, weights)(theta)


def assign_folds(genotype_ids, k_folds: int, seed: int = 0) -> dict:
    """Deterministic genotype -> fold map (both replicates share a fold)."""
    ids = list(genotype_ids)
    order = np.random.default_rng(seed).permutation(len(ids))
    assignment = {}
    for fold, chunk in enumerate(np.array_split(order, k_folds)):
        for i in chunk:
            assignment[ids[i]] = fold
    return assignment


def _fold_matrices(data: PlotData, columns, which: str, fold_ids, train_ids):
    """Per-fold (train, held-out) correlation matrices for one component.

    Training matrices go through the standard estimator, whose genetic
    component is PD-corrected. Held-out matrices use the raw genetic
    estimate (they only enter a trace); if that estimate has a
    non-positive diagonal the corrected one is substituted.
    """
    train = estimate_covariances(data.subset_genotypes(train_ids), columns)
    held = estimate_covariances(data.subset_genotypes(fold_ids), columns)
    if which == "genetic":
        r_train = to_correlation(train.genetic)
        raw = held.genetic_raw
        r_held = to_correlation(raw if np.diag(raw).min() > 0 else held.genetic)
    elif which == "residual":
        r_train = to_correlation(train.residual)
        r_held = to_correlation(held.residual)
    elif which == "phenotypic":
        r_train = to_correlation(train.genetic + train.residual)
        raw = held.genetic_raw + held.residual
        r_held = to_correlation(raw if np.diag(raw).min() > 0 else held.genetic + held.residual)
    else:
        raise ValueError(f"unknown component {which!r}")
    return r_train, r_held


def optimize_penalty(
    data: PlotData,
    columns=None,
    which: str = "genetic",
    k_folds: int = DEFAULT_FOLDS,
    seed: int = 0,
) -> PenaltyFit:
    """Cross-validated penalty for one correlation matrix component.

    Genotypes are split into ``k_folds`` disjoint folds; each fold is held
    out once while the complementary genotypes provide the penalized
    estimate. Fold weights are genotype counts for the genetic component
    and plot-row counts otherwise. The loss is minimized over
    theta in [1e-6, 1] with Brent's method.
    """
    if k_folds < 2:
        raise ValueError("k_folds must be >= 2")
    if data.n_g < k_folds:
        raise ValueError("more folds than genotypes")
    assignment = assign_folds(data.genotype_ids, k_folds, seed)
    r_train_folds, r_held_folds, weights = [], [], []
    for fold in range(k_folds):
        fold_ids = [g for g in data.genotype_ids if assignment[g] == fold]
        train_ids = [g for g in data.genotype_ids if assignment[g] != fold]
        r_train, r_held = _fold_matrices(data, columns, which, fold_ids, train_ids)
        r_train_folds.append(r_train)
        r_held_folds.append(r_held)
        weight = len(fold_ids) if which == "genetic" else len(fold_ids) * data.r
        weights.append(weight)

    loss = penalty_loss_function(r_train_folds, r_held_folds, weights)
    res = minimize_scalar(
        loss,
        bounds=(PENALTY_LOWER, 1.0),
        method="bounded",
        options={"xatol": BRENT_XATOL},
    )
    return PenaltyFit(
        theta=float(res.x),
        cv_loss=float(res.fun),
        folds=k_folds,
        fold_assignment=assignment,
    )
