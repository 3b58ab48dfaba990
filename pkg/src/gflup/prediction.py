"""Factor subset selection and multi-trait BLUP prediction.

All predictors condition on training ("observed") genotype means and map
them to test genotypes through the kinship blocks. The joint multi-trait
system

    (Sigma_g (x) K_oo + Sigma_e (x) I) x = vec(Y)

is solved by simultaneous diagonalization of the trait pencil and the
kinship, reducing it to independent scalar divisions. Trait covariances
entering these equations are on the genotype-mean scale: the residual
component is the plot-level estimate divided by the replicate count.

Inputs are assumed column-centered; the functions subtract training column
means so that the global mean acts as the only fixed effect.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import pandas as pd
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.optimize import minimize_scalar

from .covariance import estimate_covariances
from .data import Kinship, PlotData, _freeze, stabilized
from .exceptions import (
    DegenerateVariance,
    DimensionMismatch,
    SingularKtt,
    SingularPhenotypic,
    SingularSigmaE,
    SingularV,
    TooManyFactors,
)

SUBSET_GUARD = 20


@dataclass(frozen=True, eq=False)
class SelectedFactors:
    """Best factor subset for predicting the focal trait, by adjusted R^2."""

    indices: tuple
    adjusted_r2: float

    @property
    def empty(self) -> bool:
        return len(self.indices) == 0


@dataclass(frozen=True, eq=False)
class TraitCovariances:
    """Genetic and residual covariances of selected factors plus focal trait.

    ``residual`` is on the genotype-mean scale (plot-level estimate divided
    by the replicate count); the focal trait occupies the last position.
    """

    genetic: np.ndarray
    residual: np.ndarray
    r: int

    def __post_init__(self):
        object.__setattr__(self, "genetic", _freeze(np.asarray(self.genetic, float)))
        object.__setattr__(self, "residual", _freeze(np.asarray(self.residual, float)))

    @property
    def n_traits(self) -> int:
        return self.genetic.shape[0]

    @property
    def focal_index(self) -> int:
        return self.n_traits - 1


@dataclass(frozen=True, eq=False)
class PredictionResult:
    """Predicted focal-trait genetic values for test and training genotypes."""

    test_predictions: np.ndarray
    train_blups: np.ndarray
    scenario: str
    test_genotypes: tuple = ()
    train_genotypes: tuple = ()
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(
            self, "test_predictions", _freeze(np.asarray(self.test_predictions, float))
        )
        object.__setattr__(self, "train_blups", _freeze(np.asarray(self.train_blups, float)))
        if not (
            np.all(np.isfinite(self.test_predictions))
            and np.all(np.isfinite(self.train_blups))
        ):
            raise ValueError("predictions must be finite")

    def to_tsv(self, path) -> None:
        """Write test-set predictions as ``genotype<TAB>prediction<TAB>scenario``."""
        ids = self.test_genotypes or tuple(range(len(self.test_predictions)))
        df = pd.DataFrame(
            {
                "genotype": list(ids),
                "prediction": np.asarray(self.test_predictions),
                "scenario": self.scenario,
            }
        )
        df.to_csv(path, sep="\t", index=False)


def adjusted_r2(focal: np.ndarray, predictors: np.ndarray) -> float:
    """Adjusted R^2 of an intercept OLS of ``focal`` on ``predictors``."""
    y = np.asarray(focal, float)
    x = np.asarray(predictors, float)
    if x.ndim == 1:
        x = x[:, None]
    n, k = x.shape
    if n <= k + 1:
        return -np.inf
    design = np.column_stack([np.ones(n), x])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    ss_tot = np.sum((y - y.mean()) ** 2)
    if ss_tot <= 0.0:
        return -np.inf
    r2 = 1.0 - np.sum(resid**2) / ss_tot
    return float(1.0 - (1.0 - r2) * (n - 1) / (n - k - 1))


def select_factors(
    factor_blues: np.ndarray,
    focal_blues: np.ndarray,
    guard: int = SUBSET_GUARD,
    method: str = "auto",
) -> SelectedFactors:
    """Best subset of factor BLUEs for predicting the focal BLUEs.

    All non-empty subsets are scored by adjusted R^2 (exhaustively up to
    ``guard`` factors, by forward selection beyond). Ties prefer smaller
    subsets, then lexicographic order. A best subset with adjusted R^2 <= 0
    yields an empty selection: no factor beats the intercept-only model.
    """
    x = np.asarray(factor_blues, float)
    y = np.asarray(focal_blues, float)
    m = x.shape[1]
    if method == "auto":
        method = "exhaustive" if m <= guard else "forward"
    if method == "exhaustive":
        if m > guard:
            raise TooManyFactors(f"exhaustive search over {m} factors exceeds guard {guard}")
        best_idx, best_adj = (), 0.0
        for size in range(1, m + 1):
            for subset in combinations(range(m), size):
                adj = adjusted_r2(y, x[:, subset])
                if adj > best_adj:
                    best_idx, best_adj = subset, adj
        return SelectedFactors(best_idx, float(best_adj))
    if method != "forward":
        raise ValueError(f"unknown method {method!r}")
    chosen: list[int] = []
    best_adj = 0.0
    while len(chosen) < m:
        candidates = [
            (adjusted_r2(y, x[:, chosen + [j]]), j) for j in range(m) if j not in chosen
        ]
        adj, j = max(candidates, key=lambda t: (t[0], -t[1]))
        if adj <= best_adj:
            break
        chosen.append(j)
        best_adj = adj
    return SelectedFactors(tuple(sorted(chosen)), float(best_adj))


def estimate_trait_covariances(data: PlotData) -> TraitCovariances:
    """Covariances of plot-level factor scores plus focal trait for the BLUP step.

    The residual matrix is divided by the replicate count so it matches
    the genotype-mean scale of the BLUEs entering the BLUP equations.
    """
    pair = estimate_covariances(data)
    return TraitCovariances(pair.genetic, pair.residual / data.r, data.r)


def fast_kron_solve(
    sigma_g: np.ndarray, sigma_e: np.ndarray, k: np.ndarray, rhs: np.ndarray
) -> np.ndarray:
    """Solve (sigma_g (x) k + sigma_e (x) I) x = vec(rhs) by diagonalization.

    ``rhs`` holds one column per trait; the solution is returned in the
    same layout. ``sigma_e`` must be positive definite and ``k`` symmetric
    positive semidefinite. Equivalent to the dense solve at a cost linear
    in the number of rows once the two eigendecompositions are done.
    """
    sigma_g = np.asarray(sigma_g, float)
    sigma_e = np.asarray(sigma_e, float)
    k = np.asarray(k, float)
    rhs = np.asarray(rhs, float)
    if rhs.ndim == 1:
        rhs = rhs[:, None]
    t = sigma_e.shape[0]
    if sigma_g.shape != (t, t) or rhs.shape[1] != t or rhs.shape[0] != k.shape[0]:
        raise DimensionMismatch("trait/kinship dimensions do not agree")
    try:
        chol = np.linalg.cholesky(sigma_e)
    except np.linalg.LinAlgError as err:
        raise SingularSigmaE("residual trait covariance is not positive definite") from err
    linv = np.linalg.inv(chol)
    pencil = linv @ sigma_g @ linv.T
    s, v = np.linalg.eigh((pencil + pencil.T) / 2.0)
    d, q = np.linalg.eigh((k + k.T) / 2.0)
    c = q.T @ rhs @ linv.T @ v
    c /= 1.0 + np.outer(d, s)
    return q @ c @ v.T @ linv


def _chol(a: np.ndarray, err):
    try:
        return cho_factor((a + a.T) / 2.0)
    except LinAlgError as exc:
        raise err from exc


def blup_univariate(
    focal_blues: np.ndarray, kinship: Kinship, sigma_g: float, sigma_e: float
) -> PredictionResult:
    """Single-trait BLUP of training genotype effects, projected to the test set.

    Training effects are sigma_g * K_oo V^-1 y with V = sigma_g K_oo +
    sigma_e I; test predictions are K_to K_oo^-1 times the training
    effects.
    """
    y = np.asarray(focal_blues, float)
    koo = stabilized(kinship.k_oo)
    if y.shape[0] != koo.shape[0]:
        raise DimensionMismatch("focal BLUEs do not match the observed set")
    yc = y - y.mean()
    v = sigma_g * koo + sigma_e * np.eye(koo.shape[0])
    alpha = cho_solve(_chol(v, SingularV("V is not positive definite")), yc)
    g_o = sigma_g * (koo @ alpha)
    koo_ch = _chol(koo, SingularV("K_oo is not positive definite"))
    g_t = kinship.k_to @ cho_solve(koo_ch, g_o)
    return PredictionResult(
        g_t,
        g_o,
        "univariate",
        kinship.test_ids,
        kinship.observed_ids,
        {"sigma_g": sigma_g, "sigma_e": sigma_e},
    )


def _cv1_train_blups(blues: np.ndarray, kinship: Kinship, cov: TraitCovariances):
    """All-trait training BLUPs G_o and the centered training data."""
    y = np.asarray(blues, float)
    if y.shape[1] != cov.n_traits:
        raise DimensionMismatch("BLUE columns do not match trait covariances")
    koo = stabilized(kinship.k_oo)
    if y.shape[0] != koo.shape[0]:
        raise DimensionMismatch("BLUE rows do not match the observed set")
    means = y.mean(axis=0)
    yc = y - means
    xt = fast_kron_solve(cov.genetic, cov.residual, koo, yc)
    if not np.all(np.isfinite(xt)):
        raise SingularV("joint mixed-model system is numerically singular")
    g_o = koo @ xt @ cov.genetic
    return g_o, means, koo


def blup_cv1(blues: np.ndarray, kinship: Kinship, cov: TraitCovariances) -> PredictionResult:
    """Multi-trait BLUP when secondary data exist for the training set only."""
    g_o, _, koo = _cv1_train_blups(blues, kinship, cov)
    f = cov.focal_index
    koo_ch = _chol(koo, SingularV("K_oo is not positive definite"))
    g_t = kinship.k_to @ cho_solve(koo_ch, g_o)
    return PredictionResult(
        g_t[:, f], g_o[:, f], "cv1", kinship.test_ids, kinship.observed_ids
    )


def blup_cv2(
    blues: np.ndarray,
    kinship: Kinship,
    cov: TraitCovariances,
    test_secondary: np.ndarray,
) -> PredictionResult:
    """Two-step multi-trait BLUP when secondary data also cover the test set.

    Step one computes all-trait CV1 training BLUPs and their projection to
    the test set. Step two regresses the focal effect on the deviation of
    the observed test secondary traits from that projection, weighting with
    the inverse test-set kinship block.
    """
    f = cov.focal_index
    if f < 1:
        raise DimensionMismatch("CV2 requires at least one secondary trait")
    test_secondary = np.asarray(test_secondary, float)
    if test_secondary.ndim == 1:
        test_secondary = test_secondary[:, None]
    if test_secondary.shape[1] != f:
        raise DimensionMismatch("test secondary columns do not match trait covariances")

    g_o, means, koo = _cv1_train_blups(blues, kinship, cov)
    koo_ch = _chol(koo, SingularV("K_oo is not positive definite"))
    g_t_pred = kinship.k_to @ cho_solve(koo_ch, g_o)

    ktt = stabilized(kinship.k_tt)
    if test_secondary.shape[0] != ktt.shape[0]:
        raise DimensionMismatch("test secondary rows do not match the test set")
    ktt_ch = _chol(ktt, SingularKtt("K_tt is not positive definite"))
    ktt_inv = cho_solve(ktt_ch, np.eye(ktt.shape[0]))

    resid = (test_secondary - means[:f]) - g_t_pred[:, :f]
    x2 = fast_kron_solve(cov.genetic[:f, :f], cov.residual[:f, :f], ktt_inv, resid)
    correction = ktt_inv @ x2 @ cov.genetic[:f, f]
    return PredictionResult(
        g_t_pred[:, f] + correction,
        g_o[:, f],
        "cv2",
        kinship.test_ids,
        kinship.observed_ids,
    )


def estimate_variance_components(focal_blues: np.ndarray, k_oo: np.ndarray):
    """Genetic and residual variance of genotype means by heritability profiling.

    The centered data are rotated to the eigenbasis of the kinship block,
    where the likelihood profile over the heritability is one-dimensional;
    a coarse grid locates the basin and Brent's method refines it.
    Deterministic given the inputs. Returns ``(sigma_g, sigma_e)`` on the
    genotype-mean scale.
    """
    y = np.asarray(focal_blues, float)
    n = y.shape[0]
    yc = y - y.mean()
    d, q = np.linalg.eigh(stabilized(np.asarray(k_oo, float)))
    yt = q.T @ yc
    yt2 = yt**2

    def nll(h: float) -> float:
        w = h * d + (1.0 - h)
        s2 = np.sum(yt2 / w) / (n - 1)
        return float(np.sum(np.log(w)) + n * np.log(max(s2, 1e-300)))

    grid = np.linspace(0.01, 0.99, 49)
    values = [nll(h) for h in grid]
    i = int(np.argmin(values))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(nll, bounds=(lo, hi), method="bounded", options={"xatol": 1e-6})
    h = float(res.x)
    s2 = float(np.sum(yt2 / (h * d + (1.0 - h))) / (n - 1))
    return h * s2, (1.0 - h) * s2


def siblup_weights(pair_phenotypic_reg: np.ndarray, sigma_sf_g: np.ndarray) -> np.ndarray:
    """Selection-index weights: inverse regularized phenotypic covariance
    times the feature-focal genetic covariances."""
    phen = np.asarray(pair_phenotypic_reg, float)
    sigma = np.asarray(sigma_sf_g, float)
    ch = _chol(phen, SingularPhenotypic("phenotypic covariance is singular"))
    return cho_solve(ch, sigma)


def accuracy(predictions: np.ndarray, truth: np.ndarray) -> float:
    """Pearson correlation between predictions and realized genetic values."""
    x = np.asarray(predictions, float)
    y = np.asarray(truth, float)
    if x.shape != y.shape or x.ndim != 1:
        raise DimensionMismatch("prediction and truth vectors must have equal length")
    if x.size < 3:
        raise DimensionMismatch("need at least 3 pairs")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt(np.sum(xc**2) * np.sum(yc**2))
    if denom <= 0.0:
        raise DegenerateVariance("zero variance in predictions or truth")
    return float(np.dot(xc, yc) / denom)
