"""Genetic/residual covariance estimation from replicated data.

Between- and within-genotype mean squares decompose the plot-level
covariance into a genetic and a residual component:

    MS_g = r * sum_j (ybar_j - ybar)(ybar_j - ybar)' / (n_g - 1)
    MS_e = sum_ij (y_ij - ybar_j)(y_ij - ybar_j)' / (n - n_g)
    genetic  = (MS_g - MS_e) / r
    residual = MS_e

The genetic component is a difference of moment matrices and may be
indefinite; it is corrected to the nearest positive-definite matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import PlotData, _freeze, genotype_means
from .exceptions import (
    InsufficientGenotypes,
    InsufficientReplication,
    NonPositiveDiagonal,
    NonSymmetric,
)

# Scale of the eigenvalue floor used by the positive-definite correction.
PD_FLOOR_SCALE = 1e-8
# Floor for residual diagonal entries (zero within-genotype variation).
RESIDUAL_DIAG_FLOOR = 1e-10

HIGHAM_TOL = 1e-9
HIGHAM_MAX_ITER = 200


@dataclass(frozen=True, eq=False)
class CovariancePair:
    """Genetic and residual covariance (or correlation) matrices of one feature set.

    ``genetic_raw`` keeps the uncorrected genetic estimate; ``genetic_diag``
    and ``residual_diag`` hold the covariance diagonals when the pair is on
    the correlation scale, for converting back.
    """

    genetic: np.ndarray
    residual: np.ndarray
    scale: str
    r: int
    genetic_raw: np.ndarray | None = None
    genetic_diag: np.ndarray | None = None
    residual_diag: np.ndarray | None = None

    def __post_init__(self):
        if self.scale not in ("covariance", "correlation"):
            raise ValueError(f"unknown scale {self.scale!r}")
        object.__setattr__(self, "genetic", _freeze(np.asarray(self.genetic, float)))
        object.__setattr__(self, "residual", _freeze(np.asarray(self.residual, float)))

    @property
    def p(self) -> int:
        return self.genetic.shape[0]


def _check_symmetric(a: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NonSymmetric("matrix must be square")
    if np.abs(a - a.T).max() > tol:
        raise NonSymmetric(f"asymmetry exceeds {tol}")
    return (a + a.T) / 2.0


def _pd_floor(eigvals: np.ndarray, floor_scale: float) -> float:
    return floor_scale * max(float(eigvals.max(initial=0.0)), 1.0)


def nearest_positive_definite(
    a: np.ndarray,
    unit_diagonal: bool | None = None,
    floor_scale: float = PD_FLOOR_SCALE,
) -> np.ndarray:
    """Nearest positive-definite matrix with a relative eigenvalue floor.

    Covariance-scale inputs are corrected by clipping eigenvalues (single
    projection onto the PD cone). Correlation-scale inputs additionally keep
    a unit diagonal via alternating projections with a Dykstra correction.
    Inputs whose smallest eigenvalue already exceeds the floor are returned
    unchanged.

    Parameters
    ----------
    a : ndarray
        Symmetric matrix (asymmetry beyond 1e-8 raises ``NonSymmetric``).
    unit_diagonal : bool, optional
        Force correlation handling; by default inferred from the diagonal.
    """
    a = _check_symmetric(a)
    if unit_diagonal is None:
        unit_diagonal = bool(np.allclose(np.diag(a), 1.0, atol=1e-8))
    eigvals = np.linalg.eigvalsh(a)
    delta = _pd_floor(eigvals, floor_scale)
    if eigvals.min() >= delta:
        return a

    if not unit_diagonal:
        vals, vecs = np.linalg.eigh(a)
        out = (vecs * np.maximum(vals, delta)) @ vecs.T
        return (out + out.T) / 2.0

    # Higham alternating projections between the PSD cone and the
    # unit-diagonal affine set.
    y = a.copy()
    ds = np.zeros_like(a)
    for _ in range(HIGHAM_MAX_ITER):
        rk = y - ds
        vals, vecs = np.linalg.eigh(rk)
        x = (vecs * np.maximum(vals, 0.0)) @ vecs.T
        ds = x - rk
        y_next = x.copy()
        np.fill_diagonal(y_next, 1.0)
        if np.linalg.norm(y_next - y, "fro") < HIGHAM_TOL:
            y = y_next
            break
        y = y_next
    vals, vecs = np.linalg.eigh((y + y.T) / 2.0)
    if vals.min() < delta:
        y = (vecs * np.maximum(vals, delta)) @ vecs.T
        d = np.sqrt(np.diag(y))
        y = y / np.outer(d, d)
        np.fill_diagonal(y, 1.0)
    return (y + y.T) / 2.0


def estimate_covariances(
    data: PlotData,
    columns=None,
    floor_scale: float = PD_FLOOR_SCALE,
) -> CovariancePair:
    """Two-component covariance estimate for a column subset of ``data``.

    Requires at least two replicates and two genotypes. The residual
    diagonal is floored at a tiny positive value so that correlation
    scaling stays defined when replicates are identical; the genetic
    component is passed through :func:`nearest_positive_definite`.
    """
    if data.r < 2:
        raise InsufficientReplication(f"r = {data.r} < 2")
    if data.n_g < 2:
        raise InsufficientGenotypes(f"n_g = {data.n_g} < 2")
    cols = np.arange(data.values.shape[1]) if columns is None else np.asarray(columns)
    y = data.values[:, cols]
    means = genotype_means(data).values[:, cols]
    overall = y.mean(axis=0)

    dev_g = means - overall
    ms_g = data.r * (dev_g.T @ dev_g) / (data.n_g - 1)
    within = y - means[data._codes]
    ms_e = (within.T @ within) / (data.n - data.n_g)

    genetic_raw = (ms_g - ms_e) / data.r
    genetic_raw = (genetic_raw + genetic_raw.T) / 2.0
    residual = (ms_e + ms_e.T) / 2.0
    di = np.diag_indices(residual.shape[0])
    residual[di] = np.maximum(residual[di], RESIDUAL_DIAG_FLOOR)

    genetic = nearest_positive_definite(
        genetic_raw, unit_diagonal=False, floor_scale=floor_scale
    )
    return CovariancePair(
        genetic=genetic,
        residual=residual,
        scale="covariance",
        r=data.r,
        genetic_raw=genetic_raw,
    )


def to_correlation(a: np.ndarray) -> np.ndarray:
    """Scale a covariance matrix to a correlation matrix (positive diagonal required)."""
    d = np.diag(a)
    bad = np.flatnonzero(d <= 0.0)
    if bad.size:
        raise NonPositiveDiagonal(int(bad[0]))
    inv = 1.0 / np.sqrt(d)
    out = a * np.outer(inv, inv)
    np.fill_diagonal(out, 1.0)
    return (out + out.T) / 2.0


def cov_to_cor(pair: CovariancePair) -> CovariancePair:
    """Scale both matrices to the correlation scale, retaining the diagonals."""
    if pair.scale == "correlation":
        return pair
    return CovariancePair(
        genetic=to_correlation(pair.genetic),
        residual=to_correlation(pair.residual),
        scale="correlation",
        r=pair.r,
        genetic_diag=np.diag(pair.genetic).copy(),
        residual_diag=np.diag(pair.residual).copy(),
    )


def from_correlation(r: np.ndarray, diag: np.ndarray) -> np.ndarray:
    """Scale a correlation matrix back to a covariance with the given diagonal."""
    diag = np.asarray(diag, dtype=float)
    bad = np.flatnonzero(diag <= 0.0)
    if bad.size:
        raise NonPositiveDiagonal(int(bad[0]))
    s = np.sqrt(diag)
    out = r * np.outer(s, s)
    return (out + out.T) / 2.0


def cor_to_cov(pair: CovariancePair, diag_g: np.ndarray, diag_e: np.ndarray) -> CovariancePair:
    """Inverse of :func:`cov_to_cor` given the covariance diagonals."""
    if pair.scale != "correlation":
        raise ValueError("pair must be on the correlation scale")
    return CovariancePair(
        genetic=from_correlation(pair.genetic, diag_g),
        residual=from_correlation(pair.residual, diag_e),
        scale="covariance",
        r=pair.r,
    )
