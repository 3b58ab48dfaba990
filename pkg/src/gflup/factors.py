"""Latent dimension selection, ML factor fitting, varimax rotation, factor scores.

The factor model decomposes a genetic correlation matrix R into common and
unique parts, R(Theta) = L L' + Psi, fitted by minimizing the maximum
likelihood discrepancy

    F = ln|R(Theta)| + tr[R_hat R(Theta)^-1] - ln|R_hat| - p.

Given the uniquenesses Psi, the discrepancy-optimal loadings have a closed
form from the leading eigenpairs of Psi^-1/2 R_hat Psi^-1/2: with
eigenvalues g_i and eigenvectors w_i,

    L = Psi^1/2 W_m (G_m - I)^1/2,

after which F reduces to sum_{i>m} (g_i - ln g_i - 1). The outer loop
alternates this closed form with the uniqueness update
Psi <- diag(R_hat - L L'). At a fixed point both stationarity conditions
hold, and the construction keeps L' Psi^-1 L diagonal with non-increasing
entries (the identification constraint).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .data import _freeze
from .exceptions import InvalidDimension, SingularNoise

UNIQUENESS_FLOOR = 1e-4
FIT_TOL = 1e-8
FIT_MAX_ITER = 500
VARIMAX_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class FactorModel:
    """Fitted loadings and uniquenesses on the correlation scale."""

    loadings: np.ndarray
    uniquenesses: np.ndarray
    m: int
    rotated: bool
    fit_value: float
    converged: bool = True

    def __post_init__(self):
        object.__setattr__(self, "loadings", _freeze(np.asarray(self.loadings, float)))
        object.__setattr__(
            self, "uniquenesses", _freeze(np.asarray(self.uniquenesses, float))
        )

    @property
    def p(self) -> int:
        return self.loadings.shape[0]

    def implied(self) -> np.ndarray:
        """Model-implied matrix L L' + Psi."""
        return self.loadings @ self.loadings.T + np.diag(self.uniquenesses)


@dataclass(frozen=True, eq=False)
class FactorScores:
    """Plot-level factor scores and the projection that produced them."""

    values: np.ndarray
    projection: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(np.asarray(self.values, float)))
        object.__setattr__(self, "projection", _freeze(np.asarray(self.projection, float)))


def ledermann_bound(p: int) -> int:
    """Largest identifiable latent dimension for p observed variables."""
    if p < 1:
        raise InvalidDimension(f"p = {p} < 1")
    return int(math.floor((2 * p + 1 - math.sqrt(8 * p + 1)) / 2.0))


def marchenko_pastur_upper(p: int, n_g: int) -> float:
    """Upper edge (1 + sqrt(p/n_g))^2 of the white-noise eigenvalue bulk."""
    return (1.0 + math.sqrt(p / n_g)) ** 2


def latent_dimension(r_g_reg: np.ndarray, n_g: int) -> int:
    """Number of eigenvalues above the white-noise upper edge, Ledermann-capped."""
    r_g_reg = np.asarray(r_g_reg, dtype=float)
    p = r_g_reg.shape[0]
    omega = marchenko_pastur_upper(p, n_g)
    count = int(np.sum(np.linalg.eigvalsh(r_g_reg) > omega))
    return min(count, ledermann_bound(p))


def _profile_loadings(r: np.ndarray, psi: np.ndarray, m: int):
    """Closed-form loadings given uniquenesses, plus the concentrated discrepancy."""
    s = 1.0 / np.sqrt(psi)
    sstar = r * np.outer(s, s)
    vals, vecs = np.linalg.eigh(sstar)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    top = np.maximum(vals[:m] - 1.0, 0.0)
    loadings = np.sqrt(psi)[:, None] * vecs[:, :m] * np.sqrt(top)
    rest = np.maximum(vals[m:], 1e-300)
    fit = float(np.sum(rest - np.log(rest) - 1.0))
    return loadings, fit


def _flip_signs(loadings: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of each column positive."""
    out = loadings.copy()
    for k in range(out.shape[1]):
        col = out[:, k]
        if col[np.argmax(np.abs(col))] < 0:
            out[:, k] = -col
    return out


def fit_factor_model(
    r_g_reg: np.ndarray,
    m: int,
    tol: float = FIT_TOL,
    max_iter: int = FIT_MAX_ITER,
) -> FactorModel:
    """Maximum likelihood factor model for a positive-definite correlation matrix.

    Alternates the profile closed form for the loadings with the uniqueness
    update until the change in the uniquenesses falls below ``tol`` (or
    ``max_iter`` is hit, in which case the best iterate is returned with
    ``converged=False``). Uniquenesses are floored at 1e-4 as a Heywood
    guard.
    """
    r = np.asarray(r_g_reg, dtype=float)
    p = r.shape[0]
    if m < 1 or m > ledermann_bound(p):
        raise InvalidDimension(f"m = {m} not in [1, {ledermann_bound(p)}] for p = {p}")

    # Squared-multiple-correlation start: psi_q = 1 / (R^-1)_qq.
    rinv_diag = np.diag(np.linalg.inv(r))
    psi = np.clip(1.0 / rinv_diag, UNIQUENESS_FLOOR, None)

    best = None
    converged = False
    for _ in range(max_iter):
        loadings, fit = _profile_loadings(r, psi, m)
        if best is None or fit < best[0]:
            best = (fit, loadings, psi)
        psi_new = np.clip(np.diag(r) - np.sum(loadings**2, axis=1), UNIQUENESS_FLOOR, None)
        if np.linalg.norm(psi_new - psi) < tol:
            psi = psi_new
            converged = True
            break
        psi = psi_new
    loadings, fit = _profile_loadings(r, psi, m)
    if best[0] < fit:
        fit, loadings, psi = best

    loadings = _flip_signs(loadings)
    fit_value = discrepancy(r, loadings, psi)
    return FactorModel(
        loadings=loadings,
        uniquenesses=psi,
        m=m,
        rotated=False,
        fit_value=fit_value,
        converged=converged,
    )


def discrepancy(r_hat: np.ndarray, loadings: np.ndarray, psi: np.ndarray) -> float:
    """ML discrepancy of the implied matrix against ``r_hat``."""
    implied = loadings @ loadings.T + np.diag(psi)
    p = r_hat.shape[0]
    sign, logdet_model = np.linalg.slogdet(implied)
    if sign <= 0:
        return np.inf
    _, logdet_hat = np.linalg.slogdet(r_hat)
    trace = float(np.trace(np.linalg.solve(implied, r_hat)))
    return float(logdet_model + trace - logdet_hat - p)


def varimax_criterion(loadings: np.ndarray) -> float:
    """Raw varimax criterion: summed column variances of squared loadings."""
    sq = np.asarray(loadings, float) ** 2
    return float(np.sum(sq.var(axis=0)))


def varimax(loadings: np.ndarray) -> np.ndarray:
    """Orthogonal rotation maximizing the raw varimax criterion.

    Pairwise planar rotations are swept until the criterion improves by
    less than 1e-10. Single-column inputs are returned unchanged. Column
    signs are normalized afterwards.
    """
    lam = np.array(loadings, dtype=float)
    p, m = lam.shape
    if m < 2:
        return _flip_signs(lam)
    crit = varimax_criterion(lam)
    while True:
        for i in range(m - 1):
            for j in range(i + 1, m):
                x, y = lam[:, i], lam[:, j]
                u = x * x - y * y
                v = 2.0 * x * y
                a, b = u.sum(), v.sum()
                c = (u * u - v * v).sum()
                d = 2.0 * (u * v).sum()
                num = d - 2.0 * a * b / p
                den = c - (a * a - b * b) / p
                phi = 0.25 * math.atan2(num, den)
                if abs(phi) < 1e-14:
                    continue
                cos, sin = math.cos(phi), math.sin(phi)
                lam[:, i], lam[:, j] = x * cos + y * sin, -x * sin + y * cos
        crit_new = varimax_criterion(lam)
        if crit_new - crit < VARIMAX_TOL:
            break
        crit = crit_new
    return _flip_signs(lam)


def rotate_model(model: FactorModel) -> FactorModel:
    """Varimax-rotate a fitted model (identity for a single factor)."""
    return replace(model, loadings=varimax(model.loadings), rotated=True)


def factor_scores(
    values: np.ndarray,
    model: FactorModel,
    residual_cov_reg: np.ndarray,
    genetic_diag: np.ndarray,
    r: int,
) -> FactorScores:
    """Modified Thomson-regression scores from plot-level filtered data.

    The correlation-scale loadings and uniquenesses are moved to the
    covariance scale with D = diag(genetic variances)^1/2, the regularized
    residual covariance is attenuated by the replicate count, and the
    projection

        P = W^-1 L_cov (I + L_cov' W^-1 L_cov)^-1,   W = Psi_cov + residual/r

    is applied to the rows of ``values``.
    """
    values = np.asarray(values, dtype=float)
    genetic_diag = np.asarray(genetic_diag, dtype=float)
    d = np.sqrt(genetic_diag)
    lam_cov = d[:, None] * model.loadings
    psi_cov = genetic_diag * model.uniquenesses
    w = np.diag(psi_cov) + np.asarray(residual_cov_reg, float) / r
    try:
        w_ch = cho_factor((w + w.T) / 2.0)
    except LinAlgError as err:
        raise SingularNoise("noise matrix is not positive definite") from err
    b = cho_solve(w_ch, lam_cov)
    middle = np.eye(model.m) + lam_cov.T @ b
    projection = b @ np.linalg.solve(middle, np.eye(model.m))
    return FactorScores(values @ projection, projection)
