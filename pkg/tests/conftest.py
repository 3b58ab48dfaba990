"""Shared fixtures and small data factories."""

import numpy as np
import pytest

from gflup.data import PlotData


def make_plot_data(values, genotypes, focal_name="y"):
    values = np.asarray(values, dtype=float)
    p = values.shape[1] - 1
    names = [f"s{j + 1}" for j in range(p)]
    return PlotData(values, list(genotypes), names, focal_name)


def random_plot_data(rng, n_g, r, p, sigma_g=None, sigma_e=None):
    """Replicated data with genetic effects ~ N(0, sigma_g), residuals ~ N(0, sigma_e)."""
    if sigma_g is None:
        sigma_g = np.eye(p + 1)
    if sigma_e is None:
        sigma_e = np.eye(p + 1)
    g = rng.multivariate_normal(np.zeros(p + 1), sigma_g, size=n_g)
    rows = np.repeat(g, r, axis=0)
    rows = rows + rng.multivariate_normal(np.zeros(p + 1), sigma_e, size=n_g * r)
    genotypes = np.repeat([f"g{i:03d}" for i in range(n_g)], r)
    return make_plot_data(rows, genotypes)


def random_spd(rng, p, scale=1.0):
    a = rng.standard_normal((p, p))
    return scale * (a @ a.T / p + np.eye(p))


def random_correlation(rng, p):
    s = random_spd(rng, p)
    d = 1.0 / np.sqrt(np.diag(s))
    c = s * np.outer(d, d)
    np.fill_diagonal(c, 1.0)
    return c


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
