import math

import numpy as np
import pytest

from gflup.exceptions import InvalidDimension, SingularNoise
from gflup.factors import (
    FactorModel,
    factor_scores,
    fit_factor_model,
    latent_dimension,
    ledermann_bound,
    marchenko_pastur_upper,
    varimax,
    varimax_criterion,
)
from gflup.shrinkage import penalized_correlation

from conftest import random_correlation, random_spd


def ledermann_oracle(p):
    return math.floor((2 * p + 1 - math.sqrt(8 * p + 1)) / 2)


class TestLedermannBound:
    @pytest.mark.parametrize("p,expected", [(3, 1), (6, 3)])
    def test_small_values(self, p, expected):
        assert ledermann_bound(p) == expected

    def test_p62(self):
        # floor((125 - sqrt(497)) / 2) = floor(51.353...) = 51
        assert ledermann_oracle(62) == 51
        assert ledermann_bound(62) == 51

    @pytest.mark.parametrize("p", [1, 2, 10, 100, 1000])
    def test_matches_oracle(self, p):
        assert ledermann_bound(p) == ledermann_oracle(p)


class TestLatentDimension:
    def test_upper_edge_value(self):
        assert marchenko_pastur_upper(50, 50) == pytest.approx(4.0)

    def test_identity_gives_zero(self):
        assert latent_dimension(np.eye(20), 40) == 0

    def test_counts_spikes(self, rng):
        # two strong common directions on 30 features
        lam = np.zeros((30, 2))
        lam[:15, 0] = 0.8
        lam[15:, 1] = 0.8
        r = lam @ lam.T + np.diag(1 - np.sum(lam**2, axis=1))
        assert latent_dimension(r, 300) == 2

    def test_monotone_in_penalty(self, rng):
        r = random_correlation(rng, 25)
        dims = [
            latent_dimension(penalized_correlation(r, th), 30)
            for th in (1e-6, 0.2, 0.4, 0.6, 0.8, 1.0)
        ]
        assert all(a >= b for a, b in zip(dims, dims[1:]))

    def test_ledermann_cap(self):
        # eigenvalues all above the edge would exceed the bound without the cap
        r = 5.0 * np.eye(4)
        assert latent_dimension(r, 10000) <= ledermann_bound(4)


class TestFitFactorModel:
    def test_constructive_recovery(self, rng):
        lam = rng.uniform(-0.7, 0.7, size=(10, 2))
        psi = rng.uniform(0.2, 0.6, size=10)
        r = lam @ lam.T + np.diag(psi)
        d = 1.0 / np.sqrt(np.diag(r))
        r = r * np.outer(d, d)
        np.fill_diagonal(r, 1.0)
        model = fit_factor_model(r, 2)
        assert model.fit_value < 1e-6
        assert np.linalg.norm(model.implied() - r, "fro") < 1e-4

    def test_identity_input(self):
        model = fit_factor_model(np.eye(8), 1)
        assert np.abs(model.loadings).max() < 1e-3
        np.testing.assert_allclose(model.uniquenesses, 1.0, atol=1e-3)

    def test_triad_closed_form(self):
        # exactly identified single-factor model on three variables:
        # lambda_1 = sqrt(r12 * r13 / r23), cyclic.
        r12, r13, r23 = 0.63, 0.56, 0.72
        r = np.array([[1.0, r12, r13], [r12, 1.0, r23], [r13, r23, 1.0]])
        expected = np.array(
            [
                math.sqrt(r12 * r13 / r23),
                math.sqrt(r12 * r23 / r13),
                math.sqrt(r13 * r23 / r12),
            ]
        )
        np.testing.assert_allclose(expected, [0.7, 0.9, 0.8], atol=1e-12)
        model = fit_factor_model(r, 1)
        np.testing.assert_allclose(model.loadings.ravel(), expected, atol=1e-6)

    def test_identification_constraint(self, rng):
        r = random_correlation(rng, 12)
        model = fit_factor_model(r, 3)
        ident = model.loadings.T @ (model.loadings / model.uniquenesses[:, None])
        off = ident - np.diag(np.diag(ident))
        assert np.abs(off).max() < 1e-6
        d = np.diag(ident)
        assert np.all(d[:-1] >= d[1:] - 1e-10)

    def test_discrepancy_non_negative(self, rng):
        for seed in range(4):
            r = random_correlation(np.random.default_rng(seed), 9)
            model = fit_factor_model(r, 2)
            assert model.fit_value >= -1e-10

    def test_uniqueness_floor(self, rng):
        # a variable fully explained by the factor pushes psi to the floor
        lam = np.full((6, 1), 0.7)
        lam[0] = 0.999
        r = lam @ lam.T
        np.fill_diagonal(r, 1.0)
        model = fit_factor_model(r, 1)
        assert model.uniquenesses.min() >= 1e-4

    def test_invalid_dimension(self, rng):
        r = random_correlation(rng, 5)
        with pytest.raises(InvalidDimension):
            fit_factor_model(r, 0)
        with pytest.raises(InvalidDimension):
            fit_factor_model(r, ledermann_bound(5) + 1)


class TestVarimax:
    def test_single_column_unchanged(self, rng):
        lam = rng.standard_normal((8, 1))
        out = varimax(lam)
        np.testing.assert_allclose(np.abs(out), np.abs(lam))

    def test_perfect_simple_structure_fixed(self):
        lam = np.zeros((6, 2))
        lam[:3, 0] = [0.8, 0.7, 0.6]
        lam[3:, 1] = [0.9, 0.8, 0.7]
        out = varimax(lam)
        # already optimal: unchanged up to column permutation and sign
        diff = min(
            np.abs(out - lam).max(),
            np.abs(out[:, ::-1] - lam).max(),
        )
        assert diff < 1e-8

    def test_criterion_not_decreased_and_gram_preserved(self, rng):
        for seed in range(5):
            local = np.random.default_rng(seed)
            lam = local.standard_normal((10, 3))
            out = varimax(lam)
            assert varimax_criterion(out) >= varimax_criterion(lam) - 1e-12
            np.testing.assert_allclose(out @ out.T, lam @ lam.T, atol=1e-10)

    def test_communalities_preserved(self, rng):
        lam = rng.standard_normal((12, 4))
        out = varimax(lam)
        np.testing.assert_allclose(
            np.sum(out**2, axis=1), np.sum(lam**2, axis=1), atol=1e-10
        )

    def test_recovers_simple_structure(self, rng):
        base = np.zeros((10, 2))
        base[:5, 0] = rng.uniform(0.6, 0.9, 5)
        base[5:, 1] = rng.uniform(0.6, 0.9, 5)
        angle = 0.7
        rot = np.array(
            [[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]]
        )
        mixed = base @ rot
        out = varimax(mixed)
        # permutation/sign-invariant comparison through absolute values
        direct = np.abs(out) - np.abs(base)
        swapped = np.abs(out[:, ::-1]) - np.abs(base)
        assert min(np.abs(direct).max(), np.abs(swapped).max()) < 1e-6


class TestFactorScores:
    def _model(self, lam, psi):
        return FactorModel(lam, psi, lam.shape[1], rotated=False, fit_value=0.0)

    def test_zero_data_zero_scores(self, rng):
        lam = rng.uniform(0.3, 0.8, size=(6, 2))
        model = self._model(lam, np.full(6, 0.4))
        scores = factor_scores(np.zeros((4, 6)), model, np.eye(6) * 0.2, np.ones(6), 2)
        np.testing.assert_array_equal(scores.values, 0.0)

    def test_linear_in_data(self, rng):
        lam = rng.uniform(0.3, 0.8, size=(5, 2))
        model = self._model(lam, np.full(5, 0.5))
        x = rng.standard_normal((7, 5))
        s1 = factor_scores(x, model, np.eye(5) * 0.3, np.ones(5), 2).values
        s2 = factor_scores(3.0 * x, model, np.eye(5) * 0.3, np.ones(5), 2).values
        np.testing.assert_allclose(s2, 3.0 * s1, atol=1e-12)

    def test_noise_free_limit_is_least_squares(self, rng):
        lam = rng.uniform(0.3, 0.8, size=(8, 3))
        eps = 1e-12
        model = self._model(lam, np.full(8, eps))
        x = rng.standard_normal((5, 8))
        scores = factor_scores(x, model, np.zeros((8, 8)), np.ones(8), 2).values
        expected = x @ lam @ np.linalg.inv(lam.T @ lam)
        np.testing.assert_allclose(scores, expected, atol=1e-6)

    def test_woodbury_projection_identity(self, rng):
        # P = W^-1 L (I + L' W^-1 L)^-1 equals (L L' + W)^-1 L
        for seed in range(5):
            local = np.random.default_rng(seed)
            lam = local.standard_normal((9, 3))
            w = random_spd(local, 9)
            # with unit uniquenesses and diagonals, r=1: W = I + residual
            model = self._model(lam, np.ones(9))
            scores = factor_scores(np.eye(9), model, w - np.eye(9), np.ones(9), 1)
            dense = np.linalg.solve(lam @ lam.T + w, lam)
            np.testing.assert_allclose(scores.projection, dense, atol=1e-10)

    def test_singular_noise(self, rng):
        lam = rng.uniform(0.3, 0.8, size=(4, 1))
        model = self._model(lam, np.full(4, 1e-9))
        with pytest.raises(SingularNoise):
            factor_scores(np.zeros((2, 4)), model, -np.eye(4), np.ones(4), 1)
