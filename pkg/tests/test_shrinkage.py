from itertools import combinations

import numpy as np
import pytest

from gflup.exceptions import InvalidPenalty, InvalidThreshold
from gflup.shrinkage import (
    assign_folds,
    cv_penalty_loss,
    optimize_penalty,
    penalized_correlation,
    penalty_loss_function,
    redundancy_filter,
)

from conftest import make_plot_data, random_correlation, random_plot_data


def naive_penalty_loss(r_train_folds, r_heldout_folds, weights, theta):
    """Direct evaluation with explicit inversion per fold."""
    total = 0.0
    for r_train, r_held, w in zip(r_train_folds, r_heldout_folds, weights):
        pen = (1 - theta) * r_train + theta * np.eye(r_train.shape[0])
        sign, logdet = np.linalg.slogdet(pen)
        assert sign > 0
        total += w * (logdet + np.trace(r_held @ np.linalg.inv(pen)))
    return total / len(weights)


def valid_subsets_oracle(r, tau):
    """All maximal-size subsets with every pairwise |rho| < tau."""
    p = r.shape[0]
    best, size = [], 0
    for k in range(p, 0, -1):
        for subset in combinations(range(p), k):
            sub = np.abs(r[np.ix_(subset, subset)])
            np.fill_diagonal(sub, 0.0)
            if sub.max(initial=0.0) < tau:
                best.append(set(subset))
        if best:
            return best, k
    return best, size


class TestRedundancyFilter:
    def test_all_kept_when_tau_large(self, rng):
        r = random_correlation(rng, 5)
        tau = np.abs(r - np.eye(5)).max() + 0.01
        result = redundancy_filter(r, min(tau, 1.0))
        assert result.kept.size == 5 and result.dropped.size == 0

    def test_perfect_pair_drops_one(self):
        r = np.array([[1.0, 1.0], [1.0, 1.0]])
        result = redundancy_filter(r, 0.95)
        assert result.kept.size == 1 and result.dropped.size == 1

    def test_chain_matches_bruteforce(self):
        r = np.array(
            [
                [1.00, 0.97, 0.88, 0.10],
                [0.97, 1.00, 0.96, 0.10],
                [0.88, 0.96, 1.00, 0.10],
                [0.10, 0.10, 0.10, 1.00],
            ]
        )
        result = redundancy_filter(r, 0.95)
        best_sets, size = valid_subsets_oracle(r, 0.95)
        assert size == 3
        assert set(result.kept.tolist()) in best_sets
        assert result.dropped.tolist() == [1]

    def test_postcondition(self, rng):
        for seed in range(5):
            local = np.random.default_rng(seed)
            r = random_correlation(local, 12)
            tau = 0.4
            result = redundancy_filter(r, tau)
            sub = np.abs(r[np.ix_(result.kept, result.kept)])
            np.fill_diagonal(sub, 0.0)
            assert sub.max(initial=0.0) < tau
            assert sorted(result.kept.tolist() + result.dropped.tolist()) == list(range(12))

    def test_invalid_threshold(self, rng):
        r = random_correlation(rng, 3)
        with pytest.raises(InvalidThreshold):
            redundancy_filter(r, 0.0)
        with pytest.raises(InvalidThreshold):
            redundancy_filter(r, 1.5)


class TestPenalizedCorrelation:
    def test_theta_one_gives_target(self, rng):
        r = random_correlation(rng, 4)
        np.testing.assert_allclose(penalized_correlation(r, 1.0), np.eye(4))
        target = random_correlation(rng, 4)
        np.testing.assert_allclose(penalized_correlation(r, 1.0, target), target)

    def test_theta_small_near_input(self, rng):
        r = random_correlation(rng, 4)
        np.testing.assert_allclose(penalized_correlation(r, 1e-9), r, atol=1e-8)

    def test_spectral_mapping(self, rng):
        r = random_correlation(rng, 6)
        theta = 0.3
        lam = np.linalg.eigvalsh(r)
        out = np.linalg.eigvalsh(penalized_correlation(r, theta))
        np.testing.assert_allclose(out, (1 - theta) * lam + theta, atol=1e-10)

    def test_conditioning_improves(self, rng):
        r = random_correlation(rng, 6)
        lam_max = np.linalg.eigvalsh(r).max()
        conds = [
            np.linalg.cond(penalized_correlation(r, th)) for th in (0.1, 0.3, 0.6, 0.9)
        ]
        assert all(a >= b for a, b in zip(conds, conds[1:]))
        for th, cond in zip((0.1, 0.3, 0.6, 0.9), conds):
            assert cond <= ((1 - th) * lam_max + th) / th + 1e-9

    def test_invalid_penalty(self, rng):
        r = random_correlation(rng, 3)
        for theta in (0.0, -0.1, 1.1):
            with pytest.raises(InvalidPenalty):
                penalized_correlation(r, theta)


class TestCvPenaltyLoss:
    def test_efficient_equals_naive(self, rng):
        for _ in range(10):
            trains = [random_correlation(rng, 20) for _ in range(5)]
            helds = [random_correlation(rng, 20) for _ in range(5)]
            weights = rng.integers(5, 20, size=5).astype(float).tolist()
            for theta in (0.01, 0.2, 0.5, 0.9, 1.0):
                fast = cv_penalty_loss(trains, helds, weights, theta)
                slow = naive_penalty_loss(trains, helds, weights, theta)
                assert fast == pytest.approx(slow, abs=1e-8)

    def test_identity_fold_value(self):
        p = 7
        loss = cv_penalty_loss([np.eye(p)], [np.eye(p)], [3.0], 1.0)
        assert loss == pytest.approx(3.0 * p)

    def test_smooth_and_finite(self, rng):
        trains = [random_correlation(rng, 10) for _ in range(3)]
        helds = [random_correlation(rng, 10) for _ in range(3)]
        loss = penalty_loss_function(trains, helds, [1.0, 1.0, 1.0])
        grid = np.linspace(1e-6, 1.0, 200)
        values = np.array([loss(t) for t in grid])
        assert np.all(np.isfinite(values))
        # no wild jumps between neighbouring evaluations
        rel = np.abs(np.diff(values)) / np.maximum(np.abs(values[:-1]), 1.0)
        assert rel.max() < 0.5


class TestAssignFolds:
    def test_partition_of_genotypes(self):
        ids = [f"g{i}" for i in range(11)]
        assignment = assign_folds(ids, 4, seed=3)
        assert set(assignment) == set(ids)
        sizes = np.bincount(list(assignment.values()), minlength=4)
        assert sizes.sum() == 11 and sizes.min() >= 2

    def test_deterministic(self):
        ids = [f"g{i}" for i in range(9)]
        assert assign_folds(ids, 3, seed=5) == assign_folds(ids, 3, seed=5)
        assert assign_folds(ids, 3, seed=5) != assign_folds(ids, 3, seed=6)


class TestOptimizePenalty:
    def test_pure_noise_prefers_identity(self, rng):
        # independent heritable features: true genetic correlation is I
        n_g, r, p = 100, 2, 30
        g = rng.standard_normal((n_g, p + 1)) * np.sqrt(0.5)
        values = np.repeat(g, r, axis=0) + rng.standard_normal((n_g * r, p + 1)) * np.sqrt(0.5)
        data = make_plot_data(values, np.repeat([f"g{i}" for i in range(n_g)], r))
        fit = optimize_penalty(data, np.arange(p), "genetic", 5, seed=0)
        assert fit.theta >= 0.8

    def test_strong_structure_prefers_data(self, rng):
        # rank-1 latent structure dominating five features, many genotypes
        n_g, r, p = 1000, 2, 5
        xi = rng.standard_normal(n_g)
        lam = np.array([0.9, 0.85, 0.8, 0.9, 0.85])
        g = xi[:, None] * lam + rng.standard_normal((n_g, p)) * 0.2
        g = np.column_stack([g, rng.standard_normal(n_g)])
        values = np.repeat(g, r, axis=0) + rng.standard_normal((n_g * r, p + 1)) * 0.3
        data = make_plot_data(values, np.repeat([f"g{i}" for i in range(n_g)], r))
        fit = optimize_penalty(data, np.arange(p), "genetic", 5, seed=0)
        assert fit.theta <= 0.2

    def test_theta_in_domain_and_weights(self, rng):
        data = random_plot_data(rng, 30, 2, 6)
        for which in ("genetic", "residual", "phenotypic"):
            fit = optimize_penalty(data, np.arange(6), which, 3, seed=1)
            assert 0.0 < fit.theta <= 1.0
            assert np.isfinite(fit.cv_loss)
            assert fit.folds == 3
            assert set(fit.fold_assignment) == set(data.genotype_ids)

    def test_deterministic_given_seed(self, rng):
        data = random_plot_data(rng, 24, 2, 5)
        a = optimize_penalty(data, np.arange(5), "genetic", 4, seed=9)
        b = optimize_penalty(data, np.arange(5), "genetic", 4, seed=9)
        assert a.theta == b.theta and a.cv_loss == b.cv_loss

    def test_matches_independent_fold_reconstruction(self, rng):
        # rebuild the whole objective (folds, matrices, weights) from scratch
        # and minimize it with the naive-inversion loss
        from scipy.optimize import minimize_scalar

        from gflup.covariance import estimate_covariances, to_correlation

        data = random_plot_data(rng, 30, 3, 4)
        cols = np.arange(4)
        k = 3
        fit = optimize_penalty(data, cols, "residual", k, seed=2)

        assignment = assign_folds(data.genotype_ids, k, seed=2)
        trains, helds, weights = [], [], []
        for fold in range(k):
            held_ids = [g for g in data.genotype_ids if assignment[g] == fold]
            train_ids = [g for g in data.genotype_ids if assignment[g] != fold]
            trains.append(
                to_correlation(estimate_covariances(data.subset_genotypes(train_ids), cols).residual)
            )
            helds.append(
                to_correlation(estimate_covariances(data.subset_genotypes(held_ids), cols).residual)
            )
            weights.append(len(held_ids) * data.r)  # individuals for the residual part

        objective = lambda th: naive_penalty_loss(trains, helds, weights, th)
        res = minimize_scalar(objective, bounds=(1e-6, 1.0), method="bounded",
                              options={"xatol": 1e-6})
        assert fit.theta == pytest.approx(res.x, abs=1e-5)
        assert fit.cv_loss == pytest.approx(res.fun, abs=1e-8)
