"""Generative benchmark engine: block-structured latent factors over synthetic markers.

Secondary features come in blocks, each block loading on one purely genetic
latent factor; the focal trait loads on a subset of "signal" factors. Every
feature and the focal trait have unit total variance, split into genetic
and residual parts by the configured heritabilities. Factor scores are
drawn independently per genotype; the marker panel only feeds the kinship
used by the predictors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Kinship, MarkerMatrix, Partition, PlotData, _freeze, genotype_means
from .exceptions import ConfigError, DimensionMismatch, InvalidSplit
from .prediction import PredictionResult, blup_cv2, estimate_trait_covariances


@dataclass(frozen=True)
class SimConfig:
    """Design of one simulated dataset.

    ``communality`` is the share of focal-trait genetic variance carried by
    the signal factors; ``h2_s`` and ``h2_y`` are the secondary and focal
    heritabilities.
    """

    n_g: int
    r: int = 2
    n_snp: int = 500
    blocks: int = 8
    feats_per_block: int = 100
    h2_s: float = 0.9
    h2_y: float = 0.3
    communality: float = 0.8
    n_signal_factors: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.n_g < 2 or self.r < 1 or self.n_snp < 1:
            raise ConfigError("n_g >= 2, r >= 1 and n_snp >= 1 required")
        if self.blocks < 1 or self.feats_per_block < 1:
            raise ConfigError("blocks and feats_per_block must be >= 1")
        for name in ("h2_s", "h2_y", "communality"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name} = {v} outside (0, 1)")
        if not 1 <= self.n_signal_factors <= self.blocks:
            raise ConfigError("n_signal_factors must be in [1, blocks]")

    @property
    def p(self) -> int:
        return self.blocks * self.feats_per_block


@dataclass(frozen=True, eq=False)
class SimTruth:
    """Ground truth of one simulated dataset."""

    genetic_focal: np.ndarray
    loadings_s: np.ndarray
    loadings_y: np.ndarray
    factor_scores: np.ndarray
    unique_var_s: np.ndarray
    unique_var_y: float
    resid_var_s: float
    resid_var_y: float

    def __post_init__(self):
        for name in ("genetic_focal", "loadings_s", "loadings_y", "factor_scores", "unique_var_s"):
            object.__setattr__(self, name, _freeze(np.asarray(getattr(self, name), float)))

    @property
    def signal_factors(self) -> np.ndarray:
        return np.flatnonzero(self.loadings_y != 0.0)


def simulate_markers(n_g: int, n_snp: int, seed) -> MarkerMatrix:
    """Synthetic dosages: per-SNP allele frequency U(0.1, 0.9), binomial sampling.

    Monomorphic draws are resampled so every column is polymorphic.
    """
    rng = np.random.default_rng(seed)
    values = np.empty((n_g, n_snp), dtype=float)
    for k in range(n_snp):
        for _ in range(1000):
            q = rng.uniform(0.1, 0.9)
            col = rng.binomial(2, q, size=n_g).astype(float)
            if not np.all(col == col[0]):
                break
        else:
            raise ConfigError("could not draw a polymorphic SNP; increase n_g")
        values[:, k] = col
    ids = [f"g{i + 1:04d}" for i in range(n_g)]
    snps = [f"snp{k + 1:04d}" for k in range(n_snp)]
    return MarkerMatrix(values, snps, ids)


def simulate_dataset(cfg: SimConfig, markers: MarkerMatrix) -> tuple[PlotData, SimTruth]:
    """Simulate plot-level data with the block latent-factor architecture.

    Per feature j in block b: loading drawn as a signed U(0.3, 0.8) value
    (rescaled to sqrt(h2_s) whenever its square would exceed the genetic
    variance), unique genetic variance h2_s - loading^2, residual variance
    1 - h2_s. The focal trait splits its genetic variance h2_y into
    communality * h2_y spread equally (with random signs) over the signal
    factors and a unique remainder. Replicate rows share genetic values and
    receive independent residuals.
    """
    if len(markers.genotype_ids) != cfg.n_g:
        raise ConfigError("marker rows do not match n_g")
    rng = np.random.default_rng(cfg.seed)
    n_g, r, p, blocks = cfg.n_g, cfg.r, cfg.p, cfg.blocks

    xi = rng.standard_normal((n_g, blocks))

    lam_s = rng.uniform(0.3, 0.8, size=p) * rng.choice([-1.0, 1.0], size=p)
    over = lam_s**2 > cfg.h2_s
    lam_s[over] = np.sign(lam_s[over]) * np.sqrt(cfg.h2_s)
    unique_var_s = np.maximum(cfg.h2_s - lam_s**2, 0.0)
    block_of = np.repeat(np.arange(blocks), cfg.feats_per_block)

    g_s = xi[:, block_of] * lam_s
    g_s += rng.standard_normal((n_g, p)) * np.sqrt(unique_var_s)

    lam_y = np.zeros(blocks)
    mag = np.sqrt(cfg.communality * cfg.h2_y / cfg.n_signal_factors)
    signs = rng.choice([-1.0, 1.0], size=cfg.n_signal_factors)
    lam_y[: cfg.n_signal_factors] = mag * signs
    unique_var_y = (1.0 - cfg.communality) * cfg.h2_y
    g_y = xi @ lam_y + rng.standard_normal(n_g) * np.sqrt(unique_var_y)

    resid_var_s = 1.0 - cfg.h2_s
    resid_var_y = 1.0 - cfg.h2_y
    genetic = np.column_stack([g_s, g_y])
    plot = np.repeat(genetic, r, axis=0)
    noise_sd = np.append(np.full(p, np.sqrt(resid_var_s)), np.sqrt(resid_var_y))
    plot = plot + rng.standard_normal(plot.shape) * noise_sd

    genotypes = np.repeat(list(markers.genotype_ids), r)
    width = len(str(p))
    names = [f"s{j + 1:0{width}d}" for j in range(p)]
    data = PlotData(plot, genotypes.tolist(), names, "y")

    loadings_matrix = np.zeros((p, blocks))
    loadings_matrix[np.arange(p), block_of] = lam_s
    truth = SimTruth(
        genetic_focal=g_y,
        loadings_s=loadings_matrix,
        loadings_y=lam_y,
        factor_scores=xi,
        unique_var_s=unique_var_s,
        unique_var_y=unique_var_y,
        resid_var_s=resid_var_s,
        resid_var_y=resid_var_y,
    )
    return data, truth


def split_train_test(n_g: int, n_train: int, seed) -> Partition:
    """Uniform random train/test split of genotype indices, fixed by seed."""
    if not 2 <= n_train < n_g:
        raise InvalidSplit(f"n_train = {n_train} outside [2, {n_g})")
    perm = np.random.default_rng(seed).permutation(n_g)
    return Partition(test=np.sort(perm[n_train:]), observed=np.sort(perm[:n_train]))


def benchmark_oracle(
    truth: SimTruth, data: PlotData, kinship: Kinship, partition: Partition | None = None
) -> PredictionResult:
    """Reference predictor that swaps estimated factors for the true signal factors.

    The true signal-factor scores replace the secondary features for both
    training and test genotypes; covariances are still estimated from the
    training data, so this bounds what any factor-recovery pipeline can
    achieve given the same prediction machinery.
    """
    kin = kinship if partition is None else Kinship(kinship.values, kinship.genotype_ids, partition)
    if kin.partition is None:
        raise ValueError("oracle needs a kinship partition")
    if truth.factor_scores.shape[0] != data.n_g:
        raise DimensionMismatch("truth and data disagree on the genotype count")
    signal = truth.signal_factors
    xi_signal = truth.factor_scores[:, signal]

    # Factor-score rows follow data.genotype_ids; expand to plot rows.
    names = [f"factor{int(j) + 1}" for j in signal]
    row_scores = xi_signal[data._codes]
    oracle_data = data.with_columns(np.column_stack([row_scores, data.focal]), names)

    train_data = oracle_data.subset_genotypes(kin.observed_ids)
    cov = estimate_trait_covariances(train_data)
    blues = genotype_means(train_data)
    pos = {g: i for i, g in enumerate(data.genotype_ids)}
    test_scores = xi_signal[[pos[g] for g in kin.test_ids]]
    result = blup_cv2(blues.values, kin, cov, test_scores)
    return PredictionResult(
        result.test_predictions,
        result.train_blups,
        "cv2",
        result.test_genotypes,
        result.train_genotypes,
        {"method": "oracle", "n_signal": int(signal.size)},
    )
