"""End-to-end seven-step pipeline, baselines and the benchmark harness.

Fitting is training-only: covariance estimation, redundancy filtering,
regularization, latent-dimension choice, factor fitting, score projection
and factor selection all see training rows exclusively. Prediction then
uses the kinship blocks (CV1) or additionally projects test-set secondary
data through the fitted loadings (CV2).
"""

from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .covariance import cov_to_cor, estimate_covariances, from_correlation, to_correlation
from .data import (
    Kinship,
    PlotData,
    Standardization,
    apply_stats,
    column_stats,
    genotype_means,
    vanraden_kinship,
)
from .exceptions import ConfigError, GflupError, MissingTestData, ZeroVariance
from .factors import (
    FactorModel,
    factor_scores,
    fit_factor_model,
    latent_dimension,
    rotate_model,
)
from .prediction import (
    PredictionResult,
    SelectedFactors,
    TraitCovariances,
    accuracy,
    blup_cv1,
    blup_cv2,
    blup_univariate,
    estimate_trait_covariances,
    estimate_variance_components,
    select_factors,
    siblup_weights,
)
from .shrinkage import FilterResult, optimize_penalty, penalized_correlation, redundancy_filter
from .simulation import SimConfig, benchmark_oracle, simulate_dataset, simulate_markers, split_train_test

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs of the seven-step pipeline."""

    tau: float = 0.95
    k_folds: int = 5
    pd_floor: float = 1e-8
    fa_tol: float = 1e-8
    fa_max_iter: int = 500
    subset_guard: int = 20
    scenario: str = "cv2"
    seed: int = 0
    # Standardize test-set data with its own statistics (the alternative
    # reuses the training statistics).
    separate_test_scaling: bool = True

    def __post_init__(self):
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"tau = {self.tau} outside (0, 1]")
        if self.k_folds < 2:
            raise ConfigError("k_folds must be >= 2")
        if self.scenario not in ("cv1", "cv2", "univariate"):
            raise ConfigError(f"unknown scenario {self.scenario!r}")


@dataclass(frozen=True, eq=False)
class FittedPipeline:
    """All artifacts produced by one training run."""

    config: PipelineConfig
    kinship: Kinship
    stats: Standardization
    feature_names: tuple
    focal_name: str
    r: int
    filter: FilterResult
    theta_g: float
    theta_e: float
    m: int
    model: FactorModel | None
    projection: np.ndarray | None
    selected: SelectedFactors | None
    covs: TraitCovariances | None
    blues: np.ndarray | None        # training BLUEs of selected factors + focal
    focal_blues: np.ndarray         # training focal BLUEs (kinship order)
    sigma_g_uni: float
    sigma_e_uni: float
    fallback: bool

    @property
    def p_star(self) -> int:
        return int(self.filter.kept.size)

    @property
    def m_star(self) -> int:
        return 0 if self.selected is None else len(self.selected.indices)


@contextmanager
def _stage(name: str):
    """Tag pipeline-stage failures without changing the exception type."""
    try:
        yield
    except GflupError as err:
        err.args = (f"stage {name}: {err}",)
        raise


def _aligned_kinship(kinship: Kinship, train: PlotData) -> Kinship:
    """Ensure the kinship has a partition whose observed set is the training set."""
    train_ids = set(train.genotype_ids)
    if kinship.partition is not None:
        if set(kinship.observed_ids) != train_ids:
            raise ConfigError("kinship partition does not match the training genotypes")
        return kinship
    missing = train_ids - set(kinship.genotype_ids)
    if missing:
        raise ConfigError(f"genotypes without marker data: {sorted(missing)[:5]}")
    observed = [g for g in kinship.genotype_ids if g in train_ids]
    return kinship.with_partition(observed_ids=observed)


def fit(train: PlotData, kinship: Kinship, cfg: PipelineConfig | None = None) -> FittedPipeline:
    """Run the seven training steps and return every intermediate artifact.

    1. genetic/residual covariance estimation on standardized plot data,
    2. redundancy filtering of the genetic correlation matrix,
    3. cross-validated regularization of both correlation matrices,
    4. latent dimension from the regularized genetic eigenvalues,
    5. maximum likelihood factor fit plus varimax rotation,
    6. factor-score projection of the plot-level data,
    7. factor subset selection and trait covariance estimation.

    A latent dimension of zero (or an empty selection) flags the fallback
    to univariate prediction.
    """
    cfg = cfg or PipelineConfig()
    kinship = _aligned_kinship(kinship, train)
    stats = column_stats(train)
    data = apply_stats(train, stats)
    secondary_cols = np.arange(data.p)

    with _stage("covariance-estimation"):
        pair = estimate_covariances(data, secondary_cols, floor_scale=cfg.pd_floor)
        cors = cov_to_cor(pair)

    with _stage("redundancy-filtering"):
        filt = redundancy_filter(cors.genetic, cfg.tau)
    kept = filt.kept
    r_g = cors.genetic[np.ix_(kept, kept)]
    r_e = cors.residual[np.ix_(kept, kept)]

    with _stage("regularization"):
        fit_g = optimize_penalty(data, kept, "genetic", cfg.k_folds, seed=cfg.seed)
        fit_e = optimize_penalty(data, kept, "residual", cfg.k_folds, seed=cfg.seed)
        r_g_reg = penalized_correlation(r_g, fit_g.theta)
        r_e_reg = penalized_correlation(r_e, fit_e.theta)

    m = latent_dimension(r_g_reg, data.n_g)

    focal_blues_bm = genotype_means(data)
    focal_blues = focal_blues_bm.reordered(kinship.observed_ids)[:, data.p]
    sigma_g_uni, sigma_e_uni = estimate_variance_components(
        focal_blues, kinship.k_oo
    )

    base = dict(
        config=cfg,
        kinship=kinship,
        stats=stats,
        feature_names=train.feature_names,
        focal_name=train.focal_name,
        r=train.r,
        filter=filt,
        theta_g=fit_g.theta,
        theta_e=fit_e.theta,
        m=m,
        focal_blues=focal_blues,
        sigma_g_uni=sigma_g_uni,
        sigma_e_uni=sigma_e_uni,
    )
    if m == 0:
        log.info("latent dimension is zero; falling back to univariate prediction")
        return FittedPipeline(
            model=None, projection=None, selected=None, covs=None, blues=None,
            fallback=True, **base,
        )

    with _stage("factor-fitting"):
        model = fit_factor_model(r_g_reg, m, tol=cfg.fa_tol, max_iter=cfg.fa_max_iter)
        if m >= 2:
            model = rotate_model(model)

    with _stage("factor-scores"):
        diag_g = pair.genetic[kept, kept]
        resid_cov_reg = from_correlation(r_e_reg, pair.residual[kept, kept])
        scores = factor_scores(data.values[:, kept], model, resid_cov_reg, diag_g, data.r)

    factor_names = [f"factor{k + 1}" for k in range(m)]
    factor_data = data.with_columns(
        np.column_stack([scores.values, data.focal]), factor_names
    )
    blues_all = genotype_means(factor_data).reordered(kinship.observed_ids)
    selected = select_factors(blues_all[:, :m], blues_all[:, m], guard=cfg.subset_guard)
    if selected.empty:
        log.info("no factor improves on the intercept; univariate fallback")
        return FittedPipeline(
            model=model, projection=scores.projection, selected=selected,
            covs=None, blues=None, fallback=True, **base,
        )

    sel = list(selected.indices)
    sel_names = [factor_names[k] for k in sel]
    with _stage("trait-covariances"):
        sel_data = data.with_columns(
            np.column_stack([scores.values[:, sel], data.focal]), sel_names
        )
        covs = estimate_trait_covariances(sel_data)
    blues = np.column_stack([blues_all[:, sel], blues_all[:, m]])
    log.info(
        "dimension chain: p=%d -> p*=%d -> m=%d -> m*=%d (theta_g=%.4f, theta_e=%.4f)",
        data.p, kept.size, m, len(sel), fit_g.theta, fit_e.theta,
    )
    return FittedPipeline(
        model=model, projection=scores.projection, selected=selected,
        covs=covs, blues=blues, fallback=False, **base,
    )


def predict(
    fitted: FittedPipeline,
    test_secondary: PlotData | None = None,
    scenario: str | None = None,
) -> PredictionResult:
    """Predict test-set focal genetic values under CV1, CV2 or the univariate model.

    CV2 requires test-set plot-level secondary data, which is standardized
    (per the configured convention), filtered and projected through the
    training loadings before entering the two-step BLUP.
    """
    scenario = scenario or fitted.config.scenario
    kinship = fitted.kinship
    if fitted.fallback or scenario == "univariate":
        result = blup_univariate(
            fitted.focal_blues, kinship, fitted.sigma_g_uni, fitted.sigma_e_uni
        )
        if fitted.fallback and scenario != "univariate":
            result.diagnostics["fallback_from"] = scenario
        return result
    if scenario == "cv1":
        result = blup_cv1(fitted.blues, kinship, fitted.covs)
        result.diagnostics.update(_pipeline_diagnostics(fitted))
        return result
    if scenario != "cv2":
        raise ConfigError(f"unknown scenario {scenario!r}")
    if test_secondary is None:
        raise MissingTestData("scenario cv2 needs test-set secondary data")
    if test_secondary.r != fitted.r:
        raise ConfigError("test replicate count differs from training")
    if test_secondary.feature_names != fitted.feature_names:
        raise ConfigError("test feature columns differ from training")

    sec = _standardize_secondary(
        test_secondary, fitted.stats, fitted.config.separate_test_scaling
    )
    kept = fitted.filter.kept
    test_scores = sec[:, kept] @ fitted.projection
    score_data = test_secondary.with_columns(
        np.column_stack([test_scores, np.zeros(test_secondary.n)]),
        [f"factor{k + 1}" for k in range(fitted.m)],
    )
    blues = genotype_means(score_data)
    test_ids = list(kinship.test_ids)
    if set(blues.genotype_ids) != set(test_ids):
        raise ConfigError("test genotypes do not match the kinship partition")
    test_blues = blues.reordered(test_ids)[:, list(fitted.selected.indices)]
    result = blup_cv2(fitted.blues, kinship, fitted.covs, test_blues)
    result.diagnostics.update(_pipeline_diagnostics(fitted))
    return result


def _pipeline_diagnostics(fitted: FittedPipeline) -> dict:
    return {
        "m": fitted.m,
        "m_star": fitted.m_star,
        "theta_g": fitted.theta_g,
        "theta_e": fitted.theta_e,
        "p_star": fitted.p_star,
    }


def _standardize_secondary(
    data: PlotData, train_stats: Standardization, separate: bool
) -> np.ndarray:
    """Standardized secondary columns only; the focal column is left alone.

    Test files may carry a placeholder focal column, so its statistics are
    never computed here.
    """
    sec = data.secondary
    if separate:
        means = sec.mean(axis=0)
        sds = sec.std(axis=0, ddof=1)
        for j, sd in enumerate(sds):
            if sd <= 0.0:
                raise ZeroVariance(data.feature_names[j])
    else:
        means = train_stats.means[: data.p]
        sds = train_stats.sds[: data.p]
    return (sec - means) / sds


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------

def fit_univariate(train: PlotData, kinship: Kinship) -> FittedPipeline:
    """Univariate gBLUP baseline packaged as a degenerate fitted pipeline."""
    cfg = PipelineConfig(scenario="univariate")
    kinship = _aligned_kinship(kinship, train)
    stats = column_stats(train)
    data = apply_stats(train, stats)
    blues = genotype_means(data).reordered(kinship.observed_ids)[:, data.p]
    sigma_g, sigma_e = estimate_variance_components(blues, kinship.k_oo)
    filt = FilterResult(np.arange(data.p), np.array([], int), cfg.tau)
    return FittedPipeline(
        config=cfg, kinship=kinship, stats=stats,
        feature_names=train.feature_names, focal_name=train.focal_name,
        r=train.r, filter=filt, theta_g=1.0, theta_e=1.0, m=0,
        model=None, projection=None, selected=None, covs=None, blues=None,
        focal_blues=blues, sigma_g_uni=sigma_g, sigma_e_uni=sigma_e,
        fallback=True,
    )


@dataclass(frozen=True, eq=False)
class FittedSiBlup:
    """Selection-index baseline: one regularized linear index as the secondary trait."""

    kinship: Kinship
    stats: Standardization
    kept: np.ndarray
    weights: np.ndarray
    theta_p: float
    covs: TraitCovariances
    blues: np.ndarray
    r: int
    separate_test_scaling: bool = True


def fit_siblup(
    train: PlotData,
    kinship: Kinship,
    tau: float = 0.95,
    k_folds: int = 5,
    seed: int = 0,
) -> FittedSiBlup:
    """Fit the selection-index baseline.

    The redundancy-filtered plot-level phenotypic correlation matrix is
    regularized by cross-validation (fold weights are plot-row counts),
    converted back to a covariance, and inverted against the feature-focal
    genetic covariances to give index weights.
    """
    kinship = _aligned_kinship(kinship, train)
    stats = column_stats(train)
    data = apply_stats(train, stats)
    secondary_cols = np.arange(data.p)

    pair = estimate_covariances(data, secondary_cols)
    cors = cov_to_cor(pair)
    kept = redundancy_filter(cors.genetic, tau).kept

    phen = pair.genetic[np.ix_(kept, kept)] + pair.residual[np.ix_(kept, kept)]
    fit_p = optimize_penalty(data, kept, "phenotypic", k_folds, seed=seed)
    r_p = penalized_correlation(to_correlation(phen), fit_p.theta)
    phen_reg = from_correlation(r_p, np.diag(phen))

    all_cols = np.append(kept, data.p)
    pair_sf = estimate_covariances(data, all_cols)
    sigma_sf = pair_sf.genetic_raw[:-1, -1]
    gamma = siblup_weights(phen_reg, sigma_sf)

    index = data.values[:, kept] @ gamma
    si_data = data.with_columns(np.column_stack([index, data.focal]), ["index"])
    covs = estimate_trait_covariances(si_data)
    blues = genotype_means(si_data).reordered(kinship.observed_ids)
    return FittedSiBlup(
        kinship=kinship, stats=stats, kept=kept, weights=gamma,
        theta_p=fit_p.theta, covs=covs, blues=blues, r=train.r,
    )


def predict_siblup(
    fitted: FittedSiBlup,
    test_secondary: PlotData | None = None,
    scenario: str = "cv2",
) -> PredictionResult:
    """CV1/CV2 predictions from a fitted selection index."""
    if scenario == "cv1":
        return blup_cv1(fitted.blues, fitted.kinship, fitted.covs)
    if scenario != "cv2":
        raise ConfigError(f"unknown scenario {scenario!r}")
    if test_secondary is None:
        raise MissingTestData("scenario cv2 needs test-set secondary data")
    sec = _standardize_secondary(
        test_secondary, fitted.stats, fitted.separate_test_scaling
    )
    index = sec[:, fitted.kept] @ fitted.weights
    si_data = test_secondary.with_columns(
        np.column_stack([index, np.zeros(test_secondary.n)]), ["index"]
    )
    blues = genotype_means(si_data).reordered(list(fitted.kinship.test_ids))
    return blup_cv2(fitted.blues, fitted.kinship, fitted.covs, blues[:, [0]])


# ---------------------------------------------------------------------------
# Benchmark harness
# ---------------------------------------------------------------------------

REPORT_COLUMNS = ["h2_s", "h2_y", "communality", "method", "scenario", "mean_acc", "sd_acc", "n_reps"]


def _replicate_seeds(base_seed: int, replicate: int) -> tuple:
    """Independent child seeds for markers, traits and the split."""
    seq = np.random.SeedSequence([int(base_seed), int(replicate)])
    return tuple(int(s) for s in seq.generate_state(3))


def run_replicate(cfg: SimConfig, n_train: int, replicate: int, methods, scenarios):
    """Accuracies of each method x scenario on one simulated dataset."""
    seed_m, seed_d, seed_s = _replicate_seeds(cfg.seed, replicate)
    markers = simulate_markers(cfg.n_g, cfg.n_snp, seed_m)
    data, truth = simulate_dataset(replace(cfg, seed=seed_d), markers)
    part = split_train_test(cfg.n_g, n_train, seed_s)
    kinship = Kinship(vanraden_kinship(markers).values, markers.genotype_ids, part)
    train = data.subset_genotypes(kinship.observed_ids)
    test = data.subset_genotypes(kinship.test_ids)
    pos = {g: i for i, g in enumerate(data.genotype_ids)}
    truth_test = truth.genetic_focal[[pos[g] for g in kinship.test_ids]]

    def run_method(name):
        if name == "univariate":
            uni = fit_univariate(train, kinship)
            yield "univariate", predict(uni, scenario="univariate")
        elif name == "gfblup":
            fitted = fit(train, kinship, PipelineConfig(seed=seed_s))
            for scenario in scenarios:
                yield scenario, predict(fitted, test if scenario == "cv2" else None, scenario)
        elif name == "siblup":
            si = fit_siblup(train, kinship, seed=seed_s)
            for scenario in scenarios:
                yield scenario, predict_siblup(si, test if scenario == "cv2" else None, scenario)
        elif name == "oracle":
            yield "cv2", benchmark_oracle(truth, data, kinship)
        else:
            raise ConfigError(f"unknown method {name!r}")

    out = {}
    for name in methods:
        try:
            for scenario, result in run_method(name):
                out[(name, scenario)] = accuracy(result.test_predictions, truth_test)
        except Exception:
            log.exception("method %s failed on replicate %d", name, replicate)
    return out


def run_benchmark(
    grid,
    methods=("univariate", "gfblup", "siblup", "oracle"),
    replicates: int = 20,
    out=None,
    n_train: int | None = None,
    scenarios=("cv1", "cv2"),
) -> pd.DataFrame:
    """Mean and sd of accuracy per grid cell x method x scenario.

    Failures of one method on one replicate are logged and excluded;
    ``n_reps`` records how many replicates survived per row.
    """
    rows = []
    for cfg in grid:
        cell_train = n_train if n_train is not None else int(0.6 * cfg.n_g)
        cell: dict = {}
        for rep in range(replicates):
            try:
                results = run_replicate(cfg, cell_train, rep, methods, scenarios)
            except Exception:
                log.exception(
                    "replicate %d failed entirely for cell h2_s=%s h2_y=%s c=%s",
                    rep, cfg.h2_s, cfg.h2_y, cfg.communality,
                )
                continue
            for key, acc in results.items():
                cell.setdefault(key, []).append(acc)
        for (method, scenario), accs in sorted(cell.items()):
            accs = np.asarray(accs)
            rows.append(
                {
                    "h2_s": cfg.h2_s,
                    "h2_y": cfg.h2_y,
                    "communality": cfg.communality,
                    "method": method,
                    "scenario": scenario,
                    "mean_acc": accs.mean() if accs.size else np.nan,
                    "sd_acc": accs.std(ddof=1) if accs.size > 1 else np.nan,
                    "n_reps": int(accs.size),
                }
            )
    report = pd.DataFrame(rows, columns=REPORT_COLUMNS)
    if out is not None:
        report.to_csv(out, sep="\t", index=False)
    return report


# ---------------------------------------------------------------------------
# Model persistence (TSV bundle)
# ---------------------------------------------------------------------------

def _write_kv(path: Path, mapping: dict) -> None:
    pd.DataFrame(
        {"key": list(mapping), "value": [str(v) for v in mapping.values()]}
    ).to_csv(path, sep="\t", index=False)


def _read_kv(path: Path) -> dict:
    df = pd.read_csv(path, sep="\t", dtype=str).fillna("")
    return dict(zip(df["key"], df["value"]))


def save_pipeline(fitted: FittedPipeline, directory) -> None:
    """Write a fitted pipeline as a directory of TSV files."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    cfg = fitted.config
    meta = {
        "tau": cfg.tau, "k_folds": cfg.k_folds, "pd_floor": cfg.pd_floor,
        "fa_tol": cfg.fa_tol, "fa_max_iter": cfg.fa_max_iter,
        "subset_guard": cfg.subset_guard, "scenario": cfg.scenario,
        "seed": cfg.seed, "separate_test_scaling": cfg.separate_test_scaling,
        "focal_name": fitted.focal_name, "r": fitted.r,
        "theta_g": repr(fitted.theta_g), "theta_e": repr(fitted.theta_e),
        "m": fitted.m, "fallback": fitted.fallback,
        "sigma_g_uni": repr(fitted.sigma_g_uni), "sigma_e_uni": repr(fitted.sigma_e_uni),
        "selected": ",".join(str(i) for i in (fitted.selected.indices if fitted.selected else ())),
        "adjusted_r2": repr(fitted.selected.adjusted_r2) if fitted.selected else "",
    }
    _write_kv(d / "meta.tsv", meta)

    feats = list(fitted.feature_names)
    kept = np.zeros(len(feats), dtype=int)
    kept[fitted.filter.kept] = 1
    pd.DataFrame(
        {
            "column": feats + [fitted.focal_name],
            "mean": np.asarray(fitted.stats.means),
            "sd": np.asarray(fitted.stats.sds),
            "kept": list(kept) + [1],
        }
    ).to_csv(d / "columns.tsv", sep="\t", index=False)

    kin = pd.DataFrame(np.asarray(fitted.kinship.values), columns=list(fitted.kinship.genotype_ids))
    kin.insert(0, "genotype", list(fitted.kinship.genotype_ids))
    kin.to_csv(d / "kinship.tsv", sep="\t", index=False)
    sets = {g: "observed" for g in fitted.kinship.observed_ids}
    sets.update({g: "test" for g in fitted.kinship.test_ids})
    pd.DataFrame(
        {"genotype": list(sets), "set": list(sets.values())}
    ).to_csv(d / "partition.tsv", sep="\t", index=False)

    pd.DataFrame({"genotype": list(fitted.kinship.observed_ids), "focal": fitted.focal_blues}).to_csv(
        d / "focal_blues.tsv", sep="\t", index=False
    )

    if fitted.model is not None:
        kept_names = [feats[i] for i in fitted.filter.kept]
        lo = pd.DataFrame(
            np.asarray(fitted.model.loadings),
            columns=[f"factor{k + 1}" for k in range(fitted.m)],
        )
        lo.insert(0, "feature", kept_names)
        lo["uniqueness"] = np.asarray(fitted.model.uniquenesses)
        lo.to_csv(d / "loadings.tsv", sep="\t", index=False)
        pr = pd.DataFrame(
            np.asarray(fitted.projection),
            columns=[f"factor{k + 1}" for k in range(fitted.m)],
        )
        pr.insert(0, "feature", kept_names)
        pr.to_csv(d / "projection.tsv", sep="\t", index=False)
    if fitted.covs is not None:
        t = fitted.covs.n_traits
        trait_names = [f"trait{i + 1}" for i in range(t - 1)] + [fitted.focal_name]
        gen = pd.DataFrame(np.asarray(fitted.covs.genetic), columns=trait_names)
        gen.insert(0, "component", "genetic")
        res = pd.DataFrame(np.asarray(fitted.covs.residual), columns=trait_names)
        res.insert(0, "component", "residual")
        pd.concat([gen, res]).to_csv(d / "trait_covariances.tsv", sep="\t", index=False)
        bl = pd.DataFrame(np.asarray(fitted.blues), columns=trait_names)
        bl.insert(0, "genotype", list(fitted.kinship.observed_ids))
        bl.to_csv(d / "blues.tsv", sep="\t", index=False)


def load_pipeline(directory) -> FittedPipeline:
    """Read back a pipeline bundle written by :func:`save_pipeline`."""
    d = Path(directory)
    meta = _read_kv(d / "meta.tsv")
    cfg = PipelineConfig(
        tau=float(meta["tau"]),
        k_folds=int(meta["k_folds"]),
        pd_floor=float(meta["pd_floor"]),
        fa_tol=float(meta["fa_tol"]),
        fa_max_iter=int(meta["fa_max_iter"]),
        subset_guard=int(meta["subset_guard"]),
        scenario=meta["scenario"],
        seed=int(meta["seed"]),
        separate_test_scaling=meta["separate_test_scaling"] == "True",
    )
    cols = pd.read_csv(d / "columns.tsv", sep="\t", dtype={"column": str})
    feature_names = tuple(cols["column"][:-1])
    stats = Standardization(cols["mean"].to_numpy(), cols["sd"].to_numpy())
    kept = np.flatnonzero(cols["kept"].to_numpy()[:-1])
    filt = FilterResult(kept, np.setdiff1d(np.arange(len(feature_names)), kept), cfg.tau)

    kin_df = pd.read_csv(d / "kinship.tsv", sep="\t", dtype={"genotype": str})
    ids = kin_df["genotype"].tolist()
    kin = Kinship(kin_df[kin_df.columns[1:]].to_numpy(dtype=float), ids)
    part = pd.read_csv(d / "partition.tsv", sep="\t", dtype=str)
    test_ids = part.loc[part["set"] == "test", "genotype"].tolist()
    observed_ids = part.loc[part["set"] == "observed", "genotype"].tolist()
    kin = kin.with_partition(test_ids=test_ids, observed_ids=observed_ids)

    focal_blues = pd.read_csv(d / "focal_blues.tsv", sep="\t")["focal"].to_numpy()
    m = int(meta["m"])
    fallback = meta["fallback"] == "True"

    model = projection = selected = covs = blues = None
    if (d / "loadings.tsv").exists():
        lo = pd.read_csv(d / "loadings.tsv", sep="\t")
        fcols = [f"factor{k + 1}" for k in range(m)]
        loadings = lo[fcols].to_numpy()
        uniq = lo["uniqueness"].to_numpy()
        model = FactorModel(loadings, uniq, m, rotated=m >= 2, fit_value=np.nan)
        projection = pd.read_csv(d / "projection.tsv", sep="\t")[fcols].to_numpy()
    sel_field = meta.get("selected", "") or ""
    if sel_field and sel_field != "nan":
        idx = tuple(int(i) for i in sel_field.split(","))
        selected = SelectedFactors(idx, float(meta["adjusted_r2"]))
    if (d / "trait_covariances.tsv").exists():
        tc = pd.read_csv(d / "trait_covariances.tsv", sep="\t")
        mats = {}
        for comp, sub in tc.groupby("component"):
            mats[comp] = sub[sub.columns[1:]].to_numpy(dtype=float)
        covs = TraitCovariances(mats["genetic"], mats["residual"], int(meta["r"]))
        bl = pd.read_csv(d / "blues.tsv", sep="\t", dtype={"genotype": str})
        blues = bl[bl.columns[1:]].to_numpy(dtype=float)

    return FittedPipeline(
        config=cfg, kinship=kin, stats=stats, feature_names=feature_names,
        focal_name=meta["focal_name"], r=int(meta["r"]), filter=filt,
        theta_g=float(meta["theta_g"]), theta_e=float(meta["theta_e"]), m=m,
        model=model, projection=projection, selected=selected, covs=covs,
        blues=blues, focal_blues=focal_blues,
        sigma_g_uni=float(meta["sigma_g_uni"]), sigma_e_uni=float(meta["sigma_e_uni"]),
        fallback=fallback,
    )
