"""Command line interface: simulate, fit, predict, benchmark."""

from __future__ import annotations

import logging
from pathlib import Path

import click
import numpy as np
import pandas as pd

from . import pipeline as pl
from .config import read_config
from .data import (
    read_markers,
    read_phenotypes,
    vanraden_kinship,
    write_markers,
    write_phenotypes,
)
from .exceptions import ConfigError
from .simulation import SimConfig, simulate_dataset, simulate_markers, split_train_test

SIM_KEYS = (
    "n_g", "r", "n_snp", "blocks", "feats_per_block",
    "h2_s", "h2_y", "communality", "n_signal_factors", "seed",
)
PIPELINE_KEYS = (
    "tau", "k_folds", "pd_floor", "fa_tol", "fa_max_iter",
    "subset_guard", "scenario", "seed", "separate_test_scaling",
)


def _sim_config(params: dict) -> SimConfig:
    return SimConfig(**{k: params[k] for k in SIM_KEYS if k in params})


@click.group()
def main():
    """Genomic prediction from high-dimensional secondary phenotypes."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
def simulate(config_path, out_dir):
    """Simulate markers, phenotypes and ground truth into a directory.

    With n_train (and optionally split_seed) in the config, train/test
    phenotype files are written as well.
    """
    params = read_config(config_path)
    cfg = _sim_config(params)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    markers = simulate_markers(cfg.n_g, cfg.n_snp, cfg.seed)
    data, truth = simulate_dataset(cfg, markers)
    write_markers(markers, out / "markers.tsv")
    write_phenotypes(data, out / "phenotypes.tsv")

    truth_df = pd.DataFrame(
        {"genotype": list(data.genotype_ids), "genetic_focal": truth.genetic_focal}
    )
    for b in range(cfg.blocks):
        truth_df[f"factor{b + 1}"] = truth.factor_scores[:, b]
    truth_df.to_csv(out / "truth.tsv", sep="\t", index=False)

    if "n_train" in params:
        part = split_train_test(cfg.n_g, int(params["n_train"]), params.get("split_seed", cfg.seed))
        ids = np.asarray(data.genotype_ids, dtype=object)
        write_phenotypes(data.subset_genotypes(ids[part.observed]), out / "train_phenotypes.tsv")
        write_phenotypes(data.subset_genotypes(ids[part.test]), out / "test_phenotypes.tsv")
    click.echo(f"simulated dataset written to {out}")


@main.command()
@click.option("--pheno", required=True, type=click.Path(exists=True))
@click.option("--markers", "markers_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
def fit(pheno, markers_path, config_path, out_dir):
    """Fit the pipeline on training phenotypes and save the model bundle.

    The marker file must cover training and prospective test genotypes;
    genotypes absent from the phenotype file form the test set.
    """
    params = read_config(config_path) if config_path else {}
    cfg = pl.PipelineConfig(**{k: params[k] for k in PIPELINE_KEYS if k in params})
    train = read_phenotypes(pheno)
    markers = read_markers(markers_path)
    kinship = vanraden_kinship(markers)
    test_ids = [g for g in kinship.genotype_ids if g not in set(train.genotype_ids)]
    if not test_ids:
        raise ConfigError("marker file contains no genotypes beyond the training set")
    kinship = kinship.with_partition(test_ids=test_ids)
    fitted = pl.fit(train, kinship, cfg)
    pl.save_pipeline(fitted, out_dir)
    click.echo(
        f"fitted pipeline saved to {out_dir} "
        f"(p*={fitted.p_star}, m={fitted.m}, m*={fitted.m_star}, fallback={fitted.fallback})"
    )


@main.command()
@click.option("--model", "model_dir", required=True, type=click.Path(exists=True))
@click.option("--scenario", type=click.Choice(["cv1", "cv2", "univariate"]), default=None)
@click.option("--test-pheno", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def predict(model_dir, scenario, test_pheno, out_path):
    """Predict test-set genetic values from a saved model bundle."""
    fitted = pl.load_pipeline(model_dir)
    test = read_phenotypes(test_pheno) if test_pheno else None
    result = pl.predict(fitted, test, scenario)
    result.to_tsv(out_path)
    click.echo(f"{len(result.test_predictions)} predictions written to {out_path}")


@main.command()
@click.option("--grid", "grid_path", required=True, type=click.Path(exists=True))
@click.option("--replicates", default=20, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def benchmark(grid_path, replicates, out_path):
    """Run the simulation benchmark over a grid of generative settings.

    Grid config: scalar simulation keys plus list-valued h2_s, h2_y and
    communality; optional n_train, methods and scenarios.
    """
    params = read_config(grid_path)
    as_list = lambda v: v if isinstance(v, list) else [v]
    grid = []
    base = {k: params[k] for k in SIM_KEYS if k in params and k not in ("h2_s", "h2_y", "communality")}
    for h2_s in as_list(params.get("h2_s", 0.9)):
        for h2_y in as_list(params.get("h2_y", 0.3)):
            for communality in as_list(params.get("communality", 0.8)):
                grid.append(SimConfig(h2_s=h2_s, h2_y=h2_y, communality=communality, **base))
    methods = tuple(params.get("methods", ["univariate", "gfblup", "siblup", "oracle"]))
    scenarios = tuple(params.get("scenarios", ["cv1", "cv2"]))
    n_train = params.get("n_train")
    report = pl.run_benchmark(
        grid, methods=methods, replicates=replicates, out=out_path,
        n_train=n_train, scenarios=scenarios,
    )
    click.echo(report.to_string(index=False))
    click.echo(f"report written to {out_path}")


if __name__ == "__main__":
    main()
