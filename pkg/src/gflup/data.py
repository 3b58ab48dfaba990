"""Data model for replicated phenotype matrices, genotype means, markers and kinship.

Plot-level data are stored in a dense matrix whose first p columns are
secondary features and whose last column is the focal trait. Balanced
designs are required: every genotype has exactly r replicate rows. All
containers are immutable after construction; operations return new objects.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .exceptions import (
    DegenerateMarkers,
    UnbalancedDesign,
    ZeroVariance,
)

# Ridge added to kinship blocks before any inversion; realized genomic
# relationship matrices are frequently rank-deficient.
KINSHIP_JITTER = 1e-8


def stabilized(a: np.ndarray, jitter: float = KINSHIP_JITTER) -> np.ndarray:
    """Return ``a + jitter * I`` (used ahead of every kinship inversion)."""
    return a + jitter * np.eye(a.shape[0])


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PlotData:
    """Replicated plot-level phenotypes for ``n_g`` genotypes with ``r`` replicates.

    ``values`` has shape (n_g * r, p + 1); the last column is the focal trait.
    ``genotypes`` gives the genotype id of each row. Genotype order is the
    order of first appearance.
    """

    values: np.ndarray
    genotypes: tuple
    feature_names: tuple
    focal_name: str
    genotype_ids: tuple = field(init=False)
    n_g: int = field(init=False)
    r: int = field(init=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != len(self.feature_names) + 1:
            raise ValueError("values must be n x (p + 1)")
        if values.shape[0] != len(self.genotypes):
            raise ValueError("one genotype id per row required")
        if not np.all(np.isfinite(values)):
            raise ValueError("missing or non-finite phenotype values")
        index = {}
        codes = np.empty(len(self.genotypes), dtype=int)
        for i, g in enumerate(self.genotypes):
            codes[i] = index.setdefault(g, len(index))
        ids = tuple(index)
        counts = np.bincount(codes, minlength=len(ids))
        r = int(counts[0])
        if np.any(counts != r):
            raise UnbalancedDesign(
                "replicate counts differ between genotypes; balanced designs only"
            )
        # Stable sort groups the rows of each genotype together.
        rows = np.argsort(codes, kind="stable").reshape(len(ids), r)
        object.__setattr__(self, "values", _freeze(values))
        object.__setattr__(self, "genotypes", tuple(self.genotypes))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "genotype_ids", ids)
        object.__setattr__(self, "n_g", len(ids))
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "_codes", _freeze(codes))
        object.__setattr__(self, "_rows", _freeze(rows))
        object.__setattr__(self, "_index", index)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return len(self.feature_names)

    @property
    def secondary(self) -> np.ndarray:
        return self.values[:, : self.p]

    @property
    def focal(self) -> np.ndarray:
        return self.values[:, self.p]

    def rows_of(self, genotype) -> np.ndarray:
        """Row indices of one genotype's replicates."""
        return self._rows[self._index[genotype]]

    def subset_genotypes(self, genotype_ids) -> "PlotData":
        """Rows of the given genotypes, in the given genotype order."""
        rows = self._rows[[self._index[g] for g in genotype_ids]].ravel()
        gids = [self.genotypes[i] for i in rows]
        return PlotData(self.values[rows], gids, self.feature_names, self.focal_name)

    def with_columns(self, values, feature_names, focal_name=None) -> "PlotData":
        """Same rows and genotypes, different columns."""
        return PlotData(
            values, self.genotypes, feature_names, focal_name or self.focal_name
        )


@dataclass(frozen=True, eq=False)
class BlueMatrix:
    """Genotypic means (BLUEs under a completely randomized design)."""

    values: np.ndarray
    genotype_ids: tuple
    labels: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(np.asarray(self.values, float)))
        object.__setattr__(self, "genotype_ids", tuple(self.genotype_ids))
        object.__setattr__(self, "labels", tuple(self.labels))

    def reordered(self, genotype_ids) -> np.ndarray:
        pos = {g: i for i, g in enumerate(self.genotype_ids)}
        return self.values[[pos[g] for g in genotype_ids]]


@dataclass(frozen=True, eq=False)
class MarkerMatrix:
    """Allele dosages in {0, 1, 2}; monomorphic SNPs are dropped at construction."""

    values: np.ndarray
    snp_ids: tuple
    genotype_ids: tuple

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("marker matrix must be 2-dimensional")
        if not np.isin(values, (0.0, 1.0, 2.0)).all():
            raise ValueError("marker dosages must be 0, 1 or 2")
        if values.shape[1]:
            keep = ~np.all(values == values[0:1, :], axis=0)
            values = values[:, keep]
            snp_ids = tuple(s for s, k in zip(self.snp_ids, keep) if k)
        else:
            snp_ids = ()
        object.__setattr__(self, "values", _freeze(values))
        object.__setattr__(self, "snp_ids", snp_ids)
        object.__setattr__(self, "genotype_ids", tuple(self.genotype_ids))

    @property
    def n_snp(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class Partition:
    """Ordered test / observed (training) index sets into a kinship matrix."""

    test: np.ndarray
    observed: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "test", _freeze(np.asarray(self.test, dtype=int)))
        object.__setattr__(self, "observed", _freeze(np.asarray(self.observed, dtype=int)))
        overlap = set(self.test.tolist()) & set(self.observed.tolist())
        if overlap:
            raise ValueError(f"test and observed sets overlap: {sorted(overlap)}")


@dataclass(frozen=True, eq=False)
class Kinship:
    """Marker-derived genomic relationship matrix with optional train/test split."""

    values: np.ndarray
    genotype_ids: tuple
    partition: Partition | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape[0] != values.shape[1]:
            raise ValueError("kinship must be square")
        if values.size and np.abs(values - values.T).max() > 1e-12:
            raise ValueError("kinship must be symmetric within 1e-12")
        object.__setattr__(self, "values", _freeze(values))
        object.__setattr__(self, "genotype_ids", tuple(self.genotype_ids))

    @property
    def n_g(self) -> int:
        return self.values.shape[0]

    def index_of(self, genotype_ids) -> np.ndarray:
        pos = {g: i for i, g in enumerate(self.genotype_ids)}
        return np.array([pos[g] for g in genotype_ids], dtype=int)

    def with_partition(self, test_ids=None, observed_ids=None) -> "Kinship":
        """Attach a partition given test and/or observed genotype ids."""
        if test_ids is None and observed_ids is None:
            raise ValueError("need test_ids or observed_ids")
        if observed_ids is None:
            test_set = set(test_ids)
            observed_ids = [g for g in self.genotype_ids if g not in test_set]
        if test_ids is None:
            obs_set = set(observed_ids)
            test_ids = [g for g in self.genotype_ids if g not in obs_set]
        part = Partition(self.index_of(test_ids), self.index_of(observed_ids))
        return replace(self, partition=part)

    def _need_partition(self) -> Partition:
        if self.partition is None:
            raise ValueError("kinship has no train/test partition")
        return self.partition

    @property
    def test_ids(self) -> tuple:
        return tuple(self.genotype_ids[i] for i in self._need_partition().test)

    @property
    def observed_ids(self) -> tuple:
        return tuple(self.genotype_ids[i] for i in self._need_partition().observed)

    @property
    def k_tt(self) -> np.ndarray:
        p = self._need_partition()
        return self.values[np.ix_(p.test, p.test)]

    @property
    def k_to(self) -> np.ndarray:
        p = self._need_partition()
        return self.values[np.ix_(p.test, p.observed)]

    @property
    def k_ot(self) -> np.ndarray:
        return self.k_to.T

    @property
    def k_oo(self) -> np.ndarray:
        p = self._need_partition()
        return self.values[np.ix_(p.observed, p.observed)]


@dataclass(frozen=True, eq=False)
class Standardization:
    """Per-column means and standard deviations used for centering/scaling."""

    means: np.ndarray
    sds: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "means", _freeze(np.asarray(self.means, float)))
        object.__setattr__(self, "sds", _freeze(np.asarray(self.sds, float)))


def column_stats(data: PlotData, stats_rows=None) -> Standardization:
    """Column means and sds (ddof=1) over ``stats_rows`` (default: all rows).

    Raises
    ------
    ZeroVariance
        If any column is constant over the selected rows.
    """
    rows = np.arange(data.n) if stats_rows is None else np.asarray(stats_rows)
    if rows.dtype == bool:
        rows = np.flatnonzero(rows)
    if rows.size == 0:
        raise ValueError("stats_rows must be non-empty")
    sub = data.values[rows]
    means = sub.mean(axis=0)
    sds = sub.std(axis=0, ddof=1) if rows.size > 1 else np.zeros(sub.shape[1])
    names = data.feature_names + (data.focal_name,)
    for j, sd in enumerate(sds):
        if sd <= 0.0:
            raise ZeroVariance(names[j])
    return Standardization(means, sds)


def apply_stats(data: PlotData, stats: Standardization) -> PlotData:
    """Apply a stored standardization to every row of ``data``."""
    values = (data.values - stats.means) / stats.sds
    return PlotData(values, data.genotypes, data.feature_names, data.focal_name)


def center_and_scale(data: PlotData, stats_rows=None) -> PlotData:
    """Standardize every column to mean 0, variance 1 over ``stats_rows``.

    Statistics are computed on the given row subset and the transformation
    is applied to all rows.
    """
    return apply_stats(data, column_stats(data, stats_rows))


def genotype_means(data: PlotData) -> BlueMatrix:
    """Genotypic means of all columns, one row per genotype."""
    sums = np.zeros((data.n_g, data.values.shape[1]))
    np.add.at(sums, data._codes, data.values)
    labels = data.feature_names + (data.focal_name,)
    return BlueMatrix(sums / data.r, data.genotype_ids, labels)


def vanraden_kinship(markers: MarkerMatrix) -> Kinship:
    """Genomic relationship matrix K = W W' / c from centered dosages.

    W is the column-centered dosage matrix and c = sum_k 2 q_k (1 - q_k)
    with q_k the observed allele frequency of SNP k.

    Raises
    ------
    DegenerateMarkers
        If the scaling constant c is zero (no polymorphism).
    """
    if markers.n_snp == 0:
        raise DegenerateMarkers("no polymorphic SNPs")
    q = markers.values.mean(axis=0) / 2.0
    c = float(np.sum(2.0 * q * (1.0 - q)))
    if c <= 0.0:
        raise DegenerateMarkers("scaling constant is zero")
    w = markers.values - 2.0 * q
    k = (w @ w.T) / c
    k = (k + k.T) / 2.0
    return Kinship(k, markers.genotype_ids)


# ---------------------------------------------------------------------------
# TSV interchange
# ---------------------------------------------------------------------------

def read_phenotypes(path) -> PlotData:
    """Read a plot-level phenotype TSV.

    Expected header: ``genotype<TAB>rep<TAB><feature columns...><TAB><focal>``.
    The last column is the focal trait. 'NA' entries are rejected.
    """
    df = pd.read_csv(path, sep="\t", dtype={0: str}, na_values=["NA"], keep_default_na=False)
    if df.shape[1] < 4:
        raise ValueError("phenotype file needs genotype, rep, >=1 feature and a focal column")
    if list(df.columns[:2]) != ["genotype", "rep"]:
        raise ValueError("phenotype file must start with 'genotype' and 'rep' columns")
    if df.isna().any().any():
        raise ValueError("'NA' values are not allowed in phenotype files")
    names = list(df.columns[2:])
    values = df[names].to_numpy(dtype=float)
    return PlotData(values, df["genotype"].tolist(), names[:-1], names[-1])


def write_phenotypes(data: PlotData, path) -> None:
    reps = {}
    rep_col = []
    for g in data.genotypes:
        reps[g] = reps.get(g, 0) + 1
        rep_col.append(reps[g])
    df = pd.DataFrame(np.asarray(data.values), columns=list(data.feature_names) + [data.focal_name])
    df.insert(0, "rep", rep_col)
    df.insert(0, "genotype", list(data.genotypes))
    df.to_csv(path, sep="\t", index=False)


def read_markers(path) -> MarkerMatrix:
    """Read a marker TSV: ``genotype<TAB>snp_1...snp_m`` with integer dosages."""
    df = pd.read_csv(path, sep="\t", dtype={0: str}, na_values=["NA"], keep_default_na=False)
    if df.columns[0] != "genotype":
        raise ValueError("marker file must start with a 'genotype' column")
    if df.isna().any().any():
        raise ValueError("'NA' values are not allowed in marker files")
    snps = list(df.columns[1:])
    return MarkerMatrix(df[snps].to_numpy(dtype=float), snps, df["genotype"].tolist())


def write_markers(markers: MarkerMatrix, path) -> None:
    df = pd.DataFrame(np.asarray(markers.values, dtype=int), columns=list(markers.snp_ids))
    df.insert(0, "genotype", list(markers.genotype_ids))
    df.to_csv(path, sep="\t", index=False)
