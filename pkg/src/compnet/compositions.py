"""Count-table ingestion, filtering, normalization and log-ratio transforms.

The pipeline for inference is::

    counts -> filter_taxa / filter_samples_by_depth -> add_pseudocount
           -> total_sum_scale -> clr_transform -> empirical_covariance

The covariance of clr data is singular (rows of the clr covariance sum to
zero). For many taxa it is close to the covariance of the log absolute
abundances, since ``Gamma = G Omega G`` with ``G = I - J/p`` approaching the
identity; the inference code uses the clr covariance directly.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    ConstantColumn,
    DataError,
    DuplicateIds,
    MalformedTable,
    NegativeCount,
    NonIntegerCount,
    NonPositiveEntry,
    NoSamplesLeft,
    TooFewTaxa,
    ZeroDepthSample,
)

__all__ = [
    "CountMatrix",
    "CompositionMatrix",
    "ClrMatrix",
    "CovarianceEstimate",
    "load_count_table",
    "filter_taxa",
    "filter_samples_by_depth",
    "normalize_depth",
    "add_pseudocount",
    "total_sum_scale",
    "clr_transform",
    "empirical_covariance",
    "round_half_away",
]


def _default_ids(prefix: str, k: int) -> list[str]:
    return [f"{prefix}{i}" for i in range(k)]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CountMatrix:
    """Integer OTU counts, samples in rows and taxa in columns."""

    values: np.ndarray
    sample_ids: list[str] = field(default=None)
    taxon_ids: list[str] = field(default=None)

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2:
            raise MalformedTable("count matrix must be two-dimensional")
        if v.dtype.kind == "f":
            if not np.all(np.isfinite(v)) or np.any(v != np.round(v)):
                raise NonIntegerCount("count matrix contains non-integer entries")
        elif v.dtype.kind not in "iub":
            raise MalformedTable(f"unsupported dtype {v.dtype}")
        v = v.astype(np.int64)
        n, p = v.shape
        if n < 1:
            raise MalformedTable("count matrix has no samples")
        if p < 2:
            raise TooFewTaxa(f"need at least 2 taxa, got {p}")
        if np.any(v < 0):
            raise NegativeCount("count matrix contains negative entries")
        sids = list(self.sample_ids) if self.sample_ids is not None else _default_ids("S", n)
        tids = list(self.taxon_ids) if self.taxon_ids is not None else _default_ids("T", p)
        if len(sids) != n or len(tids) != p:
            raise MalformedTable("identifier lengths do not match matrix dimensions")
        if len(set(sids)) != n or len(set(tids)) != p:
            raise DuplicateIds("sample or taxon identifiers are not unique")
        object.__setattr__(self, "values", _frozen(v))
        object.__setattr__(self, "sample_ids", sids)
        object.__setattr__(self, "taxon_ids", tids)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def depths(self) -> np.ndarray:
        return self.values.sum(axis=1)

    def take_samples(self, idx) -> "CountMatrix":
        idx = np.asarray(idx)
        return CountMatrix(self.values[idx], [self.sample_ids[i] for i in idx], self.taxon_ids)


@dataclass(frozen=True)
class CompositionMatrix:
    """Strictly positive relative abundances; rows sum to one."""

    values: np.ndarray
    sample_ids: list[str] = field(default=None)
    taxon_ids: list[str] = field(default=None)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] < 2:
            raise TooFewTaxa("composition needs at least 2 parts")
        if np.any(v <= 0):
            raise NonPositiveEntry("compositions must be strictly positive")
        if np.any(np.abs(v.sum(axis=1) - 1.0) > 1e-12):
            raise DataError("composition rows must sum to 1")
        object.__setattr__(self, "values", _frozen(v))


@dataclass(frozen=True)
class ClrMatrix:
    """Centered log-ratio coordinates; rows sum to zero."""

    values: np.ndarray
    sample_ids: list[str] = field(default=None)
    taxon_ids: list[str] = field(default=None)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise MalformedTable("clr matrix must be two-dimensional")
        if np.any(np.abs(v.sum(axis=1)) > 1e-9 * max(1.0, v.shape[1])):
            raise DataError("clr rows must sum to 0")
        object.__setattr__(self, "values", _frozen(v))


@dataclass(frozen=True)
class CovarianceEstimate:
    matrix: np.ndarray
    kind: str = "covariance"

    def __post_init__(self):
        if self.kind not in ("covariance", "correlation"):
            raise ValueError(f"unknown kind {self.kind!r}")
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DataError("covariance must be square")
        if not np.allclose(m, m.T, atol=1e-10, rtol=0):
            raise DataError("covariance must be symmetric")
        object.__setattr__(self, "matrix", _frozen(m))


# --------------------------------------------------------------------------
# I/O


def _parse_count(cell: str, row: int, col: int) -> int:
    s = cell.strip()
    try:
        return int(s)
    except ValueError:
        pass
    try:
        x = float(s)
    except ValueError:
        raise MalformedTable(f"non-numeric cell {cell!r} at row {row}, column {col}") from None
    if not np.isfinite(x) or x != round(x):
        raise NonIntegerCount(f"non-integer count {cell!r} at row {row}, column {col}")
    return int(x)


def load_count_table(path, orientation: str = "samples_as_rows") -> CountMatrix:
    """Read a delimited count table.

    The first row holds column identifiers (its first cell is ignored) and the
    first column holds row identifiers. Tab is used unless the file ends in
    ``.csv``. With ``orientation="taxa_as_rows"`` the table is transposed.
    """
    if orientation not in ("samples_as_rows", "taxa_as_rows"):
        raise ValueError(f"unknown orientation {orientation!r}")
    delim = "," if os.fspath(path).lower().endswith(".csv") else "\t"
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter=delim) if any(c.strip() for c in r)]
    if len(rows) < 2:
        raise MalformedTable("table needs a header row and at least one data row")
    header = [c.strip() for c in rows[0][1:]]
    if not header:
        raise MalformedTable("header has no column identifiers")
    row_ids, data = [], []
    for r, line in enumerate(rows[1:], start=2):
        if len(line) != len(header) + 1:
            raise MalformedTable(f"row {r} has {len(line) - 1} cells, expected {len(header)}")
        row_ids.append(line[0].strip())
        data.append([_parse_count(c, r, k + 2) for k, c in enumerate(line[1:])])
    values = np.array(data, dtype=np.int64)
    if orientation == "taxa_as_rows":
        return CountMatrix(values.T, header, row_ids)
    return CountMatrix(values, row_ids, header)


# --------------------------------------------------------------------------
# filtering and normalization


def filter_taxa(c: CountMatrix, min_presence_fraction: float) -> CountMatrix:
    """Keep taxa observed (count > 0) in at least the given fraction of samples."""
    if not 0 < min_presence_fraction <= 1:
        raise ValueError("min_presence_fraction must lie in (0, 1]")
    presence = (c.values > 0).mean(axis=0)
    keep = np.flatnonzero(presence >= min_presence_fraction)
    if keep.size < 2:
        raise TooFewTaxa(f"only {keep.size} taxa pass presence threshold {min_presence_fraction}")
    return CountMatrix(c.values[:, keep], c.sample_ids, [c.taxon_ids[k] for k in keep])


def filter_samples_by_depth(c: CountMatrix, quantile: float) -> tuple[CountMatrix, float]:
    """Drop samples whose total depth falls below a quantile of all depths.

    The quantile uses linear interpolation between order statistics
    (``numpy.quantile(method="linear")``).
    """
    if not 0 < quantile < 1:
        raise ValueError("quantile must lie in (0, 1)")
    depths = c.depths()
    threshold = float(np.quantile(depths, quantile, method="linear"))
    keep = np.flatnonzero(depths >= threshold)
    if keep.size == 0:
        raise NoSamplesLeft("depth filter removed every sample")
    return c.take_samples(keep), threshold


def round_half_away(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def normalize_depth(c: CountMatrix, target_depth: int) -> CountMatrix:
    if target_depth <= 0:
        raise ValueError("target_depth must be positive")
    depths = c.depths()
    if np.any(depths == 0):
        raise ZeroDepthSample("cannot normalize a sample with zero total count")
    scaled = c.values * (target_depth / depths[:, None])
    return CountMatrix(round_half_away(scaled).astype(np.int64), c.sample_ids, c.taxon_ids)


def add_pseudocount(c: CountMatrix, value: int = 1) -> CountMatrix:
    if value <= 0 or int(value) != value:
        raise ValueError("pseudocount must be a positive integer")
    return CountMatrix(c.values + int(value), c.sample_ids, c.taxon_ids)


def total_sum_scale(c: CountMatrix) -> CompositionMatrix:
    v = c.values.astype(float)
    depths = v.sum(axis=1)
    if np.any(depths == 0):
        raise ZeroDepthSample("cannot scale a sample with zero total count")
    if np.any(v <= 0):
        raise NonPositiveEntry("zero counts present; add a pseudocount before scaling")
    return CompositionMatrix(v / depths[:, None], c.sample_ids, c.taxon_ids)


def clr_transform(x) -> ClrMatrix:
    """Centered log-ratio: ``log(x_ij) - mean_k log(x_ik)`` row by row.

    Accepts compositions, count matrices or plain positive arrays; the result
    is the same for any positive rescaling of each row.
    """
    v = np.asarray(getattr(x, "values", x), dtype=float)
    if np.any(v <= 0):
        raise NonPositiveEntry("clr needs strictly positive entries")
    logs = np.log(v)
    z = logs - logs.mean(axis=1, keepdims=True)
    return ClrMatrix(z, getattr(x, "sample_ids", None), getattr(x, "taxon_ids", None))


def empirical_covariance(z, kind: str = "covariance") -> CovarianceEstimate:
    """Sample covariance (divisor n - 1) or its correlation rescaling."""
    v = np.asarray(getattr(z, "values", z), dtype=float)
    n = v.shape[0]
    if n < 2:
        raise DataError("need at least 2 samples")
    centered = v - v.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    cov = (cov + cov.T) / 2
    if kind == "covariance":
        return CovarianceEstimate(cov, "covariance")
    if kind != "correlation":
        raise ValueError(f"unknown kind {kind!r}")
    sd = np.sqrt(np.diag(cov))
    scale = max(1.0, float(np.abs(v).max()))
    if np.any(sd <= 1e-12 * scale):
        bad = np.flatnonzero(sd <= 1e-12 * scale)
        raise ConstantColumn(f"constant column(s) {bad.tolist()} have zero variance")
    corr = cov / np.outer(sd, sd)
    corr = np.clip((corr + corr.T) / 2, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return CovarianceEstimate(corr, "correlation")


def write_matrix_tsv(path, values, row_ids: Sequence[str], col_ids: Sequence[str], corner: str = "") -> None:
    """Write a dense labelled matrix; reals use 17 significant digits."""
    values = np.asarray(values)
    is_int = values.dtype.kind in "iub"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow([corner, *col_ids])
        for rid, row in zip(row_ids, values):
            w.writerow([rid, *(str(int(x)) if is_int else format(float(x), ".17g") for x in row)])
