"""Thresholded Pearson correlation (relevance network) baseline."""
from __future__ import annotations

import numpy as np
from scipy import stats

from ..compositions import empirical_covariance
from ..errors import DataError
from .network import InferredNetwork


def pearson_pvalues(r, n: int) -> np.ndarray:
    """Two-sided t-test p-values for correlations ``r`` from ``n`` samples."""
    r = np.clip(np.asarray(r, dtype=float), -1.0, 1.0)
    df = n - 2
    with np.errstate(divide="ignore"):
        t = r * np.sqrt(df / np.maximum(1.0 - r * r, 0.0))
    return 2.0 * stats.t.sf(np.abs(t), df)


def pearson_rank(x) -> list[tuple]:
    """All pairs ordered by increasing p-value.

    The ordering uses ``|r|`` descending (equivalent to p-value order for a
    fixed n, without the ties that p-value underflow creates), then
    lexicographic pair order. Entries are ``(i, j, |r|, r, pvalue)``.
    """
    v = np.asarray(getattr(x, "values", x), dtype=float)
    n, p = v.shape
    if n < 3:
        raise DataError("Pearson correlation needs at least 3 samples")
    R = empirical_covariance(v, "correlation").matrix
    iu = np.triu_indices(p, 1)
    r = R[iu]
    pv = pearson_pvalues(r, n)
    order = np.lexsort((iu[1], iu[0], -np.abs(r)))
    return [(int(iu[0][m]), int(iu[1][m]), float(abs(r[m])), float(r[m]), float(pv[m])) for m in order]


def pearson_network(x, threshold: float = 0.35) -> tuple[InferredNetwork, list[tuple]]:
    """Edges with ``|r| >= threshold``, weighted by ``r``.

    Stability is reported as ``1 - pvalue``. Also returns the full ranking
    from :func:`pearson_rank`.
    """
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    ranked = pearson_rank(x)
    v = np.asarray(getattr(x, "values", x))
    weights, stab = {}, np.zeros((v.shape[1], v.shape[1]))
    for i, j, a, r, pv in ranked:
        # slack for rounding, e.g. a perfectly correlated pair at threshold 1
        if a >= threshold - 1e-12:
            weights[(i, j)] = r
            stab[i, j] = 1.0 - pv
    meta = {"threshold": float(threshold), "n": int(v.shape[0])}
    return InferredNetwork.from_weights(v.shape[1], weights, "Pearson", stability=stab, meta=meta), ranked
