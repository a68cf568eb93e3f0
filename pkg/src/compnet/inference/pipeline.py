"""Count table to ranked network in one call."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..compositions import CountMatrix, add_pseudocount, clr_transform, total_sum_scale
from .network import InferredNetwork
from .pearson import pearson_network
from .stars import StabilityResult, rank_edges, selected_network, stars_select

METHODS = ("mb", "glasso", "pearson")


@dataclass(frozen=True)
class InferenceResult:
    """Selected network plus a full pair ranking.

    ``ranked`` entries start with ``(i, j)``; the remaining fields are the
    score key used for tie detection during evaluation.
    """

    network: InferredNetwork
    ranked: list
    stability: StabilityResult | None = None

    def manifest(self) -> dict:
        out = {"method": self.network.method, "rule": self.network.rule, "edges": len(self.network)}
        sr = self.stability
        if sr is not None:
            out.update(
                lambda_path=[float(v) for v in sr.path.values],
                lambdas_computed=len(sr.lambdas),
                instability=[float(v) for v in sr.instability],
                lambda_selected=sr.lambda_selected,
                index_selected=sr.index_selected,
                bound_met=sr.bound_met,
                subsamples=sr.subsamples,
                subsample_fraction=sr.subsample_fraction,
                beta=sr.beta,
            )
        else:
            out.update({k: v for k, v in self.network.meta.items() if np.isscalar(v)})
        return out

    def edge_rows(self) -> list[tuple]:
        """``(i, j, weight, stability, rank)`` for every selected edge, by rank."""
        pos = {(r[0], r[1]): k + 1 for k, r in enumerate(self.ranked)}
        rows = [(i, j, rec["weight"], rec["stability"], pos[(i, j)]) for (i, j), rec in self.network.edges.items()]
        return sorted(rows, key=lambda r: r[4])


def clr_counts(counts: CountMatrix, pseudocount: int = 1):
    return clr_transform(total_sum_scale(add_pseudocount(counts, pseudocount)))


def infer(counts, method: str = "mb", *, rule: str = "union", nlambda: int = 30, ratio: float = 0.01,
          subsamples: int = 50, fraction: float = 0.8, beta: float = 0.05, seed: int = 0,
          threshold: float = 0.35, kind: str = "correlation", penalize_diagonal: bool = True,
          early_stop: bool = True, transform: str = "clr") -> InferenceResult:
    """Infer a network from a count matrix.

    ``transform="clr"`` applies a unit pseudocount, total-sum scaling and
    the centered log-ratio before MB/glasso; ``"none"`` uses the values as
    given. Pearson always correlates relative abundances (or raw values
    with ``transform="none"``).
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    if transform not in ("clr", "none"):
        raise ValueError(f"unknown transform {transform!r}")
    if method == "pearson":
        x = counts
        if transform == "clr":
            x = total_sum_scale(add_pseudocount(counts)) if isinstance(counts, CountMatrix) else counts
        net, ranked = pearson_network(x, threshold)
        return InferenceResult(net, ranked, None)
    z = clr_counts(counts) if transform == "clr" else counts
    sr = stars_select(z, method, subsamples=subsamples, fraction=fraction, beta=beta, seed=seed,
                      count=nlambda, ratio=ratio, rule=rule, kind=kind, penalize_diagonal=penalize_diagonal,
                      early_stop=early_stop)
    net = selected_network(z, sr, penalize_diagonal=penalize_diagonal)
    return InferenceResult(net, rank_edges(sr), sr)
