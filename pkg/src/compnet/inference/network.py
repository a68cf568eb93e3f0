from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class InferredNetwork:
    """Signed, weighted undirected network with per-edge stability."""

    p: int
    edges: dict  # (i, j) with i < j -> {"weight": w, "stability": s}
    method: str
    rule: str | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in ("MB", "Glasso", "Pearson"):
            raise ValueError(f"unknown method {self.method!r}")
        for (i, j), rec in self.edges.items():
            if i == j:
                raise ValueError("self-edges are not allowed")
            if not i < j:
                raise ValueError("edge keys must be ordered pairs (i < j)")
            if not np.isfinite(rec["weight"]):
                raise ValueError("edge weights must be finite")
            if not 0 <= rec["stability"] <= 1:
                raise ValueError("stability must lie in [0, 1]")

    @classmethod
    def from_weights(cls, p, weights: dict, method, rule=None, stability=None, meta=None):
        edges = {}
        for (i, j), w in weights.items():
            a, b = (i, j) if i < j else (j, i)
            s = 1.0 if stability is None else float(stability[a, b])
            edges[(int(a), int(b))] = {"weight": float(w), "stability": s}
        return cls(int(p), dict(sorted(edges.items())), method, rule, dict(meta or {}))

    def __len__(self):
        return len(self.edges)

    def edge_set(self) -> set:
        return set(self.edges)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.p, self.p), dtype=bool)
        for i, j in self.edges:
            a[i, j] = a[j, i] = True
        return a

    def weight_matrix(self) -> np.ndarray:
        w = np.zeros((self.p, self.p))
        for (i, j), rec in self.edges.items():
            w[i, j] = w[j, i] = rec["weight"]
        return w
