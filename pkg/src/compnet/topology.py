"""Ground-truth graph generators and precision-matrix construction.

Three topologies are available: band (successive off-diagonals), cluster
(independent Erdos-Renyi blocks) and scale-free (preferential attachment
tree). Every generator finishes by randomly removing or adding edges until
exactly ``e`` edges remain.

A graph becomes a precision matrix by drawing edge weights uniformly from
``[-theta_max, -theta_min] U [theta_min, theta_max]`` and setting a common
diagonal value ``c``, found by bisection so that ``cond(Theta)`` hits the
requested condition number.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import BracketError, DataError, InvalidParameters, NotPositiveDefinite

__all__ = [
    "Adjacency",
    "GraphModel",
    "gen_band",
    "gen_cluster",
    "gen_scale_free",
    "adjust_edge_count",
    "make_precision",
    "condition_number",
    "default_clusters",
    "generate",
    "TOPOLOGIES",
]

TOPOLOGIES = ("band", "cluster", "scale_free")


@dataclass(frozen=True)
class Adjacency:
    p: int
    edges: frozenset

    def __post_init__(self):
        if self.p < 2:
            raise InvalidParameters("a graph needs at least 2 nodes")
        clean = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise InvalidParameters(f"self-loop at node {i}")
            if not (0 <= i < self.p and 0 <= j < self.p):
                raise InvalidParameters(f"edge ({i}, {j}) outside 0..{self.p - 1}")
            clean.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(clean))

    @classmethod
    def from_matrix(cls, a) -> "Adjacency":
        a = np.asarray(a)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DataError("adjacency matrix must be square")
        iu = np.triu_indices(a.shape[0], 1)
        sel = (a[iu] != 0) | (a.T[iu] != 0)
        return cls(a.shape[0], frozenset(zip(iu[0][sel].tolist(), iu[1][sel].tolist())))

    @property
    def e(self) -> int:
        return len(self.edges)

    def matrix(self) -> np.ndarray:
        m = np.zeros((self.p, self.p), dtype=bool)
        for i, j in self.edges:
            m[i, j] = m[j, i] = True
        return m

    def sorted_edges(self) -> list:
        return sorted(self.edges)

    def degrees(self) -> np.ndarray:
        d = np.zeros(self.p, dtype=np.int64)
        for i, j in self.edges:
            d[i] += 1
            d[j] += 1
        return d


def _max_edges(p: int) -> int:
    return p * (p - 1) // 2


def adjust_edge_count(a: Adjacency, e: int, seed) -> Adjacency:
    """Remove random edges or add random absent pairs until exactly ``e`` remain."""
    if not 0 <= e <= _max_edges(a.p):
        raise InvalidParameters(f"e={e} outside [0, {_max_edges(a.p)}]")
    rng = np.random.default_rng(seed)
    edges = a.sorted_edges()
    if len(edges) > e:
        keep = rng.choice(len(edges), size=e, replace=False)
        return Adjacency(a.p, frozenset(edges[k] for k in keep))
    if len(edges) < e:
        present = a.matrix()
        iu = np.triu_indices(a.p, 1)
        absent = np.flatnonzero(~present[iu])
        pick = rng.choice(absent.size, size=e - len(edges), replace=False)
        added = {(int(iu[0][absent[k]]), int(iu[1][absent[k]])) for k in pick}
        return Adjacency(a.p, frozenset(edges) | added)
    return a


def gen_band(p: int, e: int, seed) -> Adjacency:
    """Fill whole off-diagonals (distance 1, 2, ...) while they fit, then adjust."""
    if not 1 <= e <= _max_edges(p):
        raise InvalidParameters(f"infeasible edge count e={e} for p={p}")
    edges = set()
    available = e
    for k in range(1, p):
        length = p - k
        if available < length:
            break
        edges.update((i, i + k) for i in range(length))
        available -= length
    return adjust_edge_count(Adjacency(p, frozenset(edges)), e, seed)


def cluster_sizes(p: int, h: int) -> list[int]:
    base, extra = divmod(p, h)
    return [base + 1 if k < extra else base for k in range(h)]


def default_clusters(p: int) -> int:
    return max(1, math.ceil(p / 34))


def gen_cluster(p: int, e: int, h: int, seed, return_components: bool = False):
    """``h`` Erdos-Renyi blocks of near-equal size, ``e / h`` expected edges each."""
    if h < 1 or e < h:
        raise InvalidParameters("need h >= 1 and e >= h")
    sizes = cluster_sizes(p, h)
    if min(sizes) < 1:
        raise InvalidParameters(f"cannot split {p} nodes into {h} clusters")
    capacity = sum(s * (s - 1) // 2 for s in sizes)
    if e > capacity:
        raise InvalidParameters(f"e={e} exceeds within-cluster capacity {capacity}")
    rng = np.random.default_rng(seed)
    edges = set()
    start = 0
    e_comp = e / h
    for s in sizes:
        pairs = s * (s - 1) // 2
        if pairs:
            prob = min(1.0, e_comp / pairs)
            for i, j in combinations(range(start, start + s), 2):
                if rng.random() < prob:
                    edges.add((i, j))
        start += s
    raw = Adjacency(p, frozenset(edges))
    out = adjust_edge_count(raw, e, rng)
    if return_components:
        return out, raw, sizes
    return out


def gen_scale_free(p: int, seed) -> Adjacency:
    """Preferential attachment, one edge per arriving node (a tree on p nodes)."""
    if p < 2:
        raise InvalidParameters("need p >= 2")
    rng = np.random.default_rng(seed)
    degree = np.zeros(p)
    edges = {(0, 1)}
    degree[0] = degree[1] = 1
    for t in range(2, p):
        w = degree[:t]
        target = int(rng.choice(t, p=w / w.sum()))
        edges.add((target, t))
        degree[target] += 1
        degree[t] += 1
    return Adjacency(p, frozenset(edges))


def generate(topology: str, p: int, e: int, seed, h: int | None = None) -> Adjacency:
    """Generate one of the three topologies with exactly ``e`` edges."""
    if topology == "band":
        return gen_band(p, e, seed)
    if topology == "cluster":
        return gen_cluster(p, e, h or default_clusters(p), seed)
    if topology == "scale_free":
        rng = np.random.default_rng(seed)
        return adjust_edge_count(gen_scale_free(p, rng), e, rng)
    raise InvalidParameters(f"unknown topology {topology!r}")


# --------------------------------------------------------------------------
# precision matrices


def condition_number(M, require_pd: bool = True) -> float:
    """Ratio of the largest to the smallest eigenvalue of a symmetric matrix."""
    M = np.asarray(M, dtype=float)
    if not np.allclose(M, M.T, atol=1e-10 * max(1.0, np.abs(M).max())):
        raise DataError("matrix must be symmetric")
    ev = np.linalg.eigvalsh(M)
    if ev[0] <= 0:
        if require_pd:
            raise NotPositiveDefinite(f"smallest eigenvalue {ev[0]:.3g} is not positive")
        return np.inf
    return float(ev[-1] / ev[0])


def cov_to_corr(sigma: np.ndarray) -> np.ndarray:
    d = 1 / np.sqrt(np.diag(sigma))
    r = sigma * np.outer(d, d)
    r = (r + r.T) / 2
    np.fill_diagonal(r, 1.0)
    return r


@dataclass(frozen=True)
class GraphModel:
    adjacency: Adjacency
    precision: np.ndarray
    covariance: np.ndarray
    correlation: np.ndarray
    kappa: float
    kappa_requested: float | None = None
    seed: int | None = None

    @classmethod
    def from_precision(cls, adjacency, precision, kappa_requested=None, seed=None) -> "GraphModel":
        precision = np.asarray(precision, dtype=float)
        try:
            np.linalg.cholesky(precision)
        except np.linalg.LinAlgError:
            raise NotPositiveDefinite("precision matrix is not positive definite") from None
        sigma = np.linalg.inv(precision)
        sigma = (sigma + sigma.T) / 2
        return cls(adjacency, precision, sigma, cov_to_corr(sigma), condition_number(precision),
                   kappa_requested, seed)

    def header(self) -> dict:
        return {
            "p": self.adjacency.p,
            "e": self.adjacency.e,
            "kappa_requested": self.kappa_requested,
            "kappa_achieved": self.kappa,
            "seed": self.seed,
            "diagonal": [float(x) for x in np.diag(self.precision)],
        }

    def save(self, path) -> None:
        """Edge list ``i, j, theta_ij`` with a ``#``-prefixed JSON header line."""
        with open(path, "w") as fh:
            fh.write("# " + json.dumps(self.header()) + "\n")
            fh.write("i\tj\ttheta\n")
            for i, j in self.adjacency.sorted_edges():
                fh.write(f"{i}\t{j}\t{self.precision[i, j]:.17g}\n")

    @classmethod
    def load(cls, path) -> "GraphModel":
        with open(path) as fh:
            first = fh.readline()
            if not first.startswith("#"):
                raise DataError("graph file lacks its JSON header line")
            head = json.loads(first[1:])
            fh.readline()
            rows = [ln.split("\t") for ln in fh if ln.strip()]
        p = int(head["p"])
        theta = np.diag(np.asarray(head["diagonal"], dtype=float))
        edges = []
        for i, j, w in rows:
            i, j = int(i), int(j)
            theta[i, j] = theta[j, i] = float(w)
            edges.append((i, j))
        return cls.from_precision(Adjacency(p, frozenset(edges)), theta, head.get("kappa_requested"), head.get("seed"))

    def write_correlation(self, path) -> None:
        from .compositions import write_matrix_tsv

        ids = [str(i) for i in range(self.adjacency.p)]
        write_matrix_tsv(path, self.correlation, ids, ids)


def sample_edge_weights(a: Adjacency, theta_min: float, theta_max: float, seed) -> np.ndarray:
    """Symmetric matrix of signed edge weights, zero off the support."""
    if not 0 < theta_min < theta_max:
        raise InvalidParameters("need 0 < theta_min < theta_max")
    rng = np.random.default_rng(seed)
    off = np.zeros((a.p, a.p))
    for i, j in a.sorted_edges():
        w = rng.uniform(theta_min, theta_max) * (1 if rng.random() < 0.5 else -1)
        off[i, j] = off[j, i] = w
    return off


def make_precision(a: Adjacency, theta_min: float = 2.0, theta_max: float = 3.0, kappa: float = 100.0,
                   seed=None, rtol: float = 1e-10, max_iter: int = 200) -> GraphModel:
    """Signed edge weights plus a common diagonal chosen by bisection.

    ``cond(W + c I)`` decreases monotonically in ``c`` on ``c > -lambda_min(W)``
    so bisection on ``c`` reaches any requested ``kappa > 1``.
    """
    if a.e == 0:
        raise InvalidParameters("adjacency has no edges")
    if not kappa > 1:
        raise InvalidParameters("kappa must exceed 1")
    off = sample_edge_weights(a, theta_min, theta_max, seed)
    ev = np.linalg.eigvalsh(off)
    lo_ev, hi_ev = ev[0], ev[-1]

    def cond_at(c):
        return (hi_ev + c) / (lo_ev + c)

    # cond -> inf as c -> -lo_ev, cond -> 1 as c -> inf
    lo = -lo_ev + 1e-12 * max(1.0, abs(lo_ev))
    hi = max(1.0, abs(lo_ev)) * 2
    for _ in range(200):
        if cond_at(hi) < kappa:
            break
        hi *= 2
    else:
        raise BracketError("cannot bracket the requested condition number", achievable=(1.0, cond_at(lo)))
    if cond_at(lo) < kappa:
        raise BracketError("requested condition number too large to reach", achievable=(1.0, cond_at(lo)))
    for _ in range(max_iter):
        mid = (lo + hi) / 2
        k = cond_at(mid)
        if abs(k - kappa) <= rtol * kappa:
            break
        if k > kappa:
            lo = mid
        else:
            hi = mid
    theta = off + mid * np.eye(a.p)
    model = GraphModel.from_precision(a, theta, kappa, seed if isinstance(seed, (int, np.integer)) else None)
    if abs(model.kappa - kappa) > 0.01 * kappa:
        raise BracketError(f"achieved condition {model.kappa:.4g} misses target {kappa:.4g}",
                           achievable=(1.0, cond_at(lo)))
    return model
