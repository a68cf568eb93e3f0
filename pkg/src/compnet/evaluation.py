"""Scoring inferred networks against a known graph.

Ranked predictions are scored with precision-recall curves. Graph shape is
compared through normalized histograms of four topology statistics and the
KL divergence between them.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DegenerateInput, DimensionMismatch, InvalidParameters
from .topology import Adjacency

KL_EPS = 1e-6
BETWEENNESS_BINS = 20
STATISTICS = ("degree", "betweenness", "geodesic", "component_size")


@dataclass(frozen=True)
class PRCurve:
    """Precision-recall points over ranked prefixes, recall nondecreasing.

    ``aupr`` is the trapezoidal area under the points after prepending
    ``(0, precision of the first point)``.
    """

    points: tuple
    aupr: float

    @property
    def recall(self) -> np.ndarray:
        return np.array([r for r, _ in self.points])

    @property
    def precision(self) -> np.ndarray:
        return np.array([q for _, q in self.points])


def _pair(i, j):
    i, j = int(i), int(j)
    return (i, j) if i < j else (j, i)


def _ranked_pairs(ranked):
    """Normalize a ranking into ``(pairs, scores)``; scores may be None."""
    pairs, scores = [], []
    for item in ranked:
        pairs.append(_pair(item[0], item[1]))
        scores.append(tuple(item[2:]) if len(item) > 2 else None)
    if len(set(pairs)) != len(pairs):
        raise DataError("ranked edge list contains a pair twice")
    if any(s is None for s in scores):
        scores = None
    return pairs, scores


def tie_blocks(scores) -> list[tuple[int, int]]:
    """Half-open index ranges of consecutive equal score keys."""
    blocks, start = [], 0
    for k in range(1, len(scores) + 1):
        if k == len(scores) or scores[k] != scores[start]:
            blocks.append((start, k))
            start = k
    return blocks


def precision_recall(ranked, truth: Adjacency) -> PRCurve:
    """P-R curve over ranked prefixes with tied blocks averaged.

    ``ranked`` holds ``(i, j)`` pairs or ``(i, j, score...)`` tuples in rank
    order. Consecutive entries with equal score keys form a tied block; a
    block's true positives are spread evenly over its positions, which is
    the expected curve over all orderings inside the block.
    """
    if truth.e == 0:
        raise DegenerateInput("truth has no edges")
    pairs, scores = _ranked_pairs(ranked)
    hit = np.array([p in truth.edges for p in pairs], dtype=float)
    if scores is not None:
        for a, b in tie_blocks(scores):
            hit[a:b] = hit[a:b].mean()
    tp = np.cumsum(hit)
    k = np.arange(1, len(pairs) + 1)
    prec = tp / k
    rec = tp / truth.e
    if len(pairs) == 0:
        return PRCurve((), 0.0)
    r = np.concatenate([[0.0], rec])
    q = np.concatenate([[prec[0]], prec])
    aupr = float(np.sum((r[1:] - r[:-1]) * (q[1:] + q[:-1]) / 2))
    return PRCurve(tuple(zip(rec.tolist(), prec.tolist())), min(max(aupr, 0.0), 1.0))


def hamming(a: Adjacency, b: Adjacency) -> int:
    if a.p != b.p:
        raise DimensionMismatch(f"p={a.p} versus p={b.p}")
    return len(a.edges ^ b.edges)


@dataclass(frozen=True)
class TopologyHistogram:
    """Normalized histogram of one topology statistic.

    Integer statistics use one bin per value ``0..len(masses)-1`` and
    ``bins`` lists those values. Betweenness uses real cell edges in
    ``bins`` (one more than masses). For geodesics ``infinite_mass`` is the
    share of disconnected pairs and the finite masses sum to the rest.
    """

    statistic: str
    bins: tuple
    masses: tuple
    infinite_mass: float = 0.0
    values: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.statistic not in STATISTICS:
            raise InvalidParameters(f"unknown statistic {self.statistic!r}")
        m = np.asarray(self.masses, dtype=float)
        if np.any(m < 0):
            raise InvalidParameters("negative histogram mass")
        total = m.sum() + self.infinite_mass
        if m.size + self.infinite_mass and abs(total - 1.0) > 1e-12:
            raise InvalidParameters(f"histogram masses sum to {total!r}")

    def mass_vector(self) -> np.ndarray:
        m = np.asarray(self.masses, dtype=float)
        if self.statistic == "geodesic":
            m = np.append(m, self.infinite_mass)
        return m

    def mean(self) -> float:
        if self.statistic == "betweenness":
            raise InvalidParameters("binned real statistic has no exact mean")
        m = np.asarray(self.masses, dtype=float)
        return float(np.dot(np.asarray(self.bins, dtype=float), m) / m.sum())

    def to_rows(self) -> list[tuple]:
        """``(bin_label, mass)`` rows for plotting."""
        if self.statistic == "betweenness":
            rows = [(f"[{lo:.2f},{hi:.2f})", float(m)) for lo, hi, m in zip(self.bins[:-1], self.bins[1:], self.masses)]
        else:
            rows = [(str(b), float(m)) for b, m in zip(self.bins, self.masses)]
        if self.statistic == "geodesic":
            rows.append(("inf", float(self.infinite_mass)))
        return rows


def _integer_histogram(statistic, values, total=None, infinite=0):
    values = np.asarray(values, dtype=np.int64)
    total = values.size + infinite if total is None else total
    counts = np.bincount(values, minlength=1) if values.size else np.zeros(1, dtype=np.int64)
    masses = (counts / total).tolist() if total else [1.0]
    inf_mass = infinite / total if total else 0.0
    return TopologyHistogram(statistic, tuple(range(len(masses))), tuple(masses), inf_mass, tuple(values.tolist()))


def degree_distribution(a: Adjacency) -> TopologyHistogram:
    return _integer_histogram("degree", a.degrees())


def _neighbors(a: Adjacency) -> list[list[int]]:
    nb = [[] for _ in range(a.p)]
    for i, j in sorted(a.edges):
        nb[i].append(j)
        nb[j].append(i)
    return nb


def betweenness_centrality(a: Adjacency) -> np.ndarray:
    """Unweighted betweenness by Brandes accumulation, scaled to [0, 1].

    Each unordered pair is counted once and the result is divided by the
    number of pairs not containing the node, ``(p-1)(p-2)/2``.
    """
    p = a.p
    nb = _neighbors(a)
    cb = np.zeros(p)
    for s in range(p):
        stack = []
        pred = [[] for _ in range(p)]
        sigma = np.zeros(p)
        sigma[s] = 1.0
        dist = np.full(p, -1)
        dist[s] = 0
        q = deque([s])
        while q:
            v = q.popleft()
            stack.append(v)
            for w in nb[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    q.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    pred[w].append(v)
        delta = np.zeros(p)
        while stack:
            w = stack.pop()
            for v in pred[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                cb[w] += delta[w]
    cb /= 2.0  # each pair was seen from both endpoints
    pairs = (p - 1) * (p - 2) / 2
    return cb / pairs if pairs > 0 else cb


def betweenness_distribution(a: Adjacency, bins: int = BETWEENNESS_BINS) -> TopologyHistogram:
    """Betweenness values in ``bins`` equal cells on [0, 1]; 1.0 falls in the last cell."""
    b = betweenness_centrality(a)
    edges = np.linspace(0.0, 1.0, bins + 1)
    cell = np.minimum((np.clip(b, 0.0, 1.0) * bins).astype(int), bins - 1)
    masses = np.bincount(cell, minlength=bins) / a.p
    return TopologyHistogram("betweenness", tuple(edges.tolist()), tuple(masses.tolist()), 0.0, tuple(b.tolist()))


def shortest_path_lengths(a: Adjacency) -> np.ndarray:
    """All-pairs hop distances by BFS from every node; -1 marks unreachable."""
    nb = _neighbors(a)
    d = np.full((a.p, a.p), -1, dtype=np.int64)
    for s in range(a.p):
        d[s, s] = 0
        q = deque([s])
        while q:
            v = q.popleft()
            for w in nb[v]:
                if d[s, w] < 0:
                    d[s, w] = d[s, v] + 1
                    q.append(w)
    return d


def geodesic_distribution(a: Adjacency) -> TopologyHistogram:
    """Distances over all unordered pairs; unreachable pairs go to ``infinite_mass``.

    Bin 0 is always empty and kept only so bins index distances directly.
    """
    d = shortest_path_lengths(a)[np.triu_indices(a.p, 1)]
    finite = d[d >= 0]
    return _integer_histogram("geodesic", finite, total=d.size, infinite=int((d < 0).sum()))


def connected_components(a: Adjacency) -> list[list[int]]:
    nb = _neighbors(a)
    seen = np.zeros(a.p, dtype=bool)
    comps = []
    for s in range(a.p):
        if seen[s]:
            continue
        seen[s] = True
        comp, q = [s], deque([s])
        while q:
            v = q.popleft()
            for w in nb[v]:
                if not seen[w]:
                    seen[w] = True
                    comp.append(w)
                    q.append(w)
        comps.append(sorted(comp))
    return comps


def component_sizes(a: Adjacency) -> TopologyHistogram:
    """Histogram over components (not nodes) of component size."""
    return _integer_histogram("component_size", [len(c) for c in connected_components(a)])


def topology_histograms(a: Adjacency) -> dict[str, TopologyHistogram]:
    return {
        "degree": degree_distribution(a),
        "betweenness": betweenness_distribution(a),
        "geodesic": geodesic_distribution(a),
        "component_size": component_sizes(a),
    }


def _aligned(h: TopologyHistogram, length: int) -> np.ndarray:
    m = np.asarray(h.masses, dtype=float)
    m = np.concatenate([m, np.zeros(length - m.size)])
    if h.statistic == "geodesic":
        m = np.append(m, h.infinite_mass)
    return m


def kl_divergence(predicted: TopologyHistogram, truth: TopologyHistogram, eps: float = KL_EPS) -> float:
    """``D_KL(truth || predicted)`` after adding ``eps`` to every bin and renormalizing.

    Integer histograms are padded with empty bins to a common support; real
    binnings must match exactly.
    """
    if predicted.statistic != truth.statistic:
        raise DimensionMismatch(f"{predicted.statistic} versus {truth.statistic}")
    if truth.statistic == "betweenness":
        if not np.array_equal(predicted.bins, truth.bins):
            raise DimensionMismatch("betweenness histograms use different bins")
        length = len(truth.masses)
    else:
        length = max(len(predicted.masses), len(truth.masses))
    q = _aligned(predicted, length) + eps
    t = _aligned(truth, length) + eps
    q /= q.sum()
    t /= t.sum()
    return float(max(np.sum(t * np.log(t / q)), 0.0))


def topology_kl(predicted: Adjacency, truth: Adjacency) -> dict[str, float]:
    hp, ht = topology_histograms(predicted), topology_histograms(truth)
    return {s: kl_divergence(hp[s], ht[s]) for s in STATISTICS}


def assortativity(a: Adjacency, labels) -> float:
    """Newman's categorical assortativity from the symmetric label mixing matrix.

    Returns NaN when every edge end carries the same label (the coefficient
    is 0/0 there).
    """
    labels = list(labels)
    if len(labels) != a.p:
        raise DimensionMismatch(f"{len(labels)} labels for {a.p} nodes")
    if a.e == 0:
        raise DegenerateInput("assortativity needs at least one edge")
    cats = {c: k for k, c in enumerate(sorted(set(map(str, labels))))}
    lab = [cats[str(c)] for c in labels]
    E = np.zeros((len(cats), len(cats)))
    for i, j in a.edges:
        E[lab[i], lab[j]] += 1
        E[lab[j], lab[i]] += 1
    E /= E.sum()
    s = E.sum(axis=1)
    ab = float(s @ s)
    if abs(1.0 - ab) < 1e-15:
        return float("nan")
    return float((np.trace(E) - ab) / (1.0 - ab))


def top_k_network(ranked, k: int, p: int) -> Adjacency:
    pairs, _ = _ranked_pairs(ranked)
    if k < 0 or k > len(pairs):
        raise InvalidParameters(f"k={k} with {len(pairs)} ranked pairs")
    return Adjacency(p, frozenset(pairs[:k]))


def metrics_report(ranked, truth: Adjacency, predicted: Adjacency | None = None, labels=None,
                   top_k: int | None = None) -> dict:
    """JSON-ready report: AUPR, P-R points, Hamming, histograms and KL.

    ``predicted`` defaults to the top ``top_k`` (default ``truth.e``) ranked
    pairs, so topology comparisons are made at the true edge count.
    """
    pr = precision_recall(ranked, truth)
    if predicted is None:
        predicted = top_k_network(ranked, truth.e if top_k is None else top_k, truth.p)
    hp, ht = topology_histograms(predicted), topology_histograms(truth)
    report = {
        "aupr": pr.aupr,
        "pr_points": [list(x) for x in pr.points],
        "hamming": hamming(predicted, truth),
        "predicted_edges": predicted.e,
        "histograms": {
            s: {"predicted": hp[s].to_rows(), "truth": ht[s].to_rows()} for s in STATISTICS
        },
        "kl": {s: kl_divergence(hp[s], ht[s]) for s in STATISTICS},
        "assortativity": None,
    }
    if labels is not None:
        try:
            v = assortativity(predicted, labels)
            report["assortativity"] = None if np.isnan(v) else v
        except DegenerateInput:
            pass
    return report
