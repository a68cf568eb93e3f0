"""Stability-based penalty selection (StARS) and edge ranking.

Each subsample (drawn without replacement, ``floor(fraction * n)`` rows) is
fit along the whole penalty path. For every node pair the incidence
frequency ``theta_e(lam)`` across subsamples gives a per-edge instability
``2 theta (1 - theta)``; the total instability ``D(lam)`` averages it over
all ``p (p - 1) / 2`` pairs. ``D`` is made monotone along the decreasing
path (running maximum) and the smallest penalty whose monotone instability
stays at or below ``beta`` is selected, i.e. the densest graph that is still
stable.

With ``early_stop=True`` penalties are processed level by level across all
subsamples and the sweep halts right after the first level whose
instability exceeds ``beta``; past that point the monotone curve can never
return below the bound, so the selection is unchanged while the expensive
dense end of the path is skipped.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..compositions import empirical_covariance
from ..errors import DataError
from . import _kernels
from .glasso import GlassoConvergenceWarning, _State, _solve, glasso_solve
from .lasso import KKT_TOL, MAX_SWEEPS, mb_graph, mb_support
from .network import InferredNetwork
from .path import LambdaPath, gram, lambda_path, standardize

STARS_TOL = 1e-7  # KKT tolerance for subsample lasso fits
STARS_GLASSO_TOL = 1e-4  # relative change tolerance for subsample glasso fits


@dataclass(frozen=True)
class StabilityResult:
    """Edge incidence frequencies along the (computed part of the) path.

    ``edge_frequency[k, m]`` is the frequency of pair ``pairs[m]`` at
    ``lambdas[k]``. ``index_selected`` points into ``lambdas``.
    """

    p: int
    lambdas: np.ndarray
    edge_frequency: np.ndarray
    instability: np.ndarray
    index_selected: int
    subsamples: int
    subsample_fraction: float
    beta: float
    method: str
    bound_met: bool = True
    path: LambdaPath | None = None
    meta: dict = field(default_factory=dict)

    @property
    def lambda_selected(self) -> float:
        return float(self.lambdas[self.index_selected])

    @property
    def pairs(self) -> np.ndarray:
        iu = np.triu_indices(self.p, 1)
        return np.column_stack(iu)

    def frequency_matrix(self, k: int | None = None) -> np.ndarray:
        k = self.index_selected if k is None else k
        m = np.zeros((self.p, self.p))
        iu = np.triu_indices(self.p, 1)
        m[iu] = self.edge_frequency[k]
        return m + m.T

    def monotone_instability(self) -> np.ndarray:
        return np.maximum.accumulate(self.instability)


def edge_instability(freq) -> np.ndarray:
    freq = np.asarray(freq, dtype=float)
    return 2.0 * freq * (1.0 - freq)


def select_index(instability, beta: float) -> tuple[int, bool]:
    """Last path index whose running-max instability is within ``beta``."""
    mono = np.maximum.accumulate(np.asarray(instability, dtype=float))
    ok = np.flatnonzero(mono <= beta)
    if ok.size == 0:
        return len(mono) - 1, False
    return int(ok[-1]), True


def _subsample_indices(n, size, subsamples, seed):
    children = np.random.SeedSequence(seed).spawn(subsamples)
    return [np.sort(np.random.default_rng(c).choice(n, size=size, replace=False)) for c in children]


class _MBFitter:
    def __init__(self, x, rule, tol):
        self.S = np.ascontiguousarray(gram(x))
        self.B = np.zeros_like(self.S)
        self.rule = rule
        self.tol = tol

    def step(self, lam):
        _kernels.mb_step(self.S, float(lam), self.B, self.tol, MAX_SWEEPS)
        return mb_support(self.B, self.rule)


class _GlassoFitter:
    def __init__(self, x, kind, penalize_diagonal, tol):
        self.S = np.asarray(empirical_covariance(x, kind).matrix)
        self.state = _State(self.S, penalize_diagonal)
        self.penalize_diagonal = penalize_diagonal
        self.tol = tol

    def step(self, lam):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", GlassoConvergenceWarning)
            theta, *_ = _solve(self.S, float(lam), self.state, self.penalize_diagonal, self.tol, 500)
        a = theta != 0
        np.fill_diagonal(a, False)
        return a


def solver_matrix(z, method: str, kind: str = "correlation") -> np.ndarray:
    """The matrix the chosen solver sees for the full data set."""
    if method == "mb":
        return gram(z)
    if method == "glasso":
        return np.asarray(empirical_covariance(standardize(z) if kind == "correlation" else z, kind).matrix)
    raise ValueError(f"unknown method {method!r}")


def stars_path(x, method: str, subsample_indices, count: int = 30, ratio: float = 0.01,
               kind: str = "correlation") -> LambdaPath:
    """Penalty grid whose head gives the empty graph on every subsample.

    The head is the largest ``lambda_max`` over the full data and all
    subsamples, so edge frequencies at the head are zero by construction.
    """
    heads = [lambda_path(solver_matrix(x, method, kind), method, 1, ratio).lambda_max]
    for ix in subsample_indices:
        heads.append(lambda_path(solver_matrix(x[ix], method, kind), method, 1, ratio).lambda_max)
    return LambdaPath.from_max(max(heads), count, ratio)


def stars_select(z, method: str = "mb", path: LambdaPath | None = None, subsamples: int = 50,
                 fraction: float = 0.8, beta: float = 0.05, seed: int = 0, *, count: int = 30,
                 ratio: float = 0.01, rule: str = "union", kind: str = "correlation",
                 penalize_diagonal: bool = True, subsample_indices=None, early_stop: bool = True,
                 tol: float | None = None) -> StabilityResult:
    """Run StARS for neighborhood selection (``mb``) or graphical lasso (``glasso``).

    Parameters
    ----------
    z : array or ClrMatrix
        Samples in rows.
    path : LambdaPath, optional
        Defaults to :func:`stars_path`.
    subsample_indices : list of index arrays, optional
        Explicit subsamples; overrides ``subsamples``/``fraction``/``seed``.
    early_stop : bool
        Stop the path one level after the instability bound is crossed. The
        selection is identical to the full sweep; only the levels past the
        crossing are left uncomputed.
    tol : float, optional
        Solver tolerance for the subsample fits (KKT residual for ``mb``,
        relative Theta change for ``glasso``).
    """
    x = np.asarray(getattr(z, "values", z), dtype=float)
    n, p = x.shape
    if method not in ("mb", "glasso"):
        raise ValueError(f"unknown method {method!r}")
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    standardize(x)  # constant columns are a hard error before any fitting
    if subsample_indices is None:
        size = int(np.floor(fraction * n))
        if size < 10:
            raise DataError(f"subsample size {size} is below 10")
        subsample_indices = _subsample_indices(n, size, subsamples, seed)
    else:
        subsample_indices = [np.asarray(ix) for ix in subsample_indices]
        fraction = len(subsample_indices[0]) / n
    if path is None:
        path = stars_path(x, method, subsample_indices, count, ratio, kind)
    nsub = len(subsample_indices)
    if tol is None:
        tol = STARS_TOL if method == "mb" else STARS_GLASSO_TOL

    def fitter(ix):
        xs = x[ix]
        if method == "mb":
            return _MBFitter(xs, rule, tol)
        return _GlassoFitter(standardize(xs) if kind == "correlation" else xs, kind, penalize_diagonal, tol)

    lams = np.asarray(path.values)
    iu = np.triu_indices(p, 1)
    counts = np.zeros((len(lams), iu[0].size))
    computed = len(lams)
    if early_stop:
        fits = [fitter(ix) for ix in subsample_indices]
        for k, lam in enumerate(lams):
            for f in fits:
                counts[k] += f.step(lam)[iu]
            freq_k = counts[k] / nsub
            if edge_instability(freq_k).mean() > beta:
                computed = k + 1
                break
    else:
        for ix in subsample_indices:
            f = fitter(ix)
            for k, lam in enumerate(lams):
                counts[k] += f.step(lam)[iu]
    freq = counts[:computed] / nsub
    inst = edge_instability(freq).mean(axis=1)
    idx, ok = select_index(inst, beta)
    if not ok:
        warnings.warn("no penalty meets the StARS instability bound; returning the path minimum",
                      RuntimeWarning, stacklevel=2)
    return StabilityResult(p, lams[:computed].copy(), freq, inst, idx, nsub, float(fraction), float(beta),
                           method, ok, path, {"rule": rule, "kind": kind, "early_stop": early_stop, "tol": tol})


def rank_edges(sr: StabilityResult) -> list[tuple]:
    """All node pairs ordered by stability at the selected penalty.

    Ties are broken by frequency summed over the computed path, then by
    lexicographic pair order. Each entry is ``(i, j, stability, path_sum)``;
    entries with equal ``(stability, path_sum)`` are genuinely tied.
    """
    iu = np.triu_indices(sr.p, 1)
    sel = sr.edge_frequency[sr.index_selected]
    total = sr.edge_frequency.sum(axis=0)
    order = np.lexsort((iu[1], iu[0], -total, -sel))
    return [(int(iu[0][m]), int(iu[1][m]), float(sel[m]), float(total[m])) for m in order]


def selected_network(z, sr: StabilityResult, *, rule: str | None = None, kind: str | None = None,
                     penalize_diagonal: bool = True) -> InferredNetwork:
    """Refit on the full data at the selected penalty and attach stabilities."""
    x = np.asarray(getattr(z, "values", z), dtype=float)
    lam = sr.lambda_selected
    stab = sr.frequency_matrix()
    meta = {"lambda": lam, "index": sr.index_selected}
    if sr.method == "mb":
        rule = rule or sr.meta.get("rule", "union")
        S = np.ascontiguousarray(gram(x))
        B = np.zeros_like(S)
        for l in sr.path.values[: sr.index_selected + 1] if sr.path is not None else [lam]:
            _kernels.mb_step(S, float(l), B, KKT_TOL, MAX_SWEEPS)
        net = mb_graph(B, rule, stability=stab)
        return InferredNetwork(net.p, net.edges, "MB", rule, meta)
    kind = kind or sr.meta.get("kind", "correlation")
    S = solver_matrix(x, "glasso", kind)
    est = glasso_solve(S, lam, penalize_diagonal=penalize_diagonal)
    weights = {(int(i), int(j)): float(est.theta_hat[i, j]) for i, j in zip(*np.nonzero(np.triu(est.support(), 1)))}
    meta["theta"] = est.theta_hat
    return InferredNetwork.from_weights(sr.p, weights, "Glasso", stability=stab, meta=meta)
