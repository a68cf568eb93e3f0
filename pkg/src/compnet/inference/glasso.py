"""Sparse inverse covariance selection (graphical lasso).

Solves

    min_{Theta > 0}  -log det Theta + tr(Theta S) + lam * sum_ij |Theta_ij|

by block coordinate descent over columns, each block a lasso in Gram form.
By default the diagonal is penalized along with the off-diagonal entries;
``penalize_diagonal=False`` exempts it.

The problem decouples over the connected components of the thresholded
graph ``|S_ij| > lam`` (i != j), so each component is solved separately and
isolated nodes get ``Theta_ii = 1 / (S_ii + lam)`` in closed form.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from ..errors import DataError, NotPositiveDefinite
from . import _kernels
from .path import LambdaPath

TOL = 1e-6
MAX_SWEEPS = 500
INNER_TOL = 1e-10
INNER_MAX = 10_000


class GlassoConvergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class PrecisionEstimate:
    theta_hat: np.ndarray
    objective: float
    lam: float
    converged: bool = True
    residual: float = 0.0
    sweeps: int = 0

    def support(self) -> np.ndarray:
        a = self.theta_hat != 0
        np.fill_diagonal(a, False)
        return a


def glasso_objective(theta, S, lam, penalize_diagonal: bool = True) -> float:
    theta = np.asarray(theta, dtype=float)
    sign, logdet = np.linalg.slogdet(theta)
    if sign <= 0:
        return np.inf
    pen = np.abs(theta).sum()
    if not penalize_diagonal:
        pen -= np.abs(np.diag(theta)).sum()
    return float(-logdet + np.sum(theta * S) + lam * pen)


class _State:
    """Warm-start state (W, B) carried along a penalty path."""

    def __init__(self, S, penalize_diagonal):
        p = S.shape[0]
        self.W = np.array(S, dtype=float)
        self.B = np.zeros((p, p))
        self.penalize_diagonal = penalize_diagonal

    @classmethod
    def from_theta(cls, S, theta, penalize_diagonal):
        st = cls(S, penalize_diagonal)
        st.W = np.linalg.inv(theta)
        st.W = (st.W + st.W.T) / 2
        st.B = -theta / np.diag(theta)[None, :]
        np.fill_diagonal(st.B, 0.0)
        return st


def _solve(S, lam, state, penalize_diagonal, tol, max_sweeps):
    p = S.shape[0]
    shift = lam if penalize_diagonal else 0.0
    theta = np.zeros((p, p))
    off = np.abs(S) > lam
    np.fill_diagonal(off, False)
    ncomp, labels = connected_components(csr_matrix(off), directed=False)
    worst_change, total_sweeps, converged = 0.0, 0, True
    W, B = state.W, state.B
    for comp in range(ncomp):
        idx = np.flatnonzero(labels == comp)
        if idx.size == 1:
            i = idx[0]
            d = S[i, i] + shift
            if d <= 0:
                raise NotPositiveDefinite(f"zero variance at node {i} with unpenalized diagonal")
            theta[i, i] = 1.0 / d
            W[i, :] = 0.0
            W[:, i] = 0.0
            W[i, i] = d
            B[i, :] = 0.0
            B[:, i] = 0.0
            continue
        ix = np.ix_(idx, idx)
        Sb = np.ascontiguousarray(S[ix])
        Wb = np.ascontiguousarray(W[ix])
        Bb = np.ascontiguousarray(B[ix])
        tb, sweeps, change = _kernels.glasso_block(
            Sb, float(lam), Wb, Bb, penalize_diagonal, tol, max_sweeps, INNER_TOL, INNER_MAX
        )
        total_sweeps = max(total_sweeps, sweeps)
        off_mean = np.abs(Sb - np.diag(np.diag(Sb))).sum() / max(1, idx.size * (idx.size - 1))
        if not change < tol * off_mean:
            converged = False
            worst_change = max(worst_change, change)
        theta[ix] = tb
        # zero cross-block entries of the warm start
        mask = np.zeros(p, dtype=bool)
        mask[idx] = True
        W[np.ix_(idx, ~mask)] = 0.0
        W[np.ix_(~mask, idx)] = 0.0
        B[np.ix_(idx, ~mask)] = 0.0
        B[np.ix_(~mask, idx)] = 0.0
        W[ix] = Wb
        B[ix] = Bb
    return theta, converged, worst_change, total_sweeps


def _check_input(S, lam):
    S = np.asarray(getattr(S, "matrix", S), dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DataError("S must be square")
    if not np.allclose(S, S.T, atol=1e-10):
        raise DataError("S must be symmetric")
    if not np.all(np.isfinite(S)):
        raise DataError("S contains non-finite entries")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    return (S + S.T) / 2


def glasso_solve(S, lam: float, warm_start=None, *, penalize_diagonal: bool = True,
                 tol: float = TOL, max_sweeps: int = MAX_SWEEPS) -> PrecisionEstimate:
    """Penalized maximum-likelihood precision matrix for one penalty.

    Convergence is declared when the mean absolute change of Theta between
    sweeps drops below ``tol`` times the mean absolute off-diagonal entry of
    ``S``. Non-convergence is reported through ``converged``/``residual``
    and a :class:`GlassoConvergenceWarning`.
    """
    S = _check_input(S, lam)
    if warm_start is None:
        state = _State(S, penalize_diagonal)
    else:
        state = _State.from_theta(S, np.asarray(warm_start, dtype=float), penalize_diagonal)
    return _finish(S, lam, state, penalize_diagonal, tol, max_sweeps)


def _finish(S, lam, state, penalize_diagonal, tol, max_sweeps):
    theta, converged, resid, sweeps = _solve(S, lam, state, penalize_diagonal, tol, max_sweeps)
    if not converged:
        warnings.warn(
            f"glasso did not converge at lambda={lam:.4g} after {max_sweeps} sweeps (change {resid:.3g})",
            GlassoConvergenceWarning,
            stacklevel=3,
        )
    obj = glasso_objective(theta, S, lam, penalize_diagonal)
    return PrecisionEstimate(theta, obj, float(lam), converged, float(resid), int(sweeps))


def glasso_path(S, path: LambdaPath, *, penalize_diagonal: bool = True, tol: float = TOL,
                max_sweeps: int = MAX_SWEEPS) -> list[PrecisionEstimate]:
    """Solve along a descending path, warm-starting each penalty from the last."""
    lams = np.asarray(getattr(path, "values", path), dtype=float)
    S = _check_input(S, float(lams.min()))
    state = _State(S, penalize_diagonal)
    return [_finish(S, lam, state, penalize_diagonal, tol, max_sweeps) for lam in lams]


def glasso_supports(S, lambdas, *, penalize_diagonal: bool = True, tol: float = TOL,
                    max_sweeps: int = MAX_SWEEPS) -> np.ndarray:
    """Boolean off-diagonal supports along a path, shape (len(lambdas), p, p)."""
    S = _check_input(S, float(np.min(lambdas)))
    state = _State(S, penalize_diagonal)
    out = np.zeros((len(lambdas), S.shape[0], S.shape[0]), dtype=bool)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GlassoConvergenceWarning)
        for k, lam in enumerate(lambdas):
            theta, *_ = _solve(S, float(lam), state, penalize_diagonal, tol, max_sweeps)
            a = theta != 0
            np.fill_diagonal(a, False)
            out[k] = a
    return out
