"""Lasso regression and neighborhood selection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from . import _kernels
from .network import InferredNetwork
from .path import LambdaPath, gram

KKT_TOL = 1e-9
MAX_SWEEPS = 100_000


def lasso_objective(X, y, beta, lam) -> float:
    n = X.shape[0]
    resid = y - X @ beta
    return float(resid @ resid / n + lam * np.abs(beta).sum())


def lasso_solve(X, y, lam: float, warm_start=None, tol: float = KKT_TOL, max_sweeps: int = MAX_SWEEPS) -> np.ndarray:
    """Minimize ``(1/n)||y - X b||^2 + lam * ||b||_1`` by coordinate descent.

    ``X`` and ``y`` are expected to be centered. Iterates until the largest
    KKT violation falls below ``tol``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise DataError("X must be n x k and y an n-vector")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y)) and np.isfinite(lam)):
        raise DataError("non-finite input to lasso")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    n = X.shape[0]
    G = X.T @ X / n
    c = X.T @ y / n
    beta = np.zeros(X.shape[1]) if warm_start is None else np.array(warm_start, dtype=float)
    _kernels.lasso_gram(G, c, float(lam), beta, -1, tol, max_sweeps)
    return beta


def kkt_residual(X, y, beta, lam) -> float:
    """Largest violation of the lasso optimality conditions at ``beta``."""
    n = X.shape[0]
    g = -2.0 * X.T @ (y - X @ beta) / n
    viol = np.where(beta > 0, np.abs(g + lam), np.where(beta < 0, np.abs(g - lam), np.maximum(np.abs(g) - lam, 0)))
    return float(viol.max()) if viol.size else 0.0


@dataclass(frozen=True)
class NeighborhoodSet:
    """Per-node lasso coefficients along a penalty path.

    ``coef[k, i, j]`` is the coefficient of node j when regressing node i on
    all others at ``lambdas[k]``; ``coef[k, i, i]`` is always zero.
    """

    coef: np.ndarray
    lambdas: np.ndarray

    def at(self, k: int) -> np.ndarray:
        return self.coef[k]

    def support(self, k: int) -> np.ndarray:
        return self.coef[k] != 0


def mb_fit(z, path: LambdaPath | None = None, *, count: int = 30, ratio: float = 0.01,
           gram_matrix=None, tol: float = KKT_TOL) -> NeighborhoodSet:
    """Solve the p neighborhood regressions along a descending penalty path.

    Columns are centered and scaled to unit variance, so every regression
    works on the correlation Gram matrix. Warm starts follow the path.
    """
    S = gram(z) if gram_matrix is None else np.asarray(gram_matrix, dtype=float)
    if path is None:
        from .path import lambda_path

        path = lambda_path(S, "mb", count, ratio)
    lambdas = np.asarray(path.values, dtype=float)
    B, _ = _kernels.mb_path(np.ascontiguousarray(S), lambdas, tol, MAX_SWEEPS)
    return NeighborhoodSet(B, lambdas)


def mb_support(B: np.ndarray, rule: str = "union") -> np.ndarray:
    nz = B != 0
    if rule == "union":
        adj = nz | nz.T
    elif rule == "intersection":
        adj = nz & nz.T
    else:
        raise ValueError(f"unknown rule {rule!r}")
    np.fill_diagonal(adj, False)
    return adj


def mb_graph(coef: np.ndarray, rule: str = "union", stability=None) -> InferredNetwork:
    """Combine one penalty level's neighborhoods into an edge set.

    Mutual edges get the mean of the two coefficients; edges found from only
    one side (union rule) keep that single coefficient.
    """
    B = np.asarray(coef, dtype=float)
    adj = mb_support(B, rule)
    weights = {}
    for i, j in zip(*np.nonzero(np.triu(adj, 1))):
        a, b = B[i, j], B[j, i]
        if a != 0 and b != 0:
            w = (a + b) / 2
        else:
            w = a if a != 0 else b
        weights[(int(i), int(j))] = float(w)
    return InferredNetwork.from_weights(B.shape[0], weights, "MB", rule=rule, stability=stability)
