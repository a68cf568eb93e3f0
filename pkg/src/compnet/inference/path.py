from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateInput


@dataclass(frozen=True)
class LambdaPath:
    """Strictly decreasing, log-spaced penalty grid."""

    values: np.ndarray
    lambda_max: float
    ratio: float
    count: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size != self.count or v.size == 0:
            raise ValueError("path values must be a vector of length count")
        if np.any(v <= 0) or np.any(np.diff(v) >= 0):
            raise ValueError("path values must be positive and strictly decreasing")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.count

    @classmethod
    def from_max(cls, lambda_max: float, count: int = 30, ratio: float = 0.01) -> "LambdaPath":
        if not lambda_max > 0:
            raise DegenerateInput("lambda_max is zero: the input has no off-diagonal signal")
        if not 0 < ratio < 1:
            raise ValueError("ratio must lie in (0, 1)")
        if count < 1:
            raise ValueError("count must be positive")
        if count == 1:
            values = np.array([lambda_max])
        else:
            values = np.exp(np.linspace(np.log(lambda_max), np.log(lambda_max * ratio), count))
            values[0] = lambda_max
        return cls(values, float(lambda_max), float(ratio), int(count))


def standardize(z) -> np.ndarray:
    """Center columns and scale them to unit variance (divisor n)."""
    from ..errors import ConstantColumn

    v = np.asarray(getattr(z, "values", z), dtype=float)
    v = v - v.mean(axis=0)
    sd = np.sqrt((v * v).mean(axis=0))
    scale = max(1.0, float(np.abs(v).max()) if v.size else 1.0)
    if np.any(sd <= 1e-12 * scale):
        raise ConstantColumn(f"constant column(s) {np.flatnonzero(sd <= 1e-12 * scale).tolist()}")
    return v / sd


def gram(z) -> np.ndarray:
    """``X'X / n`` of the standardized data, i.e. the (1/n) correlation matrix."""
    x = standardize(z)
    g = x.T @ x / x.shape[0]
    g = (g + g.T) / 2
    np.fill_diagonal(g, 1.0)
    return g


def lambda_max_mb(S: np.ndarray) -> float:
    """Smallest penalty at which every neighborhood regression is empty."""
    off = np.abs(S - np.diag(np.diag(S)))
    return float(2.0 * off.max())


def lambda_max_glasso(S: np.ndarray) -> float:
    off = np.abs(S - np.diag(np.diag(S)))
    return float(off.max())


def lambda_path(S, method: str, count: int = 30, ratio: float = 0.01) -> LambdaPath:
    """Penalty grid from the empty graph (head) down to ``ratio * lambda_max``.

    ``S`` is the covariance/correlation matrix the solver will see: for
    ``mb`` the Gram matrix of the standardized data, for ``glasso`` the
    matrix passed to :func:`glasso_solve`.
    """
    S = np.asarray(getattr(S, "matrix", S), dtype=float)
    if method == "mb":
        lmax = lambda_max_mb(S)
    elif method == "glasso":
        lmax = lambda_max_glasso(S)
    else:
        raise ValueError(f"unknown method {method!r}")
    return LambdaPath.from_max(lmax, count, ratio)
