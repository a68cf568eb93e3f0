"""Parametric count distributions for OTU marginals.

Five families are supported:

========== =================== =========================================
family     parameters          mass at u
========== =================== =========================================
LogNormal  mu, sigma           continuous log-normal mass of the rounding
                               cell [u - 1/2, u + 1/2) (cell [0, 1/2) at 0)
Poisson    lambda              lambda^u e^-lambda / u!
ZiPoisson  phi, lambda         phi [u == 0] + (1 - phi) Poisson(u)
NegBinom   r, p                Gamma(r+u) / (u! Gamma(r)) p^u (1-p)^r
ZiNegBinom phi, r, p           phi [u == 0] + (1 - phi) NegBinom(u)
========== =================== =========================================

The negative binomial mean is ``r p / (1 - p)``. Zero-inflated masses at zero
are ``phi + (1 - phi) P_base(0)``, i.e. ``phi + (1 - phi)(1 - p)^r`` for the
negative binomial.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize, special

from .errors import DegenerateInput, InvalidParameters

FAMILIES = ("LogNormal", "Poisson", "ZiPoisson", "NegBinom", "ZiNegBinom")

PARAM_NAMES = {
    "LogNormal": ("mu", "sigma"),
    "Poisson": ("lambda",),
    "ZiPoisson": ("phi", "lambda"),
    "NegBinom": ("r", "p"),
    "ZiNegBinom": ("phi", "r", "p"),
}

# optimizer box constraints
_EPS = 1e-6
_UPPER = 1e6


@dataclass(frozen=True)
class MarginalModel:
    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidParameters(f"unknown family {self.family!r}")
        names = PARAM_NAMES[self.family]
        if set(self.params) != set(names):
            raise InvalidParameters(f"{self.family} needs parameters {names}, got {tuple(self.params)}")
        params = {k: float(self.params[k]) for k in names}
        _check_params(self.family, params)
        object.__setattr__(self, "params", params)

    @property
    def zero_inflation(self) -> float:
        return self.params.get("phi", 0.0)

    def base(self) -> "MarginalModel":
        """The non-inflated component of a zero-inflated model."""
        if self.family == "ZiPoisson":
            return MarginalModel("Poisson", {"lambda": self.params["lambda"]})
        if self.family == "ZiNegBinom":
            return MarginalModel("NegBinom", {"r": self.params["r"], "p": self.params["p"]})
        return self

    def mean(self) -> float:
        pr = self.params
        if self.family == "LogNormal":
            return float(np.exp(pr["mu"] + pr["sigma"] ** 2 / 2))
        if self.family in ("Poisson", "ZiPoisson"):
            m = pr["lambda"]
        else:
            m = pr["r"] * pr["p"] / (1 - pr["p"])
        return (1 - self.zero_inflation) * m

    def to_dict(self) -> dict:
        return {"family": self.family, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "MarginalModel":
        return cls(d["family"], d["params"])


def _check_params(family: str, pr: dict) -> None:
    for k, v in pr.items():
        if not np.isfinite(v):
            raise InvalidParameters(f"{family}.{k} must be finite")
    if "phi" in pr and not 0 <= pr["phi"] < 1:
        raise InvalidParameters("phi must lie in [0, 1)")
    if "sigma" in pr and pr["sigma"] <= 0:
        raise InvalidParameters("sigma must be positive")
    if "lambda" in pr and pr["lambda"] <= 0:
        raise InvalidParameters("lambda must be positive")
    if "r" in pr and pr["r"] <= 0:
        raise InvalidParameters("r must be positive")
    if "p" in pr and not 0 < pr["p"] < 1:
        raise InvalidParameters("p must lie in (0, 1)")


def negbinom_from_mean(r: float, mean: float) -> dict:
    """NB parameters with dispersion ``r`` and the requested mean."""
    return {"r": float(r), "p": float(mean / (mean + r))}


# --------------------------------------------------------------------------
# masses and distribution functions


def _lognormal_cell_cdf(x, mu, sigma):
    """Continuous log-normal CDF at x (0 for x <= 0)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = special.ndtr((np.log(x[pos]) - mu) / sigma)
    return out


def _lognormal_log_cell(u, mu, sigma):
    # mass of [u - 1/2, u + 1/2), computed on the lower or upper tail,
    # whichever avoids cancellation
    u = np.asarray(u, dtype=float)
    hi = (np.log(u + 0.5) - mu) / sigma
    lo = np.full_like(u, -np.inf)
    pos = u > 0
    lo[pos] = (np.log(u[pos] - 0.5) - mu) / sigma
    upper = lo > 0
    out = np.empty_like(u)
    # log(Phi(hi) - Phi(lo)) = log Phi(hi) + log1p(-exp(logPhi(lo) - logPhi(hi)))
    lf_hi, lf_lo = special.log_ndtr(hi[~upper]), special.log_ndtr(lo[~upper])
    out[~upper] = lf_hi + np.log1p(-np.exp(lf_lo - lf_hi))
    ls_lo, ls_hi = special.log_ndtr(-lo[upper]), special.log_ndtr(-hi[upper])
    out[upper] = ls_lo + np.log1p(-np.exp(ls_hi - ls_lo))
    return out


def _base_log_mass(family: str, pr: dict, u: np.ndarray) -> np.ndarray:
    if family in ("Poisson", "ZiPoisson"):
        lam = pr["lambda"]
        return special.xlogy(u, lam) - lam - special.gammaln(u + 1)
    if family in ("NegBinom", "ZiNegBinom"):
        r, p = pr["r"], pr["p"]
        return (special.gammaln(r + u) - special.gammaln(u + 1) - special.gammaln(r)
                + special.xlogy(u, p) + r * np.log1p(-p))
    return _lognormal_log_cell(u, pr["mu"], pr["sigma"])


def log_mass(m: MarginalModel, u) -> np.ndarray | float:
    """Log probability of observing count ``u`` (scalar or array)."""
    scalar = np.ndim(u) == 0
    u = np.asarray(u)
    if np.any(u < 0) or np.any(u != np.floor(u)):
        raise InvalidParameters("counts must be nonnegative integers")
    u = u.astype(float)
    out = _base_log_mass(m.family, m.params, u)
    phi = m.zero_inflation
    if m.family in ("ZiPoisson", "ZiNegBinom") and phi > 0:
        zero = u == 0
        out = np.where(zero, np.logaddexp(np.log(phi), np.log1p(-phi) + out), np.log1p(-phi) + out)
    return float(out) if scalar else out


def _base_cdf(family: str, pr: dict, u: np.ndarray) -> np.ndarray:
    if family in ("Poisson", "ZiPoisson"):
        return special.pdtr(u, pr["lambda"])
    if family in ("NegBinom", "ZiNegBinom"):
        # P(U <= u) = I_{1-p}(r, u + 1)
        return special.betainc(pr["r"], u + 1, 1 - pr["p"])
    return _lognormal_cell_cdf(u + 0.5, pr["mu"], pr["sigma"])


def cdf(m: MarginalModel, u) -> np.ndarray | float:
    """P(U <= u); zero for negative u."""
    scalar = np.ndim(u) == 0
    u = np.floor(np.asarray(u, dtype=float))
    out = np.zeros_like(u)
    ok = u >= 0
    if np.any(ok):
        base = _base_cdf(m.family, m.params, u[ok])
        phi = m.zero_inflation
        out[ok] = phi + (1 - phi) * base
    out = np.clip(out, 0.0, 1.0)
    return float(out) if scalar else out


def quantile(m: MarginalModel, q) -> np.ndarray | int:
    """Smallest integer ``u >= 0`` with ``cdf(u) >= q``."""
    scalar = np.ndim(q) == 0
    q = np.atleast_1d(np.asarray(q, dtype=float))
    if np.any(~np.isfinite(q)) or np.any(q < 0) or np.any(q >= 1):
        raise InvalidParameters("quantile levels must lie in [0, 1)")
    if m.family == "LogNormal":
        out = _lognormal_quantile(m, q)
    else:
        out = _discrete_quantile(m, q)
    return int(out[0]) if scalar else out


def _lognormal_quantile(m, q):
    mu, sigma = m.params["mu"], m.params["sigma"]
    with np.errstate(divide="ignore"):
        xq = np.exp(mu + sigma * special.ndtri(q))
    u = np.maximum(0.0, np.ceil(xq - 0.5))
    # guard the boundary against rounding in exp/log
    c = cdf(m, u)
    u = np.where(c < q, u + 1, u)
    c_prev = cdf(m, u - 1)
    u = np.where((u > 0) & (c_prev >= q), u - 1, u)
    return u.astype(np.int64)


def _discrete_quantile(m, q):
    out = np.zeros(q.shape, dtype=np.int64)
    todo = cdf(m, np.zeros_like(q)) < q
    if not np.any(todo):
        return out
    qt = q[todo]
    # bracket: cdf(lo) < q <= cdf(hi)
    lo = np.zeros(qt.shape)
    hi = np.full(qt.shape, max(1.0, np.ceil(2 * m.mean())))
    for _ in range(200):
        short = cdf(m, hi) < qt
        if not np.any(short):
            break
        lo = np.where(short, hi, lo)
        hi = np.where(short, 2 * hi + 1, hi)
    while np.any(hi - lo > 1):
        mid = np.floor((lo + hi) / 2)
        below = cdf(m, mid) < qt
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    out[todo] = hi.astype(np.int64)
    return out


def sample(m: MarginalModel, n: int, seed) -> np.ndarray:
    """``n`` i.i.d. draws by inverse-CDF transform of uniforms."""
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    return quantile(m, u)


# --------------------------------------------------------------------------
# fitting


@dataclass(frozen=True)
class FitResult:
    model: MarginalModel
    log_likelihood: float
    converged: bool
    iterations: int

    def to_dict(self) -> dict:
        return {
            "family": self.model.family,
            "params": dict(self.model.params),
            "log_likelihood": self.log_likelihood,
            "converged": self.converged,
        }


def log_likelihood(m: MarginalModel, counts) -> float:
    counts = np.asarray(counts)
    vals, freq = np.unique(counts, return_counts=True)
    return float(np.dot(freq, log_mass(m, vals)))


def _bounds(family):
    b = {
        "mu": (-50.0, 50.0),
        "sigma": (_EPS, _UPPER),
        "lambda": (_EPS, _UPPER),
        "phi": (0.0, 1 - _EPS),
        "r": (_EPS, _UPPER),
        "p": (_EPS, 1 - _EPS),
    }
    return [b[k] for k in PARAM_NAMES[family]]


def _moment_start(family, counts):
    """Method-of-moments starting point."""
    x = counts.astype(float)
    mean, var = x.mean(), x.var()
    pos = x[x > 0]
    if family == "LogNormal":
        logs = np.log(np.maximum(x, 0.5))
        return {"mu": logs.mean(), "sigma": max(logs.std(), 0.1)}
    if family == "Poisson":
        return {"lambda": max(mean, _EPS)}
    zero_frac = np.mean(x == 0)
    if family == "ZiPoisson":
        lam = max(pos.mean() if pos.size else mean, _EPS)
        phi = max(0.0, zero_frac - np.exp(-lam))
        return {"phi": min(phi, 0.9), "lambda": lam}
    # negative binomial: mean = r p/(1-p), var = mean/(1-p)
    if family == "NegBinom":
        p = 1 - mean / var if var > mean else 0.5
        p = float(np.clip(p, 0.01, 0.99))
        return {"r": max(mean * (1 - p) / p, 0.01), "p": p}
    # zero-inflated NB: moments of the positive part, excess zeros over NB(0)
    if pos.size >= 2 and pos.var() > 0:
        pm, pv = pos.mean(), pos.var()
        p = float(np.clip(1 - pm / pv if pv > pm else 0.5, 0.01, 0.99))
    else:
        pm, p = max(mean, 1.0), 0.5
    r = max(pm * (1 - p) / p, 0.01)
    phi = max(0.0, zero_frac - (1 - p) ** r)
    return {"phi": min(phi, 0.9), "r": r, "p": p}


def _random_start(family, rng, counts):
    base = _moment_start(family, counts)
    out = {}
    for (k, v), (lo, hi) in zip(base.items(), _bounds(family)):
        if k in ("phi", "p"):
            out[k] = float(rng.uniform(max(lo, 0.01), min(hi, 0.99)))
        elif k == "mu":
            out[k] = v + rng.normal(0, 1)
        else:
            out[k] = float(v * np.exp(rng.normal(0, 1)))
    return out


def _numeric_grad(f, x, bounds, h=1e-6):
    """Central differences, one-sided next to a bound."""
    g = np.empty_like(x)
    for i, (lo, hi) in enumerate(bounds):
        step = h * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] = min(x[i] + step, hi)
        xm[i] = max(x[i] - step, lo)
        g[i] = (f(xp) - f(xm)) / (xp[i] - xm[i])
    return g


def _projected_grad_norm(g, x, bounds):
    pg = g.copy()
    for i, (lo, hi) in enumerate(bounds):
        if x[i] <= lo and g[i] > 0:
            pg[i] = 0.0
        if x[i] >= hi and g[i] < 0:
            pg[i] = 0.0
    return float(np.max(np.abs(pg)))


def fit_mle(counts, family: str, seed: int = 0, restarts: int = 20, gtol: float = 1e-6) -> FitResult:
    """Maximum-likelihood fit under box constraints.

    L-BFGS-B on the mean negative log-likelihood with finite-difference
    gradients, started from method-of-moments estimates. When the projected
    gradient norm does not fall below ``gtol`` up to ``restarts`` random
    starts are tried and the best optimum kept. The Poisson MLE is the sample
    mean and is returned in closed form.
    """
    if family not in FAMILIES:
        raise InvalidParameters(f"unknown family {family!r}")
    counts = np.asarray(counts)
    if counts.size == 0:
        raise DegenerateInput("cannot fit an empty sample")
    if np.any(counts < 0) or np.any(counts != np.floor(counts)):
        raise InvalidParameters("counts must be nonnegative integers")
    counts = counts.astype(np.int64)
    if family not in ("ZiPoisson", "ZiNegBinom") and not np.any(counts > 0):
        raise DegenerateInput(f"all-zero sample cannot be fit by {family}")
    if family in ("ZiPoisson", "ZiNegBinom") and not np.any(counts > 0):
        raise DegenerateInput("all-zero sample has no identifiable count component")
    if family in ("NegBinom", "ZiNegBinom") and np.unique(counts).size < 2:
        raise DegenerateInput("negative binomial fit needs at least two distinct values")

    if family == "Poisson":
        m = MarginalModel("Poisson", {"lambda": counts.mean()})
        return FitResult(m, log_likelihood(m, counts), True, 0)

    names = PARAM_NAMES[family]
    bounds = _bounds(family)
    vals, freq = np.unique(counts, return_counts=True)
    total = counts.size

    def nll(x):
        pr = dict(zip(names, x))
        try:
            _check_params(family, pr)
        except InvalidParameters:
            return 1e100
        ll = np.dot(freq, _fast_log_mass(family, pr, vals.astype(float)))
        return -ll / total if np.isfinite(ll) else 1e100

    def run(start):
        x0 = np.clip([start[k] for k in names], [b[0] for b in bounds], [b[1] for b in bounds])
        res = optimize.minimize(
            nll, x0, jac=lambda x: _numeric_grad(nll, x, bounds), method="L-BFGS-B",
            bounds=bounds, options={"maxiter": 2000, "gtol": gtol * 1e-2, "ftol": 1e-15},
        )
        g = _numeric_grad(nll, res.x, bounds)
        return res, _projected_grad_norm(g, res.x, bounds)

    rng = np.random.default_rng(seed)
    best, best_gn = run(_moment_start(family, counts))
    iterations = best.nit
    for _ in range(restarts):
        if best_gn <= gtol:
            break
        res, gn = run(_random_start(family, rng, counts))
        iterations += res.nit
        if res.fun < best.fun - 1e-12 or (abs(res.fun - best.fun) <= 1e-12 and gn < best_gn):
            best, best_gn = res, gn
    m = MarginalModel(family, dict(zip(names, best.x)))
    return FitResult(m, log_likelihood(m, counts), bool(best_gn <= gtol), int(iterations))


def _fast_log_mass(family, pr, u):
    out = _base_log_mass(family, pr, u)
    phi = pr.get("phi", 0.0)
    if family in ("ZiPoisson", "ZiNegBinom"):
        if phi > 0:
            out = np.where(u == 0, np.logaddexp(np.log(phi), np.log1p(-phi) + out), np.log1p(-phi) + out)
    return out


# --------------------------------------------------------------------------
# goodness of fit


def qq_r2(observed, m: MarginalModel) -> float:
    """Squared Pearson correlation of sorted data against model quantiles.

    Model quantiles are taken at plotting positions ``(k - 0.5) / n``.
    """
    x = np.sort(np.asarray(observed, dtype=float))
    if x.size == 0:
        raise DegenerateInput("empty sample")
    if np.all(x == x[0]):
        raise DegenerateInput("constant sample has no QQ correlation")
    n = x.size
    levels = (np.arange(1, n + 1) - 0.5) / n
    theo = quantile(m, levels).astype(float)
    if np.all(theo == theo[0]):
        return 0.0
    r = np.corrcoef(x, theo)[0, 1]
    return float(min(1.0, r * r))


def models_to_json(models: Sequence, path=None) -> str:
    recs = [mm.to_dict() for mm in models]
    text = json.dumps(recs, indent=2)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text


def models_from_json(text_or_path) -> list[MarginalModel]:
    """Load a list of models (or fit records) from JSON text or a file path."""
    s = str(text_or_path)
    if not s.lstrip().startswith(("[", "{")):
        with open(s) as fh:
            s = fh.read()
    data = json.loads(s)
    if isinstance(data, dict):
        data = data.get("marginals", data.get("models", [data]))
    return [MarginalModel.from_dict(d) for d in data]
