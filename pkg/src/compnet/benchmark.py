"""Synthetic benchmark grid, toy hub experiment and split-half reproducibility.

Every grid job regenerates its own graph, marginals and data from seeds
derived from the master seed and the job coordinates, so jobs are
independent, individually rerunnable and order-free. The graph and data
seeds leave out ``n``: a data set of size ``n`` is the first ``n`` rows of
the same draw at any larger size. The StARS seed includes ``n``.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__
from . import marginals as mg
from .compositions import CountMatrix
from .errors import CompnetError, DataError, InvalidParameters
from .evaluation import STATISTICS, hamming, metrics_report
from .inference.pearson import pearson_network
from .inference.pipeline import METHODS, infer
from .inference.stars import selected_network, stars_select
from .norta import SynthesisSpec, norta_counts
from .topology import TOPOLOGIES, Adjacency, generate, make_precision

SYNTHETIC_RANGES = {"phi": (0.2, 0.7), "r": (0.3, 3.0), "mean": (1.0, 200.0)}


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from JSON-serializable parts."""
    digest = hashlib.sha256(json.dumps(parts, separators=(",", ":")).encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def synthetic_marginals(p: int, seed) -> list[mg.MarginalModel]:
    """ziNB marginals with phi uniform and r, mean log-uniform over the bundled ranges."""
    rng = np.random.default_rng(seed)
    lo_r, hi_r = SYNTHETIC_RANGES["r"]
    lo_m, hi_m = SYNTHETIC_RANGES["mean"]
    out = []
    for _ in range(p):
        phi = rng.uniform(*SYNTHETIC_RANGES["phi"])
        r = math.exp(rng.uniform(math.log(lo_r), math.log(hi_r)))
        mean = math.exp(rng.uniform(math.log(lo_m), math.log(hi_m)))
        out.append(mg.MarginalModel("ZiNegBinom", {"phi": phi, **mg.negbinom_from_mean(r, mean)}))
    return out


@dataclass(frozen=True)
class BenchmarkConfig:
    topologies: tuple = ("band", "cluster", "scale_free")
    p_values: tuple = (68,)
    n_values: tuple = (34, 102, 680)
    kappas: tuple = (10.0, 100.0)
    theta_min: float = 2.0
    theta_max: float = 3.0
    replicates: int = 5
    methods: tuple = ("mb", "glasso", "pearson")
    seed: int = 0
    marginal_source: str | None = None
    clusters: int | None = None
    rule: str = "union"
    nlambda: int = 30
    lambda_min_ratio: float = 0.01
    stars_subsamples: int = 50
    stars_beta: float = 0.05
    subsample_fraction: float = 0.8
    pearson_threshold: float = 0.35
    workers: int = 1

    def __post_init__(self):
        for name in ("topologies", "p_values", "n_values", "kappas", "methods"):
            v = getattr(self, name)
            v = (v,) if isinstance(v, (str, int, float)) else tuple(v)
            if not v:
                raise InvalidParameters(f"{name} must be nonempty")
            object.__setattr__(self, name, v)
        if bad := set(self.topologies) - set(TOPOLOGIES):
            raise InvalidParameters(f"unknown topologies {sorted(bad)}")
        if bad := set(self.methods) - set(METHODS):
            raise InvalidParameters(f"unknown methods {sorted(bad)}")
        if self.replicates < 1:
            raise InvalidParameters("replicates must be at least 1")
        if any(k <= 1 for k in self.kappas):
            raise InvalidParameters("kappa must exceed 1")
        object.__setattr__(self, "p_values", tuple(int(v) for v in self.p_values))
        object.__setattr__(self, "n_values", tuple(int(v) for v in self.n_values))
        object.__setattr__(self, "kappas", tuple(float(v) for v in self.kappas))

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkConfig":
        known = set(cls.__dataclass_fields__)
        if unknown := set(d) - known:
            raise InvalidParameters(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "BenchmarkConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise DataError(f"config is not valid JSON: {exc}") from exc

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    def digest(self) -> str:
        d = self.to_dict()
        d.pop("workers")  # execution detail, not part of the experiment
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


@dataclass(frozen=True, order=True)
class Job:
    topology: str
    p: int
    kappa: float
    replicate: int
    n: int

    @property
    def key(self) -> str:
        return f"{self.topology}_p{self.p}_k{self.kappa:g}_n{self.n}_r{self.replicate}"

    def seeds(self, master: int) -> dict:
        base = [master, self.topology, self.p, self.kappa, self.replicate]
        return {
            "graph": derive_seed("graph", *base),
            "marginals": derive_seed("marginals", *base),
            "data": derive_seed("data", *base),
            "stars": derive_seed("stars", *base, self.n),
        }


def grid_jobs(cfg: BenchmarkConfig) -> list[Job]:
    return sorted(
        Job(t, p, k, r, n)
        for t in cfg.topologies
        for p in cfg.p_values
        for k in cfg.kappas
        for r in range(cfg.replicates)
        for n in cfg.n_values
    )


def _load_marginals(cfg: BenchmarkConfig, p: int, seed):
    if cfg.marginal_source is None:
        return synthetic_marginals(p, seed)
    models = mg.models_from_json(cfg.marginal_source)
    if len(models) < p:
        raise DataError(f"marginal source has {len(models)} models, need {p}")
    return models[:p]


def job_data(cfg: BenchmarkConfig, job: Job):
    """Ground-truth graph model and synthetic counts for one job."""
    s = job.seeds(cfg.seed)
    adj = generate(job.topology, job.p, job.p, s["graph"], h=cfg.clusters)
    gm = make_precision(adj, cfg.theta_min, cfg.theta_max, job.kappa, s["graph"])
    spec = SynthesisSpec(gm.correlation, _load_marginals(cfg, job.p, s["marginals"]), job.n, s["data"])
    return gm, norta_counts(spec)


def run_job(cfg: BenchmarkConfig, job: Job) -> dict:
    """Metrics per method for one job; failures are captured, not raised."""
    out = {"job": asdict(job), "seeds": job.seeds(cfg.seed), "methods": {}}
    try:
        gm, counts = job_data(cfg, job)
    except (CompnetError, ArithmeticError, ValueError) as exc:
        out["error"] = f"{type(exc).__name__}: {exc}"
        return out
    out["kappa_achieved"] = gm.kappa
    for method in cfg.methods:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                res = infer(counts, method, rule=cfg.rule, nlambda=cfg.nlambda, ratio=cfg.lambda_min_ratio,
                            subsamples=cfg.stars_subsamples, fraction=cfg.subsample_fraction,
                            beta=cfg.stars_beta, seed=out["seeds"]["stars"], threshold=cfg.pearson_threshold)
            report = metrics_report(res.ranked, gm.adjacency)
            report["inference"] = res.manifest()
            out["methods"][method] = report
        except (CompnetError, ArithmeticError, ValueError) as exc:
            out["methods"][method] = {"error": f"{type(exc).__name__}: {exc}"}
    return out


def _run_job_packed(args):
    return run_job(*args)


def _mean_se(values):
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return float("nan"), float("nan")
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("nan")
    return float(v.mean()), se


SUMMARY_COLUMNS = ["topology", "p", "n", "kappa", "method", "replicates", "failures", "aupr_mean", "aupr_se"] + [
    f"kl_{s}_{x}" for s in STATISTICS for x in ("mean", "se")
] + ["hamming_mean"]


def summarize(results: list[dict]) -> list[dict]:
    """Aggregate per (topology, p, n, kappa, method), sorted."""
    cells: dict[tuple, list] = {}
    for r in results:
        j = r["job"]
        methods = r["methods"] if "error" not in r else {}
        for method, rep in methods.items():
            cells.setdefault((j["topology"], j["p"], j["n"], j["kappa"], method), []).append(rep)
        if "error" in r:
            cells.setdefault((j["topology"], j["p"], j["n"], j["kappa"], "*"), []).append({"error": r["error"]})
    rows = []
    for key in sorted(cells):
        reps = cells[key]
        ok = [x for x in reps if "error" not in x]
        row = dict(zip(["topology", "p", "n", "kappa", "method"], key))
        row["replicates"] = len(ok)
        row["failures"] = len(reps) - len(ok)
        row["aupr_mean"], row["aupr_se"] = _mean_se([x["aupr"] for x in ok])
        for s in STATISTICS:
            row[f"kl_{s}_mean"], row[f"kl_{s}_se"] = _mean_se([x["kl"][s] for x in ok])
        row["hamming_mean"] = _mean_se([x["hamming"] for x in ok])[0]
        rows.append(row)
    return rows


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.15g}"
    return str(v)


def summary_tsv(rows: list[dict]) -> str:
    lines = ["\t".join(SUMMARY_COLUMNS)]
    lines += ["\t".join(_fmt(r[c]) for c in SUMMARY_COLUMNS) for r in rows]
    return "\n".join(lines) + "\n"


@dataclass
class BenchmarkResult:
    config: BenchmarkConfig
    results: list
    summary: list
    manifest: dict = field(default_factory=dict)

    def summary_tsv(self) -> str:
        return summary_tsv(self.summary)

    def cell(self, topology, n, method, p=None, kappa=None) -> dict:
        for r in self.summary:
            if (r["topology"], r["n"], r["method"]) == (topology, n, method) and \
                    (p is None or r["p"] == p) and (kappa is None or r["kappa"] == kappa):
                return r
        raise KeyError((topology, n, method, p, kappa))

    def aupr_values(self, topology, n, method, kappa=None) -> list[float]:
        out = []
        for r in self.results:
            j = r["job"]
            if (j["topology"], j["n"]) == (topology, n) and (kappa is None or j["kappa"] == kappa):
                rep = r["methods"].get(method, {})
                if "aupr" in rep:
                    out.append(rep["aupr"])
        return out


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=True)


def run_benchmark(cfg: BenchmarkConfig, out_dir=None, jobs: list[Job] | None = None) -> BenchmarkResult:
    """Run the grid; write reports, ``summary.tsv`` and ``manifest.json`` if ``out_dir`` is set.

    With ``cfg.workers > 1`` jobs run in a process pool; results are sorted
    by job before aggregation, so outputs do not depend on scheduling.
    """
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    jobs = grid_jobs(cfg) if jobs is None else sorted(jobs)
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_job_packed, [(cfg, j) for j in jobs]))
    else:
        results = [run_job(cfg, j) for j in jobs]
    results.sort(key=lambda r: Job(**r["job"]))
    rows = summarize(results)
    manifest = {
        "config_hash": cfg.digest(),
        "config": cfg.to_dict(),
        "version": __version__,
        "started": started,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "seeds": {Job(**r["job"]).key: r["seeds"] for r in results},
        "outputs": {},
    }
    if out_dir is not None:
        out = Path(out_dir)
        (out / "reports").mkdir(parents=True, exist_ok=True)
        for r in results:
            path = out / "reports" / f"{Job(**r['job']).key}.json"
            path.write_text(_dumps(r))
            manifest["outputs"][Job(**r["job"]).key] = os.path.relpath(path, out)
        (out / "summary.tsv").write_text(summary_tsv(rows))
        (out / "config.json").write_text(_dumps(cfg.to_dict()))
        manifest["outputs"]["summary"] = "summary.tsv"
        (out / "manifest.json").write_text(_dumps(manifest))
    return BenchmarkResult(cfg, results, rows, manifest)


# toy hub ------------------------------------------------------------------

TOY_HUB = 2  # zero-based index of OTU 3
TOY_LEAF_CORRELATIONS = {0: 0.43, 1: 0.68, 3: 0.68}
TOY_TRUTH = frozenset({(0, 2), (1, 2), (2, 3)})


def toy_correlation() -> np.ndarray:
    """Latent correlation of a Gaussian star: hub-leaf rho_i, leaf-leaf rho_i * rho_j.

    Its inverse has exactly the star support.
    """
    R = np.eye(4)
    for i, r in TOY_LEAF_CORRELATIONS.items():
        R[i, TOY_HUB] = R[TOY_HUB, i] = r
        for j, s in TOY_LEAF_CORRELATIONS.items():
            if i != j:
                R[i, j] = r * s
    return R


def partial_correlations(x) -> np.ndarray:
    """Partial correlations from the inverse sample correlation matrix."""
    prec = np.linalg.inv(np.corrcoef(np.asarray(x, dtype=float), rowvar=False))
    d = np.sqrt(np.diag(prec))
    pc = -prec / np.outer(d, d)
    np.fill_diagonal(pc, 1.0)
    return pc


def partial_correlation_support(x, alpha: float = 0.05) -> set:
    """Pairs whose partial correlation is nonzero under a Bonferroni Fisher-z test."""
    x = np.asarray(x, dtype=float)
    n, p = x.shape
    pc = partial_correlations(x)
    iu = np.triu_indices(p, 1)
    z = np.arctanh(np.clip(np.abs(pc[iu]), 0, 1 - 1e-15)) * math.sqrt(n - (p - 2) - 3)
    crit = stats.norm.isf(alpha / (2 * len(iu[0])))
    return {(int(i), int(j)) for i, j, v in zip(*iu, z) if v > crit}


def separating_threshold(scores: np.ndarray, truth) -> bool:
    """Whether some cut on ``|scores|`` yields exactly ``truth``."""
    p = scores.shape[0]
    iu = np.triu_indices(p, 1)
    a = np.abs(scores[iu])
    mask = np.array([(i, j) in truth for i, j in zip(*iu)])
    return bool(mask.any() and (not (~mask).any() or a[mask].min() > a[~mask].max()))


def toy_hub_demo(seed: int = 0, n: int = 500, r: float = 10.0, mean: float = 100.0) -> dict:
    """Four OTUs, OTU 3 (index 2) driving the other three, NB counts.

    Thresholded Pearson correlation of the raw counts is contrasted with
    support recovery from the inverse sample correlation of ``log(1 + counts)``.
    StARS-selected neighborhood selection is reported alongside.
    """
    R = toy_correlation()
    model = mg.MarginalModel("NegBinom", mg.negbinom_from_mean(r, mean))
    counts = norta_counts(SynthesisSpec(R, [model] * 4, n, seed))
    x = np.log1p(counts.values.astype(float))
    corr = np.corrcoef(counts.values.astype(float), rowvar=False)
    pearson = {}
    for t in (0.35, 0.5):
        net, _ = pearson_network(counts, t)
        edges = net.edge_set()
        pearson[str(t)] = {
            "edges": sorted(edges),
            "spurious": sorted(edges - TOY_TRUTH),
            "missed": sorted(TOY_TRUTH - edges),
        }
    pc = partial_correlations(x)
    support = partial_correlation_support(x)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sr = stars_select(x, "mb", seed=seed)
        mb_edges = selected_network(x, sr).edge_set()
    return {
        "seed": seed,
        "n": n,
        "hub": TOY_HUB,
        "truth": sorted(TOY_TRUTH),
        "pearson": pearson,
        "pearson_separable": separating_threshold(corr, TOY_TRUTH),
        "correlation": corr.tolist(),
        "partial_correlation": pc.tolist(),
        "inverse_covariance": {
            "edges": sorted(support),
            "recovered": support == TOY_TRUTH,
            "separable": separating_threshold(pc, TOY_TRUTH),
        },
        "stars_mb": {"edges": sorted(mb_edges), "recovered": mb_edges == TOY_TRUTH,
                     "lambda": sr.lambda_selected},
    }


# reproducibility ------------------------------------------------------------

def _network_edges(counts: CountMatrix, method: str, seed: int, **kw) -> Adjacency:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = infer(counts, method, seed=seed, **kw)
    return Adjacency(counts.p, frozenset(res.network.edge_set()))


def reproducibility_experiment(data: CountMatrix, n1: int, n2: int, repeats: int = 10, method: str = "mb",
                               seed: int = 0, shuffle: bool = True, **infer_kwargs) -> dict:
    """Hamming distances between networks inferred on disjoint sample groups.

    Each repeat draws a random disjoint split (``shuffle=False`` takes the
    first ``n1`` rows and the next ``n2``) and infers both networks with the
    same StARS seed. Reports the distances, their mean and, for more than
    one repeat, the 2.5/97.5 percentile interval.
    """
    if n1 < 1 or n2 < 1 or n1 + n2 > data.n:
        raise InvalidParameters(f"cannot split {data.n} samples into {n1} + {n2}")
    if repeats < 1:
        raise InvalidParameters("repeats must be positive")
    rng = np.random.default_rng(seed)
    dist = []
    for k in range(repeats):
        order = rng.permutation(data.n) if shuffle else np.arange(data.n)
        s = derive_seed("reproducibility", seed, k)
        a = _network_edges(data.take_samples(np.sort(order[:n1])), method, s, **infer_kwargs)
        b = _network_edges(data.take_samples(np.sort(order[n1:n1 + n2])), method, s, **infer_kwargs)
        dist.append(hamming(a, b))
    out = {"method": method, "n1": n1, "n2": n2, "repeats": repeats, "distances": dist,
           "mean": float(np.mean(dist)), "interval": None}
    if repeats > 1:
        lo, hi = np.percentile(dist, [2.5, 97.5])
        out["interval"] = [float(lo), float(hi)]
    return out
