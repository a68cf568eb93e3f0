"""Command-line entry point (``compnet``).

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import benchmark as bm
from . import compositions as cp
from . import evaluation as ev
from . import marginals as mg
from .errors import DataError, NumericalError
from .inference.pipeline import infer
from .norta import SynthesisSpec, norta_counts, provenance
from .topology import TOPOLOGIES, GraphModel, default_clusters, generate, make_precision

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


def _write_json(path, obj) -> None:
    text = json.dumps(obj, indent=1, sort_keys=True)
    if path in (None, "-"):
        sys.stdout.write(text + "\n")
    else:
        Path(path).write_text(text + "\n")


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([format(x, ".17g") if isinstance(x, float) else x for x in r])


# subcommands ---------------------------------------------------------------

def cmd_fit_marginals(a) -> None:
    c = cp.load_count_table(a.input, a.orientation)
    if a.min_presence is not None:
        c = cp.filter_taxa(c, a.min_presence)
    if a.depth_quantile is not None:
        c, _ = cp.filter_samples_by_depth(c, a.depth_quantile)
    if a.normalize_depth:
        c = cp.normalize_depth(c, int(np.median(c.depths())))
    families = mg.FAMILIES if a.family == "all" else (a.family,)
    records = []
    for k, taxon in enumerate(c.taxon_ids):
        col = c.values[:, k]
        fits = []
        for fam in families:
            try:
                fit = mg.fit_mle(col, fam, seed=a.seed)
            except DataError as exc:
                fits.append({"family": fam, "error": str(exc)})
                continue
            rec = fit.to_dict()
            try:
                rec["qq_r2"] = mg.qq_r2(col, fit.model)
            except DataError:
                rec["qq_r2"] = None
            fits.append(rec)
        ok = [f for f in fits if "error" not in f]
        best = max(ok, key=lambda f: f["log_likelihood"]) if ok else fits[0]
        records.append({"taxon": taxon, **best, "candidates": fits} if len(families) > 1 else {"taxon": taxon, **best})
    _write_json(a.output, records)


def cmd_gen_graph(a) -> None:
    e = a.p if a.e is None else a.e
    h = a.clusters or default_clusters(a.p)
    adj = generate(a.topology, a.p, e, a.seed, h=h)
    gm = make_precision(adj, a.theta_min, a.theta_max, a.kappa, a.seed)
    gm.save(a.output)
    if a.correlation:
        gm.write_correlation(a.correlation)


def cmd_gen_data(a) -> None:
    gm = GraphModel.load(a.graph)
    models = mg.models_from_json(a.marginals)
    p = gm.adjacency.p
    if len(models) < p:
        raise DataError(f"{len(models)} marginals for a {p}-node graph")
    models = models[:p]
    spec = SynthesisSpec(gm.correlation, models, a.n, a.seed)
    counts = norta_counts(spec)
    cp.write_matrix_tsv(a.output, counts.values, counts.sample_ids, counts.taxon_ids)
    prov = provenance(spec, counts)
    _write_json(a.provenance or str(a.output) + ".provenance.json", prov)


def cmd_infer(a) -> None:
    c = cp.load_count_table(a.input, a.orientation)
    res = infer(c, a.method, rule=a.rule, nlambda=a.nlambda, ratio=a.lambda_min_ratio,
                subsamples=a.stars_subsamples, fraction=a.subsample_fraction, beta=a.stars_beta,
                seed=a.seed, threshold=a.threshold, kind=a.kind, early_stop=not a.full_path)
    ids = c.taxon_ids
    _write_rows(a.output, ["i", "j", "weight", "stability", "rank"],
                [(ids[i], ids[j], w, s, r) for i, j, w, s, r in res.edge_rows()])
    if a.ranking:
        width = len(res.ranked[0]) - 2 if res.ranked else 0
        _write_rows(a.ranking, ["i", "j"] + [f"score{k + 1}" for k in range(width)],
                    [(ids[r[0]], ids[r[1]], *r[2:]) for r in res.ranked])
    manifest = {"version": __version__, "input": str(a.input), "seed": a.seed, "threshold": a.threshold,
                "nlambda": a.nlambda, "lambda_min_ratio": a.lambda_min_ratio, "kind": a.kind,
                "full_path": a.full_path, **res.manifest()}
    _write_json(a.manifest or str(a.output) + ".manifest.json", manifest)


def _read_ranking(path, p: int) -> tuple[list[tuple], bool]:
    """Ranked pairs from an ``infer`` ranking or edge-list TSV, and whether it was an edge list.

    Node labels may be integer indices or ``T<k>`` style ids. Edge lists with
    a ``rank`` column are ordered by it and keyed by ``stability``.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh, delimiter="\t"))
    if not rows or rows[0][:2] != ["i", "j"]:
        raise DataError(f"{path}: expected a header starting with i, j")
    head, body = rows[0], [r for r in rows[1:] if r]

    def node(s):
        s = s.strip()
        k = int(s[1:]) if s[:1].isalpha() and s[1:].isdigit() else int(s)
        if not 0 <= k < p:
            raise DataError(f"node {s!r} outside 0..{p - 1}")
        return k

    try:
        if "rank" in head:
            ri, si = head.index("rank"), head.index("stability")
            body.sort(key=lambda r: int(r[ri]))
            return [(node(r[0]), node(r[1]), float(r[si])) for r in body], True
        return [(node(r[0]), node(r[1]), *map(float, r[2:])) for r in body], False
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: malformed row ({exc})") from None


def cmd_eval(a) -> None:
    gm = GraphModel.load(a.graph)
    truth = gm.adjacency
    ranked, edge_list = _read_ranking(a.ranking, truth.p)
    labels = None
    if a.labels:
        labels = [ln.strip() for ln in Path(a.labels).read_text().splitlines() if ln.strip()]
    # an edge list is itself the predicted network unless a cutoff is asked for
    predicted = ev.top_k_network(ranked, len(ranked), truth.p) if edge_list and a.top_k is None else None
    report = ev.metrics_report(ranked, truth, predicted=predicted, labels=labels, top_k=a.top_k)
    _write_json(a.output, report)
    if a.histograms:
        out = Path(a.histograms)
        out.mkdir(parents=True, exist_ok=True)
        for stat, h in report["histograms"].items():
            pred = dict(h["predicted"])
            tru = dict(h["truth"])
            keys = list(dict.fromkeys([k for k, _ in h["truth"]] + [k for k, _ in h["predicted"]]))
            _write_rows(out / f"{stat}.tsv", ["bin", "predicted", "truth"],
                        [(k, float(pred.get(k, 0.0)), float(tru.get(k, 0.0))) for k in keys])


def cmd_benchmark(a) -> None:
    cfg = bm.BenchmarkConfig.from_json(a.config) if a.config else bm.BenchmarkConfig()
    if a.workers is not None:
        cfg = bm.BenchmarkConfig.from_dict({**cfg.to_dict(), "workers": a.workers})
    res = bm.run_benchmark(cfg, a.out)
    failures = sum(r["failures"] for r in res.summary)
    print(f"{len(res.results)} jobs, {failures} method failures; summary at {Path(a.out) / 'summary.tsv'}")


def cmd_toy_hub(a) -> None:
    reports = [bm.toy_hub_demo(s, n=a.n) for s in range(a.seed, a.seed + a.seeds)]
    out = reports[0] if a.seeds == 1 else {
        "seeds": [r["seed"] for r in reports],
        "inverse_covariance_recovered": sum(r["inverse_covariance"]["recovered"] for r in reports),
        "stars_mb_recovered": sum(r["stars_mb"]["recovered"] for r in reports),
        "pearson_0.35_spurious": sum(bool(r["pearson"]["0.35"]["spurious"]) for r in reports),
        "pearson_0.5_missed": sum(bool(r["pearson"]["0.5"]["missed"]) for r in reports),
        "reports": reports,
    }
    _write_json(a.output, out)


def cmd_reproducibility(a) -> None:
    c = cp.load_count_table(a.input, a.orientation)
    res = bm.reproducibility_experiment(c, a.n1, a.n2, a.repeats, a.method, a.seed, threshold=a.threshold)
    _write_json(a.output, res)


# parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="compnet", description="Microbial association networks from compositional counts.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def table(sp):
        sp.add_argument("--input", required=True, help="count table (TSV, or CSV by extension)")
        sp.add_argument("--orientation", choices=["samples_as_rows", "taxa_as_rows"], default="samples_as_rows")

    sp = sub.add_parser("fit-marginals", help="fit a count distribution per taxon")
    table(sp)
    sp.add_argument("--family", choices=[*mg.FAMILIES, "all"], default="ZiNegBinom")
    sp.add_argument("--min-presence", type=float)
    sp.add_argument("--depth-quantile", type=float)
    sp.add_argument("--normalize-depth", action="store_true", help="rescale samples to the median depth")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--output", default="-")
    sp.set_defaults(func=cmd_fit_marginals)

    sp = sub.add_parser("gen-graph", help="generate a ground-truth graph and precision matrix")
    sp.add_argument("--topology", choices=TOPOLOGIES, required=True)
    sp.add_argument("--p", type=int, required=True)
    sp.add_argument("--e", type=int, help="edge count (default p)")
    sp.add_argument("--kappa", type=float, default=100.0)
    sp.add_argument("--theta-min", type=float, default=2.0)
    sp.add_argument("--theta-max", type=float, default=3.0)
    sp.add_argument("--clusters", type=int, help="cluster count (default ceil(p/34))")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--output", required=True)
    sp.add_argument("--correlation", help="also write the correlation matrix as TSV")
    sp.set_defaults(func=cmd_gen_graph)

    sp = sub.add_parser("gen-data", help="synthesize counts for a graph")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--marginals", required=True, help="JSON list of marginal models")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--output", required=True)
    sp.add_argument("--provenance")
    sp.set_defaults(func=cmd_gen_data)

    sp = sub.add_parser("infer", help="infer a network")
    table(sp)
    sp.add_argument("--method", choices=["mb", "glasso", "pearson"], default="mb")
    sp.add_argument("--rule", choices=["union", "intersection"], default="union")
    sp.add_argument("--nlambda", type=int, default=30)
    sp.add_argument("--lambda-min-ratio", type=float, default=0.01)
    sp.add_argument("--stars-subsamples", type=int, default=50)
    sp.add_argument("--stars-beta", type=float, default=0.05)
    sp.add_argument("--subsample-fraction", type=float, default=0.8)
    sp.add_argument("--threshold", type=float, default=0.35, help="Pearson |r| cutoff")
    sp.add_argument("--kind", choices=["correlation", "covariance"], default="correlation")
    sp.add_argument("--full-path", action="store_true", help="fit every penalty on every subsample")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--output", required=True)
    sp.add_argument("--ranking", help="also write the full pair ranking")
    sp.add_argument("--manifest")
    sp.set_defaults(func=cmd_infer)

    sp = sub.add_parser("eval", help="score a ranking against a ground-truth graph")
    sp.add_argument("--ranking", required=True, help="ranking or edge list from infer")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--labels", help="one node label per line, for assortativity")
    sp.add_argument("--top-k", type=int)
    sp.add_argument("--output", default="-")
    sp.add_argument("--histograms", help="directory for plot-ready histogram TSVs")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("benchmark", help="run a benchmark grid")
    sp.add_argument("--config", help="JSON config (defaults to the desk-scale grid)")
    sp.add_argument("--out", required=True)
    sp.add_argument("--workers", type=int)
    sp.set_defaults(func=cmd_benchmark)

    sp = sub.add_parser("toy-hub", help="four-node hub experiment")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    sp.add_argument("--n", type=int, default=500)
    sp.add_argument("--output", default="-")
    sp.set_defaults(func=cmd_toy_hub)

    sp = sub.add_parser("reproducibility", help="Hamming distances between split-sample networks")
    table(sp)
    sp.add_argument("--n1", type=int, required=True)
    sp.add_argument("--n2", type=int, required=True)
    sp.add_argument("--repeats", type=int, default=10)
    sp.add_argument("--method", choices=["mb", "glasso", "pearson"], default="mb")
    sp.add_argument("--threshold", type=float, default=0.35)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--output", default="-")
    sp.set_defaults(func=cmd_reproducibility)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"compnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args.func(args)
    except (DataError, OSError, json.JSONDecodeError) as exc:
        print(f"compnet: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"compnet: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
