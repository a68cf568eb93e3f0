import csv
import json

import pytest

from compnet import benchmark as bm
from compnet.cli import EXIT_DATA, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, main
from compnet.compositions import load_count_table
from compnet.topology import GraphModel


def run(*argv):
    return main([str(a) for a in argv])


def read_tsv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh, delimiter="\t"))


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Graph, marginals and counts produced through the CLI itself."""
    d = tmp_path_factory.mktemp("cli")
    assert run("gen-graph", "--topology", "band", "--p", 10, "--kappa", 10, "--seed", 3,
               "--output", d / "graph.tsv", "--correlation", d / "corr.tsv") == EXIT_OK
    (d / "marg.json").write_text(json.dumps([m.to_dict() for m in bm.synthetic_marginals(10, 0)]))
    assert run("gen-data", "--graph", d / "graph.tsv", "--marginals", d / "marg.json", "--n", 150,
               "--seed", 1, "--output", d / "counts.tsv") == EXIT_OK
    return d


class TestPipeline:
    def test_gen_graph(self, workdir):
        gm = GraphModel.load(workdir / "graph.tsv")
        assert gm.adjacency.e == 10
        assert abs(gm.kappa - 10) <= 0.1
        corr = read_tsv(workdir / "corr.tsv")
        assert len(corr) == 11

    def test_gen_data(self, workdir):
        c = load_count_table(workdir / "counts.tsv")
        assert c.values.shape == (150, 10)
        prov = json.loads((workdir / "counts.tsv.provenance.json").read_text())
        assert len(prov["ks_statistics"]) == 10

    def test_gen_data_repeatable(self, workdir, tmp_path):
        run("gen-data", "--graph", workdir / "graph.tsv", "--marginals", workdir / "marg.json", "--n", 150,
            "--seed", 1, "--output", tmp_path / "again.tsv")
        assert (tmp_path / "again.tsv").read_bytes() == (workdir / "counts.tsv").read_bytes()

    @pytest.mark.parametrize("family", ["ZiNegBinom", "all"])
    def test_fit_marginals(self, workdir, tmp_path, family):
        out = tmp_path / "fits.json"
        assert run("fit-marginals", "--input", workdir / "counts.tsv", "--family", family,
                   "--output", out) == EXIT_OK
        recs = json.loads(out.read_text())
        assert len(recs) == 10
        assert all("qq_r2" in r and "log_likelihood" in r for r in recs)
        if family == "all":
            for r in recs:
                ok = [c for c in r["candidates"] if "error" not in c]
                assert r["log_likelihood"] == max(c["log_likelihood"] for c in ok)

    def test_fit_output_feeds_gen_data(self, workdir, tmp_path):
        run("fit-marginals", "--input", workdir / "counts.tsv", "--output", tmp_path / "fits.json")
        assert run("gen-data", "--graph", workdir / "graph.tsv", "--marginals", tmp_path / "fits.json",
                   "--n", 20, "--output", tmp_path / "c.tsv") == EXIT_OK

    @pytest.mark.parametrize("method", ["mb", "glasso", "pearson"])
    def test_infer_then_eval(self, workdir, tmp_path, method):
        edges, ranking = tmp_path / "edges.tsv", tmp_path / "rank.tsv"
        assert run("infer", "--input", workdir / "counts.tsv", "--method", method, "--stars-subsamples", 10,
                   "--output", edges, "--ranking", ranking) == EXIT_OK
        assert read_tsv(edges)[0] == ["i", "j", "weight", "stability", "rank"]
        assert len(read_tsv(ranking)) == 1 + 45
        man = json.loads((tmp_path / "edges.tsv.manifest.json").read_text())
        assert man["method"].lower() == method
        report = tmp_path / "report.json"
        hist = tmp_path / "hist"
        assert run("eval", "--ranking", ranking, "--graph", workdir / "graph.tsv",
                   "--output", report, "--histograms", hist) == EXIT_OK
        rep = json.loads(report.read_text())
        assert 0 <= rep["aupr"] <= 1
        assert {p.name for p in hist.iterdir()} == {f"{s}.tsv" for s in ("degree", "betweenness", "geodesic",
                                                                           "component_size")}
        # the edge list is also accepted as a ranking
        assert run("eval", "--ranking", edges, "--graph", workdir / "graph.tsv",
                   "--output", tmp_path / "r2.json") == EXIT_OK
        rep2 = json.loads((tmp_path / "r2.json").read_text())
        assert rep2["predicted_edges"] == len(read_tsv(edges)) - 1

    def test_eval_labels(self, workdir, tmp_path):
        ranking = tmp_path / "rank.tsv"
        run("infer", "--input", workdir / "counts.tsv", "--method", "pearson", "--output", tmp_path / "e.tsv",
            "--ranking", ranking)
        labels = tmp_path / "labels.txt"
        labels.write_text("\n".join("ab"[k % 2] for k in range(10)) + "\n")
        assert run("eval", "--ranking", ranking, "--graph", workdir / "graph.tsv", "--labels", labels,
                   "--top-k", 15, "--output", tmp_path / "r.json") == EXIT_OK
        rep = json.loads((tmp_path / "r.json").read_text())
        assert rep["predicted_edges"] == 15 and rep["assortativity"] is not None

    def test_reproducibility(self, workdir, tmp_path):
        out = tmp_path / "rep.json"
        assert run("reproducibility", "--input", workdir / "counts.tsv", "--n1", 60, "--n2", 60,
                   "--repeats", 2, "--method", "pearson", "--output", out) == EXIT_OK
        assert len(json.loads(out.read_text())["distances"]) == 2


class TestExperiments:
    def test_toy_hub(self, tmp_path):
        out = tmp_path / "toy.json"
        assert run("toy-hub", "--seeds", 3, "--output", out) == EXIT_OK
        rep = json.loads(out.read_text())
        assert rep["seeds"] == [0, 1, 2]
        assert rep["inverse_covariance_recovered"] == 3

    def test_benchmark(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"topologies": ["band"], "p_values": [10], "n_values": [60], "kappas": [10],
                                   "replicates": 1, "methods": ["pearson"]}))
        assert run("benchmark", "--config", cfg, "--out", tmp_path / "out") == EXIT_OK
        assert (tmp_path / "out" / "summary.tsv").exists()
        assert "1 jobs, 0 method failures" in capsys.readouterr().out


class TestExitCodes:
    def test_missing_subcommand(self, capsys):
        assert run() == EXIT_USAGE

    def test_missing_argument(self):
        assert run("infer", "--method", "mb") == EXIT_USAGE

    def test_bad_choice(self, workdir):
        assert run("infer", "--input", workdir / "counts.tsv", "--method", "sparcc", "--output", "x") == EXIT_USAGE

    def test_missing_file(self, tmp_path):
        assert run("infer", "--input", tmp_path / "nope.tsv", "--output", tmp_path / "o.tsv") == EXIT_DATA

    def test_negative_counts(self, tmp_path):
        bad = tmp_path / "neg.tsv"
        bad.write_text("id\tA\tB\ns1\t1\t-2\ns2\t3\t4\n")
        assert run("infer", "--input", bad, "--output", tmp_path / "o.tsv") == EXIT_DATA

    def test_invalid_parameter(self, tmp_path):
        assert run("gen-graph", "--topology", "band", "--p", 4, "--e", 3, "--kappa", 0.5,
                   "--output", tmp_path / "g.tsv") == EXIT_DATA

    def test_malformed_ranking(self, workdir, tmp_path):
        bad = tmp_path / "r.tsv"
        bad.write_text("a\tb\n0\t1\n")
        assert run("eval", "--ranking", bad, "--graph", workdir / "graph.tsv") == EXIT_DATA

    def test_indefinite_precision(self, tmp_path):
        graph = tmp_path / "bad.tsv"
        graph.write_text('# {"p": 2, "diagonal": [1.0, 1.0]}\ni\tj\ttheta\n0\t1\t5\n')
        marg = json.dumps([m.to_dict() for m in bm.synthetic_marginals(2, 0)])
        assert run("gen-data", "--graph", graph, "--marginals", marg, "--n", 5,
                   "--output", tmp_path / "x.tsv") == EXIT_NUMERICAL

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run("--version")
        assert exc.value.code == 0
        assert capsys.readouterr().out.startswith("compnet ")
