import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from compnet import benchmark as bm
from compnet.errors import ConstantColumn, DataError
from compnet.inference.lasso import mb_fit, mb_graph
from compnet.inference.pearson import pearson_network, pearson_pvalues, pearson_rank
from compnet.inference.pipeline import infer
from compnet.inference.stars import (
    StabilityResult,
    edge_instability,
    rank_edges,
    select_index,
    selected_network,
    stars_select,
)
from compnet.benchmark import synthetic_marginals
from compnet.norta import SynthesisSpec, norta_counts, sample_mvn
from compnet.topology import generate, make_precision


def _gaussian(seed, p=10, n=120):
    gm = make_precision(generate("band", p, p, seed), kappa=10.0, seed=seed)
    return sample_mvn(gm.correlation, n, seed), gm


def _result(freq_rows, p):
    freq = np.asarray(freq_rows, dtype=float)
    inst = edge_instability(freq).mean(axis=1)
    return StabilityResult(p, np.linspace(1, 0.1, len(freq)), freq, inst, len(freq) - 1, 10, 0.8, 0.05, "mb")


class TestInstability:
    def test_always_present(self):
        assert edge_instability(1.0) == 0.0

    def test_half_present(self):
        assert edge_instability(0.5) == 0.5

    @given(st.floats(0, 1))
    def test_range(self, t):
        assert 0 <= edge_instability(t) <= 0.5


class TestSelectIndex:
    def test_smallest_stable_lambda(self):
        assert select_index([0.0, 0.01, 0.04, 0.06, 0.02], 0.05) == (2, True)

    def test_monotonized(self):
        # the late dip below beta is ignored after the running maximum exceeds it
        assert select_index([0.0, 0.08, 0.01, 0.01], 0.05) == (0, True)

    def test_bound_never_met(self):
        assert select_index([0.1, 0.2], 0.05) == (1, False)


class TestStars:
    def test_invariants(self):
        x, _ = _gaussian(0)
        sr = stars_select(x, "mb", subsamples=20, seed=1, early_stop=False)
        assert np.all((sr.edge_frequency >= 0) & (sr.edge_frequency <= 1))
        assert np.all((sr.instability >= 0) & (sr.instability <= 0.5))
        assert not sr.edge_frequency[0].any()
        assert sr.lambdas[0] == sr.path.values[0]
        assert sr.monotone_instability()[sr.index_selected] <= sr.beta

    @pytest.mark.parametrize("method", ["mb", "glasso"])
    def test_deterministic(self, method):
        x, _ = _gaussian(1)
        a = stars_select(x, method, subsamples=12, seed=5)
        b = stars_select(x, method, subsamples=12, seed=5)
        assert np.array_equal(a.edge_frequency, b.edge_frequency)
        assert a.index_selected == b.index_selected
        assert rank_edges(a) == rank_edges(b)

    @pytest.mark.parametrize("method", ["mb", "glasso"])
    def test_early_stop_matches_full_path(self, method):
        x, _ = _gaussian(2)
        full = stars_select(x, method, subsamples=15, seed=3, early_stop=False)
        fast = stars_select(x, method, subsamples=15, seed=3, early_stop=True)
        k = len(fast.lambdas)
        assert fast.index_selected == full.index_selected
        assert np.array_equal(fast.edge_frequency, full.edge_frequency[:k])

    def test_duplicated_rows(self):
        x, _ = _gaussian(3, n=60)
        rng = np.random.default_rng(0)
        subs = [np.sort(rng.choice(60, 48, replace=False)) for _ in range(12)]
        doubled = np.vstack([x, x])
        subs2 = [np.concatenate([ix, ix + 60]) for ix in subs]
        a = stars_select(x, "mb", subsample_indices=subs)
        b = stars_select(doubled, "mb", subsample_indices=subs2)
        assert a.index_selected == b.index_selected
        assert a.lambda_selected == pytest.approx(b.lambda_selected, rel=1e-12)
        assert np.array_equal(a.edge_frequency, b.edge_frequency)

    def test_unreachable_bound_warns(self):
        x, _ = _gaussian(4)
        with pytest.warns(RuntimeWarning):
            sr = stars_select(x, "mb", subsamples=5, beta=-1.0)
        assert not sr.bound_met
        assert sr.index_selected == len(sr.lambdas) - 1

    def test_too_few_rows(self):
        x, _ = _gaussian(5, n=12)
        with pytest.raises(DataError):
            stars_select(x, "mb", fraction=0.8)

    def test_constant_column(self):
        x, _ = _gaussian(6)
        x[:, 3] = 1.0
        with pytest.raises(ConstantColumn):
            stars_select(x, "mb")

    def test_recovers_band_support(self):
        x, gm = _gaussian(7, p=12, n=600)
        sr = stars_select(x, "mb", subsamples=20, seed=0)
        net = selected_network(x, sr)
        assert gm.adjacency.edges <= net.edge_set()

    def test_selected_mb_network_matches_refit(self):
        x, _ = _gaussian(8)
        sr = stars_select(x, "mb", subsamples=10, seed=0)
        net = selected_network(x, sr)
        nb = mb_fit(x, sr.path)
        ref = mb_graph(nb.at(sr.index_selected))
        assert net.edge_set() == ref.edge_set()
        for e, rec in net.edges.items():
            assert rec["weight"] == pytest.approx(ref.edges[e]["weight"], abs=1e-7)
            assert rec["stability"] == sr.frequency_matrix()[e]

    def test_selected_glasso_network(self):
        x, _ = _gaussian(9)
        sr = stars_select(x, "glasso", subsamples=10, seed=0)
        net = selected_network(x, sr)
        theta = net.meta["theta"]
        assert net.edge_set() == {(i, j) for i, j in zip(*np.nonzero(np.triu(theta, 1)))}


class TestRanking:
    def test_frequency_order(self):
        sr = _result([[0.0, 0.0, 0.0], [0.4, 0.0, 1.0]], 3)
        assert [r[:2] for r in rank_edges(sr)][:2] == [(1, 2), (0, 1)]

    def test_all_zero_is_lexicographic(self):
        sr = _result([[0.0] * 6], 4)
        assert [r[:2] for r in rank_edges(sr)] == [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]

    def test_path_sum_breaks_ties(self):
        sr = _result([[0.2, 0.0, 0.0], [1.0, 0.0, 1.0]], 3)
        assert [r[:2] for r in rank_edges(sr)] == [(0, 1), (1, 2), (0, 2)]

    def test_relabeling(self):
        x, _ = _gaussian(10)
        perm = np.random.default_rng(1).permutation(x.shape[1])
        subs = [np.sort(np.random.default_rng(k).choice(120, 96, replace=False)) for k in range(10)]
        a = stars_select(x, "mb", subsample_indices=subs)
        b = stars_select(x[:, perm], "mb", subsample_indices=subs)
        fa, fb = a.frequency_matrix(), b.frequency_matrix()
        assert a.index_selected == b.index_selected
        assert np.array_equal(fa[np.ix_(perm, perm)], fb)


class TestPearson:
    def test_threshold_zero_is_complete(self):
        x = np.random.default_rng(0).normal(size=(20, 5))
        net, _ = pearson_network(x, 0.0)
        assert len(net) == 10

    def test_perfect_pair_at_threshold_one(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=30)
        x = np.column_stack([a, 3 * a + 1, rng.normal(size=30)])
        net, _ = pearson_network(x, 1.0)
        assert net.edge_set() == {(0, 1)}

    def test_pvalues_match_scipy(self):
        x = np.random.default_rng(2).normal(size=(25, 4))
        for i, j, a, r, pv in pearson_rank(x):
            ref = stats.pearsonr(x[:, i], x[:, j])
            assert r == pytest.approx(ref.statistic, abs=1e-12)
            assert pv == pytest.approx(ref.pvalue, rel=1e-8)
        assert pearson_pvalues(0.0, 10) == pytest.approx(1.0)

    def test_rank_is_by_abs_correlation(self):
        x = np.random.default_rng(3).normal(size=(25, 6))
        a = [r[2] for r in pearson_rank(x)]
        assert a == sorted(a, reverse=True)

    def test_needs_three_samples(self):
        with pytest.raises(DataError):
            pearson_rank(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_constant_column(self):
        with pytest.raises(ConstantColumn):
            pearson_rank(np.array([[1.0, 2.0], [1.0, 1.0], [1.0, 3.0]]))

    def test_negative_threshold(self):
        with pytest.raises(ValueError):
            pearson_network(np.eye(3), -0.1)


class TestToyHub:
    def test_pearson_errors_named(self):
        r = bm.toy_hub_demo(0)
        assert r["pearson"]["0.35"]["spurious"] == [(1, 3)]
        assert (0, 2) in r["pearson"]["0.5"]["missed"]

    def test_inverse_route(self):
        r = bm.toy_hub_demo(0)
        assert r["inverse_covariance"]["edges"] == [(0, 2), (1, 2), (2, 3)]

    def test_seeded_rerun(self):
        assert bm.toy_hub_demo(3) == bm.toy_hub_demo(3)

    def test_star_correlation_has_star_inverse(self):
        theta = np.linalg.inv(bm.toy_correlation())
        support = {(i, j) for i in range(4) for j in range(i + 1, 4) if abs(theta[i, j]) > 1e-12}
        assert support == set(bm.TOY_TRUTH)

    def test_stars_mb_finds_hub_in_most_seeds(self):
        hits = sum(bm.toy_hub_demo(s)["stars_mb"]["recovered"] for s in range(20))
        assert hits > 10

    @pytest.mark.xfail(strict=True, reason=(
        "measured: exact hub recovery in 13 of 20 seeds; with four nodes one unstable edge already "
        "costs 1/12 of total instability, above beta = 0.05, so some seeds stop at a sparser graph"))
    def test_stars_mb_finds_hub_in_every_seed(self):
        assert all(bm.toy_hub_demo(s)["stars_mb"]["recovered"] for s in range(20))


@pytest.fixture(scope="module")
def counts():
    gm = make_precision(generate("band", 12, 12, 0), kappa=10.0, seed=0)
    return norta_counts(SynthesisSpec(gm.correlation, synthetic_marginals(12, 0), 200, 1))


class TestPipeline:

    @pytest.mark.parametrize("method", ["mb", "glasso", "pearson"])
    def test_outputs(self, counts, method):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = infer(counts, method, subsamples=10)
        assert len(res.ranked) == 66
        assert {(r[0], r[1]) for r in res.ranked} == {(i, j) for i in range(12) for j in range(i + 1, 12)}
        rows = res.edge_rows()
        assert [r[4] for r in rows] == sorted(r[4] for r in rows)
        for i, j, w, s, _ in rows:
            assert i < j and np.isfinite(w) and 0 <= s <= 1
        man = res.manifest()
        assert man["edges"] == len(res.network)
        if method != "pearson":
            assert len(man["lambda_path"]) == 30 and len(man["instability"]) == man["lambdas_computed"]

    def test_unknown_method(self, counts):
        with pytest.raises(ValueError):
            infer(counts, "sparcc")

    def test_raw_transform(self):
        x = np.abs(np.random.default_rng(0).normal(size=(40, 5))) + 1
        res = infer(x, "mb", transform="none", subsamples=5)
        assert res.network.p == 5
