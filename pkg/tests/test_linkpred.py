"""Link prediction tests: rankers, correlation, temporal split, recall."""

import numpy as np
import pytest
from scipy import stats

from lrckatz import (
    EmptyPositivesError,
    LinkPredDataset,
    PartitionConfig,
    build_index,
    evaluate_recall,
    evaluate_recall_sweep,
    from_edges,
    katz_rank,
    largest_connected_component,
    pearson,
    sparse_katz,
    temporal_split,
)
from lrckatz.linkpred import BUCKET_LABELS
from lrckatz.oracle import dense_katz_matrix

from synth import er_graph, random_graph


def path(n):
    return from_edges([(i, i + 1) for i in range(n - 1)])


def p4_index():
    g = path(4)
    return g, build_index(g, seed=0)


def test_katz_rank_path():
    g, idx = p4_index()
    pred = katz_rank(idx, 0, 5, tol=1e-12)
    assert pred.method == "katz"
    assert [c for c, _ in pred.candidates] == [2, 3]
    k = dense_katz_matrix(g, idx.alpha)
    assert pred.candidates[0][1] == pytest.approx(k[2, 0], abs=1e-10)
    assert pred.candidates[1][1] == pytest.approx(k[3, 0], abs=1e-10)
    with pytest.raises(ValueError):
        katz_rank(idx, 0, 0)


def test_katz_rank_breaks_ties_by_id():
    g = from_edges([(0, i) for i in range(1, 5)])
    idx = build_index(g, seed=0)
    pred = katz_rank(idx, 1, 5, tol=1e-12)
    assert [c for c, _ in pred.candidates] == [2, 3, 4]


def test_katz_rank_matches_dense_order():
    g = largest_connected_component(er_graph(50, 0.08, np.random.default_rng(3)))
    idx = build_index(g, ell=5, cfg=PartitionConfig(max_part_size=10), seed=1)
    k = dense_katz_matrix(g, idx.alpha)
    for q_int in (0, g.n // 2):
        scores = k[:, q_int]
        neigh = set(int(w) for w in g.neighbors(q_int))
        cand = np.array([i for i in range(g.n) if i != q_int and i not in neigh])
        order = np.lexsort((cand, -scores[cand]))
        want = [int(g.original_ids[c]) for c in cand[order]]
        pred = katz_rank(idx, int(g.original_ids[q_int]), g.n, tol=1e-12)
        assert [c for c, _ in pred.candidates] == want


def test_pearson_closed_forms():
    assert pearson([1, 2, 3], [10, 20, 30]) == pytest.approx(1.0, abs=1e-12)
    assert pearson([1, 2, 3], [5, 3, 1]) == pytest.approx(-1.0, abs=1e-12)
    assert pearson([1, 2, 3, 4], [7, 7, 7, 7]) == 0.0
    got = pearson([1, 2, 3, 4, 5], [2, 1, 4, 3, 7])
    assert got == pytest.approx(0.824163383692134, abs=1e-12)
    with pytest.raises(ValueError):
        pearson([1.0], [2.0])
    with pytest.raises(ValueError):
        pearson([1.0, 2.0], [1.0, 2.0, 3.0])


def test_pearson_affine_invariance():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(20)
    y = rng.standard_normal(20)
    r = pearson(x, y)
    assert pearson(3.5 * x + 2.0, y) == pytest.approx(r, abs=1e-12)
    assert pearson(-2.0 * x + 1.0, y) == pytest.approx(-r, abs=1e-12)
    assert pearson(y, x) == pytest.approx(r, abs=1e-12)


def dense_sparse_katz(g, k, q_int, s, T):
    """Mirror of the reranker computed straight from the dense Katz matrix."""
    n = g.n
    scores = k[:, q_int]
    neigh = set(int(w) for w in g.neighbors(q_int))
    cand = np.array([i for i in range(n) if i != q_int and i not in neigh])
    order = np.lexsort((cand, -scores[cand]))
    top = cand[order[:s]]
    if top.size == 0:
        return [], {}
    all_order = np.lexsort((np.arange(n), -scores))
    anchors = [i for i in all_order if i != q_int][:T]
    ref = np.concatenate([[scores[q_int]], scores[anchors]])
    profs = np.empty((T + 1, top.size))
    profs[0] = scores[top]
    for i, a in enumerate(anchors):
        profs[1 + i] = k[top, a]
    corr = np.array([pearson(ref, profs[:, j]) for j in range(top.size)])
    rerank = np.lexsort((top, -scores[top], -corr))
    ranked = [int(top[i]) for i in rerank]
    return ranked, {int(t): float(c) for t, c in zip(top, corr)}


def test_sparse_katz_matches_dense_mirror():
    g = largest_connected_component(er_graph(40, 0.1, np.random.default_rng(5)))
    idx = build_index(g, ell=4, cfg=PartitionConfig(max_part_size=8), seed=2)
    k = dense_katz_matrix(g, idx.alpha)
    for q_int in (1, g.n - 2):
        for s, T in ((3, None), (6, 4)):
            t_eff = s + 1 if T is None else T
            want, corr_by = dense_sparse_katz(g, k, q_int, s, t_eff)
            pred = sparse_katz(idx, int(g.original_ids[q_int]), s, T=T, tol=1e-12)
            got = [idx.internal_id(c) for c, _ in pred.candidates]
            assert sorted(got) == sorted(want)
            for pos in range(len(got)):
                if got[pos] != want[pos]:  # only swaps of numerically tied keys
                    assert abs(corr_by[got[pos]] - corr_by[want[pos]]) < 1e-9
            for (c, r), t in zip(pred.candidates, got):
                assert r == pytest.approx(corr_by[t], abs=1e-9)


def test_sparse_katz_keeps_the_katz_candidate_set():
    g = largest_connected_component(er_graph(40, 0.1, np.random.default_rng(6)))
    idx = build_index(g, ell=4, seed=2)
    q = int(g.original_ids[0])
    base = {c for c, _ in katz_rank(idx, q, 8, tol=1e-12).candidates}
    rer = [c for c, _ in sparse_katz(idx, q, 8, tol=1e-12).candidates]
    assert set(rer) == base and len(rer) == len(base)
    assert sparse_katz(idx, q, 1, tol=1e-12).method == "sparse-katz"
    assert len(sparse_katz(idx, q, 1, tol=1e-12).candidates) == 1


def test_sparse_katz_symmetric_candidates_tie():
    g = from_edges([(0, i) for i in range(1, 5)])
    idx = build_index(g, seed=0)
    pred = sparse_katz(idx, 1, 3, tol=1e-12)
    ids = [c for c, _ in pred.candidates]
    corrs = [r for _, r in pred.candidates]
    assert ids == [2, 3, 4]
    assert corrs[0] == pytest.approx(corrs[1], abs=1e-12)
    assert corrs[1] == pytest.approx(corrs[2], abs=1e-12)


def test_sparse_katz_anchor_count_validation():
    _, idx = p4_index()
    with pytest.raises(ValueError):
        sparse_katz(idx, 0, 2, T=4)  # only 3 other nodes exist
    pred = sparse_katz(idx, 0, 2, T=3, tol=1e-12)
    assert len(pred.candidates) == 2


def test_temporal_split_basic():
    rows = [(0, 1, 0.0), (0, 2, 0.0), (1, 2, 5.0)]
    ds = temporal_split(rows, cutoff=0.0)
    assert ds.train.n == 3 and ds.train.num_edges == 2
    assert ds.positives == [(1, 2)]
    assert ds.buckets["1-3"] == [(1, 2)]
    assert ds.buckets["4-10"] == [] and ds.buckets[">10"] == []


def test_temporal_split_filters_and_dedupes():
    rows = [
        (0, 1, 0.0),
        (0, 2, 0.0),
        (1, 2, 5.0),
        (2, 1, 6.0),  # duplicate of (1, 2)
        (1, 1, 5.0),  # self loop
        (0, 1, 7.0),  # already a train edge
        (1, 9, 5.0),  # endpoint never trained
    ]
    ds = temporal_split(rows, cutoff=0.0)
    assert ds.positives == [(1, 2)]


def test_temporal_split_cutoff_edges():
    rows = [(0, 1, 0.0), (1, 2, 1.0)]
    with pytest.raises(ValueError):
        temporal_split(rows, cutoff=-0.5)
    ds = temporal_split(rows, cutoff=1.0)  # nothing left to predict
    assert ds.positives == []
    with pytest.raises(ValueError):
        temporal_split([], cutoff=0.0)


def test_temporal_split_keeps_largest_component():
    # two train components; the 4-node one wins, positives must stay inside
    rows = [
        (0, 1, 0.0), (1, 2, 0.0), (2, 3, 0.0),
        (10, 11, 0.0),
        (0, 3, 5.0), (10, 12, 5.0), (0, 10, 5.0),
    ]
    ds = temporal_split(rows, cutoff=0.0)
    assert sorted(int(x) for x in ds.train.original_ids) == [0, 1, 2, 3]
    assert ds.positives == [(0, 3)]


def test_temporal_split_matches_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(20):
        m = int(rng.integers(8, 30))
        rows = [
            (int(rng.integers(0, 9)), int(rng.integers(0, 9)), float(rng.integers(0, 6)))
            for _ in range(m)
        ]
        rows = [(u, v, t) for u, v, t in rows if u != v]
        if not rows:
            continue
        cutoff = float(np.median([t for _, _, t in rows]))
        train_pairs = {(min(u, v), max(u, v)) for u, v, t in rows if t <= cutoff}
        if not train_pairs:
            continue
        # largest component, ties broken toward the smallest node label
        nodes = sorted({x for p in train_pairs for x in p})
        seen, comps = set(), []
        for start in nodes:
            if start in seen:
                continue
            comp, stack = set(), [start]
            while stack:
                x = stack.pop()
                if x in comp:
                    continue
                comp.add(x)
                for a, b in train_pairs:
                    if a == x and b not in comp:
                        stack.append(b)
                    if b == x and a not in comp:
                        stack.append(a)
            seen |= comp
            comps.append(comp)
        keep = max(comps, key=lambda c: (len(c), -min(c)))
        want = sorted(
            {
                (min(u, v), max(u, v))
                for u, v, t in rows
                if t > cutoff
                and u != v
                and u in keep
                and v in keep
                and (min(u, v), max(u, v)) not in train_pairs
            }
        )
        ds = temporal_split(rows, cutoff)
        assert sorted(int(x) for x in ds.train.original_ids) == sorted(keep)
        assert sorted(ds.positives) == want
        deg = {int(x): 0 for x in keep}
        for a, b in train_pairs:
            if a in keep and b in keep:
                deg[a] += 1
                deg[b] += 1
        for pair in want:
            md = min(deg[pair[0]], deg[pair[1]])
            label = "1-3" if md <= 3 else ("4-10" if md <= 10 else ">10")
            assert pair in ds.buckets[label]


def p4_dataset(positives):
    g = path(4)
    buckets = {label: [] for label in BUCKET_LABELS}
    for u, v in positives:
        du = g.degree(g.internal_id(u))
        dv = g.degree(g.internal_id(v))
        md = min(du, dv)
        buckets["1-3" if md <= 3 else ("4-10" if md <= 10 else ">10")].append((u, v))
    return g, LinkPredDataset(train=g, positives=positives, buckets=buckets)


def test_evaluate_recall_perfect_and_zero():
    g, ds = p4_dataset([(0, 2)])
    idx = build_index(g, seed=0)
    out = evaluate_recall(idx, "katz", ds, s=1, tol=1e-12)
    assert out["overall"].mean == 1.0 and out["overall"].n_queries == 2
    assert out["1-3"].mean == 1.0 and out["1-3"].n_queries == 2
    assert out["4-10"].n_queries == 0 and np.isnan(out["4-10"].mean)

    g, ds = p4_dataset([(0, 3)])
    out1 = evaluate_recall(idx, "katz", ds, s=1, tol=1e-12)
    assert out1["overall"].mean == 0.0
    out2 = evaluate_recall(idx, "katz", ds, s=2, tol=1e-12)
    assert out2["overall"].mean == 1.0  # recall@s grows with s


def test_evaluate_recall_query_sample_and_errors():
    g, ds = p4_dataset([(0, 2)])
    idx = build_index(g, seed=0)
    out = evaluate_recall(idx, "katz", ds, s=1, query_sample=[0], tol=1e-12)
    assert out["overall"].n_queries == 1 and out["overall"].std == 0.0
    with pytest.raises(ValueError):
        evaluate_recall(idx, "katz", ds, s=1, query_sample=[3])
    with pytest.raises(EmptyPositivesError):
        evaluate_recall(idx, "katz", LinkPredDataset(g, [], dict.fromkeys(BUCKET_LABELS, [])), s=1)
    with pytest.raises(ValueError):
        evaluate_recall(idx, "nope", ds, s=1)


def synthetic_dataset(seed=7, n=40):
    g = largest_connected_component(er_graph(n, 0.1, np.random.default_rng(seed)))
    rng = np.random.default_rng(seed + 1)
    existing = {(min(int(g.original_ids[u]), int(g.original_ids[w])),
                 max(int(g.original_ids[u]), int(g.original_ids[w])))
                for u in range(g.n) for w in g.neighbors(u)}
    positives = set()
    while len(positives) < 12:
        u, v = rng.choice(g.n, size=2, replace=False)
        pu, pv = int(g.original_ids[u]), int(g.original_ids[v])
        pair = (min(pu, pv), max(pu, pv))
        if pair not in existing:
            positives.add(pair)
    positives = sorted(positives)
    buckets = {label: [] for label in BUCKET_LABELS}
    for u, v in positives:
        md = min(g.degree(g.internal_id(u)), g.degree(g.internal_id(v)))
        buckets["1-3" if md <= 3 else ("4-10" if md <= 10 else ">10")].append((u, v))
    return g, LinkPredDataset(train=g, positives=positives, buckets=buckets)


def test_recall_monotone_in_s():
    g, ds = synthetic_dataset()
    idx = build_index(g, ell=4, seed=3)
    means = [
        evaluate_recall(idx, "katz", ds, s=s, tol=1e-10)["overall"].mean
        for s in (1, 5, 15, g.n)
    ]
    assert all(a <= b + 1e-12 for a, b in zip(means, means[1:]))
    assert means[-1] == 1.0  # every candidate fits at s = n


def test_sweep_agrees_with_single_evaluations():
    g, ds = synthetic_dataset()
    idx = build_index(g, ell=4, seed=3)
    s_values = (1, 3, 5)
    rows = evaluate_recall_sweep(idx, ("katz", "sparse-katz"), ds, s_values, tol=1e-10)
    assert len(rows) == 2 * 4 * 3  # methods x labels x sizes
    for method, label, s, stat in rows:
        single = evaluate_recall(idx, method, ds, s=s, pool=max(s_values), tol=1e-10)
        want = single[label]
        if np.isnan(want.mean):
            assert np.isnan(stat.mean) and stat.n_queries == 0
        else:
            assert stat.mean == pytest.approx(want.mean, abs=1e-12)
            assert stat.std == pytest.approx(want.std, abs=1e-12)
            assert stat.n_queries == want.n_queries


def test_sweep_is_thread_count_invariant():
    g, ds = synthetic_dataset(seed=9)
    idx = build_index(g, ell=4, seed=3)
    rows1 = evaluate_recall_sweep(idx, ("sparse-katz",), ds, (1, 4), tol=1e-10, workers=1)
    rows4 = evaluate_recall_sweep(idx, ("sparse-katz",), ds, (1, 4), tol=1e-10, workers=4)
    assert len(rows1) == len(rows4)
    for (m1, l1, s1, st1), (m4, l4, s4, st4) in zip(rows1, rows4):
        assert (m1, l1, s1) == (m4, l4, s4)
        assert st1.n_queries == st4.n_queries
        assert (st1.mean == st4.mean) or (np.isnan(st1.mean) and np.isnan(st4.mean))
        assert (st1.std == st4.std) or (np.isnan(st1.std) and np.isnan(st4.std))


def test_property_ranking_and_correlation_suite():
    # 200 cases: pearson against the scipy oracle plus its invariances, and
    # ranking prefixes: a smaller s must be a prefix of a larger s ranking,
    # with the reranker permuting exactly the katz top-s set
    rng = np.random.default_rng(21)
    for i in range(200):
        x = rng.standard_normal(int(rng.integers(2, 30)))
        y = rng.standard_normal(x.size)
        r = pearson(x, y)
        want = stats.pearsonr(x, y).statistic if x.size > 1 else 0.0
        assert r == pytest.approx(float(want), abs=1e-10)
        assert -1.0 <= r <= 1.0
        a = float(rng.uniform(0.1, 5.0))
        assert pearson(a * x + 1.0, y) == pytest.approx(r, abs=1e-9)
        if i % 10 == 0:  # graph checks are dearer; every tenth case
            g = random_graph(rng, 8, 30)
            idx = build_index(g, seed=1)
            q = int(g.original_ids[int(rng.integers(0, g.n))])
            full = katz_rank(idx, q, g.n, tol=1e-12)
            small = katz_rank(idx, q, 3, tol=1e-12)
            assert small.candidates == full.candidates[:3]
            s = min(4, max(1, len(full.candidates)))
            base = {c for c, _ in full.candidates[:s]}
            rer = sparse_katz(idx, q, s, tol=1e-12)
            assert {c for c, _ in rer.candidates} == base
            ranks = [r for _, r in rer.candidates]
            assert all(b <= a + 1e-12 for a, b in zip(ranks, ranks[1:]))
