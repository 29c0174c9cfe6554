"""Link prediction on a temporal split, ranked by exact Katz proximity.

Two rankers share one candidate rule (all non-neighbors of the query,
ordered by Katz score): katz_rank returns that ordering directly, while
sparse_katz reranks the candidates by how strongly their proximity profile
over a set of anchor nodes correlates with the query's own profile.
Recall against the post-cutoff edges is the quality measure; queries are
bucketed by the minimum train degree of the endpoint pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import solver
from .graph import Graph, from_edges, largest_connected_component

BUCKET_LABELS = ("1-3", "4-10", ">10")


class EmptyPositivesError(ValueError):
    """The split left no usable positive pairs to evaluate."""


@dataclass(eq=False)
class RankedPrediction:
    """Ranked link candidates for one query node.

    candidates are (original id, ranking score) with nonincreasing scores;
    the query and its existing neighbors are excluded. method records which
    ranker produced it.
    """

    query: int
    candidates: list
    method: str


@dataclass(eq=False)
class LinkPredDataset:
    """Train graph plus held-out positive pairs, all in original ids.

    positives hold (u, v) with u < v, both inside the train graph and not
    train edges. buckets maps a degree-bucket label to its subset of
    positives, keyed by the smaller train degree of the two endpoints.
    """

    train: Graph
    positives: list
    buckets: dict


def _bucket_of(min_degree):
    if min_degree <= 3:
        return "1-3"
    if min_degree <= 10:
        return "4-10"
    return ">10"


def temporal_split(edges_with_time, cutoff):
    """Split timestamped edges into a train graph and positive pairs.

    edges_with_time is an iterable of (u, v, t) rows. Edges with t <=
    cutoff form the train graph (largest connected component of it);
    pairs appearing only after the cutoff, with both endpoints in the
    train graph, become positives. A cutoff before the first timestamp
    leaves no train edges and raises ValueError; a cutoff at or past the
    last timestamp is allowed here and fails later, in evaluation, for
    having no positives.
    """
    rows = list(edges_with_time)
    if not rows:
        raise ValueError("no timestamped edges")
    arr = np.asarray([(int(u), int(v), float(t)) for u, v, t in rows], dtype=np.float64)
    times = arr[:, 2]
    if cutoff < times.min():
        raise ValueError("cutoff precedes every edge; train split is empty")
    train_rows = arr[times <= cutoff]
    test_rows = arr[times > cutoff]
    train_pairs = train_rows[:, :2].astype(np.int64)
    ids = np.unique(train_pairs)
    compact = np.searchsorted(ids, train_pairs)
    g = from_edges(compact, n=ids.size, original_ids=ids)
    g = largest_connected_component(g)
    in_train = set(int(x) for x in g.original_ids)
    train_edges = set()
    for u in range(g.n):
        ou = int(g.original_ids[u])
        for w in g.neighbors(u):
            if w > u:
                train_edges.add((ou, int(g.original_ids[w])))
    positives = []
    seen = set()
    for u, v, _ in test_rows:
        u, v = int(u), int(v)
        if u == v:
            continue
        pair = (u, v) if u < v else (v, u)
        if pair in seen or pair in train_edges:
            continue
        if pair[0] in in_train and pair[1] in in_train:
            seen.add(pair)
            positives.append(pair)
    buckets = {label: [] for label in BUCKET_LABELS}
    for pair in positives:
        du = g.degree(g.internal_id(pair[0]))
        dv = g.degree(g.internal_id(pair[1]))
        buckets[_bucket_of(min(du, dv))].append(pair)
    return LinkPredDataset(train=g, positives=positives, buckets=buckets)


def pearson(x, y):
    """Pearson correlation of two equal-length vectors.

    Returns 0.0 when either vector is constant (zero variance); the
    result is clipped into [-1, 1] against roundoff.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError("inputs must be equal-length vectors")
    if x.size < 2:
        raise ValueError("need at least two samples")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = np.linalg.norm(xc)
    sy = np.linalg.norm(yc)
    if sx == 0.0 or sy == 0.0:
        return 0.0
    return float(np.clip((xc @ yc) / (sx * sy), -1.0, 1.0))


def _query_state(idx, q, tol):
    """Scores plus the query's internal id and internal neighbor ids."""
    kv, _ = solver.query(idx, q, tol=tol)
    internal = idx.internal_id(q)
    rhs = idx.rhs_for_position(idx.bp.inv_perm[internal])
    neighbors = idx.bp.perm[np.flatnonzero(rhs > idx.alpha / 2.0)]
    return kv.scores, internal, neighbors


def _candidate_order(n, scores, internal, neighbors, s):
    """Top-s non-neighbor candidates by (score desc, id asc)."""
    mask = np.ones(n, dtype=bool)
    mask[internal] = False
    mask[neighbors] = False
    cand = np.flatnonzero(mask)
    order = np.lexsort((cand, -scores[cand]))
    return cand[order[: s if s is not None else cand.size]]


def katz_rank(idx, q, s, tol=1e-10):
    """Top-s predicted links for q, ranked by exact Katz score."""
    if s < 1:
        raise ValueError("s must be >= 1")
    scores, internal, neighbors = _query_state(idx, q, tol)
    top = _candidate_order(idx.n, scores, internal, neighbors, s)
    cands = [(int(idx.id_map[x]), float(scores[x])) for x in top]
    return RankedPrediction(query=int(q), candidates=cands, method="katz")


def sparse_katz(idx, q, s, T=None, tol=1e-10):
    """Rerank the top-s Katz candidates by anchor-profile correlation.

    The anchors are the T nodes closest to q (neighbors included, q
    excluded). Each candidate x gets a profile of proximities to
    [q, anchors...]; candidates are ordered by Pearson correlation with
    q's own profile, ties broken by Katz score, then id. T defaults to
    s + 1 and must leave at least two profile entries.
    """
    if s < 1:
        raise ValueError("s must be >= 1")
    if T is None:
        T = s + 1
    if T < 1:
        raise ValueError("need at least one anchor")
    if T > idx.n - 1:
        raise ValueError(f"T={T} anchors not available on {idx.n} nodes")
    scores, internal, neighbors = _query_state(idx, q, tol)
    top = _candidate_order(idx.n, scores, internal, neighbors, s)
    if top.size == 0:
        return RankedPrediction(query=int(q), candidates=[], method="sparse-katz")
    all_ids = np.arange(idx.n)
    order = np.lexsort((all_ids, -scores))
    anchors = [x for x in order if x != internal][:T]
    ref = np.empty(T + 1)
    ref[0] = scores[internal]
    ref[1:] = scores[anchors]
    profiles = np.empty((T + 1, top.size))
    profiles[0] = scores[top]
    for i, t_int in enumerate(anchors):
        anchor_scores, _ = solver.query(idx, int(idx.id_map[t_int]), tol=tol)
        profiles[1 + i] = anchor_scores.scores[top]
    ref_c = ref - ref.mean()
    sr = np.linalg.norm(ref_c)
    pc = profiles - profiles.mean(axis=0)
    sp_ = np.linalg.norm(pc, axis=0)
    corr = np.zeros(top.size)
    ok = (sp_ > 0.0) & (sr > 0.0)
    if sr > 0.0:
        corr[ok] = np.clip((ref_c @ pc[:, ok]) / (sr * sp_[ok]), -1.0, 1.0)
    rerank = np.lexsort((top, -scores[top], -corr))
    cands = [(int(idx.id_map[top[i]]), float(corr[i])) for i in rerank]
    return RankedPrediction(query=int(q), candidates=cands, method="sparse-katz")


@dataclass(frozen=True)
class RecallStat:
    mean: float
    std: float
    n_queries: int


def _rank_ids(idx, method, q, s, T, tol):
    if method == "katz":
        pred = katz_rank(idx, q, s, tol=tol)
    elif method == "sparse-katz":
        pred = sparse_katz(idx, q, s, T=T, tol=tol)
    else:
        raise ValueError(f"unknown method {method!r}")
    return [node for node, _ in pred.candidates]


def _aggregate(per_query):
    out = {}
    for label, recalls in per_query.items():
        if recalls:
            arr = np.asarray(recalls)
            out[label] = RecallStat(float(arr.mean()), float(arr.std()), len(recalls))
        else:
            out[label] = RecallStat(float("nan"), float("nan"), 0)
    return out


def evaluate_recall(idx, method, dataset, s, T=None, query_sample=None, pool=None, tol=1e-10):
    """Mean recall@s of a ranking method over the held-out positives.

    For each query node u with positive partners P(u), recall@s is the
    fraction of P(u) inside the method's top s. Results are reported
    overall and per degree bucket (a query contributes to a bucket only
    through partners whose pair falls in it). query_sample restricts to a
    subset of query nodes; pool fetches a longer ranking (>= s) that gets
    truncated at s, which is what lets a reranker act on a wider slate.

    Returns {label: RecallStat} with labels "overall" plus the degree
    buckets. Raises EmptyPositivesError when nothing is evaluable.
    """
    if not dataset.positives:
        raise EmptyPositivesError("no positive pairs to evaluate")
    partners = {}
    for u, v in dataset.positives:
        partners.setdefault(u, set()).add(v)
        partners.setdefault(v, set()).add(u)
    queries = sorted(partners) if query_sample is None else sorted(query_sample)
    for u in queries:
        if u not in partners:
            raise ValueError(f"query {u} has no positive partners")
    pair_bucket = {}
    for label in BUCKET_LABELS:
        for pair in dataset.buckets[label]:
            pair_bucket[pair] = label
    fetch = max(pool, s) if pool is not None else s
    per_query = {label: [] for label in ("overall", *BUCKET_LABELS)}
    if not queries:
        raise EmptyPositivesError("query sample is empty")
    for u in queries:
        top = set(_rank_ids(idx, method, u, fetch, T, tol)[:s])
        mine = partners[u]
        per_query["overall"].append(len(top & mine) / len(mine))
        for label in BUCKET_LABELS:
            in_bucket = {
                v for v in mine if pair_bucket[(u, v) if u < v else (v, u)] == label
            }
            if in_bucket:
                per_query[label].append(len(top & in_bucket) / len(in_bucket))
    return _aggregate(per_query)


def evaluate_recall_sweep(idx, methods, dataset, s_values, T=None, query_sample=None, tol=1e-10, workers=1):
    """Recall@s for several methods and sizes from one ranking per query.

    Each method ranks a pool of max(s_values) candidates once per query
    (anchor count T defaulting to pool + 1); every s then reads a prefix
    of that ranking. Queries can fan out over threads (the index is
    immutable); aggregation stays in query order, so the result does not
    depend on workers. Returns rows of (method, label, s, RecallStat).
    """
    if not dataset.positives:
        raise EmptyPositivesError("no positive pairs to evaluate")
    s_values = sorted(set(int(s) for s in s_values))
    pool = s_values[-1]
    partners = {}
    for u, v in dataset.positives:
        partners.setdefault(u, set()).add(v)
        partners.setdefault(v, set()).add(u)
    queries = sorted(partners) if query_sample is None else sorted(query_sample)
    if not queries:
        raise EmptyPositivesError("query sample is empty")
    pair_bucket = {}
    for label in BUCKET_LABELS:
        for pair in dataset.buckets[label]:
            pair_bucket[pair] = label
    rows = []
    for method in methods:
        per = {(label, s): [] for label in ("overall", *BUCKET_LABELS) for s in s_values}
        if workers > 1 and len(queries) > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=workers) as ex:
                ranked_lists = list(
                    ex.map(lambda u: _rank_ids(idx, method, u, pool, T, tol), queries)
                )
        else:
            ranked_lists = [_rank_ids(idx, method, u, pool, T, tol) for u in queries]
        for u, ranked in zip(queries, ranked_lists):
            mine = partners[u]
            by_label = {
                label: {v for v in mine if pair_bucket[(u, v) if u < v else (v, u)] == label}
                for label in BUCKET_LABELS
            }
            for s in s_values:
                top = set(ranked[:s])
                per[("overall", s)].append(len(top & mine) / len(mine))
                for label in BUCKET_LABELS:
                    if by_label[label]:
                        per[(label, s)].append(len(top & by_label[label]) / len(by_label[label]))
        for (label, s), recalls in sorted(per.items()):
            if recalls:
                arr = np.asarray(recalls)
                stat = RecallStat(float(arr.mean()), float(arr.std()), len(recalls))
            else:
                stat = RecallStat(float("nan"), float("nan"), 0)
            rows.append((method, label, s, stat))
    return rows
