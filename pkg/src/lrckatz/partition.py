"""Vertex-separator partitioning and the 2x2 block splitting of I - alpha*A.

The node set is reordered so that interior nodes come first, grouped into
parts with no edges between different parts, followed by the separator.
Under that ordering M = I - alpha*A becomes

    [ M11  M12 ]
    [ M12' M22 ]

with M11 block diagonal (one block per part), which is what makes the
factorization and the Schur-complement solve cheap.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graph import InadmissibleAlphaError, connected_components


class DisconnectedGraphError(ValueError):
    """Partitioning requires a connected graph; extract a component first."""


@dataclass(frozen=True)
class PartitionConfig:
    """Partitioner knobs.

    max_part_size of None means max(64, n // 256). max_separator_fraction
    only triggers a warning flag, never a failure. max_recursion_depth
    bounds the bisection depth; leftover oversized pieces become parts.
    """

    max_part_size: int | None = None
    max_separator_fraction: float = 0.15
    max_recursion_depth: int = 64

    def resolved_part_size(self, n):
        if self.max_part_size is not None:
            if self.max_part_size < 1:
                raise ValueError("max_part_size must be >= 1")
            return self.max_part_size
        return max(64, n // 256)


@dataclass(frozen=True, eq=False)
class BlockPartition:
    """Interior-then-separator node ordering.

    perm[new_pos] = internal node id; inv_perm is its inverse.
    part_boundaries are offsets into the first n1 positions, one slice per
    part. separator_overflow records that the separator exceeded the
    configured fraction of n.
    """

    perm: np.ndarray
    inv_perm: np.ndarray
    part_boundaries: np.ndarray
    n1: int
    n2: int
    separator_overflow: bool = False

    @property
    def num_parts(self):
        return self.part_boundaries.size - 1

    @property
    def n(self):
        return self.n1 + self.n2

    def part_slice(self, p):
        return slice(int(self.part_boundaries[p]), int(self.part_boundaries[p + 1]))

    def separator_nodes(self):
        return self.perm[self.n1 :]


def _bfs_levels(g, nodes, in_sub, start):
    """BFS level sets of the subgraph induced on ``nodes``, from ``start``."""
    seen = {start}
    levels = [[start]]
    while True:
        nxt = []
        for u in levels[-1]:
            for w in g.neighbors(u):
                w = int(w)
                if in_sub[w] and w not in seen:
                    seen.add(w)
                    nxt.append(w)
        if not nxt:
            return levels
        nxt.sort()
        levels.append(nxt)


def _greedy_vertex_cover(cut_edges):
    """Cover all cut edges picking the highest-degree endpoint first.

    Ties go to the smaller node id. Returns a sorted list of nodes.
    """
    incident = {}
    for e, (a, b) in enumerate(cut_edges):
        incident.setdefault(a, set()).add(e)
        incident.setdefault(b, set()).add(e)
    uncovered = set(range(len(cut_edges)))
    cover = []
    while uncovered:
        best = min(incident, key=lambda v: (-len(incident[v]), v))
        cover.append(best)
        for e in incident.pop(best):
            uncovered.discard(e)
            a, b = cut_edges[e]
            other = b if a == best else a
            if other in incident:
                incident[other].discard(e)
                if not incident[other]:
                    del incident[other]
        # prune emptied entries left by discards
        incident = {v: es for v, es in incident.items() if es}
    cover.sort()
    return cover


def _split_once(g, nodes, in_sub):
    """One bisection step. Returns (side_a, side_b, separator_nodes)."""
    levels = _bfs_levels(g, nodes, in_sub, nodes[0])
    sizes = np.array([len(l) for l in levels])
    cum = np.cumsum(sizes)
    half = len(nodes) / 2.0
    k = int(np.searchsorted(cum, half))
    if k >= len(levels) - 1:
        k = len(levels) - 2  # keep the far side nonempty
    a_set = set()
    for l in levels[: k + 1]:
        a_set.update(l)
    cut = []
    for u in levels[k]:
        for w in g.neighbors(u):
            w = int(w)
            if in_sub[w] and w not in a_set:
                cut.append((u, w))
    sep = _greedy_vertex_cover(cut)
    sep_set = set(sep)
    side_a = [u for u in nodes if u in a_set and u not in sep_set]
    side_b = [u for u in nodes if u not in a_set and u not in sep_set]
    return side_a, side_b, sep


def _components_of(g, nodes, in_sub):
    """Connected components of the induced subgraph, ordered by min node id."""
    comps = []
    seen = set()
    for s in nodes:
        if s in seen:
            continue
        seen.add(s)
        comp = [s]
        frontier = [s]
        while frontier:
            nxt = []
            for u in frontier:
                for w in g.neighbors(u):
                    w = int(w)
                    if in_sub[w] and w not in seen:
                        seen.add(w)
                        nxt.append(w)
            comp.extend(nxt)
            frontier = nxt
        comp.sort()
        comps.append(comp)
    return comps


def partition_vertex_separator(g, cfg=None):
    """Recursive bisection into bounded parts plus a vertex separator.

    Each oversized piece is split by a BFS frontier from its smallest node:
    levels are accumulated until they hold at least half the piece (never
    all of it), the edges crossing to the remaining levels form the cut,
    and a greedy vertex cover of the cut joins the separator. Both sides
    are then decomposed into connected components and recursed on.

    Deterministic for a fixed graph and config. Raises
    DisconnectedGraphError on disconnected input.
    """
    if g.n == 0:
        raise ValueError("empty graph")
    cfg = cfg or PartitionConfig()
    _, count = connected_components(g)
    if count != 1:
        raise DisconnectedGraphError(
            f"graph has {count} components; extract the largest component first"
        )
    limit = cfg.resolved_part_size(g.n)
    in_sub = np.zeros(g.n, dtype=bool)
    parts = []
    separator = []
    stack = [(list(range(g.n)), cfg.max_recursion_depth)]
    while stack:
        nodes, depth = stack.pop()
        if len(nodes) <= limit or depth <= 0 or len(nodes) < 2:
            parts.append(nodes)
            continue
        in_sub[nodes] = True
        side_a, side_b, sep = _split_once(g, nodes, in_sub)
        separator.extend(sep)
        for u in sep:
            in_sub[u] = False
        comps_a = _components_of(g, side_a, in_sub)
        comps_b = _components_of(g, side_b, in_sub)
        in_sub[side_a] = False
        in_sub[side_b] = False
        # LIFO stack: push b-side first so a-side components are handled first
        for comp in reversed(comps_b):
            stack.append((comp, depth - 1))
        for comp in reversed(comps_a):
            stack.append((comp, depth - 1))
    separator.sort()
    n2 = len(separator)
    n1 = g.n - n2
    perm = np.empty(g.n, dtype=np.int64)
    boundaries = np.zeros(len(parts) + 1, dtype=np.int64)
    pos = 0
    for p, nodes in enumerate(parts):
        perm[pos : pos + len(nodes)] = nodes
        pos += len(nodes)
        boundaries[p + 1] = pos
    perm[n1:] = separator
    inv = np.empty(g.n, dtype=np.int64)
    inv[perm] = np.arange(g.n)
    overflow = n2 > cfg.max_separator_fraction * g.n
    if overflow:
        warnings.warn(
            f"separator holds {n2}/{g.n} nodes, above the configured fraction",
            stacklevel=2,
        )
    return BlockPartition(
        perm=perm,
        inv_perm=inv,
        part_boundaries=boundaries,
        n1=n1,
        n2=n2,
        separator_overflow=overflow,
    )


def check_partition(g, bp):
    """True iff bp is a valid interior/separator ordering for g."""
    n = g.n
    if bp.n1 + bp.n2 != n or bp.perm.shape != (n,) or bp.inv_perm.shape != (n,):
        return False
    if not np.array_equal(np.sort(bp.perm), np.arange(n)):
        return False
    if not np.array_equal(bp.perm[bp.inv_perm], np.arange(n)):
        return False
    b = bp.part_boundaries
    if b[0] != 0 or b[-1] != bp.n1 or np.any(np.diff(b) < 0):
        return False
    part_of = np.full(n, -1, dtype=np.int64)  # -1 marks the separator
    for p in range(bp.num_parts):
        part_of[bp.perm[bp.part_slice(p)]] = p
    for u in range(n):
        pu = part_of[u]
        if pu < 0:
            continue
        for w in g.neighbors(u):
            pw = part_of[w]
            if pw >= 0 and pw != pu:
                return False
    return True


def build_blocks(g, alpha, bp):
    """Slice M = I - alpha*A into (M11, M12, M22) under the partition order.

    Returns scipy CSR matrices of shapes (n1, n1), (n1, n2), (n2, n2).
    alpha must be nonnegative and, once the graph has any edge, below 1
    (the norm is then at least 1, so larger alpha cannot be admissible);
    the exact SPD range check against the spectral norm is the caller's
    responsibility since the norm is not known here.
    """
    if alpha < 0.0 or (alpha >= 1.0 and g.num_edges > 0):
        raise InadmissibleAlphaError(f"alpha={alpha} outside the feasible range")
    m = sp.identity(g.n, format="csr") - alpha * g.adjacency()
    m = m[bp.perm, :][:, bp.perm].tocsr()
    m.eliminate_zeros()  # alpha == 0 leaves explicit zeros otherwise
    n1 = bp.n1
    m11 = m[:n1, :n1].tocsr()
    m12 = m[:n1, n1:].tocsr()
    m22 = m[n1:, n1:].tocsr()
    for blk in (m11, m12, m22):
        blk.sort_indices()
    return m11, m12, m22
