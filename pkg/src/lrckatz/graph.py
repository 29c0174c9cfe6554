"""Graph loading and the spectral quantities that govern Katz admissibility.

Graphs are undirected, unweighted, and stored in CSR adjacency form with
contiguous internal ids. External (original) node ids are kept alongside so
results can always be reported in the caller's labelling.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class GraphParseError(ValueError):
    """Malformed edge-list input. Carries the offending 1-based line number."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class ConvergenceError(RuntimeError):
    """Iteration budget exhausted. ``estimate`` holds the last iterate's value."""

    def __init__(self, message, estimate):
        super().__init__(message)
        self.estimate = estimate


class InadmissibleAlphaError(ValueError):
    """Damping factor outside (0, 1/spectral_norm); the Katz series diverges."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected graph in CSR form.

    Attributes
    ----------
    n : int
        Number of nodes; internal ids are 0..n-1.
    row_offsets, col_indices : ndarray
        CSR adjacency. Each undirected edge appears in both rows, columns
        are sorted within a row, and there are no self loops or duplicates.
    original_ids : ndarray
        original_ids[i] is the external id of internal node i, strictly
        increasing.
    """

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    original_ids: np.ndarray

    @property
    def num_edges(self):
        return self.col_indices.size // 2

    def degree(self, u):
        return int(self.row_offsets[u + 1] - self.row_offsets[u])

    def degrees(self):
        return np.diff(self.row_offsets)

    def neighbors(self, u):
        return self.col_indices[self.row_offsets[u] : self.row_offsets[u + 1]]

    def adjacency(self):
        """Adjacency as a float64 scipy CSR matrix."""
        return sp.csr_matrix(
            (np.ones(self.col_indices.size), self.col_indices.copy(), self.row_offsets.copy()),
            shape=(self.n, self.n),
        )

    def internal_id(self, original):
        """Map an original id back to the internal id, or raise KeyError."""
        pos = int(np.searchsorted(self.original_ids, original))
        if pos == self.n or self.original_ids[pos] != original:
            raise KeyError(f"unknown node id {original}")
        return pos

    def validate(self):
        """Check structural invariants; raises ValueError on violation."""
        off, col = self.row_offsets, self.col_indices
        if off.shape != (self.n + 1,) or off[0] != 0 or off[-1] != col.size:
            raise ValueError("row offsets inconsistent with column array")
        if np.any(np.diff(off) < 0):
            raise ValueError("row offsets not monotone")
        if col.size and (col.min() < 0 or col.max() >= self.n):
            raise ValueError("column index out of range")
        for u in range(self.n):
            nb = col[off[u] : off[u + 1]]
            if np.any(np.diff(nb) <= 0):
                raise ValueError(f"row {u}: columns not strictly increasing")
            if np.any(nb == u):
                raise ValueError(f"row {u}: self loop")
        a = self.adjacency()
        if (a != a.T).nnz:
            raise ValueError("adjacency not symmetric")
        if self.original_ids.shape != (self.n,):
            raise ValueError("original_ids has wrong length")
        if self.n > 1 and np.any(np.diff(self.original_ids) <= 0):
            raise ValueError("original_ids not strictly increasing")


def from_edges(edges, n=None, original_ids=None):
    """Build a Graph from an iterable of (u, v) internal-id pairs.

    Self loops and duplicate edges (in either orientation) are dropped.
    ``n`` defaults to max id + 1; pass it explicitly to keep trailing
    isolated nodes.
    """
    arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
    if arr.size == 0:
        arr = arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("edges must be (m, 2)")
    if n is None:
        if arr.size == 0:
            raise ValueError("cannot infer node count from empty edge set")
        n = int(arr.max()) + 1
    if arr.size and (arr.min() < 0 or arr.max() >= n):
        raise ValueError("edge endpoint out of range")
    u = np.minimum(arr[:, 0], arr[:, 1])
    v = np.maximum(arr[:, 0], arr[:, 1])
    keep = u != v
    u, v = u[keep], v[keep]
    keys = np.unique(u * n + v)
    u, v = keys // n, keys % n
    src = np.concatenate([u, v])
    dst = np.concatenate([v, u])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.add.at(offsets, src + 1, 1)
    offsets = np.cumsum(offsets)
    if original_ids is None:
        original_ids = np.arange(n, dtype=np.int64)
    else:
        original_ids = np.asarray(original_ids, dtype=np.int64)
        if original_ids.shape != (n,):
            raise ValueError("original_ids has wrong length")
    return Graph(n=n, row_offsets=offsets, col_indices=dst, original_ids=original_ids)


def _tokenize(line, fmt):
    if fmt == "csv" or (fmt == "auto" and "," in line):
        return [t.strip() for t in line.split(",") if t.strip()]
    return line.split()


def load_edge_list(source, fmt="auto"):
    """Read an undirected edge list into a Graph.

    Parameters
    ----------
    source : path, bytes, or file-like
        Text with one edge per line: two integer node ids separated by
        whitespace or a comma. Blank lines and lines starting with '#'
        are skipped.
    fmt : {"auto", "whitespace", "csv"}
        Field separator; "auto" treats any line containing a comma as CSV.

    Node ids may be arbitrary non-negative integers; they are compacted to
    0..n-1 preserving order and kept as ``original_ids``. Duplicate edges
    and self loops are dropped.

    Raises
    ------
    GraphParseError
        On a malformed line (carries the line number) or if no edges remain.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            data = fh.read()
    elif isinstance(source, bytes):
        data = source
    else:
        data = source.read()
        if isinstance(data, str):
            data = data.encode()
    pairs = []
    for line_no, raw in enumerate(data.decode("utf-8", errors="replace").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        toks = _tokenize(line, fmt)
        if len(toks) != 2:
            raise GraphParseError(f"expected 2 fields, got {len(toks)}", line_no)
        try:
            u, v = int(toks[0]), int(toks[1])
        except ValueError:
            raise GraphParseError(f"non-integer node id in {toks!r}", line_no) from None
        if u < 0 or v < 0:
            raise GraphParseError("negative node id", line_no)
        if u != v:
            pairs.append((u, v))
    if not pairs:
        raise GraphParseError("no edges in input")
    arr = np.asarray(pairs, dtype=np.int64)
    ids = np.unique(arr)
    compact = np.searchsorted(ids, arr)
    return from_edges(compact, n=ids.size, original_ids=ids)


def connected_components(g):
    """Label nodes by connected component (BFS); returns (labels, count)."""
    labels = np.full(g.n, -1, dtype=np.int64)
    comp = 0
    for start in range(g.n):
        if labels[start] >= 0:
            continue
        labels[start] = comp
        frontier = [start]
        while frontier:
            nxt = []
            for u in frontier:
                for w in g.neighbors(u):
                    if labels[w] < 0:
                        labels[w] = comp
                        nxt.append(int(w))
            frontier = nxt
        comp += 1
    return labels, comp


def largest_connected_component(g):
    """Extract the largest connected component as a new Graph.

    Ties on size are broken toward the component containing the smallest
    original id. Internal ids are relabelled contiguously; ``original_ids``
    keeps the external labels.
    """
    if g.n == 0:
        raise ValueError("empty graph")
    labels, count = connected_components(g)
    if count == 1:
        return g
    sizes = np.bincount(labels, minlength=count)
    best = np.flatnonzero(sizes == sizes.max()).min()  # ids sorted, so min label wins ties
    keep = np.flatnonzero(labels == best)
    remap = np.full(g.n, -1, dtype=np.int64)
    remap[keep] = np.arange(keep.size)
    edges = []
    for u in keep:
        for w in g.neighbors(u):
            if w > u:
                edges.append((remap[u], remap[w]))
    if not edges:
        return Graph(
            n=1,
            row_offsets=np.zeros(2, dtype=np.int64),
            col_indices=np.empty(0, dtype=np.int64),
            original_ids=g.original_ids[keep].copy(),
        )
    return from_edges(edges, n=keep.size, original_ids=g.original_ids[keep].copy())


def spectral_norm(g, tol=1e-7, max_iter=10000):
    """Largest eigenvalue magnitude of the adjacency matrix.

    Power iteration on A @ A rather than A, so bipartite graphs (where
    +norm and -norm are both dominant eigenvalues of A) still converge.
    The returned value is ||A v|| for the final unit iterate v, which
    never exceeds the true norm.

    Raises
    ------
    ConvergenceError
        If estimates have not settled within ``max_iter`` sweeps; the
        exception carries the last estimate.
    """
    if g.n == 0:
        raise ValueError("empty graph")
    if g.col_indices.size == 0:
        return 0.0
    a = g.adjacency()
    v = np.full(g.n, 1.0 / np.sqrt(g.n))  # positive start overlaps the Perron vector
    last = 0.0
    for _ in range(max_iter):
        w = a @ (a @ v)
        est = np.sqrt(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(est - last) <= tol * max(est, 1e-300):
            return float(np.linalg.norm(a @ v))
        last = est
    raise ConvergenceError(
        f"spectral norm estimate did not settle in {max_iter} iterations", float(last)
    )


def hardest_alpha(norm):
    """The damping value 1/(norm + 1), just inside the admissible range.

    norm 0 (edgeless graph) is fine: every positive damping is admissible
    there and this returns 1.0.
    """
    if norm < 0:
        raise ValueError("spectral norm must be nonnegative")
    return 1.0 / (norm + 1.0)


@dataclass(frozen=True)
class KatzParams:
    """Validated (alpha, spectral_norm) pair for a Katz computation.

    Requires 0 < alpha and alpha * spectral_norm < 1, which makes
    I - alpha*A symmetric positive definite and the Katz series convergent.
    """

    alpha: float
    spectral_norm: float

    def __post_init__(self):
        if not (self.alpha > 0.0) or not (self.alpha * self.spectral_norm < 1.0):
            raise InadmissibleAlphaError(
                f"alpha={self.alpha} outside (0, 1/{self.spectral_norm})"
            )
