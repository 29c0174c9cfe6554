"""Katz query index: build pipeline and binary save/load.

An index bundles everything a query needs: the damping factor, the
partition ordering, the coupling block M12, the interior and separator
Cholesky factors, the low-rank correction, and the original-id map. M11
and M22 themselves are not stored; where a product with them is needed it
is reassembled from the factors.

The on-disk format is little endian: a 4-byte magic, a u32 version, the
payload, and a trailing 8-byte keyed-hash checksum over everything before
it. Integers are i64/u-typed as noted, floats are f64, and the dense
eigenvector block is column major. Saving and loading round-trips bit
exactly.
"""

from __future__ import annotations

import hashlib
import os
import struct
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import factor as factor_mod
from .factor import BlockCholesky, DenseCholesky, LowRankCorrection
from .graph import KatzParams, hardest_alpha, spectral_norm
from .partition import BlockPartition, build_blocks, partition_vertex_separator

MAGIC = b"KLRC"
FORMAT_VERSION = 1


class IndexFormatError(ValueError):
    """The byte stream is not a readable index of this format."""


class IndexMagicError(IndexFormatError):
    """Leading magic bytes are wrong; not an index file."""


class IndexVersionError(IndexFormatError):
    """Index format version not supported by this code."""


class IndexChecksumError(IndexFormatError):
    """Checksum mismatch: the stream is truncated or corrupted."""


@dataclass(eq=False)
class KatzIndex:
    """Everything needed to answer exact Katz queries on one graph."""

    alpha: float
    spectral_norm: float
    bp: BlockPartition
    m12: sp.csr_matrix
    bc: BlockCholesky
    dc: DenseCholesky
    lr: LowRankCorrection
    id_map: np.ndarray
    lanczos_seed: int
    format_version: int = FORMAT_VERSION
    build_stats: dict = field(default=None, repr=False)

    @property
    def n(self):
        return self.bp.n

    @property
    def n1(self):
        return self.bp.n1

    @property
    def n2(self):
        return self.bp.n2

    def internal_id(self, original):
        pos = int(np.searchsorted(self.id_map, original))
        if pos == self.n or self.id_map[pos] != original:
            raise KeyError(f"unknown node id {original}")
        return pos

    def apply_m_permuted(self, x):
        """Apply the permuted system matrix M = I - alpha*A via the factors."""
        x1, x2 = x[: self.n1], x[self.n1 :]
        top = self.bc.multiply(x1) + self.m12 @ x2
        bottom = self.m12.T @ x1 + self.dc.multiply(x2)
        return np.concatenate([top, bottom])

    def rhs_for_position(self, pos):
        """Permuted right-hand side alpha * (adjacency column) for one node.

        With M = I - alpha*A, the column alpha*A e_pos equals
        e_pos - M e_pos, so it comes straight from the stored factors.
        """
        e = np.zeros(self.n)
        e[pos] = 1.0
        return e - self.apply_m_permuted(e)


def build_index(g, alpha="hardest", ell=25, cfg=None, seed=0, lanczos_tol=1e-10):
    """Build a query index for a connected graph.

    Parameters
    ----------
    g : Graph
        Connected undirected graph (run largest_connected_component first
        if unsure).
    alpha : float or "hardest"
        Damping factor; must satisfy 0 < alpha < 1/spectral_norm.
        "hardest" picks 1/(norm + 1).
    ell : int
        Correction rank; silently capped at the separator size.
    cfg : PartitionConfig, optional
    seed : int
        Seeds the Lanczos start vector and restart directions.
    lanczos_tol : float
        Residual target for the correction eigenpairs.
    """
    t0 = time.perf_counter()
    norm = spectral_norm(g)
    if alpha == "hardest":
        alpha = hardest_alpha(norm)
    alpha = float(alpha)
    KatzParams(alpha, norm)
    bp = partition_vertex_separator(g, cfg)
    m11, m12, m22 = build_blocks(g, alpha, bp)
    bc = factor_mod.block_cholesky(m11, bp.part_boundaries)
    dc = factor_mod.dense_cholesky(m22)
    ell_eff = int(min(ell, bp.n2))
    rng = np.random.default_rng(seed)
    if ell_eff > 0:
        start = rng.standard_normal(bp.n2)
        lr = factor_mod.lanczos_topk(
            lambda v: factor_mod.apply_correction(dc, m12, bc, v),
            ell_eff,
            start,
            tol=lanczos_tol,
            rng=rng,
        )
    else:
        lr = LowRankCorrection(ell=0, vectors=np.zeros((bp.n2, 0)), values=np.zeros(0))
    stats = {
        "n": g.n,
        "num_edges": g.num_edges,
        "alpha": alpha,
        "spectral_norm": norm,
        "n1": bp.n1,
        "n2": bp.n2,
        "num_parts": bp.num_parts,
        "separator_fraction": bp.n2 / g.n if g.n else 0.0,
        "separator_overflow": bp.separator_overflow,
        "m11_nnz": int(m11.nnz),
        "interior_factor_nnz": bc.nnz,
        # factor entries per stored lower-triangle entry of M11
        "fill_ratio": bc.nnz / max(1, (int(m11.nnz) + bp.n1) // 2),
        "correction_rank": lr.ell,
        "correction_values": [float(s) for s in lr.values],
        "build_seconds": time.perf_counter() - t0,
    }
    return KatzIndex(
        alpha=alpha,
        spectral_norm=norm,
        bp=bp,
        m12=m12.tocsr(),
        bc=bc,
        dc=dc,
        lr=lr,
        id_map=g.original_ids.copy(),
        lanczos_seed=int(seed),
        build_stats=stats,
    )


def _w_ints(buf, arr):
    buf.append(np.ascontiguousarray(arr, dtype="<i8").tobytes())


def _w_floats(buf, arr, order="C"):
    buf.append(np.asarray(arr, dtype="<f8").tobytes(order=order))


def _w_csr(buf, mat):
    buf.append(struct.pack("<Q", mat.nnz))
    _w_ints(buf, mat.indptr)
    _w_ints(buf, mat.indices)
    _w_floats(buf, mat.data)


def save_index(idx, sink):
    """Write the index to a path or binary file-like object."""
    buf = [MAGIC, struct.pack("<IB", idx.format_version, 1 if idx.bp.separator_overflow else 0)]
    buf.append(struct.pack("<dd", idx.alpha, idx.spectral_norm))
    buf.append(
        struct.pack(
            "<QQQQQQ",
            idx.lanczos_seed,
            idx.n,
            idx.n1,
            idx.n2,
            idx.lr.ell,
            idx.bp.num_parts,
        )
    )
    _w_ints(buf, idx.id_map)
    _w_ints(buf, idx.bp.perm)
    _w_ints(buf, idx.bp.part_boundaries)
    _w_csr(buf, idx.m12)
    for b in range(idx.bc.num_blocks):
        _w_ints(buf, idx.bc.orders[b])
        _w_csr(buf, idx.bc.factors[b])
    _w_floats(buf, idx.dc.factor, order="F")
    _w_floats(buf, idx.lr.vectors, order="F")
    _w_floats(buf, idx.lr.values)
    payload = b"".join(buf)
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    data = payload + digest
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "wb") as fh:
            fh.write(data)
    else:
        sink.write(data)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, nbytes, what):
        end = self.pos + nbytes
        if end > len(self.data):
            raise IndexFormatError(f"stream ended inside {what}")
        out = self.data[self.pos : end]
        self.pos = end
        return out

    def ints(self, count, what):
        raw = self.take(8 * count, what)
        return np.frombuffer(raw, dtype="<i8").astype(np.int64)

    def floats(self, count, what):
        raw = self.take(8 * count, what)
        return np.frombuffer(raw, dtype="<f8").astype(np.float64)

    def csr(self, rows, cols, what):
        (nnz,) = struct.unpack("<Q", self.take(8, what))
        indptr = self.ints(rows + 1, what)
        indices = self.ints(nnz, what)
        data = self.floats(nnz, what)
        if indptr[0] != 0 or indptr[-1] != nnz or np.any(np.diff(indptr) < 0):
            raise IndexFormatError(f"bad CSR offsets in {what}")
        if nnz and (indices.min() < 0 or indices.max() >= cols):
            raise IndexFormatError(f"column index out of range in {what}")
        return sp.csr_matrix((data, indices, indptr), shape=(rows, cols))


def load_index(source):
    """Read an index written by save_index; validates checksum first.

    Raises IndexMagicError, IndexChecksumError, or IndexVersionError for a
    stream that is not a supported, intact index, and IndexFormatError for
    structural damage that a checksum cannot have missed (never happens for
    files this code wrote).
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            data = fh.read()
    else:
        data = source.read()
    if len(data) < 4 or data[:4] != MAGIC:
        raise IndexMagicError("not an index file (bad magic)")
    if len(data) < 4 + 5 + 8:
        raise IndexChecksumError("stream truncated")
    digest = hashlib.blake2b(data[:-8], digest_size=8).digest()
    if digest != data[-8:]:
        raise IndexChecksumError("checksum mismatch; file truncated or corrupted")
    version, flags = struct.unpack("<IB", data[4:9])
    if version != FORMAT_VERSION:
        raise IndexVersionError(f"unsupported index version {version}")
    rd = _Reader(data[:-8])
    rd.pos = 9
    alpha, norm = struct.unpack("<dd", rd.take(16, "header"))
    seed, n, n1, n2, ell, num_parts = struct.unpack("<QQQQQQ", rd.take(48, "header"))
    if n1 + n2 != n:
        raise IndexFormatError("inconsistent block sizes")
    id_map = rd.ints(n, "id map")
    perm = rd.ints(n, "permutation")
    boundaries = rd.ints(num_parts + 1, "part boundaries")
    if boundaries[0] != 0 or boundaries[-1] != n1 or np.any(np.diff(boundaries) < 0):
        raise IndexFormatError("bad part boundaries")
    if not np.array_equal(np.sort(perm), np.arange(n)):
        raise IndexFormatError("permutation is not a permutation")
    inv = np.empty(n, dtype=np.int64)
    inv[perm] = np.arange(n)
    m12 = rd.csr(n1, n2, "coupling block")
    orders = []
    factors = []
    for b in range(num_parts):
        bs = int(boundaries[b + 1] - boundaries[b])
        order = rd.ints(bs, f"part {b} ordering")
        if not np.array_equal(np.sort(order), np.arange(bs)):
            raise IndexFormatError(f"part {b} ordering is not a permutation")
        orders.append(order)
        factors.append(rd.csr(bs, bs, f"part {b} factor"))
    dc_factor = rd.floats(n2 * n2, "separator factor").reshape((n2, n2), order="F")
    vectors = rd.floats(n2 * ell, "correction vectors").reshape((n2, ell), order="F")
    values = rd.floats(ell, "correction values")
    if rd.pos != len(rd.data):
        raise IndexFormatError("trailing bytes after payload")
    bp = BlockPartition(
        perm=perm,
        inv_perm=inv,
        part_boundaries=boundaries,
        n1=int(n1),
        n2=int(n2),
        separator_overflow=bool(flags & 1),
    )
    return KatzIndex(
        alpha=alpha,
        spectral_norm=norm,
        bp=bp,
        m12=m12,
        bc=BlockCholesky(block_offsets=boundaries, orders=orders, factors=factors),
        dc=DenseCholesky(factor=dc_factor),
        lr=LowRankCorrection(ell=int(ell), vectors=vectors, values=values),
        id_map=id_map,
        lanczos_seed=int(seed),
        format_version=int(version),
    )
