"""Cholesky factorizations of the partition blocks and the low-rank machinery.

The interior block M11 is block diagonal, so it factors part by part with a
local fill-reducing (minimum degree) ordering. The separator block M22 gets
a dense factor L. The correction operator

    R = L^-1 M12' M11^-1 M12 L^-T

is symmetric positive semidefinite with eigenvalues in [0, 1); its top
eigenpairs, found by Lanczos, shift the preconditioner's approximation of
the true Schur complement S = M22 - M12' M11^-1 M12 = L (I - R) L'.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh_tridiagonal, solve_triangular


class FactorizationError(RuntimeError):
    """A pivot failed; the block is not positive definite."""


class SpectrumError(RuntimeError):
    """Correction eigenvalues left [0, 1); the Schur complement theory broke."""


def _min_degree_order(block):
    """Greedy minimum-degree elimination order for one small SPD block.

    Plain set-based simulation of elimination fill; ties go to the smallest
    index. Good enough for the bounded part sizes the partitioner emits.
    """
    b = block.shape[0]
    nbrs = [set() for _ in range(b)]
    coo = block.tocoo()
    for i, j in zip(coo.row.tolist(), coo.col.tolist()):
        if i != j:
            nbrs[i].add(j)
    alive = set(range(b))
    order = np.empty(b, dtype=np.int64)
    for step in range(b):
        u = min(alive, key=lambda v: (len(nbrs[v]), v))
        order[step] = u
        alive.remove(u)
        clique = nbrs[u]
        for x in clique:
            nbrs[x].discard(u)
        for x in clique:
            nbrs[x].update(clique)
            nbrs[x].discard(x)
    return order


@dataclass(eq=False)
class BlockCholesky:
    """Per-part Cholesky factors of the block-diagonal interior matrix.

    block_offsets delimit parts inside the interior ordering; orders[b] is
    the local fill-reducing permutation of part b and factors[b] the sparse
    lower-triangular factor of the reordered part. A dense copy of each
    factor is kept for fast triangular solves.
    """

    block_offsets: np.ndarray
    orders: list
    factors: list
    dense: list = field(default=None, repr=False)

    def __post_init__(self):
        if self.dense is None:
            self.dense = [f.toarray() for f in self.factors]

    @property
    def n(self):
        return int(self.block_offsets[-1])

    @property
    def num_blocks(self):
        return len(self.factors)

    @property
    def nnz(self):
        return int(sum(f.nnz for f in self.factors))

    def solve(self, x):
        """Solve M11 y = x."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise ValueError(f"expected vector of length {self.n}")
        out = np.empty_like(x)
        for b in range(self.num_blocks):
            s = int(self.block_offsets[b])
            e = int(self.block_offsets[b + 1])
            o = self.orders[b]
            lb = self.dense[b]
            z = x[s:e][o]
            y = solve_triangular(lb, z, lower=True, check_finite=False)
            y = solve_triangular(lb, y, lower=True, trans=1, check_finite=False)
            buf = np.empty(e - s)
            buf[o] = y
            out[s:e] = buf
        return out

    def multiply(self, x):
        """Apply M11 (reassembled from its factors) to x."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise ValueError(f"expected vector of length {self.n}")
        out = np.empty_like(x)
        for b in range(self.num_blocks):
            s = int(self.block_offsets[b])
            e = int(self.block_offsets[b + 1])
            o = self.orders[b]
            lb = self.dense[b]
            z = x[s:e][o]
            y = lb @ (lb.T @ z)
            buf = np.empty(e - s)
            buf[o] = y
            out[s:e] = buf
        return out


def block_cholesky(m11, block_offsets):
    """Factor each diagonal part of M11 with a local min-degree ordering.

    Raises FactorizationError (with the part index) if a part is not
    positive definite.
    """
    block_offsets = np.asarray(block_offsets, dtype=np.int64)
    m11 = m11.tocsr()
    orders = []
    factors = []
    dense = []
    for b in range(block_offsets.size - 1):
        s, e = int(block_offsets[b]), int(block_offsets[b + 1])
        blk = m11[s:e, s:e]
        order = _min_degree_order(blk)
        a = blk[order, :][:, order].toarray()
        try:
            lb = np.linalg.cholesky(a)
        except np.linalg.LinAlgError as err:
            raise FactorizationError(f"part {b} is not positive definite") from err
        orders.append(order)
        factors.append(sp.csr_matrix(lb))
        dense.append(lb)
    return BlockCholesky(
        block_offsets=block_offsets, orders=orders, factors=factors, dense=dense
    )


@dataclass(eq=False)
class DenseCholesky:
    """Dense lower-triangular factor of the separator block M22."""

    factor: np.ndarray

    def __post_init__(self):
        # column-major pins one memory layout for built and deserialized
        # factors alike, so downstream arithmetic is bit-for-bit reproducible
        self.factor = np.asfortranarray(self.factor, dtype=np.float64)

    @property
    def n(self):
        return self.factor.shape[0]

    def solve(self, r):
        y = solve_triangular(self.factor, r, lower=True, check_finite=False)
        return solve_triangular(self.factor, y, lower=True, trans=1, check_finite=False)

    def solve_lower(self, r):
        return solve_triangular(self.factor, r, lower=True, check_finite=False)

    def solve_upper(self, r):
        return solve_triangular(self.factor, r, lower=True, trans=1, check_finite=False)

    def multiply(self, v):
        return self.factor @ (self.factor.T @ v)


def dense_cholesky(m22):
    """Dense Cholesky of the separator block; M22 = L L'."""
    a = m22.toarray() if sp.issparse(m22) else np.asarray(m22, dtype=np.float64)
    if a.size == 0:
        return DenseCholesky(factor=np.zeros((a.shape[0], a.shape[0])))
    try:
        lb = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as err:
        raise FactorizationError("separator block is not positive definite") from err
    return DenseCholesky(factor=lb)


def apply_correction(dc, m12, bc, v):
    """Apply R = L^-1 M12' M11^-1 M12 L^-T to v."""
    y = dc.solve_upper(v)
    w = m12 @ y
    u = bc.solve(w)
    z = m12.T @ u
    return dc.solve_lower(z)


@dataclass(eq=False)
class LowRankCorrection:
    """Top eigenpairs of the correction operator R.

    vectors is (n2, ell) with orthonormal columns, values the matching
    eigenvalues in descending order, all in [0, 1).
    """

    ell: int
    vectors: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        # same layout whether built or deserialized; see DenseCholesky
        self.vectors = np.asfortranarray(self.vectors, dtype=np.float64)


def _fresh_direction(rng, basis):
    """Random unit vector orthogonal to the given orthonormal columns."""
    n = basis.shape[0]
    for _ in range(64):
        cand = rng.standard_normal(n)
        for _ in range(2):
            cand -= basis @ (basis.T @ cand)
        nc = np.linalg.norm(cand)
        if nc > 1e-6:
            return cand / nc
    raise RuntimeError("could not draw a direction outside the current basis")


def lanczos_topk(apply, ell, start, max_iter=None, tol=1e-10, rng=None):
    """Top-ell eigenpairs of a symmetric PSD operator via Lanczos.

    Parameters
    ----------
    apply : callable
        Matrix-vector product with the operator.
    ell : int
        Number of eigenpairs wanted, between 0 and the dimension.
    start : ndarray
        Nonzero start vector; fixes the dimension.
    max_iter : int, optional
        Step budget. Defaults to min(n, max(3*ell, ell + 20)).
    tol : float
        Stop once the residual estimates of the top ell Ritz pairs all
        drop below tol.
    rng : numpy Generator, optional
        Source of restart directions after a breakdown.

    Full reorthogonalization (two Gram-Schmidt sweeps per step) keeps the
    basis orthonormal, so the residual estimate |beta_j * y_last| remains
    valid even across breakdown restarts; restarting with a fresh direction
    orthogonal to the basis is what recovers repeated eigenvalues. After
    any breakdown the early stop is disabled and the full step budget runs:
    an exhausted invariant subspace proves nothing about eigenvalue copies
    outside it, so residuals alone can no longer certify the top ell. With
    tol=0 the early stop never fires at all; when the budget then reaches
    the dimension, the returned pairs are the exact top ell, repeated
    eigenvalues included.
    """
    start = np.asarray(start, dtype=np.float64)
    n = start.size
    if ell == 0 or n == 0:
        return LowRankCorrection(ell=0, vectors=np.zeros((n, 0)), values=np.zeros(0))
    if not 1 <= ell <= n:
        raise ValueError(f"rank {ell} outside [1, {n}]")
    nv = np.linalg.norm(start)
    if nv == 0.0:
        raise ValueError("start vector is zero")
    if rng is None:
        rng = np.random.default_rng(0)
    m = min(n, max(3 * ell, ell + 20)) if max_iter is None else min(n, int(max_iter))
    m = max(m, ell)
    basis = np.zeros((n, m))
    alphas = []
    betas = []
    v = start / nv
    theta = y = None
    j = 0
    had_breakdown = False
    while True:
        basis[:, j] = v
        w = apply(v)
        alphas.append(float(v @ w))
        for _ in range(2):
            w -= basis[:, : j + 1] @ (basis[:, : j + 1].T @ w)
        b = float(np.linalg.norm(w))
        # after two reorthogonalization sweeps a spanned subspace leaves only
        # roundoff in w; dropping a coupling this small shifts Ritz values by
        # at most its own size, far under the tolerances used downstream
        broke = b <= 1e-8 * max(1.0, abs(alphas[-1]))
        had_breakdown = had_breakdown or broke
        j += 1
        if j >= ell:  # m >= ell, so the budget stop is reached inside this branch
            if j == 1:
                theta = np.asarray(alphas, dtype=np.float64)
                y = np.ones((1, 1))
            else:
                theta, y = eigh_tridiagonal(alphas, betas)
            top = np.argsort(theta)[::-1][:ell]
            resid = b * np.abs(y[-1, top])
            if (np.all(resid <= tol) and not had_breakdown) or j == m:
                break
        if broke:
            betas.append(0.0)
            v = _fresh_direction(rng, basis[:, :j])
        else:
            betas.append(b)
            v = w / b
    vals = theta[top]
    vecs = basis[:, :j] @ y[:, top]
    if np.any(vals < -1e-8):
        raise SpectrumError(f"negative correction eigenvalue {vals.min():.3e}")
    vals = np.maximum(vals, 0.0)
    return LowRankCorrection(ell=int(top.size), vectors=vecs, values=vals)


def apply_approx_schur_inverse(dc, lr, r):
    """Apply the corrected preconditioner to r.

    Computes M22^-1 r plus the rank-ell shift
    L^-T U [(I - Sigma)^-1 - I] U' L^-1 r, which equals the exact Schur
    complement inverse when the correction captures the whole spectrum.
    """
    if np.any(lr.values >= 1.0):
        raise SpectrumError("correction eigenvalue at or above 1")
    base = dc.solve(r)
    if lr.ell == 0:
        return base
    t = dc.solve_lower(r)
    c = lr.vectors.T @ t
    c *= 1.0 / (1.0 - lr.values) - 1.0
    return base + dc.solve_upper(lr.vectors @ c)
