"""Conjugate-gradient solvers and the exact Katz query.

A query for node q solves (I - alpha*A) k = alpha * A e_q. Under the
partition ordering the system reduces to the separator Schur complement:

    f  = g2 - M12' M11^-1 g1
    S k2 = f,   k1 = M11^-1 (g1 - M12 k2)

S is never formed; CG applies it through the factors, preconditioned by
the corrected approximate inverse from the factor module. Reduction and
back substitution are direct solves, so the whole-system residual is
governed by the Schur solve alone.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .factor import apply_approx_schur_inverse


class UnknownNodeError(KeyError):
    """Query node id is not in the indexed graph."""


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    final_residual_norm: float
    converged: bool
    wall_time: float


@dataclass(eq=False)
class KatzVector:
    """Katz proximities of every node to the query node.

    scores follows internal node order of the indexed graph; query is the
    original id. Entries are nonnegative; the query's own entry counts
    closed walks back to it.
    """

    scores: np.ndarray
    query: int
    alpha: float


def _initial_state(b, start_seed, apply_a):
    """Zero initial guess by default; a normalized random one when seeded."""
    if start_seed is None:
        return np.zeros(b.size), b.copy()
    x = np.random.default_rng(start_seed).standard_normal(b.size)
    nx = np.linalg.norm(x)
    if nx > 0:
        x /= nx
    return x, b - apply_a(x)


def cg(apply_a, b, tol=1e-8, max_iter=None, start_seed=None):
    """Plain conjugate gradient on an SPD operator.

    Stops when ||r|| <= tol * ||b||; returns (x, SolveReport). A zero
    right-hand side converges in zero iterations. start_seed switches the
    zero initial guess to a seeded normalized random vector.
    """
    b = np.asarray(b, dtype=np.float64)
    n = b.size
    if max_iter is None:
        max_iter = 10 * n
    t0 = time.perf_counter()
    thresh = tol * np.linalg.norm(b)
    x, r = _initial_state(b, start_seed, apply_a)
    rnorm = np.linalg.norm(r)
    it = 0
    if rnorm > thresh:
        p = r.copy()
        rs = float(r @ r)
        while it < max_iter:
            q = apply_a(p)
            pq = float(p @ q)
            if pq <= 0.0:
                raise RuntimeError("operator is not positive definite")
            a = rs / pq
            x += a * p
            r -= a * q
            it += 1
            rs_new = float(r @ r)
            rnorm = np.sqrt(rs_new)
            if rnorm <= thresh:
                break
            p = r + (rs_new / rs) * p
            rs = rs_new
    return x, SolveReport(
        iterations=it,
        final_residual_norm=float(rnorm),
        converged=bool(rnorm <= thresh),
        wall_time=time.perf_counter() - t0,
    )


def schur_rhs(idx, g1, g2):
    """Reduce a permuted right-hand side to the separator system."""
    if g1.shape != (idx.n1,) or g2.shape != (idx.n2,):
        raise ValueError("right-hand side blocks have wrong lengths")
    if idx.n2 == 0:
        return np.zeros(0)
    return g2 - idx.m12.T @ idx.bc.solve(g1)


def apply_schur(idx, v):
    """Apply the Schur complement S = M22 - M12' M11^-1 M12 via the factors."""
    return idx.dc.multiply(v) - idx.m12.T @ idx.bc.solve(idx.m12 @ v)


def lrc_pcg(idx, f, tol=1e-8, max_iter=None, start_seed=None):
    """Preconditioned CG on the Schur system S x = f.

    Uses the low-rank corrected approximate inverse as preconditioner and
    the same relative residual stop as cg(). Returns (x, SolveReport).
    """
    f = np.asarray(f, dtype=np.float64)
    n = f.size
    if max_iter is None:
        max_iter = 10 * n
    t0 = time.perf_counter()
    thresh = tol * np.linalg.norm(f)
    x, r = _initial_state(f, start_seed, lambda v: apply_schur(idx, v))
    rnorm = np.linalg.norm(r)
    it = 0
    if rnorm > thresh:
        z = apply_approx_schur_inverse(idx.dc, idx.lr, r)
        p = z.copy()
        rz = float(r @ z)
        while it < max_iter:
            q = apply_schur(idx, p)
            pq = float(p @ q)
            if pq <= 0.0:
                raise RuntimeError("Schur operator is not positive definite")
            a = rz / pq
            x += a * p
            r -= a * q
            it += 1
            rnorm = float(np.linalg.norm(r))
            if rnorm <= thresh:
                break
            z = apply_approx_schur_inverse(idx.dc, idx.lr, r)
            rz_new = float(r @ z)
            p = z + (rz_new / rz) * p
            rz = rz_new
    return x, SolveReport(
        iterations=it,
        final_residual_norm=float(rnorm),
        converged=bool(rnorm <= thresh),
        wall_time=time.perf_counter() - t0,
    )


def _solve_query_system(idx, pos, tol, max_iter, schur_solver):
    """Shared query plumbing: build rhs, reduce, solve, back substitute."""
    t0 = time.perf_counter()
    rhs = idx.rhs_for_position(pos)
    rhs_norm = np.linalg.norm(rhs)
    g1, g2 = rhs[: idx.n1], rhs[idx.n1 :]
    if idx.n2 == 0:
        k1 = idx.bc.solve(g1)
        k2 = np.zeros(0)
        inner = SolveReport(0, 0.0, True, 0.0)
    else:
        f = schur_rhs(idx, g1, g2)
        fnorm = np.linalg.norm(f)
        # the back substitution is direct, so aim the Schur residual at the
        # whole-system target ||r|| <= tol * ||rhs||
        tol_eff = tol * rhs_norm / fnorm if fnorm > 0 else tol
        k2, inner = schur_solver(f, tol_eff, max_iter)
        k1 = idx.bc.solve(g1 - idx.m12 @ k2)
    k_perm = np.concatenate([k1, k2])
    resid = float(np.linalg.norm(rhs - idx.apply_m_permuted(k_perm)))
    scores = np.empty(idx.n)
    scores[idx.bp.perm] = k_perm
    # exact scores are nonnegative; wipe solver roundoff below zero
    np.maximum(scores, 0.0, out=scores)
    report = SolveReport(
        iterations=inner.iterations,
        final_residual_norm=resid,
        converged=bool(resid <= tol * rhs_norm),
        wall_time=time.perf_counter() - t0,
    )
    return scores, report


def query(idx, q, tol=1e-8, max_iter=None, start_seed=None):
    """Exact Katz proximity vector for original node id q.

    Returns (KatzVector, SolveReport). The report's residual is for the
    whole system, not just the separator part.
    """
    try:
        pos = idx.bp.inv_perm[idx.internal_id(q)]
    except KeyError as err:
        raise UnknownNodeError(str(err)) from None
    scores, report = _solve_query_system(
        idx, pos, tol, max_iter, lambda f, t, mi: lrc_pcg(idx, f, t, mi, start_seed)
    )
    return KatzVector(scores=scores, query=int(q), alpha=idx.alpha), report


def query_cg_baseline(idx, q, tol=1e-8, max_iter=None, start_seed=None):
    """Same query solved by unpreconditioned CG on the full system.

    Baseline for iteration-count comparisons; identical stopping rule
    (whole-system relative residual at tol).
    """
    try:
        pos = idx.bp.inv_perm[idx.internal_id(q)]
    except KeyError as err:
        raise UnknownNodeError(str(err)) from None
    t0 = time.perf_counter()
    rhs = idx.rhs_for_position(pos)
    k_perm, inner = cg(lambda v: idx.apply_m_permuted(v), rhs, tol, max_iter, start_seed)
    scores = np.empty(idx.n)
    scores[idx.bp.perm] = k_perm
    np.maximum(scores, 0.0, out=scores)
    report = SolveReport(
        iterations=inner.iterations,
        final_residual_norm=inner.final_residual_norm,
        converged=inner.converged,
        wall_time=time.perf_counter() - t0,
    )
    return KatzVector(scores=scores, query=int(q), alpha=idx.alpha), report
