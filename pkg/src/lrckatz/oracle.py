"""Dense reference computations used to cross-check the fast path.

Everything here is O(n^3) and capped in size on purpose: these routines
exist to validate the factorization-based solver on small graphs, not to
be fast.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .graph import InadmissibleAlphaError


class SizeCapError(ValueError):
    """Input exceeds the safety cap for dense reference computation."""


def dense_katz_matrix(g, alpha, cap=2000):
    """Full Katz matrix K = (I - alpha*A)^-1 - I by dense factorization.

    Raises SizeCapError above ``cap`` nodes and InadmissibleAlphaError if
    I - alpha*A is not positive definite.
    """
    if g.n > cap:
        raise SizeCapError(f"{g.n} nodes exceeds dense cap {cap}")
    a = g.adjacency().toarray()
    m = np.eye(g.n) - alpha * a
    try:
        cf = scipy.linalg.cho_factor(m)
    except np.linalg.LinAlgError as err:
        raise InadmissibleAlphaError(
            f"I - alpha*A not positive definite at alpha={alpha}"
        ) from err
    k = scipy.linalg.cho_solve(cf, np.eye(g.n))
    k[np.diag_indices(g.n)] -= 1.0
    return k


def dense_schur(m11, m12, m22, cap=2000):
    """Dense Schur complement M22 - M12' M11^-1 M12 of the 2x2 splitting."""
    n = m11.shape[0] + m22.shape[0]
    if n > cap:
        raise SizeCapError(f"{n} rows exceeds dense cap {cap}")
    d11 = m11.toarray() if hasattr(m11, "toarray") else np.asarray(m11, dtype=float)
    d12 = m12.toarray() if hasattr(m12, "toarray") else np.asarray(m12, dtype=float)
    d22 = m22.toarray() if hasattr(m22, "toarray") else np.asarray(m22, dtype=float)
    if d12.size == 0:
        return d22
    return d22 - d12.T @ np.linalg.solve(d11, d12)
