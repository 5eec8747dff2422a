"""Shared fixtures: random problem instances and independent oracles."""

from __future__ import annotations

import numpy as np
from scipy import linalg as sla

from steinbreak import RegressionData, Restriction, build_design


def random_instance(seed, t_range=(10, 30), m_choices=(0, 1, 2), q_choices=(1, 2)):
    """A random dataset plus a feasible break count for search tests."""
    rng = np.random.default_rng(seed)
    t_total = int(rng.integers(*t_range, endpoint=True))
    m = int(rng.choice(m_choices))
    q = int(rng.choice(q_choices))
    while (m + 1) * q > t_total:
        m -= 1
    z = rng.normal(1.0, 1.0, size=(t_total, q))
    y = rng.normal(0.0, 1.0, size=t_total)
    return RegressionData(y=y, z=z), m


def random_restriction(rng, n_coefs, k):
    """Full-row-rank random restriction with a nonzero right-hand side."""
    while True:
        mat = rng.normal(size=(k, n_coefs))
        if np.linalg.matrix_rank(mat) == k:
            break
    return Restriction(matrix=mat, rhs=rng.normal(size=k))


def nullspace_restricted_fit(data, partition, restriction):
    """Independent constrained-LS oracle via null-space reparameterization.

    Solves min ||y - Zbar d|| s.t. R d = r by writing d = d0 + N theta with
    R d0 = r and N an orthonormal basis of ker(R), then fitting theta by
    unconstrained least squares.  Returns (delta, ssr).
    """
    design = build_design(data, partition)
    zbar, y = design.zbar, data.y
    rmat, rhs = restriction.matrix, restriction.rhs
    d0, *_ = np.linalg.lstsq(rmat, rhs, rcond=None)
    nbasis = sla.null_space(rmat)
    if nbasis.shape[1] > 0:
        theta, *_ = np.linalg.lstsq(zbar @ nbasis, y - zbar @ d0, rcond=None)
        delta = d0 + nbasis @ theta
    else:
        delta = d0
    resid = y - zbar @ delta
    return delta, float(resid @ resid)


def orthonormal_rows(rng, k, n):
    """k orthonormal rows in R^n."""
    a = rng.normal(size=(n, n))
    q, _ = np.linalg.qr(a)
    return q[:, :k].T
