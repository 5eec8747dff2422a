"""Symmetric-matrix helpers used by the estimator and risk modules.

All routines assume (and lightly enforce) symmetric input.  Inverses of
positive definite matrices go through Cholesky with a condition-number
warning rather than a hard failure, since the statistical formulas stay
meaningful for ill-conditioned but invertible plug-ins.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy import linalg as sla

from .errors import SingularFactorization

# Relative cutoff below which an eigenvalue / singular value counts as zero.
RANK_RTOL = 1e-10
# Pseudo-inverse / matrix square root clipping threshold.
PINV_RTOL = 1e-12
# Condition number above which pd_solve warns.
COND_WARN = 1e12


def sym(a: np.ndarray) -> np.ndarray:
    """Symmetrize a square matrix: (A + A') / 2."""
    return 0.5 * (a + a.T)


def pd_solve(a: np.ndarray, b: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Solve a @ x = b for symmetric positive definite ``a``.

    Warns when the eigenvalue condition number exceeds ``COND_WARN``;
    raises ``SingularFactorization`` when ``a`` is not numerically PD.
    """
    a = sym(np.asarray(a, dtype=float))
    try:
        c, low = sla.cho_factor(a, check_finite=False)
    except sla.LinAlgError as exc:
        raise SingularFactorization(f"{name} is not positive definite") from exc
    diag = np.abs(np.diag(c))
    if diag.min() > 0 and (diag.max() / diag.min()) ** 2 > COND_WARN:
        warnings.warn(
            f"{name} has condition number above {COND_WARN:.0e}; "
            "results may be inaccurate",
            RuntimeWarning,
            stacklevel=2,
        )
    return sla.cho_solve((c, low), np.asarray(b, dtype=float), check_finite=False)


def pd_inverse(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Inverse of a symmetric positive definite matrix via Cholesky."""
    return sym(pd_solve(a, np.eye(a.shape[0]), name=name))


def psd_sqrt(a: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix.

    Eigenvalues below ``PINV_RTOL`` times the largest (including any
    negative round-off) are clipped to zero.
    """
    vals, vecs = np.linalg.eigh(sym(np.asarray(a, dtype=float)))
    top = max(vals.max(initial=0.0), 0.0)
    vals = np.where(vals > PINV_RTOL * top, vals, 0.0)
    return sym((vecs * np.sqrt(vals)) @ vecs.T)


def psd_pinv(a: np.ndarray) -> np.ndarray:
    """Moore-Penrose pseudo-inverse of a symmetric PSD matrix."""
    vals, vecs = np.linalg.eigh(sym(np.asarray(a, dtype=float)))
    top = max(vals.max(initial=0.0), 0.0)
    inv = np.where(vals > PINV_RTOL * top, 1.0, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(vals > PINV_RTOL * top, 1.0 / np.where(vals > 0, vals, 1.0), 0.0)
    return sym((vecs * inv) @ vecs.T)


def psd_rank_factor(a: np.ndarray) -> np.ndarray:
    """Factor F with F @ F.T == a for PSD ``a``; F has one column per
    eigenvalue above the relative cutoff.

    Raises ``SingularFactorization`` when ``a`` has a significantly
    negative eigenvalue (not a covariance matrix).
    """
    a = sym(np.asarray(a, dtype=float))
    vals, vecs = np.linalg.eigh(a)
    top = max(vals.max(initial=0.0), 0.0)
    if vals.min(initial=0.0) < -1e-8 * max(top, 1.0):
        raise SingularFactorization("matrix has negative eigenvalues beyond round-off")
    keep = vals > PINV_RTOL * top
    return vecs[:, keep] * np.sqrt(vals[keep])


def symmetric_rank(a: np.ndarray) -> int:
    """Numerical rank of a symmetric matrix at the ``RANK_RTOL`` threshold."""
    vals = np.abs(np.linalg.eigvalsh(sym(np.asarray(a, dtype=float))))
    top = vals.max(initial=0.0)
    if top == 0.0:
        return 0
    return int(np.sum(vals > RANK_RTOL * top))
