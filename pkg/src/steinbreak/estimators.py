"""Coefficient estimators and their plug-in asymptotic matrices.

Three families: per-segment OLS (``fit_unrestricted``), equality-constrained
least squares (``fit_restricted``), and shrinkage combinations of the two
steered by the Wald-type distance

    psi = T (delta_re - delta_ue)' A_hat (delta_re - delta_ue),

where ``A_hat = R'(R Gamma_hat^-1 Omega_hat^-1 Gamma_hat^-1 R')^-1 R`` is built
from the scaled design Gram matrix ``Gamma_hat = Zbar'Zbar / T`` and a
heteroskedasticity-robust (optionally autocorrelation-robust) score
covariance ``Omega_hat``.  A shrinkage rule ``h`` maps psi to a mixing factor:
``h == 1`` recovers the unrestricted estimator, ``h == 0`` the restricted one,
and the James-Stein pair uses ``1 - (k - 2)/psi`` and its positive part.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats as sps

from .errors import (
    DimensionMismatch,
    GammaSingular,
    KTooSmall,
    MismatchedPartitions,
    SegmentRankDeficient,
    SingularConstraintGram,
)
from .linalg import RANK_RTOL, pd_solve, sym
from .model import Partition, RegressionData, Restriction, SegmentedDesign, build_design

KIND_UNRESTRICTED = "unrestricted"
KIND_RESTRICTED = "restricted"
KIND_SHRINKAGE = "shrinkage"

# Constraint satisfaction tolerance for restricted fits:
# ||R d - r||_inf <= CONSTRAINT_TOL * (1 + ||r||_inf).
CONSTRAINT_TOL = 1e-8


@dataclass(frozen=True)
class CoefEstimate:
    """A stacked coefficient vector together with its provenance.

    ``ssr`` is the residual sum of squares of the fit; it is None for
    shrinkage estimates, which are formed from two existing fits without
    access to the data.  ``label`` names the shrinkage rule when
    ``kind == "shrinkage"``.
    """

    delta: np.ndarray
    partition: Partition
    kind: str
    ssr: float | None
    label: str = ""


@dataclass(frozen=True)
class PluginMatrices:
    """Plug-in estimates of the asymptotic matrices at a fitted partition."""

    gamma_hat: np.ndarray
    omega_hat: np.ndarray
    a_hat: np.ndarray
    omega_method: str

    @property
    def sandwich(self) -> np.ndarray:
        """Gamma_hat^-1 Omega_hat Gamma_hat^-1."""
        half = pd_solve(self.gamma_hat, self.omega_hat, name="gamma_hat")
        return sym(pd_solve(self.gamma_hat, half.T, name="gamma_hat"))


@dataclass(frozen=True)
class ShrinkageFunction:
    """A mixing rule ``h`` on the distance statistic.

    ``evaluate`` must be total on (0, inf); integrability with respect to
    the relevant chi-square laws is a documented contract, not checked at
    runtime.  ``breakpoints`` lists kinks or jumps of ``h`` (used by the
    risk quadrature).  Rules requiring ``k > 2`` raise ``KTooSmall`` at
    construction, so ``requires_k_gt_2`` is informational downstream.
    """

    evaluate: Callable[[float], float]
    name: str
    requires_k_gt_2: bool = False
    breakpoints: tuple[float, ...] = ()


def fit_unrestricted(data: RegressionData, partition: Partition) -> CoefEstimate:
    """Per-segment OLS, stacked into one coefficient vector.

    Raises
    ------
    SegmentRankDeficient
        If any segment has a singular Gram matrix.
    """
    partition.validate_for(data.n_obs)
    q = data.n_regressors
    delta = np.empty(partition.n_segments * q)
    ssr = 0.0
    for p, (s, e) in enumerate(partition.segments(data.n_obs)):
        zseg, yseg = data.z[s:e], data.y[s:e]
        beta, _, rank, _ = np.linalg.lstsq(zseg, yseg, rcond=None)
        if rank < q:
            raise SegmentRankDeficient(
                f"segment {p + 1} (times {s + 1}..{e}) has rank {rank} < {q}"
            )
        delta[p * q:(p + 1) * q] = beta
        resid = yseg - zseg @ beta
        ssr += float(resid @ resid)
    return CoefEstimate(delta=delta, partition=partition, kind=KIND_UNRESTRICTED, ssr=ssr)


def fit_restricted(
    data: RegressionData, partition: Partition, restriction: Restriction
) -> CoefEstimate:
    """Least squares subject to ``R delta = r``.

    Computed by projecting the unrestricted fit along the design metric:
    ``d_re = d_ue - G^-1 R' (R G^-1 R')^-1 (R d_ue - r)`` with
    ``G = Zbar'Zbar``, which minimizes the SSR over the constraint set.

    Raises
    ------
    SegmentRankDeficient, DimensionMismatch, SingularConstraintGram
    """
    ue = fit_unrestricted(data, partition)
    q = data.n_regressors
    n = partition.n_segments * q
    restriction.check_dims(n)
    rmat, rhs = restriction.matrix, restriction.rhs
    # G is block diagonal, so G^-1 R' solves segment by segment.
    ginv_rt = np.empty((n, restriction.k))
    for p, (s, e) in enumerate(partition.segments(data.n_obs)):
        zseg = data.z[s:e]
        gram = zseg.T @ zseg
        block = slice(p * q, (p + 1) * q)
        try:
            ginv_rt[block] = np.linalg.solve(gram, rmat.T[block])
        except np.linalg.LinAlgError as exc:  # pragma: no cover - caught above
            raise SegmentRankDeficient(f"segment {p + 1} Gram is singular") from exc
    cgram = rmat @ ginv_rt
    delta = ue.delta.copy()
    for _ in range(2):  # one refinement pass absorbs round-off on the constraint
        gap = rmat @ delta - rhs
        if np.max(np.abs(gap)) <= CONSTRAINT_TOL * (1.0 + np.max(np.abs(rhs), initial=0.0)):
            break
        try:
            delta = delta - ginv_rt @ np.linalg.solve(cgram, gap)
        except np.linalg.LinAlgError as exc:
            raise SingularConstraintGram("R G^-1 R' is singular") from exc
    gap = np.max(np.abs(rmat @ delta - rhs))
    if gap > CONSTRAINT_TOL * (1.0 + np.max(np.abs(rhs), initial=0.0)):
        raise SingularConstraintGram(
            f"constraint violated after projection (gap {gap:.3e}); "
            "the constraint Gram is too ill-conditioned"
        )
    ssr = 0.0
    for p, (s, e) in enumerate(partition.segments(data.n_obs)):
        resid = data.y[s:e] - data.z[s:e] @ delta[p * q:(p + 1) * q]
        ssr += float(resid @ resid)
    return CoefEstimate(delta=delta, partition=partition, kind=KIND_RESTRICTED, ssr=ssr)


def estimate_gamma(design: SegmentedDesign) -> np.ndarray:
    """Scaled design Gram matrix ``Zbar'Zbar / T``.

    Raises ``GammaSingular`` unless the result is positive definite.
    """
    gamma = sym(design.zbar.T @ design.zbar / design.n_obs)
    vals = np.linalg.eigvalsh(gamma)
    if vals[0] <= RANK_RTOL * max(vals[-1], 0.0) or vals[-1] <= 0.0:
        raise GammaSingular("Zbar'Zbar / T is not positive definite")
    return gamma


def newey_west_bandwidth(n_obs: int) -> int:
    """Rule-of-thumb Bartlett bandwidth, floor(4 (T/100)^(2/9))."""
    return int(math.floor(4.0 * (n_obs / 100.0) ** (2.0 / 9.0)))


def estimate_omega(
    design: SegmentedDesign,
    residuals: np.ndarray,
    method: str = "hc0",
    bandwidth: int | None = None,
) -> np.ndarray:
    """Score covariance estimate ``Omega_hat``.

    ``method="hc0"`` returns ``T^-1 sum_t u_t^2 zbar_t zbar_t'``.
    ``method="hac"`` adds Bartlett-weighted autocovariances of the score
    sequence up to ``bandwidth`` lags (rule-of-thumb bandwidth when None).
    The output is symmetrized and any negative eigenvalues are clipped to
    zero with a warning.
    """
    residuals = np.asarray(residuals, dtype=float).reshape(-1)
    if residuals.shape[0] != design.n_obs:
        raise DimensionMismatch(
            f"{residuals.shape[0]} residuals for {design.n_obs} observations"
        )
    t_total = design.n_obs
    scores = design.zbar * residuals[:, None]
    omega = scores.T @ scores / t_total
    if method == "hac":
        lags = newey_west_bandwidth(t_total) if bandwidth is None else int(bandwidth)
        if lags < 0:
            raise DimensionMismatch("bandwidth must be >= 0")
        for lag in range(1, lags + 1):
            gamma_l = scores[lag:].T @ scores[:-lag] / t_total
            omega += (1.0 - lag / (lags + 1.0)) * (gamma_l + gamma_l.T)
    elif method != "hc0":
        raise DimensionMismatch(f"unknown omega method {method!r}")
    omega = sym(omega)
    vals, vecs = np.linalg.eigh(omega)
    if vals[0] < 0.0:
        warnings.warn(
            "score covariance had negative eigenvalues; clipped to zero",
            RuntimeWarning,
            stacklevel=2,
        )
        omega = sym((vecs * np.clip(vals, 0.0, None)) @ vecs.T)
    return omega


def build_plugin_matrices(
    design: SegmentedDesign,
    residuals: np.ndarray,
    restriction: Restriction,
    method: str = "hc0",
    bandwidth: int | None = None,
) -> PluginMatrices:
    """Assemble ``Gamma_hat``, ``Omega_hat`` and ``A_hat`` from a fitted design."""
    restriction.check_dims(design.n_coefs)
    gamma = estimate_gamma(design)
    omega = estimate_omega(design, residuals, method=method, bandwidth=bandwidth)
    half = pd_solve(gamma, omega, name="gamma_hat")
    sandwich = sym(pd_solve(gamma, half.T, name="gamma_hat"))
    rmat = restriction.matrix
    core = sym(rmat @ sandwich @ rmat.T)
    a_hat = sym(rmat.T @ pd_solve(core, rmat, name="R sandwich R'"))
    label = "hc0" if method == "hc0" else f"hac({newey_west_bandwidth(design.n_obs) if bandwidth is None else int(bandwidth)})"
    return PluginMatrices(gamma_hat=gamma, omega_hat=omega, a_hat=a_hat, omega_method=label)


def wald_distance(
    ue: CoefEstimate, re: CoefEstimate, plugin: PluginMatrices, n_obs: int
) -> float:
    """psi = T (d_re - d_ue)' A_hat (d_re - d_ue); zero iff the fits coincide."""
    if ue.partition != re.partition:
        raise MismatchedPartitions(
            f"unrestricted fit at {ue.partition.breaks}, restricted at {re.partition.breaks}"
        )
    diff = re.delta - ue.delta
    return max(float(n_obs * diff @ plugin.a_hat @ diff), 0.0)


def shrinkage_estimate(
    ue: CoefEstimate,
    re: CoefEstimate,
    plugin: PluginMatrices,
    h: ShrinkageFunction,
    n_obs: int,
) -> CoefEstimate:
    """Combine a restricted and an unrestricted fit through the rule ``h``.

    Returns ``d_re + h(psi) (d_ue - d_re)``.  When ``psi == 0`` the two fits
    coincide and the restricted fit is returned without evaluating ``h``
    (the limit convention for rules singular at zero).

    Raises
    ------
    MismatchedPartitions
        If the two fits were computed on different partitions.
    """
    psi = wald_distance(ue, re, plugin, n_obs)
    if psi == 0.0:
        delta = re.delta.copy()
    else:
        factor = float(h.evaluate(psi))
        delta = re.delta + factor * (ue.delta - re.delta)
    return CoefEstimate(
        delta=delta,
        partition=ue.partition,
        kind=KIND_SHRINKAGE,
        ssr=None,
        label=h.name,
    )


def make_james_stein(k: int) -> ShrinkageFunction:
    """h(x) = 1 - (k - 2)/x.  Requires k > 2."""
    if k <= 2:
        raise KTooSmall(f"James-Stein rule needs k > 2, got {k}")
    return ShrinkageFunction(
        evaluate=lambda x: 1.0 - (k - 2.0) / x,
        name="james-stein",
        requires_k_gt_2=True,
    )


def make_positive_part(k: int) -> ShrinkageFunction:
    """h(x) = max(0, 1 - (k - 2)/x).  Requires k > 2."""
    if k <= 2:
        raise KTooSmall(f"positive-part rule needs k > 2, got {k}")
    return ShrinkageFunction(
        evaluate=lambda x: max(0.0, 1.0 - (k - 2.0) / x),
        name="positive-part",
        requires_k_gt_2=True,
        breakpoints=(float(k - 2),),
    )


def make_pretest(k: int, alpha: float) -> ShrinkageFunction:
    """h(x) = 1{x > chi2 quantile at level 1 - alpha with k dof}."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if k < 1:
        raise KTooSmall(f"pretest needs k >= 1, got {k}")
    threshold = float(sps.chi2.ppf(1.0 - alpha, df=k))
    return ShrinkageFunction(
        evaluate=lambda x: 1.0 if x > threshold else 0.0,
        name=f"pretest({alpha:g})",
        breakpoints=(threshold,),
    )


def residuals_of(data: RegressionData, estimate: CoefEstimate) -> np.ndarray:
    """Residual vector ``y - Zbar delta`` of an estimate on its own partition."""
    design = build_design(data, estimate.partition)
    return data.y - design.zbar @ estimate.delta
