"""Monte Carlo verification of the quadratic-form Gaussian identities.

Every risk formula in :mod:`steinbreak.risk` rests on three expectation
identities for ``X ~ N(mu, Sigma)`` with a possibly singular ``Sigma`` of
rank k, a PSD matrix ``A`` of the same rank satisfying ``A Sigma A = A``,
``Sigma A Sigma = Sigma`` and ``Sigma A mu = mu``, and a weight
``W = A^(1/2) W* A^(1/2)``:

- vector:     E[h(X'AX) W X]   = E[h(chi2_{k+2}(mu'A mu))] W mu
- quadratic:  E[h(X'AX) X'WX]  = E[h(chi2_{k+2})] tr(W Sigma)
                                 + E[h(chi2_{k+4})] mu'W mu
- cross:      E[h(X'AX) Y'WX], for (X, Y) jointly Gaussian with
              mu_Y = -mu_X, expands into four terms involving
              Sigma12 = cov(X, Y) (see mc_cross_identity).

This module checks each identity by simulation against the closed form, so
it is the package's independent ground truth: the moment kernels feed the
closed forms, and the sampler exercises the raw definition.

Sampling is chunked with per-chunk derived seeds and a fixed pairwise
reduction order, so results are bit-identical for a given seed no matter
how chunks would be scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .linalg import psd_rank_factor, sym, symmetric_rank
from .model import _readonly
from .risk import AsymptoticScaffold, make_weight, nc_chi2_expectation, random_scaffold

_CHUNK = 1 << 16


@dataclass(frozen=True)
class GaussianSetup:
    """Inputs to the identities: mean, covariance, metric and weight.

    ``sigma12``/``sigma22`` form the optional joint block for the cross
    identity, with the second component's mean fixed at ``-mu_x``.
    """

    mu_x: np.ndarray
    sigma: np.ndarray
    a: np.ndarray
    w: np.ndarray
    w_star: np.ndarray
    sigma12: np.ndarray | None = None
    sigma22: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.mu_x.shape[0]

    @property
    def k(self) -> int:
        return symmetric_rank(self.a)

    @property
    def has_joint(self) -> bool:
        return self.sigma12 is not None and self.sigma22 is not None

    def hypothesis_errors(self) -> dict[str, float]:
        """Relative residuals of A Sigma A = A, Sigma A Sigma = Sigma,
        Sigma A mu = mu (the conditions the closed forms require)."""
        a, s, mu = self.a, self.sigma, self.mu_x

        def rel(x, y):
            scale = max(float(np.max(np.abs(y))), 1e-300)
            return float(np.max(np.abs(x - y))) / scale

        return {
            "a_s_a": rel(a @ s @ a, a),
            "s_a_s": rel(s @ a @ s, s),
            "s_a_mu": rel(s @ a @ mu, mu) if np.any(mu) else 0.0,
        }


def setup_from_scaffold(
    scaffold: AsymptoticScaffold, w_star: np.ndarray | None = None
) -> GaussianSetup:
    """Cast a joint-limit scaffold as a Gaussian setup.

    The first component is the shrinking difference (mean ``-mu1``,
    variance L11) and the joint block carries its covariance with the
    restricted limit (L12, L22), which is exactly the configuration the
    risk derivation plugs into the identities.
    """
    weight = make_weight(scaffold.a, w_star)
    return GaussianSetup(
        mu_x=_readonly(-scaffold.mu1),
        sigma=scaffold.lambda11,
        a=scaffold.a,
        w=weight.w,
        w_star=weight.w_star,
        sigma12=scaffold.lambda12,
        sigma22=scaffold.lambda22,
    )


def random_gaussian_setup(dim: int, k: int, seed: int, joint: str = "scaffold") -> GaussianSetup:
    """A random setup satisfying the identity hypotheses, with joint block.

    The weight seed matrix ``W*`` is a random PSD matrix rather than the
    identity; with ``W* = I`` the quadratic identity degenerates for
    reciprocal rules (``X'WX / X'AX`` is identically one), which would make
    the check vacuous.

    ``joint`` picks the cross-covariance: ``"scaffold"`` uses the
    model-derived block, for which compatible weights annihilate the cross
    terms (``Sigma12 W = 0``); ``"general"`` uses ``Sigma12 = Sigma K`` with
    random ``K``, exercising the four-term cross expansion with every term
    nonzero.
    """
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x57A8)))
    b = rng.normal(size=(dim, dim))
    w_star = sym(b @ b.T / dim + 0.5 * np.eye(dim))
    setup = setup_from_scaffold(random_scaffold(dim, k, seed), w_star)
    if joint == "scaffold":
        return setup
    if joint != "general":
        raise ValueError(f"joint must be 'scaffold' or 'general', got {joint!r}")
    kmat = 0.4 * rng.normal(size=(dim, dim))
    sigma12 = setup.sigma @ kmat
    sigma22 = sym(kmat.T @ setup.sigma @ kmat) + np.eye(dim)
    return GaussianSetup(
        mu_x=setup.mu_x,
        sigma=setup.sigma,
        a=setup.a,
        w=setup.w,
        w_star=setup.w_star,
        sigma12=_readonly(sigma12),
        sigma22=_readonly(sigma22),
    )


def negative_control_setup(dim: int, k: int, seed: int) -> GaussianSetup:
    """A deliberately invalid setup: ``A`` is scaled so that the idempotency
    hypothesis ``A Sigma A = A`` fails (and with it ``Sigma A mu = mu``).
    The identities must then fail detectably.

    A mean-only violation (``mu`` pushed outside the range of ``Sigma`` with
    ``A`` intact) would not do here: with a compatible weight,
    ``A^(1/2) (I - Sigma A) = 0`` makes the identities insensitive to that
    component, so scaling ``A`` is the honest control.
    """
    base = random_gaussian_setup(dim, k, seed)
    return GaussianSetup(
        mu_x=base.mu_x,
        sigma=base.sigma,
        a=_readonly(1.5 * base.a),
        w=base.w,
        w_star=base.w_star,
        sigma12=base.sigma12,
        sigma22=base.sigma22,
    )


@dataclass(frozen=True)
class IdentityCheck:
    """Monte Carlo estimate vs closed form for one identity."""

    mc_estimate: np.ndarray
    closed_form: np.ndarray
    max_abs_err: float
    mc_stderr: np.ndarray
    n_samples: int
    seed: int

    def sigma_excess(self, atol: float = 1e-7) -> float:
        """Largest componentwise |error| / stderr.

        Components whose absolute error sits below ``atol * (1 + |closed|)``
        count as exact agreement: identities with an identically-zero
        integrand leave only factorization round-off on both sides, and a
        ratio of noise against noise would be meaningless.  The floor is
        orders of magnitude below any Monte Carlo error at feasible sample
        sizes, so it cannot mask a genuine discrepancy.
        """
        err = np.abs(np.atleast_1d(self.mc_estimate - self.closed_form))
        closed = np.abs(np.atleast_1d(self.closed_form))
        se = np.atleast_1d(self.mc_stderr)
        out = 0.0
        for e, c, s in zip(err, closed, se):
            if e <= atol * (1.0 + c):
                continue
            out = max(out, float(e / s) if s > 0 else np.inf)
        return out

    def passed(self, n_sigma: float = 3.0) -> bool:
        return self.sigma_excess() <= n_sigma


def _tree_sum(parts: list[np.ndarray]) -> np.ndarray:
    """Pairwise reduction in a fixed order (deterministic rounding)."""
    items = list(parts)
    while len(items) > 1:
        nxt = [items[i] + items[i + 1] for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]


def _apply_h(h, values: np.ndarray) -> np.ndarray:
    out = np.asarray(h(values), dtype=float)
    if out.shape != values.shape:
        out = np.vectorize(lambda x: float(h(x)))(values)
    return out


def _chunked_mean(row_fn, n_samples: int, seed: int):
    """Mean and standard error of ``row_fn(chunk_index, size)`` outputs.

    ``row_fn`` returns an (size, d) array; chunk boundaries are fixed by
    ``_CHUNK`` so the partial-sum tree is independent of scheduling.
    """
    sums, sumsqs = [], []
    done = 0
    idx = 0
    while done < n_samples:
        size = min(_CHUNK, n_samples - done)
        rows = row_fn(idx, size)
        sums.append(rows.sum(axis=0))
        sumsqs.append((rows * rows).sum(axis=0))
        done += size
        idx += 1
    total = _tree_sum(sums)
    total_sq = _tree_sum(sumsqs)
    mean = total / n_samples
    var = np.maximum(total_sq / n_samples - mean * mean, 0.0)
    stderr = np.sqrt(var / max(n_samples - 1, 1))
    return mean, stderr


def _chunk_rng(seed: int, idx: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, idx)))


def mc_vector_identity(
    setup: GaussianSetup, h, n_samples: int, seed: int
) -> IdentityCheck:
    """Check E[h(X'AX) W X] = E[h(chi2_{k+2}(mu'A mu))] W mu.

    ``h`` must accept numpy arrays.  Draws use a rank factor of Sigma.
    """
    if n_samples < 10_000:
        raise ValueError("need at least 10000 samples")
    factor = psd_rank_factor(setup.sigma)
    mu, a, w = setup.mu_x, setup.a, setup.w
    rank = factor.shape[1]

    def rows(idx, size):
        x = mu + _chunk_rng(seed, idx).standard_normal((size, rank)) @ factor.T
        hv = _apply_h(h, np.einsum("ni,ij,nj->n", x, a, x))
        return hv[:, None] * (x @ w)

    mean, stderr = _chunked_mean(rows, n_samples, seed)
    ncp = float(mu @ a @ mu)
    closed = nc_chi2_expectation(h, setup.k + 2, ncp) * (w @ mu)
    return IdentityCheck(
        mc_estimate=mean,
        closed_form=closed,
        max_abs_err=float(np.max(np.abs(mean - closed))),
        mc_stderr=stderr,
        n_samples=n_samples,
        seed=seed,
    )


def mc_quadratic_identity(
    setup: GaussianSetup, h, n_samples: int, seed: int
) -> IdentityCheck:
    """Check E[h(X'AX) X'WX] = E[h(chi2_{k+2})] tr(W Sigma) + E[h(chi2_{k+4})] mu'W mu."""
    if n_samples < 10_000:
        raise ValueError("need at least 10000 samples")
    factor = psd_rank_factor(setup.sigma)
    mu, a, w = setup.mu_x, setup.a, setup.w
    rank = factor.shape[1]

    def rows(idx, size):
        x = mu + _chunk_rng(seed, idx).standard_normal((size, rank)) @ factor.T
        hv = _apply_h(h, np.einsum("ni,ij,nj->n", x, a, x))
        return (hv * np.einsum("ni,ij,nj->n", x, w, x))[:, None]

    mean, stderr = _chunked_mean(rows, n_samples, seed)
    ncp = float(mu @ a @ mu)
    d1 = float(np.trace(w @ setup.sigma))
    d2 = float(mu @ w @ mu)
    closed = np.array(
        [
            nc_chi2_expectation(h, setup.k + 2, ncp) * d1
            + nc_chi2_expectation(h, setup.k + 4, ncp) * d2
        ]
    )
    return IdentityCheck(
        mc_estimate=mean,
        closed_form=closed,
        max_abs_err=float(np.max(np.abs(mean - closed))),
        mc_stderr=stderr,
        n_samples=n_samples,
        seed=seed,
    )


def mc_cross_identity(
    setup: GaussianSetup, h, n_samples: int, seed: int
) -> IdentityCheck:
    """Check the cross identity on the joint block, against the four-term form

        - E[h(chi2_{k+2})] mu'W mu  - E[h(chi2_{k+2})] mu'A S12 W mu
        + E[h(chi2_{k+2})] tr(S12 W S11 A) + E[h(chi2_{k+4})] mu'A S12 W mu

    with mu = mu_X and S11 = Var(X), S12 = Cov(X, Y), mu_Y = -mu_X.
    """
    if n_samples < 10_000:
        raise ValueError("need at least 10000 samples")
    if not setup.has_joint:
        raise DimensionMismatch("setup has no joint block")
    p = setup.dim
    joint = np.block(
        [[setup.sigma, setup.sigma12], [setup.sigma12.T, setup.sigma22]]
    )
    factor = psd_rank_factor(sym(joint))
    rank = factor.shape[1]
    mu, a, w = setup.mu_x, setup.a, setup.w
    mu_joint = np.concatenate([mu, -mu])

    def rows(idx, size):
        xy = mu_joint + _chunk_rng(seed, idx).standard_normal((size, rank)) @ factor.T
        x, yv = xy[:, :p], xy[:, p:]
        hv = _apply_h(h, np.einsum("ni,ij,nj->n", x, a, x))
        return (hv * np.einsum("ni,ij,nj->n", yv, w, x))[:, None]

    mean, stderr = _chunked_mean(rows, n_samples, seed)
    ncp = float(mu @ a @ mu)
    e2 = nc_chi2_expectation(h, setup.k + 2, ncp)
    e4 = nc_chi2_expectation(h, setup.k + 4, ncp)
    s12 = setup.sigma12
    closed = np.array(
        [
            -e2 * float(mu @ w @ mu)
            - e2 * float(mu @ a @ s12 @ w @ mu)
            + e2 * float(np.trace(s12 @ w @ setup.sigma @ a))
            + e4 * float(mu @ a @ s12 @ w @ mu)
        ]
    )
    return IdentityCheck(
        mc_estimate=mean,
        closed_form=closed,
        max_abs_err=float(np.max(np.abs(mean - closed))),
        mc_stderr=stderr,
        n_samples=n_samples,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Verification suite (used by the tests and the `verify` subcommand)


@dataclass(frozen=True)
class VerifyEntry:
    """One suite row: an identity on a setup with a specific rule."""

    setup_index: int
    identity: str
    h_name: str
    check: IdentityCheck
    expect_fail: bool

    @property
    def ok(self) -> bool:
        """True when the entry behaves as expected (passes, or fails for
        the negative control)."""
        passed = self.check.passed()
        return (not passed) if self.expect_fail else passed


_IDENTITIES = {
    "vector": mc_vector_identity,
    "quadratic": mc_quadratic_identity,
    "cross": mc_cross_identity,
}


def _suite_seed(seed: int, *parts: int) -> int:
    return int(np.random.SeedSequence((seed, *parts)).generate_state(1)[0])


def run_verification_suite(
    n_samples: int = 1_000_000,
    seed: int = 2,
    n_setups: int = 5,
    include_negative_control: bool = True,
) -> list[VerifyEntry]:
    """Run all three identities on randomized valid setups, for the rules
    h = 1, h = 1/x and an indicator truncation, plus one negative control
    that must fail."""
    dims = [(6, 3), (8, 4), (10, 5), (7, 4), (9, 3)]
    entries: list[VerifyEntry] = []
    for i in range(n_setups):
        p, k = dims[i % len(dims)]
        joint = "scaffold" if i % 2 == 0 else "general"
        setup = random_gaussian_setup(p, k, _suite_seed(seed, 0, i), joint=joint)
        cut = float(k + 1)
        rules = [
            ("h=1", lambda x: np.ones_like(np.asarray(x, dtype=float))),
            ("h=1/x", lambda x: 1.0 / np.asarray(x, dtype=float)),
            (
                f"h=ind(x<{cut:g})",
                lambda x, c=cut: (np.asarray(x, dtype=float) < c).astype(float),
            ),
        ]
        for j, (h_name, h) in enumerate(rules):
            for l, (ident, fn) in enumerate(_IDENTITIES.items()):
                check = fn(setup, h, n_samples, _suite_seed(seed, 1, i, j, l))
                entries.append(
                    VerifyEntry(
                        setup_index=i,
                        identity=ident,
                        h_name=h_name,
                        check=check,
                        expect_fail=False,
                    )
                )
    if include_negative_control:
        bad = negative_control_setup(8, 4, _suite_seed(seed, 2))
        check = mc_vector_identity(
            bad, lambda x: 1.0 / np.asarray(x, dtype=float), n_samples, _suite_seed(seed, 3)
        )
        entries.append(
            VerifyEntry(
                setup_index=-1,
                identity="vector",
                h_name="h=1/x",
                check=check,
                expect_fail=True,
            )
        )
    return entries
