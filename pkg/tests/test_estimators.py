import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import special

from helpers import nullspace_restricted_fit, random_restriction
from steinbreak import (
    CoefEstimate,
    KTooSmall,
    MismatchedPartitions,
    Partition,
    PluginMatrices,
    RegressionData,
    Restriction,
    ShrinkageFunction,
    build_design,
    build_plugin_matrices,
    estimate_gamma,
    estimate_omega,
    fit_restricted,
    fit_unrestricted,
    make_james_stein,
    make_positive_part,
    make_pretest,
    newey_west_bandwidth,
    residuals_of,
    shrinkage_estimate,
    wald_distance,
)
from steinbreak.errors import GammaSingular


def test_fit_unrestricted_exact_recovery():
    rng = np.random.default_rng(0)
    z = rng.normal(1.0, 1.0, size=(20, 2))
    delta0 = np.array([1.0, 2.0, -0.5, 0.25])
    part = Partition((10,))
    y = np.concatenate([z[:10] @ delta0[:2], z[10:] @ delta0[2:]])
    fit = fit_unrestricted(RegressionData(y=y, z=z), part)
    assert_allclose(fit.delta, delta0, atol=1e-9)
    assert fit.ssr <= 1e-18


def test_fit_unrestricted_single_segment_scalar():
    z = np.arange(1.0, 9.0).reshape(-1, 1)
    data = RegressionData(y=2.0 * z[:, 0], z=z)
    fit = fit_unrestricted(data, Partition(()))
    assert_allclose(fit.delta, [2.0], rtol=1e-12)


def test_fit_unrestricted_mc_mean_near_truth():
    # average of the estimator over replications approaches the truth
    delta0 = np.array([1.0, -0.5])
    total = np.zeros(2)
    reps = 300
    for rep in range(reps):
        rng = np.random.default_rng(1000 + rep)
        z = rng.normal(1.0, 1.0, size=(60, 2))
        y = z @ delta0 + rng.normal(0, 1, 60)
        total += fit_unrestricted(RegressionData(y=y, z=z), Partition(())).delta
    mean = total / reps
    # MC stderr of each component is about 0.02 at T=60, 300 reps
    assert np.max(np.abs(mean - delta0)) < 0.02


def test_fit_restricted_projection_is_identity_when_satisfied():
    rng = np.random.default_rng(1)
    z = rng.normal(size=(16, 1))
    y = rng.normal(size=16)
    data = RegressionData(y=y, z=z)
    part = Partition((8,))
    d_ue = fit_unrestricted(data, part).delta
    rmat = np.array([[1.0, 3.0]])
    restr = Restriction(matrix=rmat, rhs=rmat @ d_ue)
    fit = fit_restricted(data, part, restr)
    assert_allclose(fit.delta, d_ue, rtol=1e-10)


def test_fit_restricted_identity_to_zero():
    rng = np.random.default_rng(2)
    z = rng.normal(size=(12, 1))
    y = rng.normal(size=12)
    data = RegressionData(y=y, z=z)
    restr = Restriction(matrix=np.eye(2), rhs=np.zeros(2))
    fit = fit_restricted(data, Partition((6,)), restr)
    assert_allclose(fit.delta, np.zeros(2), atol=1e-12)
    assert_allclose(fit.ssr, float(y @ y), rtol=1e-12)


def test_fit_restricted_matches_nullspace_oracle():
    rng = np.random.default_rng(3)
    for seed in range(20):
        r = np.random.default_rng(seed)
        t_total = int(r.integers(15, 40))
        q = int(r.choice([1, 2]))
        m = int(r.choice([0, 1]))
        if (m + 1) * q * 3 > t_total:
            m = 0
        z = r.normal(1.0, 1.0, size=(t_total, q))
        y = r.normal(size=t_total)
        data = RegressionData(y=y, z=z)
        breaks = (t_total // 2,) if m == 1 else ()
        part = Partition(breaks)
        n = (m + 1) * q
        k = int(r.integers(1, n + 1)) if n > 1 else 1
        restr = random_restriction(rng, n, k)
        fit = fit_restricted(data, part, restr)
        delta_o, ssr_o = nullspace_restricted_fit(data, part, restr)
        assert abs(fit.ssr - ssr_o) <= 1e-8 * max(ssr_o, 1.0), f"seed {seed}"
        assert_allclose(fit.delta, delta_o, atol=1e-7)
        gap = np.max(np.abs(restr.matrix @ fit.delta - restr.rhs))
        assert gap <= 1e-8 * (1.0 + np.max(np.abs(restr.rhs)))


def test_estimate_gamma_constant_regressor():
    data = RegressionData(y=np.zeros(10), z=np.ones((10, 1)))
    design = build_design(data, Partition(()))
    assert_allclose(estimate_gamma(design), [[1.0]], rtol=1e-12)
    design2 = build_design(data, Partition((5,)))
    assert_allclose(estimate_gamma(design2), np.diag([0.5, 0.5]), rtol=1e-12)


def test_estimate_gamma_mc_convergence():
    # i.i.d. N_q(1, S) regressors: Gamma_hat approaches block-diagonal
    # lambda_p * E[z z'] as T grows
    rho = 0.5
    cov = np.array([[1.0, rho], [rho, 1.0]])
    ezz = cov + np.ones((2, 2))  # E[z z'] = Sigma + mu mu'
    rng = np.random.default_rng(4)
    t_total = 4000
    z = rng.multivariate_normal(np.ones(2), cov, size=t_total)
    data = RegressionData(y=np.zeros(t_total), z=z)
    design = build_design(data, Partition((t_total // 2,)))
    gamma = estimate_gamma(design)
    expected = np.zeros((4, 4))
    expected[:2, :2] = 0.5 * ezz
    expected[2:, 2:] = 0.5 * ezz
    assert np.max(np.abs(gamma - expected)) < 0.12


def test_estimate_gamma_singular():
    data = RegressionData(y=np.zeros(6), z=np.ones((6, 1)))
    design = build_design(data, Partition((1,)))  # first segment has 1 row
    # one-row segments keep gamma PD for q=1; use duplicated columns instead
    z = np.column_stack([np.ones(6), np.ones(6)])
    bad = build_design(RegressionData(y=np.zeros(6), z=z), Partition(()))
    with pytest.raises(GammaSingular):
        estimate_gamma(bad)
    estimate_gamma(design)  # still fine


def test_estimate_omega_constant_residuals():
    data = RegressionData(y=np.zeros(8), z=np.ones((8, 1)))
    design = build_design(data, Partition(()))
    omega = estimate_omega(design, np.full(8, 3.0))
    assert_allclose(omega, [[9.0]], rtol=1e-12)


def test_estimate_omega_hc0_matches_sigma2_gamma():
    rng = np.random.default_rng(5)
    t_total = 4000
    z = rng.normal(1.0, 1.0, size=(t_total, 2))
    u = rng.normal(0.0, 1.5, size=t_total)
    data = RegressionData(y=z @ [1.0, 1.0] + u, z=z)
    design = build_design(data, Partition(()))
    gamma = estimate_gamma(design)
    omega = estimate_omega(design, u)
    err = np.linalg.norm(omega - 1.5**2 * gamma) / np.linalg.norm(1.5**2 * gamma)
    assert err < 0.08


def test_estimate_omega_hac_closer_to_long_run_variance():
    # AR(1) scores with constant regressor: the long-run variance is
    # var(u) (1 + phi) / (1 - phi); the Bartlett estimate must beat HC0
    rng = np.random.default_rng(6)
    phi, sigma_e = 0.6, 1.0
    t_total = 6000
    u = np.empty(t_total)
    u[0] = rng.normal(0, sigma_e / np.sqrt(1 - phi**2))
    for t in range(1, t_total):
        u[t] = phi * u[t - 1] + rng.normal(0, sigma_e)
    var_u = sigma_e**2 / (1 - phi**2)
    lrv = var_u * (1 + phi) / (1 - phi)
    data = RegressionData(y=u, z=np.ones((t_total, 1)))
    design = build_design(data, Partition(()))
    hc0 = estimate_omega(design, u)[0, 0]
    hac = estimate_omega(design, u, method="hac")[0, 0]
    assert abs(hac - lrv) < abs(hc0 - lrv)


def test_newey_west_bandwidth():
    assert newey_west_bandwidth(100) == 4
    assert newey_west_bandwidth(500) == int(np.floor(4 * 5 ** (2 / 9)))


def _unit_plugin(n):
    return PluginMatrices(
        gamma_hat=np.eye(n), omega_hat=np.eye(n), a_hat=np.eye(n), omega_method="hc0"
    )


def _pair(delta_ue, delta_re):
    part = Partition(())
    ue = CoefEstimate(delta=np.asarray(delta_ue, float), partition=part, kind="unrestricted", ssr=0.0)
    re = CoefEstimate(delta=np.asarray(delta_re, float), partition=part, kind="restricted", ssr=0.0)
    return ue, re


def test_shrinkage_constant_rules_recover_endpoints():
    ue, re = _pair([1.0, 2.0, 3.0, 4.0], [0.0, 0.0, 0.0, 0.0])
    plug = _unit_plugin(4)
    h_one = ShrinkageFunction(evaluate=lambda x: 1.0, name="one")
    h_zero = ShrinkageFunction(evaluate=lambda x: 0.0, name="zero")
    assert_allclose(shrinkage_estimate(ue, re, plug, h_one, 10).delta, ue.delta)
    assert_allclose(shrinkage_estimate(ue, re, plug, h_zero, 10).delta, re.delta)


def test_shrinkage_james_stein_midpoint():
    # k = 4, unit A-hat, T ||d||^2 = 4 -> psi = 4, h(4) = 1 - 2/4 = 0.5
    ue, re = _pair([1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0])
    plug = _unit_plugin(4)
    assert_allclose(wald_distance(ue, re, plug, 4), 4.0)
    est = shrinkage_estimate(ue, re, plug, make_james_stein(4), 4)
    assert_allclose(est.delta, 0.5 * (ue.delta + re.delta), rtol=1e-12)
    assert est.ssr is None and est.label == "james-stein"


def test_shrinkage_positive_part_clamps_to_restricted():
    # psi = 1 < k - 2 = 2 -> h+ = 0 -> restricted estimate
    ue, re = _pair([0.5, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0])
    plug = _unit_plugin(4)
    assert_allclose(wald_distance(ue, re, plug, 4), 1.0)
    est = shrinkage_estimate(ue, re, plug, make_positive_part(4), 4)
    assert_allclose(est.delta, re.delta)


def test_shrinkage_psi_zero_skips_h():
    ue, re = _pair([1.0, 2.0], [1.0, 2.0])
    plug = _unit_plugin(2)

    def explode(_):
        raise AssertionError("h must not be evaluated at psi = 0")

    est = shrinkage_estimate(ue, re, plug, ShrinkageFunction(evaluate=explode, name="boom"), 10)
    assert_allclose(est.delta, re.delta)


def test_shrinkage_mismatched_partitions():
    ue, _ = _pair([1.0, 2.0], [0.0, 0.0])
    re = CoefEstimate(
        delta=np.zeros(2), partition=Partition((3,)), kind="restricted", ssr=0.0
    )
    with pytest.raises(MismatchedPartitions):
        shrinkage_estimate(ue, re, _unit_plugin(2), make_james_stein(3), 10)


def test_shrinkage_collinearity():
    rng = np.random.default_rng(7)
    ue, re = _pair(rng.normal(size=5), rng.normal(size=5))
    plug = _unit_plugin(5)
    est = shrinkage_estimate(ue, re, plug, make_positive_part(5), 20)
    d1 = est.delta - re.delta
    d2 = ue.delta - re.delta
    cross = np.outer(d1, d2) - np.outer(d2, d1)
    assert np.max(np.abs(cross)) <= 1e-10 * np.max(np.abs(np.outer(d2, d2)))


def test_rule_factories():
    js = make_james_stein(3)
    assert_allclose(js.evaluate(1.0), 0.0)
    assert js.evaluate(1e12) == pytest.approx(1.0, abs=1e-10)
    pp = make_positive_part(5)
    for x in (0.1, 1.0, 2.9, 3.0, 10.0, 1e6):
        v = pp.evaluate(x)
        assert 0.0 <= v < 1.0
        assert v == max(0.0, js_value(5, x))
    for bad in (1, 2):
        with pytest.raises(KTooSmall):
            make_james_stein(bad)
        with pytest.raises(KTooSmall):
            make_positive_part(bad)


def js_value(k, x):
    return 1.0 - (k - 2.0) / x


def _chi2_quantile_bisect(k, prob):
    """Independent quantile via bisection on the regularized gamma CDF."""
    lo, hi = 0.0, 1e3
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if special.gammainc(k / 2.0, mid / 2.0) < prob:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_pretest_flips_at_independent_quantile():
    rule = make_pretest(4, 0.05)
    threshold = _chi2_quantile_bisect(4, 0.95)
    assert threshold == pytest.approx(9.4877, abs=1e-3)
    assert rule.evaluate(threshold - 1e-6) == 0.0
    assert rule.evaluate(threshold + 1e-6) == 1.0


def test_wald_distance_zero_iff_restriction_satisfied():
    rng = np.random.default_rng(8)
    z = rng.normal(1.0, 1.0, size=(40, 2))
    delta0 = np.array([1.0, 2.0, 1.0, 2.0])
    y = np.concatenate([z[:20] @ delta0[:2], z[20:] @ delta0[2:]])
    data = RegressionData(y=y, z=z)  # noiseless, restriction holds exactly
    part = Partition((20,))
    rmat = np.array([[1.0, 0.0, -1.0, 0.0], [0.0, 1.0, 0.0, -1.0], [1.0, 0.0, 0.0, 0.0]])
    restr = Restriction(matrix=rmat, rhs=np.array([0.0, 0.0, 1.0]))
    ue = fit_unrestricted(data, part)
    re = fit_restricted(data, part, restr)
    design = build_design(data, part)
    plug = build_plugin_matrices(design, residuals_of(data, ue) + 1.0, restr)
    assert wald_distance(ue, re, plug, 40) <= 1e-16
    # perturb the response so the restriction fails: psi > 0
    data2 = RegressionData(y=y + rng.normal(0, 0.5, 40), z=z)
    ue2 = fit_unrestricted(data2, part)
    re2 = fit_restricted(data2, part, restr)
    plug2 = build_plugin_matrices(design, residuals_of(data2, ue2), restr)
    assert wald_distance(ue2, re2, plug2, 40) > 0.0


def test_plugin_projection_idempotency():
    rng = np.random.default_rng(9)
    z = rng.normal(1.0, 1.0, size=(60, 2))
    y = rng.normal(size=60)
    data = RegressionData(y=y, z=z)
    part = Partition((30,))
    ue = fit_unrestricted(data, part)
    design = build_design(data, part)
    restr = random_restriction(rng, 4, 3)
    for method in ("hc0", "hac"):
        plug = build_plugin_matrices(design, residuals_of(data, ue), restr, method=method)
        sandwich = plug.sandwich
        lhs = plug.a_hat @ sandwich @ plug.a_hat
        rel = np.max(np.abs(lhs - plug.a_hat)) / np.max(np.abs(plug.a_hat))
        assert rel <= 1e-6
        assert np.linalg.matrix_rank(plug.a_hat, tol=1e-8) == restr.k
    assert plug.omega_method.startswith("hac(")
