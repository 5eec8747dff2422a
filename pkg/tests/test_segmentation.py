import numpy as np
import pytest
from numpy.testing import assert_allclose

from helpers import nullspace_restricted_fit, random_instance, random_restriction
from steinbreak import (
    BudgetExceeded,
    InfeasibleConfig,
    Partition,
    RegressionData,
    Restriction,
    SearchConfig,
    count_partitions,
    find_breaks_restricted,
    find_breaks_unrestricted,
    ssr_restricted,
    ssr_unrestricted,
)
from steinbreak.segmentation import METHOD_EXHAUSTIVE, METHOD_REFINE, SegmentMoments


def two_regime_means():
    # scalar constant regressor; segment means 0 and 5
    y = np.array([0.0, 0.0, 0.0, 5.0, 5.0, 5.0])
    return RegressionData(y=y, z=np.ones((6, 1)))


def test_ssr_unrestricted_perfect_fit_is_zero():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(12, 2))
    delta = np.array([[1.0, -2.0], [3.0, 0.5]])
    y = np.concatenate([z[:6] @ delta[0], z[6:] @ delta[1]])
    data = RegressionData(y=y, z=z)
    assert ssr_unrestricted(data, Partition((6,))) <= 1e-10


def test_ssr_unrestricted_hand_example():
    data = two_regime_means()
    assert ssr_unrestricted(data, Partition((3,))) <= 1e-10
    # breaks=(2): second segment (0,5,5,5) has mean 3.75, SSR 18.75
    assert_allclose(ssr_unrestricted(data, Partition((2,))), 18.75, rtol=1e-12)


def test_ssr_unrestricted_no_breaks_is_plain_ols():
    rng = np.random.default_rng(1)
    z = rng.normal(size=(15, 2))
    y = rng.normal(size=15)
    data = RegressionData(y=y, z=z)
    beta, *_ = np.linalg.lstsq(z, y, rcond=None)
    expected = float(np.sum((y - z @ beta) ** 2))
    assert_allclose(ssr_unrestricted(data, Partition(())), expected, rtol=1e-12)


def test_ssr_restricted_inactive_constraint():
    rng = np.random.default_rng(2)
    z = rng.normal(size=(14, 1))
    y = rng.normal(size=14)
    data = RegressionData(y=y, z=z)
    part = Partition((7,))
    # restriction already satisfied by the unrestricted fit: r = R d_ue
    from steinbreak import fit_unrestricted

    d_ue = fit_unrestricted(data, part).delta
    rmat = np.array([[1.0, 2.0]])
    restr = Restriction(matrix=rmat, rhs=rmat @ d_ue)
    assert_allclose(
        ssr_restricted(data, part, restr), ssr_unrestricted(data, part), rtol=1e-10
    )


def test_ssr_restricted_identity_restriction_forces_zero():
    rng = np.random.default_rng(3)
    z = rng.normal(size=(10, 1))
    y = rng.normal(size=10)
    data = RegressionData(y=y, z=z)
    restr = Restriction(matrix=np.eye(2), rhs=np.zeros(2))
    assert_allclose(
        ssr_restricted(data, Partition((5,)), restr), float(y @ y), rtol=1e-12
    )


def test_ssr_restricted_matches_nullspace_oracle():
    # equality restriction between segment coefficients, checked against an
    # independent reparameterization solve
    rng = np.random.default_rng(4)
    z = rng.normal(1.0, 1.0, size=(30, 2))
    y = rng.normal(size=30)
    data = RegressionData(y=y, z=z)
    part = Partition((10, 20))
    rmat = np.zeros((2, 6))
    rmat[0, 0], rmat[0, 4] = 1.0, -1.0  # segment 1 == segment 3, coef 1
    rmat[1, 1], rmat[1, 5] = 1.0, -1.0  # segment 1 == segment 3, coef 2
    restr = Restriction(matrix=rmat, rhs=np.zeros(2))
    _, oracle = nullspace_restricted_fit(data, part, restr)
    value = ssr_restricted(data, part, restr)
    assert_allclose(value, oracle, rtol=1e-10)
    assert value >= ssr_unrestricted(data, part) - 1e-10


def test_find_breaks_noiseless_two_regime():
    data = two_regime_means()
    res = find_breaks_unrestricted(data, SearchConfig(m=1))
    assert res.partition.breaks == (3,)
    assert res.ssr <= 1e-10
    assert res.is_global


def test_find_breaks_m_zero():
    data = two_regime_means()
    res = find_breaks_unrestricted(data, SearchConfig(m=0))
    assert res.partition.breaks == ()
    assert_allclose(res.ssr, ssr_unrestricted(data, Partition(())), rtol=1e-12)


def test_dp_matches_exhaustive_on_random_instances():
    for seed in range(40):
        data, m = random_instance(seed)
        dp = find_breaks_unrestricted(data, SearchConfig(m=m))
        ex = find_breaks_unrestricted(
            data, SearchConfig(m=m, method=METHOD_EXHAUSTIVE)
        )
        assert dp.partition.breaks == ex.partition.breaks, f"seed {seed}"
        assert dp.ssr == ex.ssr, f"seed {seed}"


def test_dp_lexicographic_tie_break():
    # all-zero response: every feasible partition has SSR 0, so the search
    # must return the lexicographically smallest break vector
    data = RegressionData(y=np.zeros(12), z=np.ones((12, 1)))
    res = find_breaks_unrestricted(data, SearchConfig(m=2))
    assert res.partition.breaks == (1, 2)
    ex = find_breaks_unrestricted(data, SearchConfig(m=2, method=METHOD_EXHAUSTIVE))
    assert ex.partition.breaks == (1, 2)


def test_adding_a_break_never_increases_min_ssr():
    rng = np.random.default_rng(5)
    z = rng.normal(size=(25, 1))
    y = rng.normal(size=25)
    data = RegressionData(y=y, z=z)
    prev = np.inf
    for m in range(4):
        res = find_breaks_unrestricted(data, SearchConfig(m=m))
        assert res.ssr <= prev + 1e-12
        prev = res.ssr


def test_restricted_exhaustive_and_refine_agree_small():
    # binding zero-restriction on segment 2
    rng = np.random.default_rng(6)
    z = rng.normal(1.0, 1.0, size=(30, 1))
    y = np.concatenate([2.0 * z[:14, 0], 0.4 * z[14:, 0]]) + rng.normal(0, 0.5, 30)
    data = RegressionData(y=y, z=z)
    restr = Restriction(matrix=np.array([[0.0, 1.0]]), rhs=np.zeros(1))
    ex = find_breaks_restricted(data, restr, SearchConfig(m=1, method=METHOD_EXHAUSTIVE))
    cr = find_breaks_restricted(data, restr, SearchConfig(m=1, method=METHOD_REFINE))
    assert ex.partition.breaks == cr.partition.breaks
    assert_allclose(ex.ssr, cr.ssr, rtol=1e-12)
    assert ex.is_global and not cr.is_global


def test_restricted_vacuous_restriction_noiseless():
    # noiseless data whose truth satisfies the restriction: the restricted
    # search finds the same (zero SSR) breaks as the unrestricted one
    rng = np.random.default_rng(7)
    z = rng.normal(1.0, 1.0, size=(24, 1))
    y = np.concatenate([1.5 * z[:12, 0], np.zeros(12)])
    data = RegressionData(y=y, z=z)
    restr = Restriction(matrix=np.array([[0.0, 1.0]]), rhs=np.zeros(1))
    ue = find_breaks_unrestricted(data, SearchConfig(m=1))
    re = find_breaks_restricted(data, restr, SearchConfig(m=1, method=METHOD_EXHAUSTIVE))
    assert ue.partition.breaks == re.partition.breaks == (12,)
    assert re.ssr <= 1e-10


def test_restricted_ssr_dominates_unrestricted_everywhere():
    rng = np.random.default_rng(8)
    for seed in range(10):
        data, m = random_instance(seed + 100, m_choices=(1, 2))
        n = (m + 1) * data.n_regressors
        restr = random_restriction(rng, n, min(2, n - 1) or 1)
        cfg = SearchConfig(m=m)
        ue = find_breaks_unrestricted(data, cfg)
        assert (
            ssr_restricted(data, ue.partition, restr)
            >= ssr_unrestricted(data, ue.partition) - 1e-9
        )


def test_refine_never_worse_than_initialization():
    rng = np.random.default_rng(9)
    for seed in range(10):
        data, m = random_instance(seed + 200, m_choices=(1, 2))
        n = (m + 1) * data.n_regressors
        restr = random_restriction(rng, n, 1)
        ue = find_breaks_unrestricted(data, SearchConfig(m=m))
        init_ssr = ssr_restricted(data, ue.partition, restr)
        cr = find_breaks_restricted(data, restr, SearchConfig(m=m, method=METHOD_REFINE))
        assert cr.ssr <= init_ssr + 1e-10
        assert cr.iterations <= SearchConfig(m=m).max_iters


def test_result_ssr_matches_recompute():
    data, m = random_instance(42, m_choices=(2,))
    res = find_breaks_unrestricted(data, SearchConfig(m=m))
    assert_allclose(res.ssr, ssr_unrestricted(data, res.partition), rtol=1e-8)


def test_budget_exceeded_reports_count():
    data, _ = random_instance(50, t_range=(25, 30))
    restr = Restriction(matrix=np.ones((1, 3 * data.n_regressors)), rhs=np.zeros(1))
    cfg = SearchConfig(m=2, method=METHOD_EXHAUSTIVE, exhaustive_budget=5)
    with pytest.raises(BudgetExceeded) as err:
        find_breaks_restricted(data, restr, cfg)
    min_len = cfg.min_segment_length(data.n_obs, data.n_regressors)
    assert err.value.partition_count == count_partitions(data.n_obs, 2, min_len)


def test_infeasible_config():
    data = RegressionData(y=np.zeros(6), z=np.ones((6, 1)))
    with pytest.raises(InfeasibleConfig):
        find_breaks_unrestricted(data, SearchConfig(m=6))


def test_moments_table_shared_between_searches():
    data, _ = random_instance(60, m_choices=(1,))
    stats = SegmentMoments(data)
    res1 = find_breaks_unrestricted(data, SearchConfig(m=1), stats=stats)
    res2 = find_breaks_unrestricted(data, SearchConfig(m=1))
    assert res1.partition.breaks == res2.partition.breaks
    assert res1.ssr == res2.ssr
