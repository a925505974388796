import warnings

import numpy as np
import pytest

from lrffs import estimators as est
from lrffs.core import DataError, Shard

from suites import exhaustive_null_means, oracle_equivalence

# labels r=0, q=1
HAND = Shard(np.array([[2.0], [4.0], [1.0], [3.0]]), [0, 0, 1, 1], "c0", 2)


def test_class_partition_cases():
    A, B = est.class_partition(HAND, 0)
    assert A.tolist() == [2, 3] and B.tolist() == [0, 1]
    only = Shard(np.zeros((3, 1)), [1, 1, 1], "c0", 2)
    A, B = est.class_partition(only, 1)
    assert A.size == 0 and B.tolist() == [0, 1, 2]
    A, B = est.class_partition(only, 0)
    assert B.size == 0


def test_mann_whitney_hand_values():
    assert est.mann_whitney_gamma([1, 3], [2, 4]) == 0.75
    assert est.mann_whitney_gamma([1, 2], [5, 6]) == 1.0
    assert est.mann_whitney_gamma([1], [1]) == 0.0
    with pytest.raises(est.UndefinedStatistic):
        est.mann_whitney_gamma([], [1])


def test_first_order_hand_example():
    st = est.local_first_order_stats(HAND, 0, 0)
    assert st.u_hat == pytest.approx(3 / 12, abs=1e-15)
    assert st.theta_hat == pytest.approx(4 / 12, abs=1e-15)
    assert st.gamma_hat == 0.75
    assert st.lam == pytest.approx(2 / 3, abs=1e-15)


def test_first_order_missing_category():
    s = Shard(np.array([[1.0], [2.0], [3.0]]), [0, 0, 0], "c0", 3)
    st = est.local_first_order_stats(s, 0, 2)
    assert (st.u_hat, st.theta_hat, st.gamma_hat, st.lam) == (0.0, 0.0, None, 0.0)
    with pytest.raises(DataError):
        est.first_order_arrays(Shard(np.zeros((1, 1)), [0], "c0", 2))


def test_gamma_is_exact_ratio(rng):
    for _ in range(20):
        n = int(rng.integers(2, 40))
        s = Shard(rng.normal(size=(n, 3)), rng.integers(0, 3, n), "c0", 3)
        u, th = est.first_order_arrays(s)
        for r in range(3):
            A, B = est.class_partition(s, r)
            if A.size and B.size:
                for j in range(3):
                    g = est.mann_whitney_gamma(s.features[A, j], s.features[B, j])
                    assert abs(u[j, r] / th[r] - g) <= 1e-12


def test_monotone_transform_leaves_statistics_unchanged(rng):
    s = Shard(rng.normal(size=(25, 4)), rng.integers(0, 3, 25), "c0", 3)
    t = s.replace(features=np.exp(3 * s.features) + 7)
    for fn in (est.first_order_arrays, est.cavs_arrays, est.mv_arrays, est.pair_arrays):
        a, b = fn(s), fn(t)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)
    assert np.array_equal(est.higher_order_arrays(s, 2)[0], est.higher_order_arrays(t, 2)[0])
    assert np.array_equal(est.fkf_arrays(s)[0], est.fkf_arrays(t)[0])


def test_higher_order_reduces_to_first_order(rng):
    s = Shard(rng.normal(size=(15, 2)), rng.integers(0, 3, 15), "c0", 3)
    u1, th1 = est.first_order_arrays(s)
    uh, thh = est.higher_order_arrays(s, 1)
    assert np.allclose(uh[:, :, 0], u1, atol=1e-15, rtol=0)
    assert np.allclose(thh[:, 0], th1, atol=1e-15, rtol=0)
    allr = Shard(rng.normal(size=(5, 1)), [1] * 5, "c0", 2)
    assert est.local_higher_order_stats(allr, 0, 1, 2, 1).theta_hat_dd1 == 0.0
    with pytest.raises(DataError):
        est.higher_order_arrays(Shard(np.zeros((2, 1)), [0, 1]), 2)


def test_psis_and_cavs_examples():
    s = Shard(np.array([[5.0], [9.0]]), [0, 1], "c0", 3)
    assert est.local_psis_stats(s, 0, 0) == est.PsisStats(1, 5.0)
    assert est.local_psis_stats(s, 0, 2) == est.PsisStats(0, 0.0)
    t = Shard(np.array([[1.0], [2.0]]), [0, 1], "c0", 3)
    assert est.local_cavs_numerator(t, 0, 0) == 0.5
    assert est.local_cavs_numerator(t, 0, 2) == 0.0


def test_mv_hand_enumeration():
    # Y=[r,r,q], X=[1,2,3]; anchors above two class-r points: only i1=2 has both below
    s = Shard(np.array([[1.0], [2.0], [3.0]]), [0, 0, 1], "c0", 2)
    st = est.local_mv_stats(s, 0, 0)
    assert st.theta1 == pytest.approx(2 / 6)
    assert st.theta2 == pytest.approx(2 / 6)
    none_r = Shard(np.array([[1.0], [2.0], [3.0]]), [1, 1, 1], "c0", 2)
    assert est.local_mv_stats(none_r, 0, 0).theta1 == 0.0
    with pytest.raises(DataError):
        est.mv_arrays(Shard(np.zeros((2, 1)), [0, 1]))


def test_fkf_cases():
    same = Shard(np.ones((4, 1)), [0, 0, 1, 1], "c0", 2)
    assert est.local_fkf_utility(same, 0) == 0.0
    apart = Shard(np.array([[1.0], [2.0], [3.0], [4.0]]), [0, 0, 1, 1], "c0", 2)
    assert est.local_fkf_utility(apart, 0) == 1.0
    single = Shard(np.array([[1.0], [2.0]]), [0, 0], "c0", 2)
    with pytest.warns(UserWarning):
        vals, ok = est.fkf_arrays(single)
    assert not ok and vals[0] == 0.0


def test_pair_statistics_cases():
    st = est.local_pair_gamma(HAND, 0, 0, 1)
    assert st.gamma_hat == est.mann_whitney_gamma([1.0, 3.0], [2.0, 4.0])
    assert st.lambda_rk == pytest.approx(2 * 2 * 2 / 12)
    gap = Shard(np.array([[1.0], [2.0]]), [0, 0], "c0", 3)
    assert est.local_pair_gamma(gap, 0, 0, 2) == est.PairStats(None, 0.0)


def test_optimized_estimators_match_brute_force():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = oracle_equivalence(shards=30)
    for name, err in report:
        assert err <= 1e-12, name


def test_exhaustive_permutation_null_is_one_half():
    for name, err in exhaustive_null_means():
        assert err == 0.0, name
