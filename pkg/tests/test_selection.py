import numpy as np
import pytest

from lrffs import selection as sel
from lrffs import simgen as S
from lrffs.core import DataError, Shard, UtilityVector
from lrffs.methods import MethodSpec, federated_utilities
from lrffs.metrics import score_run


def uv(vals):
    return UtilityVector(np.asarray(vals, dtype=float), "t")


def test_threshold_is_strict():
    res = sel.threshold_select(uv([0.2, 0.1, 0.3, 0.1]), 0.1)
    assert res.selected.tolist() == [0, 2]
    assert sel.threshold_select(uv([0.0, 0.0]), 0.0).selected.size == 0
    assert sel.threshold_select(uv([0.3, 0.1]), 0.2).selected.tolist() == [0]
    assert sel.threshold_select(uv([0.3, 0.1]), 0.3).selected.size == 0
    assert sel.threshold_select(uv([0.3, 0.1]), 0.0).selected.tolist() == [0, 1]
    with pytest.raises(DataError):
        sel.threshold_select(uv([0.1]), -1.0)


def test_top_k_breaks_ties_by_index():
    res = sel.top_k_select(uv([0.5, 0.9, 0.9, 0.1]), 2)
    assert res.selected.tolist() == [1, 2]
    assert sel.top_k_select(uv([0.3, 0.3, 0.3]), 1).selected.tolist() == [0]
    assert sel.top_k_select(uv([0.1, 0.9, 0.9]), 3).selected.tolist() == [0, 1, 2]
    for bad in (0, 4):
        with pytest.raises(DataError):
            sel.top_k_select(uv([0.1, 0.2, 0.3]), bad)


def test_fdr_hand_example():
    out = sel.fdr_threshold([0.5, 0.4, 0.3, -0.05], 0.5)
    # δ=0.05 gives (1+1)/4 = 0.5, not below the level
    assert out.delta_hat == 0.3
    assert out.selected.tolist() == [0, 1, 2]
    assert out.estimated_fdp == pytest.approx(1 / 3)


def test_fdr_nothing_positive():
    out = sel.fdr_threshold([-0.1, -0.2, 0.0], 0.3)
    assert out.delta_hat is None and out.selected.size == 0
    assert sel.fdr_threshold(np.zeros(5), 0.2).delta_hat is None
    with pytest.raises(DataError):
        sel.fdr_threshold([0.1], 1.0)


def test_fdr_threshold_matches_full_scan(rng):
    for _ in range(200):
        phi = np.round(rng.normal(0.05, 0.1, int(rng.integers(1, 40))), 2)
        alpha = float(rng.uniform(0.05, 0.6))
        best = None
        for d in sorted({abs(v) for v in phi if v != 0}):
            fdp = (1 + np.sum(phi <= -d)) / max(np.sum(phi >= d), 1)
            if fdp < alpha:
                best = d
                break
        out = sel.fdr_threshold(phi, alpha)
        assert out.delta_hat == best
        if best is not None:
            assert out.selected.tolist() == np.flatnonzero(phi >= best).tolist()


def _small_federation(seed, p=20, m=3, n=40):
    return S.generate(S.preset("a", R=4, m=m, n=(n,), p=p, mu=()), seed)[0]


def test_within_client_permutation_keeps_margins():
    shards = _small_federation(1)
    perm = sel.permute_within_clients(shards, 7, "pseudo")
    for s, t in zip(shards, perm):
        assert np.array_equal(s.labels, t.labels)
        assert np.array_equal(np.sort(s.features, axis=0), np.sort(t.features, axis=0))
    again = sel.permute_within_clients(shards, 7, "pseudo")
    assert all(np.array_equal(a.features, b.features) for a, b in zip(perm, again))
    # a column subset reuses the stream of its output position only
    sub = sel.permute_within_clients(shards, 7, "pseudo", [0, 1])
    assert np.array_equal(sub[0].features, perm[0].features[:, :2])


def test_auxiliary_threshold():
    shards = _small_federation(2)
    m = MethodSpec("lrffs")
    t1 = sel.auxiliary_permutation_threshold(shards, m, 5, 3)
    assert t1 == sel.auxiliary_permutation_threshold(shards, m, 5, 3)
    assert t1 >= 0
    one = Shard(np.arange(6.0)[:, None], [0, 1, 0, 1, 0, 1], "c0", 2)
    assert sel.auxiliary_shards([one], 1, 0)[0].p == 1
    assert sel.auxiliary_permutation_threshold([one], m, 1, 0) >= 0
    with pytest.raises(DataError):
        sel.auxiliary_shards(shards, 0, 0)


def test_marginal_symmetry_under_null():
    # each irrelevant φ_j falls below zero about half the time
    neg = np.zeros(8)
    for seed in range(500):
        shards = _small_federation(seed, p=8, m=3, n=30)
        neg += sel.fdr_control_select(shards, MethodSpec("lrffs"), 0.2, seed).phi < 0
    assert np.abs(neg / 500 - 0.5).max() <= 0.05


def test_null_fdr_over_seeds():
    alpha = 0.2
    fdp = []
    for seed in range(200):
        shards = _small_federation(seed, p=30, m=3, n=30)
        out = sel.fdr_control_select(shards, MethodSpec("lrffs"), alpha, seed)
        fdp.append(1.0 if out.selected.size else 0.0)
    assert np.mean(fdp) <= alpha + 0.05


def test_aux_threshold_null_exceedance():
    q = 20
    rates = []
    for seed in range(200):
        shards = _small_federation(seed, p=20, m=3, n=30)
        m = MethodSpec("lrffs")
        delta = sel.auxiliary_permutation_threshold(shards, m, q, seed)
        omega = federated_utilities(shards, [m])["lrffs"].values
        rates.append(np.mean(omega > delta))
    assert np.median(rates) <= 2 / q


def test_pseudo_utilities_sit_below_signals():
    spec = S.preset("d", m=10, n=(100,), p=200)
    shards, A = S.generate(spec, 3)
    omega = federated_utilities(shards, [MethodSpec("lrffs")])["lrffs"].values
    pseudo = sel.permute_within_clients(shards, 3, "pseudo")
    omega_p = federated_utilities(pseudo, [MethodSpec("lrffs")])["lrffs"].values
    null = np.setdiff1d(np.arange(200), A)
    assert np.percentile(omega_p[null], 95) < np.percentile(omega[list(A)], 95)


def test_fdr_control_with_signals():
    fdps = []
    for seed in range(12):
        spec = S.preset("a", R=4, m=4, n=(60,), p=100)
        shards, A = S.generate(spec, seed)
        out = sel.fdr_control_select(shards, MethodSpec("lrffs"), 0.2, seed)
        picked = set(out.selected.tolist())
        fdps.append(len(picked - set(A)) / max(len(picked), 1))
    assert np.mean(fdps) <= 0.2 + 0.1


def test_score_on_top_k():
    shards, A = S.generate(S.preset("a", R=4, m=2, n=(200,), p=30), 0)
    u = federated_utilities(shards, [MethodSpec("lrffs")])["lrffs"]
    sc = score_run(sel.top_k_select(u, 10), A)
    assert sc.size == 10 and 0 <= sc.psr <= 1
