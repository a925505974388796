"""Client-local statistics: everything a client computes before uploading.

All estimators use strict comparisons ``X < X'`` so ties contribute zero.
The batch functions work on every feature at once and are built on
:func:`class_less_counts`; the per-``(j, r)`` functions wrap them for a
single column.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import DataError, Shard

# Upper bound on n * features * R cells held in memory by one chunk.
_CHUNK_CELLS = 4_000_000


class UndefinedStatistic(DataError):
    """A statistic needs a non-empty sample that is not available."""


@dataclass(frozen=True)
class FirstOrderStats:
    u_hat: float
    theta_hat: float
    gamma_hat: float | None
    lam: float
    n_l: int


@dataclass(frozen=True)
class HigherOrderStats:
    u_hat_dd1: float
    theta_hat_dd1: float
    d: int
    d1: int
    n_l: int


@dataclass(frozen=True)
class PsisStats:
    count: int
    sum: float


@dataclass(frozen=True)
class MvStats:
    theta1: float
    theta2: float


@dataclass(frozen=True)
class PairStats:
    gamma_hat: float | None
    lambda_rk: float


def _feature_chunks(n: int, p: int, R: int):
    width = max(1, _CHUNK_CELLS // max(1, n * R))
    for start in range(0, p, width):
        yield slice(start, min(p, start + width))


def class_less_counts(X: np.ndarray, y: np.ndarray, R: int) -> np.ndarray:
    """``L[i, j, k] = #{i' : y[i'] == k and X[i', j] < X[i, j]}``.

    One stable sort per column, exclusive per-class running counts, and a
    tie-group start index so equal values never count each other.
    """
    X = np.asarray(X, dtype=np.float64)
    n, p = X.shape
    order = np.argsort(X, axis=0, kind="stable")
    S = np.take_along_axis(X, order, axis=0)
    ys = y[order]
    onehot = ys[:, :, None] == np.arange(R)
    cum = np.cumsum(onehot, axis=0, dtype=np.int64) - onehot
    new_group = np.ones((n, p), dtype=bool)
    new_group[1:] = S[1:] != S[:-1]
    start = np.where(new_group, np.arange(n)[:, None], 0)
    start = np.maximum.accumulate(start, axis=0)
    less_sorted = np.take_along_axis(cum, start[:, :, None], axis=0)
    out = np.empty((n, p, R), dtype=np.int64)
    np.put_along_axis(out, order[:, :, None], less_sorted, axis=0)
    return out


def pair_less_sums(shard: Shard) -> np.ndarray:
    """``G[j, r, k]`` = number of pairs (a in class k, b in class r) with ``x_a < x_b``."""
    n, p, R = shard.n, shard.p, shard.R
    onehot = (shard.labels[:, None] == np.arange(R)).astype(np.float64)
    G = np.empty((p, R, R), dtype=np.float64)
    for sl in _feature_chunks(n, p, R):
        L = class_less_counts(shard.features[:, sl], shard.labels, R)
        G[sl] = np.einsum("ir,ijk->jrk", onehot, L.astype(np.float64))
    return G


def class_partition(shard: Shard, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Row indices with ``Y != r`` (A) and ``Y == r`` (B)."""
    if not 0 <= r < shard.R:
        raise DataError(f"category {r} out of range for R={shard.R}")
    in_b = shard.labels == r
    return np.flatnonzero(~in_b), np.flatnonzero(in_b)


def mann_whitney_gamma(x_a, x_b) -> float:
    """Fraction of pairs ``(a, b)`` with ``x_a < x_b``; ties count zero."""
    x_a = np.sort(np.asarray(x_a, dtype=np.float64).ravel())
    x_b = np.asarray(x_b, dtype=np.float64).ravel()
    if x_a.size == 0 or x_b.size == 0:
        raise UndefinedStatistic("Mann-Whitney statistic needs both samples non-empty")
    below = np.searchsorted(x_a, x_b, side="left").sum()
    return float(below) / (x_a.size * x_b.size)


def half_floor(n: int) -> int:
    return int(n) // 2


# -- first order ---------------------------------------------------------


def first_order_counts(shard: Shard) -> tuple[np.ndarray, np.ndarray]:
    """Integer pair counts behind Û and θ̂.

    Returns ``u_count`` (p x R): ordered pairs with ``Y_1 != r``, ``Y_2 == r``
    and ``X_1 < X_2``; and ``ab`` (R): ``|A_r| * |B_r|``.
    """
    G = pair_less_sums(shard)
    R = shard.R
    off = ~np.eye(R, dtype=bool)
    u_count = np.where(off[None], G, 0.0).sum(axis=2)
    counts = shard.category_counts().astype(np.float64)
    ab = counts * (shard.n - counts)
    return u_count, ab


def first_order_arrays(shard: Shard) -> tuple[np.ndarray, np.ndarray]:
    """Û (p x R) and θ̂ (R) for every feature and category."""
    n = shard.n
    if n < 2:
        raise DataError("first-order statistics need n_l >= 2")
    u_count, ab = first_order_counts(shard)
    denom = float(n) * (n - 1)
    return u_count / denom, ab / denom


def first_order_pairwise(shard: Shard) -> tuple[np.ndarray, np.ndarray]:
    """Same outputs as :func:`first_order_arrays` by direct O(n^2) comparison.

    This is the literal client step of the practical algorithm; its cost
    grows quadratically in ``n_l``.
    """
    n, R = shard.n, shard.R
    if n < 2:
        raise DataError("first-order statistics need n_l >= 2")
    X, y = shard.features, shard.labels
    u = np.zeros((shard.p, R))
    for r in range(R):
        b = y == r
        if not b.any() or b.all():
            continue
        less = X[~b][:, None, :] < X[b][None, :, :]
        u[:, r] = less.sum(axis=(0, 1))
    counts = shard.category_counts().astype(np.float64)
    denom = float(n) * (n - 1)
    return u / denom, counts * (n - counts) / denom


def gamma_from_first_order(u_hat: np.ndarray, theta_hat: np.ndarray) -> np.ndarray:
    """γ̂ = Û/θ̂ with NaN where the category or its complement is absent."""
    theta = np.asarray(theta_hat, dtype=np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        g = np.asarray(u_hat) / theta
    return np.where(theta > 0, g, np.nan)


def pair_count_lambda(n: int, theta_hat: np.ndarray) -> np.ndarray:
    """λ_{l,r} = ⌊n/2⌋ |A||B| / (n(n-1)), which is ⌊n/2⌋ θ̂."""
    return half_floor(n) * np.asarray(theta_hat, dtype=np.float64)


def local_first_order_stats(shard: Shard, j: int, r: int) -> FirstOrderStats:
    if shard.n < 2:
        raise DataError("first-order statistics need n_l >= 2")
    col = shard.replace(features=shard.features[:, [j]])
    u, th = first_order_arrays(col)
    A, B = class_partition(shard, r)
    if A.size and B.size:
        x = shard.features[:, j]
        gamma = mann_whitney_gamma(x[A], x[B])
    else:
        gamma = None
    lam = float(pair_count_lambda(shard.n, th[r])) if gamma is not None else 0.0
    return FirstOrderStats(float(u[0, r]), float(th[r]), gamma, lam, shard.n)


# -- pairwise classes ------------------------------------------------------


def pair_arrays(shard: Shard) -> tuple[np.ndarray, np.ndarray]:
    """Pair U-statistics ``u[j, r, k]`` (p x R x R) and ``theta[r, k]`` (R x R).

    ``u[j, r, k] / theta[r, k]`` is the Mann-Whitney fraction with A = class k
    and B = class r. Diagonal entries are zero.
    """
    n = shard.n
    if n < 2:
        raise DataError("pair statistics need n_l >= 2")
    G = pair_less_sums(shard)
    R = shard.R
    G[:, np.arange(R), np.arange(R)] = 0.0
    counts = shard.category_counts().astype(np.float64)
    ab = np.outer(counts, counts)
    np.fill_diagonal(ab, 0.0)
    denom = float(n) * (n - 1)
    return G / denom, ab / denom


def local_pair_gamma(shard: Shard, j: int, r: int, k: int) -> PairStats:
    if r == k:
        raise DataError("pair statistic needs two distinct categories")
    x, y = shard.features[:, j], shard.labels
    xa, xb = x[y == k], x[y == r]
    if xa.size == 0 or xb.size == 0:
        return PairStats(None, 0.0)
    n = shard.n
    lam = half_floor(n) * xa.size * xb.size / (n * (n - 1))
    return PairStats(mann_whitney_gamma(xa, xb), lam)


# -- higher order ------------------------------------------------------------


def falling_factorial(a, k: int):
    a = np.asarray(a, dtype=np.float64)
    out = np.ones_like(a)
    for i in range(k):
        out = out * (a - i)
    return out


def higher_order_arrays(shard: Shard, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Ordered-tuple U-statistics for ``d1 = 1..d``.

    Returns ``u`` (p x R x d) and ``theta`` (R x d), index ``d1 - 1``. The
    kernel on ``(i_1..i_d, k)`` is: the first ``d1`` positions need
    ``Y != r`` and ``X < X_k``, the next ``d - d1`` need ``Y == r`` and
    ``X < X_k``, and the last needs ``Y_k == r``. ``theta`` drops the
    ``X`` comparisons. Normalised by ``n (n-1) ... (n-d)``.
    """
    n, p, R = shard.n, shard.p, shard.R
    if d < 1:
        raise DataError("order d must be >= 1")
    if n <= d:
        raise DataError(f"order-{d} statistics need n_l >= {d + 1}")
    y = shard.labels
    norm = float(falling_factorial(n, d + 1))
    u = np.zeros((p, R, d))
    counts = shard.category_counts().astype(np.float64)
    theta = np.zeros((R, d))
    for d1 in range(1, d + 1):
        theta[:, d1 - 1] = (
            counts
            * falling_factorial(n - counts, d1)
            * falling_factorial(counts - 1, d - d1)
            / norm
        )
    for sl in _feature_chunks(n, p, R):
        L = class_less_counts(shard.features[:, sl], y, R).astype(np.float64)
        total = L.sum(axis=2)
        for r in range(R):
            rows = y == r
            if not rows.any():
                continue
            b = L[rows, :, r]
            a = total[rows] - b
            for d1 in range(1, d + 1):
                term = falling_factorial(a, d1) * falling_factorial(b, d - d1)
                u[sl, r, d1 - 1] = term.sum(axis=0) / norm
    return u, theta


def local_higher_order_stats(shard: Shard, j: int, r: int, d: int, d1: int) -> HigherOrderStats:
    if not 1 <= d1 <= d:
        raise DataError("d1 must satisfy 1 <= d1 <= d")
    col = shard.replace(features=shard.features[:, [j]])
    u, th = higher_order_arrays(col, d)
    return HigherOrderStats(float(u[0, r, d1 - 1]), float(th[r, d1 - 1]), d, d1, shard.n)


# -- baselines ---------------------------------------------------------------


def psis_arrays(shard: Shard) -> tuple[np.ndarray, np.ndarray]:
    """Per-category counts (R) and per-(feature, category) sums (p x R)."""
    onehot = (shard.labels[:, None] == np.arange(shard.R)).astype(np.float64)
    return shard.category_counts(), shard.features.T @ onehot


def local_psis_stats(shard: Shard, j: int, r: int) -> PsisStats:
    mask = shard.labels == r
    return PsisStats(int(mask.sum()), float(shard.features[mask, j].sum()))


def cavs_arrays(shard: Shard) -> np.ndarray:
    """``sum_{i1, i2} I(Y_i1 == r) I(X_i1 < X_i2) / (n(n-1))`` for all (j, r)."""
    n = shard.n
    if n < 2:
        raise DataError("CAVS statistics need n_l >= 2")
    G = pair_less_sums(shard)
    # pairs with the smaller element in class r, larger element anywhere
    return G.sum(axis=1) / (float(n) * (n - 1))


def local_cavs_numerator(shard: Shard, j: int, r: int) -> float:
    col = shard.replace(features=shard.features[:, [j]])
    return float(cavs_arrays(col)[0, r])


def mv_arrays(shard: Shard) -> tuple[np.ndarray, np.ndarray]:
    """Triple U-statistics θ1, θ2 (each p x R) of the federated MV-SIS client step.

    For anchor ``i1`` let ``c`` count class-``r`` samples below it and ``a``
    all samples below it. Ordered distinct ``(i2, i3)`` both in class ``r``
    and below: ``c(c-1)``. ``i2`` in class ``r``, ``i3`` any, both below:
    ``c(a-1)``.
    """
    n, p, R = shard.n, shard.p, shard.R
    if n < 3:
        raise DataError("MV-SIS statistics need n_l >= 3")
    norm = float(n) * (n - 1) * (n - 2)
    t1 = np.empty((p, R))
    t2 = np.empty((p, R))
    for sl in _feature_chunks(n, p, R):
        L = class_less_counts(shard.features[:, sl], shard.labels, R).astype(np.float64)
        a = L.sum(axis=2, keepdims=True)
        t1[sl] = (L * (L - 1)).sum(axis=0) / norm
        t2[sl] = (L * (a - 1)).sum(axis=0) / norm
    return t1, t2


def local_mv_stats(shard: Shard, j: int, r: int) -> MvStats:
    col = shard.replace(features=shard.features[:, [j]])
    t1, t2 = mv_arrays(col)
    return MvStats(float(t1[0, r]), float(t2[0, r]))


def fkf_arrays(shard: Shard) -> tuple[np.ndarray, bool]:
    """Local FKF utility per feature and a flag that is False when < 2 classes are present.

    ``F_r(x) = #{X < x, Y == r} / #{Y == r}`` evaluated at every sample
    point; the utility is the largest gap between any two present classes.
    """
    n, p, R = shard.n, shard.p, shard.R
    counts = shard.category_counts()
    present = np.flatnonzero(counts > 0)
    if present.size < 2:
        warnings.warn(f"client {shard.client_id}: fewer than 2 categories present; FKF = 0")
        return np.zeros(p), False
    out = np.empty(p)
    for sl in _feature_chunks(n, p, R):
        L = class_less_counts(shard.features[:, sl], shard.labels, R)[:, :, present]
        F = L / counts[present]
        out[sl] = (F.max(axis=2) - F.min(axis=2)).max(axis=0)
    return out, True


def local_fkf_utility(shard: Shard, j: int) -> float:
    col = shard.replace(features=shard.features[:, [j]])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        vals, _ = fkf_arrays(col)
    return float(vals[0])
