"""Synthetic federations with label shift, contamination and client attacks.

Every generator is a pure function of its spec and seed. Random streams are
derived per client and per purpose through :func:`lrffs.core.make_rng`, so a
client's data does not depend on how many other clients exist.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .aggregation import ClientSummary, permute_categories
from .core import DataError, Shard, make_rng

LABEL_KINDS = ("fixed", "softmax_uniform", "dirichlet", "missing_categories")
NOISE_KINDS = ("gaussian", "student_t", "lognormal", "exponential")
ATTACK_KINDS = ("none", "label_shuffle", "category_misalign")


@dataclass(frozen=True)
class LabelScheme:
    """How per-client label proportions are drawn.

    ``param`` is ``v`` for softmax_uniform, the concentration ``u`` for
    dirichlet and the largest number of missing categories for
    missing_categories. ``fixed`` uses ``proportions`` for every client
    (uniform when empty).
    """

    kind: str = "fixed"
    param: float = 1.0
    proportions: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in LABEL_KINDS:
            raise DataError(f"unknown label scheme {self.kind!r}")


@dataclass(frozen=True)
class NoiseFamily:
    kind: str = "gaussian"
    param: float = 1.0  # degrees of freedom for student_t, mean for exponential

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise DataError(f"unknown noise family {self.kind!r}")
        if self.kind in ("student_t", "exponential") and not self.param > 0:
            raise DataError(f"{self.kind} noise needs a positive parameter")


@dataclass(frozen=True)
class Attack:
    kind: str = "none"
    fraction: float = 0.0

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise DataError(f"unknown attack {self.kind!r}")
        if not 0.0 <= self.fraction <= 1.0:
            raise DataError("attack fraction must lie in [0, 1]")


@dataclass(frozen=True)
class ScenarioSpec:
    """A complete synthetic scenario.

    ``mu`` lists ``(category, first_feature, stop_feature, value)`` blocks of
    the location matrix; all other entries are 0. Logistic scenarios use
    ``beta_magnitude``, ``iota``, ``sigma`` and ``tilt`` instead. With
    ``pooled`` set, one sample of size ``sum(n)`` is drawn as if held by a
    single client and then cut into consecutive segments of sizes ``n``.
    """

    kind: str
    m: int
    n: tuple[int, ...]
    p: int
    R: int
    labels: LabelScheme
    relevant: tuple[int, ...]
    noise: NoiseFamily = NoiseFamily()
    mu: tuple[tuple[int, int, int, float], ...] = ()
    beta_magnitude: float = 1.0
    iota: float = 0.0
    sigma: str = "identity"
    tilt: float = 1.0
    outliers: int = 0
    outlier_low: float = 0.0
    outlier_high: float = 100.0
    attack: Attack = field(default_factory=Attack)
    pooled: bool = False
    name: str = "custom"

    def __post_init__(self):
        if self.kind not in ("location_shift", "logistic"):
            raise DataError(f"unknown generator {self.kind!r}")
        n = tuple(int(x) for x in self.n)
        if len(n) == 1 and self.m > 1:
            n = n * self.m
        object.__setattr__(self, "n", n)
        if len(n) != self.m or self.m < 1 or min(n) < 1:
            raise DataError("need one positive sample size per client")
        if self.R < 2 or self.p < 1:
            raise DataError("need R >= 2 and p >= 1")
        if any(not 0 <= j < self.p for j in self.relevant):
            raise DataError("relevant indices out of range")
        if self.sigma not in ("identity", "banded"):
            raise DataError(f"unknown covariance kind {self.sigma!r}")

    @property
    def heterogeneity(self) -> float:
        return self.labels.param

    def location_matrix(self) -> np.ndarray:
        mu = np.zeros((self.R, self.p))
        for r, a, b, v in self.mu:
            mu[r, a:b] = v
        return mu


def client_ids(m: int) -> list[str]:
    return [f"c{i}" for i in range(m)]


# -- label proportions ---------------------------------------------------------


def make_label_proportions(scheme: LabelScheme, m: int, R: int, seed: int) -> np.ndarray:
    """``m x R`` matrix of per-client category proportions."""
    rows = []
    for cid in client_ids(m):
        rng = make_rng(seed, cid, "proportions")
        if scheme.kind == "fixed":
            base = np.asarray(scheme.proportions or np.ones(R), dtype=np.float64)
            if base.shape != (R,) or np.any(base < 0) or base.sum() <= 0:
                raise DataError("fixed proportions must be R non-negative values")
            row = base / base.sum()
        elif scheme.kind == "softmax_uniform":
            if scheme.param < 1:
                raise DataError("softmax heterogeneity v must be >= 1")
            beta = rng.uniform(1.0, scheme.param, size=R)
            w = np.exp(beta - beta.max())
            row = w / w.sum()
        elif scheme.kind == "dirichlet":
            if not scheme.param > 0:
                raise DataError("Dirichlet concentration must be positive")
            row = rng.dirichlet(np.full(R, float(scheme.param)))
        else:
            k = int(scheme.param)
            if not 0 <= k < R:
                raise DataError("max_missing must lie in [0, R)")
            n_missing = int(rng.integers(0, k + 1))
            row = np.ones(R)
            row[rng.choice(R, size=n_missing, replace=False)] = 0.0
            row /= row.sum()
        rows.append(row)
    return np.array(rows)


def sample_labels(rng: np.random.Generator, proportions, n: int) -> np.ndarray:
    """Inverse-CDF categorical draws."""
    cdf = np.cumsum(proportions)
    codes = np.searchsorted(cdf / cdf[-1], rng.random(n), side="right")
    return np.minimum(codes, len(cdf) - 1).astype(np.int64)


def draw_noise(rng: np.random.Generator, family: NoiseFamily, shape) -> np.ndarray:
    if family.kind == "gaussian":
        return rng.standard_normal(shape)
    if family.kind == "student_t":
        return rng.standard_t(family.param, size=shape)
    if family.kind == "lognormal":
        return np.exp(rng.standard_normal(shape))
    return rng.exponential(family.param, size=shape)


# -- generators ------------------------------------------------------------------


def gen_location_shift_federation(spec: ScenarioSpec, seed: int) -> tuple[list[Shard], tuple[int, ...]]:
    """``X = μ_Y + ε`` on every client, labels drawn from the client's proportions."""
    if spec.kind != "location_shift":
        raise DataError("spec is not a location-shift scenario")
    props = make_label_proportions(spec.labels, spec.m, spec.R, seed)
    mu = spec.location_matrix()
    shards = []
    for cid, n_l, pi in zip(client_ids(spec.m), spec.n, props):
        y = sample_labels(make_rng(seed, cid, "labels"), pi, n_l)
        X = mu[y] + draw_noise(make_rng(seed, cid, "noise"), spec.noise, (n_l, spec.p))
        shards.append(Shard(X, y, cid, spec.R))
    return _finish(shards, spec, seed), spec.relevant


def banded_covariance(p: int, first: float = 2 / 3, second: float = 1 / 3) -> np.ndarray:
    S = np.eye(p)
    idx = np.arange(p)
    S[np.abs(idx[:, None] - idx[None, :]) == 1] = first
    S[np.abs(idx[:, None] - idx[None, :]) == 2] = second
    return S


def _ma2(e: np.ndarray) -> np.ndarray:
    # (e_j + e_{j-1} + e_{j-2}) / sqrt(3) has unit variance, lag-1 covariance
    # 2/3 and lag-2 covariance 1/3, i.e. exactly the banded matrix
    return (e[:, 2:] + e[:, 1:-1] + e[:, :-2]) / math.sqrt(3.0)


def logistic_class_probs(eta: np.ndarray, R: int, tilt: float) -> np.ndarray:
    """``P(Y=0|X) = σ(η)``; the rest split so ``P(Y=1|X)/tilt = P(Y=r|X)`` for r >= 2."""
    p0 = 1.0 / (1.0 + np.exp(-eta))
    shares = np.ones(R - 1)
    shares[0] = tilt
    shares /= shares.sum()
    return np.column_stack([p0, (1 - p0)[:, None] * shares[None, :]])


def gen_logistic_federation(spec: ScenarioSpec, seed: int) -> tuple[list[Shard], tuple[int, ...]]:
    """Multinomial-logistic labels with Gaussian features, label-shifted across clients.

    Each client first draws its label counts from its proportions, then
    fills them by rejection from the joint law, so ``X | Y`` is the same on
    every client. Only the leading block of features that drives ``Y`` is
    sampled inside the rejection loop; the remaining features are drawn
    afterwards from their exact conditional law.
    """
    if spec.kind != "logistic":
        raise DataError("spec is not a logistic scenario")
    beta_rng = make_rng(seed, "global", "beta")
    beta = np.zeros(spec.p)
    signs = np.where(beta_rng.random(len(spec.relevant)) < 0.5, 1.0, -1.0)
    beta[list(spec.relevant)] = signs * spec.beta_magnitude
    width = (max(spec.relevant) + 1) if spec.relevant else 1
    lag = 2 if spec.sigma == "banded" else 0
    props = make_label_proportions(spec.labels, spec.m, spec.R, seed)
    shards = []
    for cid, n_l, pi in zip(client_ids(spec.m), spec.n, props):
        rng = make_rng(seed, cid, "labels")
        y = sample_labels(rng, pi, n_l)
        need = np.bincount(y, minlength=spec.R)
        e_head = np.empty((n_l, width + lag))
        filled = np.zeros(spec.R, dtype=np.int64)
        slot = {r: np.flatnonzero(y == r) for r in range(spec.R)}
        draw_rng = make_rng(seed, cid, "rejection")
        guard = 0
        while np.any(filled < need):
            guard += 1
            if guard > 100_000:
                raise DataError("rejection sampling did not fill the label quotas")
            batch = max(4 * n_l, 256)
            e = draw_rng.standard_normal((batch, width + lag))
            x = _ma2(e) if lag else e
            eta = x @ beta[:width] + spec.iota
            cls = sample_labels_rows(draw_rng, logistic_class_probs(eta, spec.R, spec.tilt))
            for i in range(batch):
                r = cls[i]
                if filled[r] < need[r]:
                    e_head[slot[r][filled[r]]] = e[i]
                    filled[r] += 1
        tail = make_rng(seed, cid, "noise").standard_normal((n_l, spec.p - width))
        e_full = np.hstack([e_head, tail])
        X = _ma2(e_full) if lag else e_full
        shards.append(Shard(X, y, cid, spec.R))
    return _finish(shards, spec, seed), spec.relevant


def sample_labels_rows(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    """One inverse-CDF draw per row of a probability matrix."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0])[:, None]
    return np.minimum((cdf <= u).sum(axis=1), probs.shape[1] - 1)


def generate(spec: ScenarioSpec, seed: int) -> tuple[list[Shard], tuple[int, ...]]:
    if spec.pooled and spec.m > 1:
        whole, relevant = generate(replace(spec, m=1, n=(sum(spec.n),)), seed)
        return partition(whole[0], spec.n), relevant
    if spec.kind == "logistic":
        return gen_logistic_federation(spec, seed)
    return gen_location_shift_federation(spec, seed)


def partition(shard: Shard, sizes: Sequence[int]) -> list[Shard]:
    """Cut one shard into consecutive pieces named ``c0``, ``c1``, ..."""
    if sum(sizes) != shard.n:
        raise DataError(f"segment sizes sum to {sum(sizes)}, shard has {shard.n} rows")
    cuts = np.cumsum([0, *sizes])
    return [
        Shard(shard.features[a:b], shard.labels[a:b], cid, shard.R)
        for cid, a, b in zip(client_ids(len(sizes)), cuts[:-1], cuts[1:])
    ]


def _finish(shards: list[Shard], spec: ScenarioSpec, seed: int) -> list[Shard]:
    if spec.outliers:
        shards = inject_outlier_noise(shards, spec.outliers, spec.outlier_low, spec.outlier_high, seed)
    if spec.attack.kind == "label_shuffle":
        shards = apply_attack(shards, spec.attack, seed)
    return shards


def gen_example1(m: int, seed: int, N: int = 3000, shift: float = 0.35) -> list[Shard]:
    """One feature, two balanced classes: N(shift, 1) against N(0, 1), split evenly over m."""
    return generate(preset("example1", m=m, N=N, shift=shift), seed)[0]


# -- contamination and attacks -------------------------------------------------


def inject_outlier_noise(
    shards: Sequence[Shard], count: int, low: float, high: float, seed: int
) -> list[Shard]:
    """Replace every feature of ``count`` uniformly chosen rows by Uniform(low, high)."""
    sizes = [s.n for s in shards]
    N = sum(sizes)
    if not 0 <= count <= N:
        raise DataError(f"outlier count must lie in [0, {N}]")
    if count == 0:
        return list(shards)
    rng = make_rng(seed, "global", "outliers")
    rows = np.sort(rng.choice(N, size=count, replace=False))
    values = rng.uniform(low, high, size=(count, shards[0].p))
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    out = []
    for c, s in enumerate(shards):
        mine = (rows >= offsets[c]) & (rows < offsets[c + 1])
        if not mine.any():
            out.append(s)
            continue
        X = s.features.copy()
        X[rows[mine] - offsets[c]] = values[mine]
        out.append(s.replace(features=X))
    return out


def attacked_clients(ids: Sequence[str], fraction: float, seed: int) -> list[str]:
    """The first ⌈φm⌉ clients of a seed-fixed random order, so sets are nested in φ."""
    k = math.ceil(fraction * len(ids) - 1e-12)
    order = make_rng(seed, "global", "attack_order").permutation(len(ids))
    return [ids[i] for i in order[:k]]


def apply_attack(items, attack: Attack, seed: int):
    """Label shuffle acts on shards; category misalignment acts on client summaries."""
    if attack.kind == "none" or attack.fraction == 0:
        return list(items)
    targets = set(attacked_clients([it.client_id for it in items], attack.fraction, seed))
    out = []
    for it in items:
        if it.client_id not in targets:
            out.append(it)
            continue
        rng = make_rng(seed, it.client_id, "attack")
        if attack.kind == "label_shuffle":
            if not isinstance(it, Shard):
                raise DataError("label_shuffle applies to shards")
            out.append(it.replace(labels=it.labels[rng.permutation(it.n)]))
        else:
            if not isinstance(it, ClientSummary):
                raise DataError("category_misalign applies to client summaries")
            perm = np.arange(it.R)
            while np.array_equal(perm, np.arange(it.R)):
                perm = rng.permutation(it.R)
            out.append(permute_categories(it, perm))
    return out


# -- named presets ----------------------------------------------------------------

_A_SHIFT = {4: 0.28, 5: 0.30, 6: 0.32, 7: 0.34}
_B_SHIFT = {5: 0.45, 6: 0.47, 7: 0.50}
PRESETS = ("a", "b", "c", "d", "e", "f", "g", "h", "example1")


def preset(name: str, **overrides) -> ScenarioSpec:
    """Scenario by name with the published defaults; keyword arguments override them.

    Recognised overrides: ``R``, ``p``, ``m``, ``n``, ``heterogeneity``,
    ``outliers``, ``attack`` (an :class:`Attack`), ``shift`` and ``N``
    (example1), plus any :class:`ScenarioSpec` field.
    """
    o = dict(overrides)
    het = o.pop("heterogeneity", None)
    if name == "a":
        R = o.pop("R", 7)
        if R not in _A_SHIFT and "mu" not in o:
            raise DataError("preset a defines shifts for R in 4..7")
        base = dict(kind="location_shift", m=30, n=(100,), p=10_000, R=R,
                    labels=LabelScheme("softmax_uniform", 1.0 if het is None else het),
                    mu=((0, 0, 8, _A_SHIFT.get(R, 0.0)),), relevant=tuple(range(8)))
    elif name == "b":
        R = o.pop("R", 5)
        if R not in _B_SHIFT and "mu" not in o:
            raise DataError("preset b defines shifts for R in 5..7")
        v = _B_SHIFT.get(R, 0.0)
        base = dict(kind="location_shift", m=30, n=(100,), p=10_000, R=R,
                    labels=LabelScheme("dirichlet", 1.0 if het is None else het),
                    noise=NoiseFamily("student_t", 2.0),
                    mu=((0, 0, 4, v), (1, 4, 8, v)), relevant=tuple(range(8)))
    elif name == "c":
        base = dict(kind="location_shift", m=16, n=(100,) * 4 + (200,) * 4 + (300,) * 4 + (400,) * 4,
                    p=10_000, R=o.pop("R", 8),
                    labels=LabelScheme("missing_categories", 4 if het is None else het),
                    noise=NoiseFamily("lognormal"),
                    mu=((0, 0, 10, 0.32), (1, 0, 10, 0.08)), relevant=tuple(range(10)))
    elif name == "d":
        base = dict(kind="location_shift", m=30, n=(100,), p=10_000, R=o.pop("R", 5),
                    labels=LabelScheme("softmax_uniform", 5.0 if het is None else het),
                    mu=((0, 0, 8, 0.4),), relevant=tuple(range(8)))
    elif name in ("e", "f"):
        is_e = name == "e"
        base = dict(kind="logistic", m=30, n=(100,), p=8_000, R=o.pop("R", 6),
                    labels=LabelScheme("dirichlet" if is_e else "softmax_uniform",
                                       1.0 if het is None else het),
                    relevant=tuple(range(8)) if is_e else tuple(range(1, 12, 2)),
                    beta_magnitude=1.0 if is_e else 1.5, iota=-0.25 if is_e else -0.2,
                    sigma="identity" if is_e else "banded", tilt=1.2 if is_e else 0.8,
                    outliers=30)
    elif name == "g":
        base = dict(kind="location_shift", m=30, n=(100,), p=10_000, R=o.pop("R", 8),
                    labels=LabelScheme("softmax_uniform", 6.0 if het is None else het),
                    noise=NoiseFamily("exponential", 1.0),
                    mu=((0, 0, 8, 0.34),), relevant=tuple(range(8)),
                    attack=Attack("category_misalign", 0.0))
    elif name == "h":
        base = dict(kind="location_shift", m=30, n=(100,), p=10_000, R=o.pop("R", 7),
                    labels=LabelScheme("softmax_uniform", 1.0 if het is None else het),
                    noise=NoiseFamily("exponential", 2.0),
                    mu=((0, 0, 8, 0.5),), relevant=tuple(range(8)),
                    attack=Attack("label_shuffle", 0.0))
    elif name == "example1":
        m = o.pop("m", 1)
        N = o.pop("N", 3000)
        if N % m:
            raise DataError("example1 needs m to divide N")
        base = dict(kind="location_shift", m=m, n=(N // m,), p=1, R=2,
                    labels=LabelScheme("fixed", 1.0, (0.5, 0.5)),
                    mu=((0, 0, 1, o.pop("shift", 0.35)),), relevant=(0,), pooled=True)
    else:
        raise DataError(f"unknown preset {name!r}; expected one of {PRESETS}")
    if "n" in o and isinstance(o["n"], int):
        o["n"] = (o["n"],)
    if "attack" in o and not isinstance(o["attack"], Attack):
        o["attack"] = Attack(**o["attack"])
    if "labels" in o and not isinstance(o["labels"], LabelScheme):
        o["labels"] = LabelScheme(**o["labels"])
    if "noise" in o and not isinstance(o["noise"], NoiseFamily):
        o["noise"] = NoiseFamily(**o["noise"])
    base.update(o)
    if "m" in o and "n" not in o and len(base["n"]) > 1:
        raise DataError("overriding m needs matching per-client sizes n")
    base["name"] = name
    return ScenarioSpec(**base)


def with_attack_fraction(spec: ScenarioSpec, fraction: float) -> ScenarioSpec:
    return replace(spec, attack=Attack(spec.attack.kind, fraction))
