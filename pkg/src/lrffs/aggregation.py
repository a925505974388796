"""Server-side one-shot aggregation of client summaries.

Every fold runs over summaries sorted by client id, so results do not depend
on arrival order. Undefined entries are NaN inside the ``p x R`` matrices
and are never silently replaced by zero.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import comb

from .core import CategoryUtilityMatrix, DataError, UtilityVector, client_sort_key
from .estimators import half_floor

WEIGHT_MODES = ("half_floor", "pair_count_lambda", "min_variance")
ZETA_PRESETS = ("cru", "mvsis", "cavs", "equal", "argmax")


class AggregationError(DataError):
    pass


class AggregationWarning(UserWarning):
    pass


@dataclass(eq=False)
class ClientSummary:
    """The single message a client uploads.

    ``sections`` maps a section name (``first_order``, ``pair``,
    ``higher_order:<d>``, ``psis``, ``cavs``, ``mv``, ``fkf``) to its named
    arrays. Arrays whose first axis is the feature axis are listed in
    :data:`FEATURE_ARRAYS`.
    """

    client_id: str
    n_l: int
    category_counts: np.ndarray
    p: int
    sections: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)

    @property
    def R(self) -> int:
        return int(len(self.category_counts))

    def section(self, name: str) -> dict[str, np.ndarray]:
        try:
            return self.sections[name]
        except KeyError:
            raise AggregationError(
                f"client {self.client_id} did not upload section {name!r}"
            ) from None


# (section, array) pairs whose leading axis indexes features
FEATURE_ARRAYS = {
    ("first_order", "u_hat"),
    ("pair", "u_hat"),
    ("psis", "sums"),
    ("cavs", "numerator"),
    ("mv", "theta1"),
    ("mv", "theta2"),
    ("fkf", "omega"),
}


def is_feature_array(section: str, name: str) -> bool:
    if section.startswith("higher_order:"):
        return name == "u_hat"
    return (section, name) in FEATURE_ARRAYS


def category_axes(section: str, name: str) -> tuple[int, ...]:
    """Axes of an uploaded array that index categories."""
    if section == "pair":
        return (1, 2) if name == "u_hat" else (0, 1)
    if section == "fkf":
        return ()
    return (1,) if is_feature_array(section, name) else (0,)


def permute_categories(summary: ClientSummary, perm) -> ClientSummary:
    """Copy of ``summary`` whose category axes are relabelled: new[r] = old[perm[r]]."""
    perm = np.asarray(perm, dtype=np.int64)
    if sorted(perm.tolist()) != list(range(summary.R)):
        raise AggregationError("perm must be a permutation of 0..R-1")
    sections = {}
    for sec, arrays in summary.sections.items():
        out = {}
        for name, arr in arrays.items():
            arr = np.asarray(arr)
            for ax in category_axes(sec, name):
                arr = np.take(arr, perm, axis=ax)
            out[name] = arr
        sections[sec] = out
    counts = np.asarray(summary.category_counts)[perm]
    return ClientSummary(summary.client_id, summary.n_l, counts, summary.p, sections)


def ordered(summaries: Sequence[ClientSummary]) -> list[ClientSummary]:
    if not summaries:
        raise AggregationError("no client summaries to aggregate")
    out = sorted(summaries, key=lambda s: client_sort_key(s.client_id))
    p, R = out[0].p, out[0].R
    for s in out:
        if s.p != p or s.R != R:
            raise AggregationError(
                f"client {s.client_id} has shape (p={s.p}, R={s.R}), expected ({p}, {R})"
            )
    return out


def _undefined_warning(tag: str, cats) -> None:
    warnings.warn(
        f"{tag}: categories {list(cats)} have zero total weight; entries left undefined",
        AggregationWarning,
        stacklevel=3,
    )


def client_weight(n_l: int, mode: str) -> float:
    """Per-client multiplier ``h_l`` of the ratio form."""
    if mode in ("half_floor", "pair_count_lambda"):
        return float(half_floor(n_l))
    if mode == "min_variance":
        # λ = 12|A||B|/(n+1) is h·θ̂ with h = 12 n(n-1)/(n+1)
        return 12.0 * n_l * (n_l - 1) / (n_l + 1)
    raise AggregationError(f"unknown weighting mode {mode!r}; expected one of {WEIGHT_MODES}")


def aggregate_first_order(
    summaries: Sequence[ClientSummary], weights_mode: str = "half_floor"
) -> np.ndarray:
    """γ̄ (p x R) from first-order uploads.

    ``half_floor`` and ``min_variance`` use the ratio form
    ``Σ h Û / Σ h θ̂``; ``pair_count_lambda`` uses ``Σ λ γ̂ / Σ λ`` with
    ``λ = ⌊n/2⌋ θ̂``. The two forms agree algebraically.
    """
    items = ordered(summaries)
    if weights_mode == "pair_count_lambda":
        num = den = 0.0
        for s in items:
            sec = s.section("first_order")
            th = np.asarray(sec["theta_hat"], dtype=np.float64)
            lam = half_floor(s.n_l) * th
            with np.errstate(invalid="ignore", divide="ignore"):
                g = np.where(th > 0, sec["u_hat"] / th, 0.0)
            num = num + lam * g
            den = den + lam
        with np.errstate(invalid="ignore", divide="ignore"):
            gbar = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)
    else:
        weights = [client_weight(s.n_l, weights_mode) for s in items]
        num = den = 0.0
        for h, s in zip(weights, items):
            sec = s.section("first_order")
            num = num + h * np.asarray(sec["u_hat"], dtype=np.float64)
            den = den + h * np.asarray(sec["theta_hat"], dtype=np.float64)
        den = np.asarray(den)
        gbar = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)
    den = np.broadcast_to(np.asarray(den), (items[0].R,))
    missing = np.flatnonzero(den <= 0)
    if missing.size:
        _undefined_warning("first-order aggregation", missing)
    return np.broadcast_to(gbar, (items[0].p, items[0].R)).copy()


def lrffs_utilities(gamma_bar: np.ndarray, method_tag: str = "lrffs") -> UtilityVector:
    """ω_j = max_r |γ̄_{j,r} - 1/2| over defined categories."""
    dev = np.abs(np.asarray(gamma_bar, dtype=np.float64) - 0.5)
    undefined_rows = np.flatnonzero(np.all(np.isnan(dev), axis=1))
    if undefined_rows.size:
        raise AggregationError(
            f"features {undefined_rows.tolist()[:20]} have no defined category"
        )
    return UtilityVector(np.nanmax(dev, axis=1), method_tag)


def category_utilities(gamma_bar: np.ndarray, method_tag: str = "lrffs") -> CategoryUtilityMatrix:
    return CategoryUtilityMatrix(np.abs(np.asarray(gamma_bar) - 0.5), method_tag)


def aggregate_pair(summaries: Sequence[ClientSummary]) -> np.ndarray:
    """Pair γ̄ tensor (p x R x R) with λ_rk-weights, NaN on the diagonal and empty pairs."""
    items = ordered(summaries)
    num = den = 0.0
    for s in items:
        sec = s.section("pair")
        h = float(half_floor(s.n_l))
        num = num + h * np.asarray(sec["u_hat"], dtype=np.float64)
        den = den + h * np.asarray(sec["theta_hat"], dtype=np.float64)
    den = np.asarray(den)
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)


def lrffs_pair_utilities(pair_gamma: np.ndarray) -> UtilityVector:
    dev = np.abs(np.asarray(pair_gamma, dtype=np.float64) - 0.5)
    flat = dev.reshape(dev.shape[0], -1)
    bad = np.flatnonzero(np.all(np.isnan(flat), axis=1))
    if bad.size:
        raise AggregationError(f"features {bad.tolist()[:20]} have no defined category pair")
    return UtilityVector(np.nanmax(flat, axis=1), "lrffs_pair")


def aggregate_higher_order(summaries: Sequence[ClientSummary], d: int) -> np.ndarray:
    """ω̄_{j,r,d} (p x R) by the signed binomial combination of γ̄_{d,d1}."""
    items = ordered(summaries)
    name = f"higher_order:{d}"
    num = den = 0.0
    for s in items:
        sec = s.section(name)
        h = float(int(s.n_l) // (d + 1))
        num = num + h * np.asarray(sec["u_hat"], dtype=np.float64)
        den = den + h * np.asarray(sec["theta_hat"], dtype=np.float64)
    den = np.asarray(den)
    gbar = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)  # p x R x d
    signs = np.array([comb(d, d1, exact=True) * (-1) ** (d - d1) for d1 in range(1, d + 1)])
    combo = (gbar * signs).sum(axis=2) + (-1) ** d / (d + 1)
    missing = np.flatnonzero(np.any(den <= 0, axis=1))
    if missing.size:
        _undefined_warning(f"order-{d} aggregation", missing)
    return np.abs(combo)


def aggregate_proportions(summaries: Sequence[ClientSummary]) -> np.ndarray:
    """π̄_r = Σ counts / Σ n_l."""
    items = ordered(summaries)
    total = sum(int(s.n_l) for s in items)
    if total <= 0:
        raise AggregationError("total sample size is zero")
    counts = np.zeros(items[0].R)
    for s in items:
        counts = counts + np.asarray(s.category_counts, dtype=np.float64)
    return counts / total


def weight_preset(pi_bar, preset: str) -> np.ndarray:
    """Category weights ζ as a function of the proportions."""
    pi = np.asarray(pi_bar, dtype=np.float64)
    if preset == "cru":
        return (pi * (1 - pi)) ** 2
    if preset == "mvsis":
        return pi * (1 - pi) ** 2
    if preset == "cavs":
        return 1 - pi
    if preset == "equal":
        return np.ones_like(pi)
    if preset == "argmax":
        raise AggregationError("the argmax preset depends on ω; pass zeta='argmax' instead")
    raise AggregationError(f"unknown weight preset {preset!r}; expected one of {ZETA_PRESETS}")


def general_framework_utilities(
    omega_rd: np.ndarray, zeta, k: int = 1, method_tag: str = "general"
) -> UtilityVector:
    """ω_j = Σ_r ζ_r ω_{j,r,d}^k, or ``max_r ω^k`` when ``zeta == 'argmax'``."""
    if int(k) != k or k < 1:
        raise AggregationError("exponent k must be a positive integer")
    om = np.atleast_2d(np.asarray(omega_rd, dtype=np.float64))
    if isinstance(zeta, str):
        if zeta != "argmax":
            raise AggregationError(f"unknown zeta {zeta!r}")
        if np.any(np.all(np.isnan(om), axis=1)):
            raise AggregationError("a feature has no defined category")
        return UtilityVector(np.nanmax(om, axis=1) ** k, method_tag)
    z = np.asarray(zeta, dtype=np.float64)
    if z.shape != (om.shape[1],) or np.any(z < 0) or not np.all(np.isfinite(z)):
        raise AggregationError("zeta must be a finite non-negative vector of length R")
    bad = np.isnan(om) & (z > 0)[None, :]
    if bad.any():
        rows, cols = np.nonzero(bad)
        raise AggregationError(
            f"undefined ω for (feature, category) {list(zip(rows.tolist(), cols.tolist()))[:10]}"
            " with positive weight"
        )
    terms = np.where(z > 0, np.nan_to_num(om) ** k, 0.0)
    return UtilityVector(terms @ z, method_tag)


# -- baseline methods --------------------------------------------------------


def psis_utilities(summaries: Sequence[ClientSummary]) -> UtilityVector:
    """Range of pooled class means, max_r mean - min_r mean."""
    items = ordered(summaries)
    counts = 0.0
    sums = 0.0
    for s in items:
        counts = counts + np.asarray(s.category_counts, dtype=np.float64)
        sums = sums + np.asarray(s.section("psis")["sums"], dtype=np.float64)
    if np.any(counts <= 0):
        raise AggregationError(
            f"PSIS needs every category present; empty: {np.flatnonzero(counts <= 0).tolist()}"
        )
    means = sums / counts
    return UtilityVector(means.max(axis=1) - means.min(axis=1), "psis")


def _cavs_pieces(items):
    h_tot = 0.0
    theta = 0.0
    counts = 0.0
    n_tot = 0
    for s in items:
        h = float(half_floor(s.n_l))
        theta = theta + h * np.asarray(s.section("cavs")["numerator"], dtype=np.float64)
        h_tot += h
        counts = counts + np.asarray(s.category_counts, dtype=np.float64)
        n_tot += int(s.n_l)
    if h_tot <= 0:
        raise AggregationError("all clients have zero weight")
    return theta / h_tot, counts / n_tot


def cavs_max_utilities(summaries: Sequence[ClientSummary]) -> UtilityVector:
    """max_r |θ̄_r / percent_r - 1/2| with ⌊n/2⌋-weighted numerators."""
    theta, percent = _cavs_pieces(ordered(summaries))
    used = percent > 0
    if not used.all():
        warnings.warn(
            f"CAVS: categories {np.flatnonzero(~used).tolist()} absent everywhere; skipped",
            AggregationWarning,
            stacklevel=2,
        )
    if not used.any():
        raise AggregationError("CAVS: no category present")
    dev = np.abs(theta[:, used] / percent[used] - 0.5)
    return UtilityVector(dev.max(axis=1), "cavs_max")


def cru_utilities(summaries: Sequence[ClientSummary]) -> UtilityVector:
    """Naive federated CRU: Σ_r (π̄_r/2 - θ̄_r)^2 from the CAVS numerators.

    ``θ̄_r`` estimates ``P(Y=r, X < X')``, which for continuous features is
    ``π_r - E[F(X) I(Y=r)]``.
    """
    theta, percent = _cavs_pieces(ordered(summaries))
    return UtilityVector(((percent / 2 - theta) ** 2).sum(axis=1), "cru")


def mv_utilities(summaries: Sequence[ClientSummary]) -> UtilityVector:
    """Naive federated MV-SIS with n_l-weighted triples."""
    items = ordered(summaries)
    t1 = t2 = 0.0
    counts = 0.0
    n_tot = 0
    for s in items:
        sec = s.section("mv")
        t1 = t1 + s.n_l * np.asarray(sec["theta1"], dtype=np.float64)
        t2 = t2 + s.n_l * np.asarray(sec["theta2"], dtype=np.float64)
        counts = counts + np.asarray(s.category_counts, dtype=np.float64)
        n_tot += int(s.n_l)
    t1, t2 = t1 / n_tot, t2 / n_tot
    percent = counts / n_tot
    used = percent > 0
    if not used.all():
        warnings.warn(
            f"MV-SIS: categories {np.flatnonzero(~used).tolist()} absent everywhere; skipped",
            AggregationWarning,
            stacklevel=2,
        )
    vals = (t1[:, used] / percent[used] - 2 * t2[:, used] + percent[used] / 3).sum(axis=1)
    return UtilityVector(vals, "mvsis")


def fkf_utilities(summaries: Sequence[ClientSummary]) -> UtilityVector:
    items = ordered(summaries)
    num = 0.0
    n_tot = 0
    for s in items:
        num = num + s.n_l * np.asarray(s.section("fkf")["omega"], dtype=np.float64)
        n_tot += int(s.n_l)
    return UtilityVector(num / n_tot, "fkf")


# -- bridge parameter and heterogeneity --------------------------------------


@dataclass(frozen=True)
class BridgeDiagnostics:
    pi_star: float
    theta_star: float
    pooled_pi: float
    vartheta: float | None  # None when the pooled proportion is 0 or 1


def bridge_diagnostics(pi_clients, h) -> list[BridgeDiagnostics]:
    """Bridge proportion π* and heterogeneity factor ϑ for every category.

    ``pi_clients`` is ``m x R`` (or length ``m`` for a single category) and
    ``h`` holds the client weights. ``θ* = Σ h π(1-π) / Σ h`` and π* is the
    root of ``t(1-t) = θ*`` in ``[0, 1/2]``.
    """
    pi = np.asarray(pi_clients, dtype=np.float64)
    if pi.ndim == 1:
        pi = pi[:, None]
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (pi.shape[0],) or np.any(h < 0) or h.sum() <= 0:
        raise AggregationError("weights must be non-negative, one per client, not all zero")
    out = []
    for r in range(pi.shape[1]):
        c = float(np.sum(h * pi[:, r] * (1 - pi[:, r])) / h.sum())
        if c > 0.25 + 1e-15:
            raise AggregationError(f"category {r}: weighted θ* = {c} exceeds 1/4")
        c = min(c, 0.25)
        pi_star = (1.0 - math.sqrt(1.0 - 4.0 * c)) / 2.0
        pooled = float(np.sum(h * pi[:, r]) / h.sum())
        denom = pooled * (1 - pooled)
        out.append(BridgeDiagnostics(pi_star, c, pooled, c / denom if denom > 0 else None))
    return out
