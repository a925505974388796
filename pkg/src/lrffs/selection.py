"""Turning utilities into selected feature sets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    DataError,
    ScreeningResult,
    Shard,
    UtilityVector,
    check_federation,
    make_rng,
)
from .methods import MethodSpec, federated_utilities


def threshold_select(utilities: UtilityVector, delta: float) -> ScreeningResult:
    """Keep features whose utility is strictly above ``delta``."""
    if not delta >= 0:
        raise DataError("threshold must be non-negative")
    sel = np.flatnonzero(utilities.values > delta)
    return ScreeningResult(sel, float(delta), utilities)


def top_k_select(utilities: UtilityVector, K: int) -> ScreeningResult:
    p = len(utilities)
    if not 1 <= K <= p:
        raise DataError(f"K must lie in [1, {p}], got {K}")
    ranks = utilities.ranks()
    return ScreeningResult(np.flatnonzero(ranks <= K), f"top-{K}", utilities, ranks)


def permute_within_clients(
    shards: Sequence[Shard], seed: int, tag: str, columns: Sequence[int] | None = None
) -> list[Shard]:
    """Pseudo features: each client's column ``j`` shuffled by its own stream.

    Column ``i`` of the output is built from source column ``columns[i]``
    (all columns when omitted). The stream for client ``c`` and output
    column ``i`` is seeded by ``(seed, c, f"{tag}:{i}")``, so the result does
    not depend on evaluation order. Labels are untouched.
    """
    out = []
    for s in shards:
        src = range(s.p) if columns is None else columns
        Z = np.empty((s.n, len(src)))
        for i, j in enumerate(src):
            rng = make_rng(seed, s.client_id, f"{tag}:{i}")
            Z[:, i] = s.features[rng.permutation(s.n), j]
        out.append(Shard(Z, s.labels, s.client_id, s.R))
    return out


def auxiliary_permutation_threshold(
    shards: Sequence[Shard],
    method: MethodSpec,
    q: int,
    seed: int,
    engine: str = "sorted",
) -> float:
    """Max utility over ``q`` permuted copies of randomly chosen features."""
    aux = auxiliary_shards(shards, q, seed)
    return float(federated_utilities(aux, [method], engine)[method.label].values.max())


def auxiliary_shards(shards: Sequence[Shard], q: int, seed: int) -> list[Shard]:
    """``q`` pseudo features, each a within-client shuffle of a feature drawn with replacement."""
    if q < 1:
        raise DataError("q must be at least 1")
    p, _ = check_federation(shards)
    sources = make_rng(seed, "server", "aux_sources").integers(0, p, size=q)
    return permute_within_clients(shards, seed, "aux", sources)


@dataclass(frozen=True, eq=False)
class FdrOutcome:
    phi: np.ndarray
    delta_hat: float | None  # None when no candidate meets the level
    selected: np.ndarray
    estimated_fdp: float | None


def fdr_threshold(phi, alpha: float) -> FdrOutcome:
    """Smallest ``δ`` among the ``|φ_j|`` with ``(1 + #{φ <= -δ}) / max(#{φ >= δ}, 1) < α``."""
    if not 0 < alpha < 1:
        raise DataError("alpha must lie in (0, 1)")
    phi = np.asarray(phi, dtype=np.float64)
    cands = np.unique(np.abs(phi[phi != 0]))
    neg = np.sort(phi)
    for delta in cands:
        n_neg = np.searchsorted(neg, -delta, side="right")
        n_pos = phi.size - np.searchsorted(neg, delta, side="left")
        fdp = (1 + n_neg) / max(n_pos, 1)
        if fdp < alpha:
            return FdrOutcome(phi, float(delta), np.flatnonzero(phi >= delta), float(fdp))
    return FdrOutcome(phi, None, np.array([], dtype=np.int64), None)


def fdr_control_select(
    shards: Sequence[Shard],
    method: MethodSpec,
    alpha: float,
    seed: int,
    utilities: UtilityVector | None = None,
    engine: str = "sorted",
) -> FdrOutcome:
    """Permutation FDR control: φ = ω - ω' with per-client shuffled pseudo features."""
    if utilities is None:
        utilities = federated_utilities(shards, [method], engine)[method.label]
    pseudo = permute_within_clients(shards, seed, "pseudo")
    omega_p = federated_utilities(pseudo, [method], engine)[method.label]
    return fdr_threshold(utilities.values - omega_p.values, alpha)
