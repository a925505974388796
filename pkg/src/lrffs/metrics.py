"""Scoring selected sets against the known relevant set."""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np

from .core import DataError, ScreeningResult


@dataclass(frozen=True)
class RunScore:
    success: int
    psr: float
    fdr: float
    size: int
    wrank: int

    def as_dict(self) -> dict:
        return asdict(self)


def score_run(result: ScreeningResult, relevant) -> RunScore:
    A = {int(j) for j in relevant}
    p = len(result.ranks)
    if not A or any(not 0 <= j < p for j in A):
        raise DataError("relevant set must be a nonempty subset of the feature indices")
    sel = {int(j) for j in result.selected}
    hit = len(A & sel)
    return RunScore(
        success=int(A <= sel),
        psr=hit / len(A),
        fdr=len(sel - A) / len(sel) if sel else 0.0,
        size=len(sel),
        wrank=int(max(result.ranks[j] for j in A)),
    )


def summarize(scores: Sequence[RunScore], times_local=(), times_agg=()) -> dict:
    """Means over repetitions. Empty input yields NaN means."""

    def mean(vals):
        vals = list(vals)
        return float(np.mean(vals)) if vals else float("nan")

    return {
        "SSR": mean(s.success for s in scores),
        "PSR": mean(s.psr for s in scores),
        "FDR": mean(s.fdr for s in scores),
        "Size": mean(s.size for s in scores),
        "wRank": mean(s.wrank for s in scores),
        "time_local_s": mean(times_local),
        "time_agg_s": mean(times_agg),
    }


@dataclass(frozen=True, eq=False)
class RelativeDeviation:
    values: np.ndarray  # NaN where excluded
    n_excluded: int

    def median(self) -> float:
        kept = self.values[~np.isnan(self.values)]
        return float(np.median(kept)) if kept.size else float("nan")


def relative_deviation(omega_distributed, omega_pooled) -> RelativeDeviation:
    """``|log ω_d - log ω_p|`` per feature; non-positive pairs are excluded and counted."""
    d = np.asarray(omega_distributed, dtype=np.float64)
    p = np.asarray(omega_pooled, dtype=np.float64)
    if d.shape != p.shape:
        raise DataError("utility vectors differ in length")
    ok = (d > 0) & (p > 0)
    out = np.full(d.shape, np.nan)
    out[ok] = np.abs(np.log(d[ok]) - np.log(p[ok]))
    return RelativeDeviation(out, int((~ok).sum()))
