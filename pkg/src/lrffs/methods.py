"""Screening methods: which statistics a client uploads and how the server scores them."""

from __future__ import annotations

import re
import time
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import aggregation as agg
from . import estimators as est
from .core import DataError, Shard, UtilityVector, check_federation

METHOD_NAMES = ("lrffs", "lrffs_pair", "cru", "mvsis", "cavs_max", "cavs_sum", "psis", "fkf", "general")
ENGINES = ("sorted", "pairwise")


@dataclass(frozen=True)
class MethodSpec:
    """A screening method and its options.

    ``weighting`` applies to LR-FFS first-order aggregation. ``d``, ``k`` and
    ``preset`` apply to the general weighted form only.
    """

    name: str
    weighting: str = "half_floor"
    d: int = 1
    k: int = 1
    preset: str = "argmax"

    def __post_init__(self):
        if self.name not in METHOD_NAMES:
            raise DataError(f"unknown method {self.name!r}; expected one of {METHOD_NAMES}")
        if self.weighting not in agg.WEIGHT_MODES:
            raise DataError(f"unknown weighting {self.weighting!r}")
        if self.d < 1 or self.k < 1:
            raise DataError("d and k must be positive")
        if self.preset not in agg.ZETA_PRESETS:
            raise DataError(f"unknown preset {self.preset!r}")

    @property
    def label(self) -> str:
        """Canonical text form; :func:`parse_method` maps it back to this spec."""
        if self.name == "general":
            extra = "" if self.weighting == "half_floor" else f",weighting={self.weighting}"
            return f"general(d={self.d},k={self.k},preset={self.preset}{extra})"
        if self.weighting != "half_floor":
            return f"{self.name}[{self.weighting}]"
        return self.name

    @property
    def sections(self) -> tuple[str, ...]:
        if self.name in ("lrffs", "cavs_sum"):
            return ("first_order",)
        if self.name == "lrffs_pair":
            return ("pair",)
        if self.name in ("cru", "cavs_max"):
            return ("cavs",)
        if self.name == "mvsis":
            return ("mv",)
        if self.name in ("psis", "fkf"):
            return (self.name,)
        return ("first_order",) if self.d == 1 else (f"higher_order:{self.d}",)


_GENERAL = re.compile(r"^general\((.*)\)$")


def parse_method(text: str) -> MethodSpec:
    """Parse ``lrffs``, ``lrffs[min_variance]`` or ``general(d=2,k=1,preset=mvsis)``."""
    text = text.strip()
    m = _GENERAL.match(text)
    if m:
        kwargs = {}
        for part in filter(None, (x.strip() for x in m.group(1).split(","))):
            key, _, val = part.partition("=")
            if key in ("d", "k"):
                kwargs[key] = int(val)
            elif key in ("preset", "weighting"):
                kwargs[key] = val
            else:
                raise DataError(f"unknown general() option {key!r}")
        return MethodSpec("general", **kwargs)
    m = re.match(r"^(\w+)\[(\w+)\]$", text)
    if m:
        return MethodSpec(m.group(1), weighting=m.group(2))
    return MethodSpec(text)


def split_methods(text: str) -> list[str]:
    """Split a comma-separated method list, keeping ``general(...)`` arguments together."""
    return [t.strip() for t in re.findall(r"[^,(]+(?:\([^)]*\))?", text) if t.strip()]


def required_sections(methods: Iterable[MethodSpec]) -> list[str]:
    out: list[str] = []
    for spec in methods:
        for sec in spec.sections:
            if sec not in out:
                out.append(sec)
    return out


# -- client side ---------------------------------------------------------------


def compute_section(shard: Shard, section: str, engine: str = "sorted") -> dict[str, np.ndarray]:
    if section == "first_order":
        fn = est.first_order_pairwise if engine == "pairwise" else est.first_order_arrays
        u, th = fn(shard)
        return {"u_hat": u, "theta_hat": th}
    if section == "pair":
        u, th = est.pair_arrays(shard)
        return {"u_hat": u, "theta_hat": th}
    if section.startswith("higher_order:"):
        u, th = est.higher_order_arrays(shard, int(section.split(":")[1]))
        return {"u_hat": u, "theta_hat": th}
    if section == "psis":
        _, sums = est.psis_arrays(shard)
        return {"sums": sums}
    if section == "cavs":
        return {"numerator": est.cavs_arrays(shard)}
    if section == "mv":
        t1, t2 = est.mv_arrays(shard)
        return {"theta1": t1, "theta2": t2}
    if section == "fkf":
        omega, _ = est.fkf_arrays(shard)
        return {"omega": omega}
    raise DataError(f"unknown section {section!r}")


def make_summary(
    shard: Shard, sections: Sequence[str], engine: str = "sorted"
) -> tuple[agg.ClientSummary, dict[str, float]]:
    """Build a client's one-shot message and the wall time spent per section."""
    if engine not in ENGINES:
        raise DataError(f"unknown engine {engine!r}")
    data, timing = {}, {}
    for sec in sections:
        t0 = time.perf_counter()
        data[sec] = compute_section(shard, sec, engine)
        timing[sec] = time.perf_counter() - t0
    summary = agg.ClientSummary(shard.client_id, shard.n, shard.category_counts(), shard.p, data)
    return summary, timing


# -- server side ----------------------------------------------------------------


def utilities(summaries: Sequence[agg.ClientSummary], spec: MethodSpec) -> UtilityVector:
    """Global utilities of one method from the uploaded summaries."""
    name = spec.name
    if name == "lrffs":
        gbar = agg.aggregate_first_order(summaries, spec.weighting)
        return agg.lrffs_utilities(gbar, spec.label)
    if name == "lrffs_pair":
        return agg.lrffs_pair_utilities(agg.aggregate_pair(summaries))
    if name == "cru":
        return agg.cru_utilities(summaries)
    if name == "mvsis":
        return agg.mv_utilities(summaries)
    if name == "cavs_max":
        return agg.cavs_max_utilities(summaries)
    if name == "psis":
        return agg.psis_utilities(summaries)
    if name == "fkf":
        return agg.fkf_utilities(summaries)
    if name == "cavs_sum":
        d, k, preset = 1, 1, "cavs"
    else:
        d, k, preset = spec.d, spec.k, spec.preset
    if d == 1:
        omega = np.abs(agg.aggregate_first_order(summaries, spec.weighting) - 0.5)
    else:
        omega = agg.aggregate_higher_order(summaries, d)
    if preset == "argmax":
        zeta = "argmax"
    else:
        zeta = agg.weight_preset(agg.aggregate_proportions(summaries), preset)
    return agg.general_framework_utilities(omega, zeta, k, spec.label)


def federated_utilities(
    shards: Sequence[Shard], methods: Sequence[MethodSpec], engine: str = "sorted"
) -> dict[str, UtilityVector]:
    """In-process convenience: build every client's summary, then score each method."""
    check_federation(shards)
    sections = required_sections(methods)
    summaries = [make_summary(s, sections, engine)[0] for s in shards]
    return {spec.label: utilities(summaries, spec) for spec in methods}
