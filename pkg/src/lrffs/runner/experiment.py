"""Repetition loop: generate or load a federation, run the one-shot rounds, score, report."""

from __future__ import annotations

import csv
import datetime as _dt
import json
import platform
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .. import __version__
from ..aggregation import ClientSummary
from ..core import CategoryRegistry, DataError, ScreeningResult, Shard, load_csv_federation, seed_hierarchy
from ..methods import MethodSpec, make_summary, required_sections
from ..metrics import RunScore, score_run, summarize
from ..selection import auxiliary_shards, fdr_threshold, permute_within_clients, threshold_select, top_k_select
from ..simgen import Attack, apply_attack, generate
from .config import ExperimentConfig
from .transport import make_transport

RUN_COLUMNS = [
    "sweep_param", "sweep_value", "heterogeneity", "t", "seed", "method",
    "success", "psr", "fdr", "size", "wrank", "threshold", "selected",
]
TIMING_COLUMNS = ["sweep_value", "t", "method", "time_local_s", "time_agg_s", "payload_bytes"]
SUMMARY_COLUMNS = [
    "method", "heterogeneity", "sweep_param", "sweep_value", "T",
    "SSR", "PSR", "FDR", "Size", "wRank", "time_local_s", "time_agg_s",
]


class ExperimentError(DataError):
    pass


@dataclass
class ExperimentReport:
    runs: list[dict]
    timing: list[dict]
    summary: list[dict]
    manifest: dict
    output_dir: Path | None


def run_seed(master_seed: int, t: int) -> int:
    return seed_hierarchy(master_seed, "run", f"t{t}")


def client_step(
    shards: Sequence[Shard],
    methods: Sequence[MethodSpec],
    engine: str,
    attack: Attack,
    seed: int,
) -> tuple[list[ClientSummary], dict[str, float]]:
    """Every client builds its summary; returns them with the mean local time per method."""
    sections = required_sections(methods)
    summaries, timings = [], []
    for shard in shards:
        summary, timing = make_summary(shard, sections, engine)
        summaries.append(summary)
        timings.append(timing)
    if attack.kind == "category_misalign":
        summaries = apply_attack(summaries, attack, seed)
    local = {
        spec.label: float(np.mean([sum(t[sec] for sec in spec.sections) for t in timings]))
        for spec in methods
    }
    return summaries, local


def _fmt(x) -> str:
    if isinstance(x, float):
        return "" if np.isnan(x) else repr(x)
    return str(x)


def _write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c, "")) for c in columns])


class Experiment:
    def __init__(self, config: ExperimentConfig, output_dir=None):
        self.config = config
        self.methods = config.method_specs()
        self.output_dir = Path(output_dir or config.output_dir)
        self.runs: list[dict] = []
        self.timing: list[dict] = []
        self.seeds: list[dict] = []

    # one repetition ---------------------------------------------------------------

    def _round(self, transport, round_id, shards, attack, seed):
        summaries, local = client_step(shards, self.methods, self.config.engine, attack, seed)
        return transport.run_round(round_id, summaries, self.methods), local

    def repetition(self, transport, shards, relevant, attack, seed, tag) -> list[dict]:
        sel = self.config.selection
        main, local = self._round(transport, f"{tag}-main", shards, attack, seed)
        if sel.kind == "aux_perm":
            aux = auxiliary_shards(shards, sel.q, seed)
            aux_res, _ = self._round(transport, f"{tag}-aux", aux, attack, seed)
        elif sel.kind == "fdr":
            pseudo = permute_within_clients(shards, seed, "pseudo")
            pseudo_res, _ = self._round(transport, f"{tag}-pseudo", pseudo, attack, seed)
        records = []
        for spec in self.methods:
            omega = main.utilities[spec.label]
            if sel.kind == "fixed_delta":
                result = threshold_select(omega, sel.delta)
            elif sel.kind == "top_k":
                result = top_k_select(omega, min(sel.K, len(omega)))
            elif sel.kind == "aux_perm":
                delta = float(aux_res.utilities[spec.label].values.max())
                result = threshold_select(omega, delta)
            else:
                out = fdr_threshold(omega.values - pseudo_res.utilities[spec.label].values, sel.alpha)
                thr = "none" if out.delta_hat is None else out.delta_hat
                result = ScreeningResult(out.selected, thr, omega)
            rec = {
                "method": spec.label,
                "threshold": result.threshold,
                "selected": " ".join(str(j) for j in result.selected.tolist()),
                "time_local_s": local[spec.label],
                "time_agg_s": main.time_agg_s[spec.label],
                "payload_bytes": sum(main.payload_bytes.values()) if main.payload_bytes else "",
            }
            if relevant:
                rec.update(score_run(result, relevant).as_dict())
            records.append(rec)
        return records

    # the whole study -------------------------------------------------------------

    def settings(self):
        """(sweep value, scenario or None) pairs in run order."""
        cfg = self.config
        if cfg.csv is not None:
            return [(None, None)]
        if cfg.sweep is None:
            return [(None, cfg.build_scenario())]
        return [(v, cfg.build_scenario(v)) for v in cfg.sweep.values]

    def load_csv(self):
        c = self.config.csv
        registry = CategoryRegistry(tuple(c.labels)) if c.labels else None
        shards, _ = load_csv_federation(c.paths, c.label_column, c.delimiter, registry)
        return shards, tuple(c.relevant or ())

    def run(self) -> ExperimentReport:
        cfg = self.config
        sweep_param = cfg.sweep.param if cfg.sweep else ""
        transport = make_transport(cfg.transport.kind, cfg.transport.address) if cfg.T > 0 else None
        csv_data = self.load_csv() if cfg.csv is not None and cfg.T > 0 else None
        try:
            for si, (sweep_value, spec) in enumerate(self.settings()):
                for t in range(cfg.T):
                    seed = run_seed(cfg.master_seed, t)
                    if si == 0:
                        self.seeds.append({"t": t, "seed": seed})
                    try:
                        if spec is None:
                            shards, relevant = csv_data
                            attack = Attack()
                        else:
                            shards, relevant = generate(spec, seed)
                            attack = spec.attack
                        tag = f"s{si}-t{t}"
                        records = self.repetition(transport, shards, relevant, attack, seed, tag)
                    except Exception as exc:
                        raise ExperimentError(
                            f"run t={t} (sweep {sweep_param}={sweep_value}) failed: {exc}"
                        ) from exc
                    het = spec.heterogeneity if spec is not None else float("nan")
                    for rec in records:
                        base = {
                            "sweep_param": sweep_param,
                            "sweep_value": "" if sweep_value is None else float(sweep_value),
                            "heterogeneity": het,
                            "t": t,
                            "seed": seed,
                        }
                        self.runs.append({**base, **rec})
                        self.timing.append({**base, **rec})
        finally:
            if transport is not None:
                transport.close()
            report = self.report()
        return report

    def summary_rows(self) -> list[dict]:
        rows = []
        groups: dict[tuple, list[dict]] = {}
        for rec in self.runs:
            groups.setdefault((rec["sweep_value"], rec["method"]), []).append(rec)
        for (sweep_value, method), recs in groups.items():
            scored = [r for r in recs if "success" in r]
            scores = [RunScore(r["success"], r["psr"], r["fdr"], r["size"], r["wrank"]) for r in scored]
            stats = summarize(
                scores, [r["time_local_s"] for r in recs], [r["time_agg_s"] for r in recs]
            )
            rows.append({
                "method": method,
                "heterogeneity": recs[0]["heterogeneity"],
                "sweep_param": recs[0]["sweep_param"],
                "sweep_value": sweep_value,
                "T": len(recs),
                **stats,
            })
        return rows

    def report(self) -> ExperimentReport:
        summary = self.summary_rows()
        manifest = {
            "name": self.config.name,
            "config": self.config.model_dump(mode="json"),
            "seeds": self.seeds,
            "software": {
                "lrffs": __version__,
                "numpy": np.__version__,
                "python": platform.python_version(),
            },
            "transport": self.config.transport.kind,
            "completed_runs": len({(r["sweep_value"], r["t"]) for r in self.runs}),
            "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "files": ["runs.csv", "timing.csv", "summary.csv", "manifest.json"],
        }
        out = self.output_dir
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "runs.csv", RUN_COLUMNS, self.runs)
        _write_csv(out / "timing.csv", TIMING_COLUMNS, self.timing)
        _write_csv(out / "summary.csv", SUMMARY_COLUMNS, summary)
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        return ExperimentReport(self.runs, self.timing, summary, manifest, out)


def run_experiment(config: ExperimentConfig, output_dir=None) -> ExperimentReport:
    return Experiment(config, output_dir).run()
