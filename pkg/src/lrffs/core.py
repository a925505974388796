"""Shared data model: category registry, shards, utility containers, seeding."""

from __future__ import annotations

import csv
import hashlib
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class DataError(ValueError):
    """Raised when input data violates a structural invariant."""


class CsvParseError(DataError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


@dataclass(frozen=True)
class CategoryRegistry:
    """Ordered set of category labels; code ``r`` is position ``r``."""

    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        object.__setattr__(self, "labels", labels)
        if len(set(labels)) != len(labels):
            raise DataError(f"duplicate category labels: {labels}")
        if len(labels) < 2:
            raise DataError("a registry needs at least 2 categories")

    @classmethod
    def of_size(cls, n_categories: int) -> "CategoryRegistry":
        return cls(tuple(str(r) for r in range(n_categories)))

    @property
    def R(self) -> int:
        return len(self.labels)

    def code(self, label) -> int:
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise DataError(f"unknown category label {label!r}") from None

    def extend(self, new_labels: Iterable) -> "CategoryRegistry":
        labels = list(self.labels)
        for lab in new_labels:
            if str(lab) not in labels:
                labels.append(str(lab))
        return CategoryRegistry(tuple(labels))


@dataclass(frozen=True, eq=False)
class Shard:
    """One client's local data: ``n_l x p`` features and integer label codes."""

    features: np.ndarray
    labels: np.ndarray
    client_id: str = "c0"
    n_categories: int | None = None

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64, copy=True)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise DataError("features must be a 2-d matrix")
        y = np.array(self.labels, copy=True)
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise DataError("labels must be a vector with one entry per row")
        if X.shape[0] < 1:
            raise DataError("a shard needs at least one row")
        if not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.equal(np.mod(y, 1), 0)):
                raise DataError("label codes must be integers")
        y = y.astype(np.int64)
        if not np.all(np.isfinite(X)):
            bad = np.argwhere(~np.isfinite(X))[0]
            raise DataError(f"non-finite feature value at row {bad[0]}, column {bad[1]}")
        R = self.n_categories
        if R is None:
            R = max(int(y.max()) + 1, 2)
        if y.min() < 0 or y.max() >= R:
            raise DataError(f"label codes must lie in [0, {R})")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "client_id", str(self.client_id))
        object.__setattr__(self, "n_categories", int(R))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def R(self) -> int:
        return self.n_categories

    def category_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.R).astype(np.int64)

    def replace(self, features=None, labels=None) -> "Shard":
        return Shard(
            self.features if features is None else features,
            self.labels if labels is None else labels,
            self.client_id,
            self.n_categories,
        )


def check_federation(shards: Sequence[Shard]) -> tuple[int, int]:
    """Validate a list of shards and return the shared ``(p, R)``."""
    if not shards:
        raise DataError("a federation needs at least one shard")
    p, R = shards[0].p, shards[0].R
    ids = set()
    for s in shards:
        if s.p != p:
            raise DataError(f"shard {s.client_id} has {s.p} columns, expected {p}")
        if s.R != R:
            raise DataError(f"shard {s.client_id} uses R={s.R}, expected {R}")
        if s.client_id in ids:
            raise DataError(f"duplicate client id {s.client_id}")
        ids.add(s.client_id)
    return p, R


def client_sort_key(client_id: str):
    """Natural ordering so that ``c2`` sorts before ``c10``."""
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", str(client_id))]


@dataclass(frozen=True, eq=False)
class CategoryUtilityMatrix:
    """Per-(feature, category) utilities; NaN marks an undefined entry."""

    values: np.ndarray
    method_tag: str

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.values)


@dataclass(frozen=True, eq=False)
class UtilityVector:
    values: np.ndarray
    method_tag: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise DataError("utility vector must be 1-d")
        if not np.all(np.isfinite(v)):
            raise DataError(f"non-finite utilities in {self.method_tag}")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]

    def ranks(self) -> np.ndarray:
        return rank_utilities(self.values)


def rank_utilities(values: np.ndarray) -> np.ndarray:
    """Rank 1 = largest utility; ties broken by ascending feature index."""
    values = np.asarray(values, dtype=np.float64)
    order = np.lexsort((np.arange(values.shape[0]), -values))
    ranks = np.empty(values.shape[0], dtype=np.int64)
    ranks[order] = np.arange(1, values.shape[0] + 1)
    return ranks


@dataclass(frozen=True, eq=False)
class ScreeningResult:
    selected: np.ndarray
    threshold: float | str
    utilities: UtilityVector
    ranks: np.ndarray = field(default=None)

    def __post_init__(self):
        sel = np.unique(np.asarray(self.selected, dtype=np.int64))
        object.__setattr__(self, "selected", sel)
        if self.ranks is None:
            object.__setattr__(self, "ranks", self.utilities.ranks())


def seed_hierarchy(master_seed: int, client_id, purpose_tag: str) -> int:
    """Derive a 64-bit stream seed from ``(master_seed, client_id, purpose_tag)``.

    SHA-256 over a length-prefixed encoding, so the result is stable across
    runs, platforms and Python hash randomisation.
    """
    parts = [str(int(master_seed)), str(client_id), str(purpose_tag)]
    payload = b"".join(len(p.encode()).to_bytes(4, "big") + p.encode() for p in parts)
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "big")


def make_rng(master_seed: int, client_id, purpose_tag: str) -> np.random.Generator:
    return np.random.default_rng(seed_hierarchy(master_seed, client_id, purpose_tag))


def load_csv_dataset(
    path,
    label_column: str,
    delimiter: str = ",",
    registry: CategoryRegistry | None = None,
    client_id: str | None = None,
) -> tuple[Shard, CategoryRegistry]:
    """Read one client's CSV into a Shard.

    Without a registry, categories are registered in first-appearance order.
    With one, unknown labels are an error. Returns the shard and the registry
    that was used.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvParseError(f"{path}: empty file") from None
        if label_column not in header:
            raise CsvParseError(f"{path}: no column named {label_column!r}", row=1)
        li = header.index(label_column)
        feat_names = [h for i, h in enumerate(header) if i != li]
        rows, raw_labels = [], []
        for rno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise CsvParseError(
                    f"{path}: row {rno} has {len(rec)} fields, expected {len(header)}", row=rno
                )
            vals = []
            for i, cell in enumerate(rec):
                if i == li:
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    v = math.nan
                if not math.isfinite(v):
                    raise CsvParseError(
                        f"{path}: row {rno}, column {header[i]!r}: non-numeric value {cell!r}",
                        row=rno,
                        column=header[i],
                    )
                vals.append(v)
            rows.append(vals)
            raw_labels.append(rec[li])
    if not rows:
        raise CsvParseError(f"{path}: no data rows")
    if registry is None:
        seen: list[str] = []
        for lab in raw_labels:
            if lab not in seen:
                seen.append(lab)
        if len(seen) < 2:
            raise DataError(f"{path}: only one label present; supply a shared registry")
        registry = CategoryRegistry(tuple(seen))
    codes = np.array([registry.code(lab) for lab in raw_labels], dtype=np.int64)
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(feat_names))
    shard = Shard(X, codes, client_id or path.stem, registry.R)
    return shard, registry


def scan_csv_labels(path, label_column: str, delimiter: str = ",") -> list[str]:
    """Label values of a CSV in first-appearance order."""
    seen: list[str] = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        if reader.fieldnames is None or label_column not in reader.fieldnames:
            raise CsvParseError(f"{path}: no column named {label_column!r}", row=1)
        for rec in reader:
            lab = rec[label_column]
            if lab not in seen:
                seen.append(lab)
    return seen


def load_csv_federation(
    paths: Sequence, label_column: str, delimiter: str = ",", registry: CategoryRegistry | None = None
) -> tuple[list[Shard], CategoryRegistry]:
    """Load one shard per file against a single registry.

    When no registry is given, the union of all files' labels is registered in
    first-appearance order (file order, then row order).
    """
    if registry is None:
        labels: list[str] = []
        for path in paths:
            for lab in scan_csv_labels(path, label_column, delimiter):
                if lab not in labels:
                    labels.append(lab)
        registry = CategoryRegistry(tuple(labels))
    shards = []
    for i, path in enumerate(paths):
        shard, _ = load_csv_dataset(path, label_column, delimiter, registry, client_id=f"c{i}")
        shards.append(shard)
    return shards, registry


def write_csv_dataset(
    shard: Shard,
    path,
    registry: CategoryRegistry,
    label_column: str = "label",
    delimiter: str = ",",
    feature_names: Sequence[str] | None = None,
) -> None:
    names = list(feature_names) if feature_names else [f"x{j}" for j in range(shard.p)]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter)
        w.writerow([label_column] + names)
        for i in range(shard.n):
            w.writerow(
                [registry.labels[shard.labels[i]]] + [repr(float(v)) for v in shard.features[i]]
            )
