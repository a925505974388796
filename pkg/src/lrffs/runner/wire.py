"""Newline-delimited JSON encoding of a client summary.

One header record describes the client, the global (per-category) arrays and
the shapes of the per-feature arrays; it is followed by ``n_blocks`` records,
each carrying a contiguous block of features. Numbers travel as decimal
strings with 17 significant digits, which round-trip every double exactly.
Undefined values travel as ``null``.
"""

from __future__ import annotations

import json
import math

import numpy as np

from ..aggregation import ClientSummary, is_feature_array
from ..core import DataError

PROTOCOL_VERSION = 1
DEFAULT_BLOCK_WIDTH = 512


class WireError(DataError):
    pass


class VersionError(WireError):
    pass


class ShapeError(WireError):
    pass


class FrameError(WireError):
    pass


def _enc(values: np.ndarray) -> list:
    return [None if math.isnan(v) else "%.17g" % v for v in values.ravel().tolist()]


def _dec(items, where: str) -> np.ndarray:
    if not isinstance(items, list):
        raise FrameError(f"{where}: expected a list of numbers")
    try:
        return np.array([math.nan if v is None else float(v) for v in items], dtype=np.float64)
    except (TypeError, ValueError):
        raise FrameError(f"{where}: malformed number") from None


def serialize_summary(summary: ClientSummary, block_width: int = DEFAULT_BLOCK_WIDTH) -> bytes:
    if block_width < 1:
        raise ValueError("block_width must be positive")
    p = summary.p
    n_blocks = max(1, math.ceil(p / block_width))
    shapes, global_arrays = {}, {}
    for sec, arrays in summary.sections.items():
        shapes[sec] = {}
        for name, arr in arrays.items():
            arr = np.asarray(arr, dtype=np.float64)
            feat = is_feature_array(sec, name)
            if feat and arr.shape[0] != p:
                raise ShapeError(f"{sec}.{name} has {arr.shape[0]} rows, expected p={p}")
            shapes[sec][name] = {"shape": list(arr.shape), "per_feature": feat}
            if not feat:
                global_arrays.setdefault(sec, {})[name] = _enc(arr)
    header = {
        "type": "header",
        "protocol_version": PROTOCOL_VERSION,
        "client_id": summary.client_id,
        "n_l": int(summary.n_l),
        "category_counts": [int(c) for c in summary.category_counts],
        "p": p,
        "R": summary.R,
        "sections": shapes,
        "global": global_arrays,
        "n_blocks": n_blocks,
        "block_width": block_width,
    }
    lines = [json.dumps(header, separators=(",", ":"))]
    for b in range(n_blocks):
        lo, hi = b * block_width, min(p, (b + 1) * block_width)
        data = {}
        for sec, arrays in summary.sections.items():
            for name, arr in arrays.items():
                if is_feature_array(sec, name):
                    data.setdefault(sec, {})[name] = _enc(np.asarray(arr, dtype=np.float64)[lo:hi])
        rec = {"type": "block", "index": b, "start": lo, "stop": hi, "data": data}
        lines.append(json.dumps(rec, separators=(",", ":")))
    return ("\n".join(lines) + "\n").encode()


def _record(line: bytes, where: str) -> dict:
    try:
        rec = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError):
        raise FrameError(f"{where}: not a JSON record") from None
    if not isinstance(rec, dict):
        raise FrameError(f"{where}: record must be an object")
    return rec


def parse_summary(data: bytes) -> ClientSummary:
    if not data.endswith(b"\n"):
        raise FrameError("stream does not end with a newline; truncated?")
    lines = data[:-1].split(b"\n")
    head = _record(lines[0], "header")
    if head.get("type") != "header":
        raise FrameError("first record is not a header")
    if head.get("protocol_version") != PROTOCOL_VERSION:
        raise VersionError(
            f"protocol version {head.get('protocol_version')!r} not supported (expected {PROTOCOL_VERSION})"
        )
    try:
        p, R = int(head["p"]), int(head["R"])
        n_blocks, width = int(head["n_blocks"]), int(head["block_width"])
        counts = np.array(head["category_counts"], dtype=np.int64)
        n_l, client_id, shapes = int(head["n_l"]), str(head["client_id"]), head["sections"]
        global_arrays = head["global"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FrameError(f"header is missing or has a malformed field: {exc}") from None
    if counts.shape != (R,):
        raise ShapeError(f"category_counts has {counts.size} entries, expected R={R}")
    if len(lines) - 1 != n_blocks:
        raise FrameError(f"expected {n_blocks} block records, found {len(lines) - 1}")
    sections: dict[str, dict[str, np.ndarray]] = {}
    pieces: dict[tuple[str, str], list[np.ndarray]] = {}
    for sec, arrays in shapes.items():
        sections[sec] = {}
        for name, info in arrays.items():
            shape = tuple(int(x) for x in info["shape"])
            if bool(info["per_feature"]) != is_feature_array(sec, name):
                raise ShapeError(f"{sec}.{name}: unexpected feature-axis flag")
            if info["per_feature"]:
                if not shape or shape[0] != p:
                    raise ShapeError(f"{sec}.{name}: leading dimension must be p={p}")
                pieces[(sec, name)] = []
            else:
                try:
                    flat = _dec(global_arrays[sec][name], f"{sec}.{name}")
                except KeyError:
                    raise FrameError(f"global array {sec}.{name} missing from header") from None
                if flat.size != int(np.prod(shape)):
                    raise ShapeError(f"{sec}.{name}: {flat.size} values for shape {shape}")
                sections[sec][name] = flat.reshape(shape)
    expect = 0
    for b, line in enumerate(lines[1:]):
        rec = _record(line, f"block {b}")
        if rec.get("type") != "block" or rec.get("index") != b:
            raise FrameError(f"record {b + 1} is not block {b}")
        lo, hi = rec.get("start"), rec.get("stop")
        if lo != expect or not isinstance(hi, int) or hi <= lo or hi - lo > width or hi > p:
            raise FrameError(f"block {b} covers [{lo}, {hi}); expected to start at {expect}")
        expect = hi
        for (sec, name), parts in pieces.items():
            try:
                flat = _dec(rec["data"][sec][name], f"block {b} {sec}.{name}")
            except (KeyError, TypeError):
                raise FrameError(f"block {b} lacks {sec}.{name}") from None
            tail = tuple(int(x) for x in shapes[sec][name]["shape"][1:])
            per_row = int(np.prod(tail)) if tail else 1
            if flat.size != (hi - lo) * per_row:
                raise ShapeError(f"block {b} {sec}.{name}: wrong number of values")
            parts.append(flat.reshape((hi - lo,) + tail))
    if expect != p:
        raise FrameError(f"blocks cover {expect} of {p} features")
    for (sec, name), parts in pieces.items():
        sections[sec][name] = np.concatenate(parts, axis=0)
    return ClientSummary(client_id, n_l, counts, p, sections)


def payload_arrays(data: bytes) -> dict[str, int]:
    """Length of every numeric list in a serialized summary, keyed by location."""
    out = {}
    lines = data.decode().strip().split("\n")
    head = json.loads(lines[0])
    out["header.category_counts"] = len(head["category_counts"])
    for sec, arrays in head["global"].items():
        for name, vals in arrays.items():
            out[f"global.{sec}.{name}"] = len(vals)
    for line in lines[1:]:
        rec = json.loads(line)
        for sec, arrays in rec["data"].items():
            for name, vals in arrays.items():
                out[f"block{rec['index']}.{sec}.{name}"] = len(vals)
    return out
