import json

import numpy as np
import pytest

from lrffs.methods import make_summary
from lrffs.runner.wire import (
    FrameError,
    ShapeError,
    VersionError,
    parse_summary,
    serialize_summary,
)

from conftest import random_shard
from suites import payload_scaling, privacy_scan, wire_round_trip


def _bytes(rng, p=10, width=4):
    s = random_shard(rng, 30, p, 3, "c7", min_classes=3)
    return serialize_summary(make_summary(s, ["first_order", "psis"])[0], width)


def test_round_trip_is_exact():
    assert wire_round_trip() == [("wire round trip mismatches", 0.0)]


def test_extreme_doubles_survive(rng):
    from lrffs.aggregation import ClientSummary

    vals = np.array([[5e-324, 1.7976931348623157e308, 0.1 + 0.2]]).T
    s = ClientSummary("c0", 4, np.array([2, 2]), 3, {"psis": {"count": np.zeros(2), "sum": np.hstack([vals, vals])}})
    back = parse_summary(serialize_summary(s))
    assert np.array_equal(back.sections["psis"]["sum"], s.sections["psis"]["sum"])


def test_version_mismatch(rng):
    lines = _bytes(rng).split(b"\n")
    head = json.loads(lines[0])
    head["protocol_version"] = 99
    lines[0] = json.dumps(head).encode()
    with pytest.raises(VersionError, match="99"):
        parse_summary(b"\n".join(lines))


def test_truncation_is_detected(rng):
    data = _bytes(rng)
    with pytest.raises(FrameError):
        parse_summary(data[:-1])
    dropped = b"\n".join(data.split(b"\n")[:-2]) + b"\n"
    with pytest.raises(FrameError, match="block records"):
        parse_summary(dropped)
    with pytest.raises(FrameError):
        parse_summary(b"garbage\n")


def test_shape_errors(rng):
    lines = _bytes(rng).split(b"\n")
    head = json.loads(lines[0])
    head["category_counts"] = head["category_counts"][:-1]
    with pytest.raises(ShapeError):
        parse_summary(b"\n".join([json.dumps(head).encode(), *lines[1:]]))
    block = json.loads(lines[1])
    block["data"]["first_order"]["u_hat"] = block["data"]["first_order"]["u_hat"][:-1]
    with pytest.raises(ShapeError):
        parse_summary(b"\n".join([lines[0], json.dumps(block).encode(), *lines[2:]]))


def test_blocks_split_features(rng):
    data = _bytes(rng, p=10, width=4)
    assert len(data.strip().split(b"\n")) == 1 + 3


def test_payload_is_linear_in_r_times_p():
    per_cell = payload_scaling()
    # about one 17-digit number per (feature, category); independent of n
    assert max(per_cell) <= 2 * min(per_cell)
    assert max(per_cell) <= 2 * 24


def test_no_array_has_length_n():
    assert privacy_scan() == []
