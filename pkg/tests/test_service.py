import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from lrffs.methods import make_summary, parse_method
from lrffs.runner.transport import InProcessTransport, SocketTransport
from lrffs.runner.wire import serialize_summary
from lrffs.service.app import create_app

from conftest import random_federation
from suites import ALL_METHODS, ALL_SECTIONS


@pytest.fixture
def client():
    return TestClient(create_app())


def _summaries(seed=0, m=3, p=12, R=3):
    rng = np.random.default_rng(seed)
    shards = random_federation(rng, m, p, R, 8, 40)
    return [make_summary(s, ALL_SECTIONS)[0] for s in shards]


def test_health(client):
    assert client.get("/health").json() == {"status": "ok", "protocol_version": 1}


def test_upload_status_aggregate(client):
    sums = _summaries()
    for s in reversed(sums):
        r = client.post("/rounds/x/summaries", content=serialize_summary(s))
        assert r.status_code == 200
    st = client.get("/rounds/x").json()
    assert st["clients"] == ["c0", "c1", "c2"] and st["p"] == 12 and st["R"] == 3
    body = client.post("/rounds/x/aggregate", json={"methods": ["lrffs"], "expected_clients": 3}).json()
    direct = InProcessTransport().run_round("x", sums, [parse_method("lrffs")]).utilities["lrffs"].values
    assert np.array_equal(np.array([float(v) for v in body["results"][0]["values"]]), direct)
    assert client.delete("/rounds/x").status_code == 200
    assert client.get("/rounds/x").status_code == 404


def test_error_codes(client):
    s = _summaries(m=1)[0]
    data = serialize_summary(s)
    assert client.post("/rounds/e/summaries", content=data).status_code == 200
    assert client.post("/rounds/e/summaries", content=data).status_code == 409
    other = _summaries(seed=1, m=2, p=5)[1]
    assert client.post("/rounds/e/summaries", content=serialize_summary(other)).status_code == 422
    assert client.post("/rounds/e/summaries", content=data[:-5]).status_code == 400
    lines = data.split(b"\n")
    head = json.loads(lines[0])
    head["protocol_version"] = 2
    old = b"\n".join([json.dumps(head).encode(), *lines[1:]])
    assert client.post("/rounds/v/summaries", content=old).status_code == 426
    r = client.post("/rounds/e/aggregate", json={"methods": ["lrffs"], "expected_clients": 2})
    assert r.status_code == 409
    assert client.post("/rounds/e/aggregate", json={"methods": ["nope"]}).status_code == 422
    assert client.post("/rounds/e/aggregate", json={"methods": []}).status_code == 422
    assert client.post("/rounds/missing/aggregate", json={"methods": ["lrffs"]}).status_code == 404


def test_validate_endpoint(client):
    good = {"scenario": {"preset": "a", "p": 20}, "T": 1}
    assert client.post("/validate", json=good).json() == {"ok": True, "errors": []}
    bad = client.post("/validate", json={"scenario": {"preset": "zz"}, "T": -1}).json()
    assert not bad["ok"] and len(bad["errors"]) == 2


def test_transports_agree_bit_for_bit():
    sums = _summaries(seed=4, m=4, p=20)
    methods = [parse_method(m) for m in ALL_METHODS]
    local = InProcessTransport().run_round("r", sums, methods)
    sock = SocketTransport("auto", block_width=6)
    try:
        remote = sock.run_round("r", sums, methods)
    finally:
        sock.close()
    for spec in methods:
        a = local.utilities[spec.label].values
        b = remote.utilities[spec.label].values
        assert a.tobytes() == b.tobytes(), spec.label
    assert set(remote.payload_bytes) == {"c0", "c1", "c2", "c3"}
