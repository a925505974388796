"""Moving client summaries to the aggregator.

Both transports take the summaries the clients produced and return the
server's utilities. The in-process transport calls the aggregation code
directly; the socket transport serializes each summary, uploads it over
HTTP and asks the server to aggregate.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import Sequence

import httpx
import numpy as np

from ..aggregation import ClientSummary
from ..core import DataError, UtilityVector
from ..methods import MethodSpec, utilities
from .wire import serialize_summary


class TransportError(DataError):
    pass


@dataclass
class RoundResult:
    utilities: dict[str, UtilityVector]
    time_agg_s: dict[str, float]
    payload_bytes: dict[str, int] = field(default_factory=dict)


class InProcessTransport:
    kind = "in_process"

    def run_round(
        self, round_id: str, summaries: Sequence[ClientSummary], methods: Sequence[MethodSpec]
    ) -> RoundResult:
        utils, times = {}, {}
        for spec in methods:
            t0 = time.perf_counter()
            try:
                utils[spec.label] = utilities(summaries, spec)
            except DataError as exc:
                raise TransportError(f"{spec.label}: {exc}") from exc
            times[spec.label] = time.perf_counter() - t0
        return RoundResult(utils, times)

    def close(self):
        pass


class EmbeddedServer:
    """The aggregation app served by uvicorn on a background thread."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        import uvicorn

        from ..service.app import create_app

        config = uvicorn.Config(create_app(), host=host, port=port, log_level="warning")
        self._server = uvicorn.Server(config)
        self._thread = threading.Thread(target=self._server.run, daemon=True)
        self._thread.start()
        deadline = time.monotonic() + 20
        while not self._server.started:
            if not self._thread.is_alive() or time.monotonic() > deadline:
                raise TransportError("embedded aggregation server failed to start")
            time.sleep(0.01)
        sock = self._server.servers[0].sockets[0]
        self.host, self.port = sock.getsockname()[:2]

    @property
    def address(self) -> str:
        return f"{self.host}:{self.port}"

    def stop(self):
        self._server.should_exit = True
        self._thread.join(timeout=10)


def _base_url(address: str) -> str:
    return address if address.startswith("http") else f"http://{address}"


class SocketTransport:
    kind = "socket"

    def __init__(self, address: str = "auto", block_width: int = 512, timeout: float = 120.0):
        self._embedded = EmbeddedServer() if address == "auto" else None
        addr = self._embedded.address if self._embedded else address
        self.block_width = block_width
        self.client = httpx.Client(base_url=_base_url(addr), timeout=timeout)

    def upload(self, round_id: str, summary: ClientSummary) -> int:
        body = serialize_summary(summary, self.block_width)
        resp = self.client.post(
            f"/rounds/{round_id}/summaries",
            content=body,
            headers={"content-type": "application/x-ndjson"},
        )
        _check(resp)
        return len(body)

    def aggregate(self, round_id: str, methods: Sequence[str], expected_clients: int | None = None):
        resp = self.client.post(
            f"/rounds/{round_id}/aggregate",
            json={"methods": list(methods), "expected_clients": expected_clients},
        )
        _check(resp)
        return resp.json()

    def run_round(
        self, round_id: str, summaries: Sequence[ClientSummary], methods: Sequence[MethodSpec]
    ) -> RoundResult:
        sizes = {s.client_id: self.upload(round_id, s) for s in summaries}
        try:
            body = self.aggregate(round_id, [m.label for m in methods], len(summaries))
        finally:
            self.client.delete(f"/rounds/{round_id}")
        utils, times = {}, {}
        for item in body["results"]:
            vals = np.array([float(v) for v in item["values"]], dtype=np.float64)
            utils[item["method"]] = UtilityVector(vals, item["method"])
            times[item["method"]] = float(item["time_agg_s"])
        return RoundResult(utils, times, sizes)

    def close(self):
        self.client.close()
        if self._embedded:
            self._embedded.stop()


def _check(resp: httpx.Response) -> None:
    if resp.status_code >= 400:
        try:
            detail = resp.json().get("detail")
        except ValueError:
            detail = resp.text
        raise TransportError(f"server replied {resp.status_code}: {detail}")


def make_transport(kind: str, address: str = "auto"):
    if kind == "in_process":
        return InProcessTransport()
    if kind == "socket":
        return SocketTransport(address)
    raise TransportError(f"unknown transport {kind!r}")
