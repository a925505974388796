"""HTTP aggregation server.

Clients POST their NDJSON summary for a round; once every expected client
has arrived, a POST to ``/rounds/{id}/aggregate`` runs the fold in client-id
order and returns the utilities of each requested method.
"""

from __future__ import annotations

import threading
import time

from fastapi import Body, FastAPI, HTTPException, Request

from ..aggregation import ClientSummary
from ..core import DataError, client_sort_key
from ..methods import parse_method, utilities
from ..runner.config import ConfigError, parse_config
from ..runner.wire import PROTOCOL_VERSION, VersionError, WireError, parse_summary
from .schemas import (
    AggregateRequest,
    AggregateResponse,
    Health,
    MethodUtilities,
    RoundStatus,
    UploadReceipt,
    ValidateResponse,
)


class RoundStore:
    """Summaries received so far, per round. Thread-safe."""

    def __init__(self):
        self._lock = threading.Lock()
        self._rounds: dict[str, dict[str, ClientSummary]] = {}

    def add(self, round_id: str, summary: ClientSummary) -> int:
        with self._lock:
            clients = self._rounds.setdefault(round_id, {})
            if summary.client_id in clients:
                raise KeyError(summary.client_id)
            if clients:
                ref = next(iter(clients.values()))
                if (ref.p, ref.R) != (summary.p, summary.R):
                    raise DataError(
                        f"client {summary.client_id} has (p={summary.p}, R={summary.R}); "
                        f"round {round_id} uses (p={ref.p}, R={ref.R})"
                    )
            clients[summary.client_id] = summary
            return len(clients)

    def get(self, round_id: str) -> list[ClientSummary]:
        with self._lock:
            if round_id not in self._rounds:
                raise KeyError(round_id)
            items = list(self._rounds[round_id].values())
        return sorted(items, key=lambda s: client_sort_key(s.client_id))

    def drop(self, round_id: str) -> bool:
        with self._lock:
            return self._rounds.pop(round_id, None) is not None


def create_app() -> FastAPI:
    app = FastAPI(title="lrffs aggregation server", version=str(PROTOCOL_VERSION))
    store = RoundStore()
    app.state.store = store

    @app.get("/health", response_model=Health)
    def health():
        return Health(protocol_version=PROTOCOL_VERSION)

    @app.post("/rounds/{round_id}/summaries", response_model=UploadReceipt)
    async def upload(round_id: str, request: Request):
        body = await request.body()
        try:
            summary = parse_summary(body)
        except VersionError as exc:
            raise HTTPException(status_code=426, detail=str(exc))
        except WireError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        try:
            count = store.add(round_id, summary)
        except KeyError:
            raise HTTPException(
                status_code=409, detail=f"client {summary.client_id} already uploaded to {round_id}"
            )
        except DataError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return UploadReceipt(
            round_id=round_id,
            client_id=summary.client_id,
            received_clients=count,
            payload_bytes=len(body),
        )

    @app.get("/rounds/{round_id}", response_model=RoundStatus)
    def status(round_id: str):
        try:
            items = store.get(round_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown round {round_id}")
        first = items[0] if items else None
        return RoundStatus(
            round_id=round_id,
            clients=[s.client_id for s in items],
            p=first.p if first else None,
            R=first.R if first else None,
            sections=sorted(first.sections) if first else [],
        )

    @app.post("/rounds/{round_id}/aggregate", response_model=AggregateResponse)
    def aggregate(round_id: str, req: AggregateRequest):
        try:
            items = store.get(round_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown round {round_id}")
        if req.expected_clients is not None and len(items) < req.expected_clients:
            raise HTTPException(
                status_code=409,
                detail=f"round {round_id} has {len(items)} of {req.expected_clients} clients",
            )
        results = []
        for text in req.methods:
            try:
                spec = parse_method(text)
                t0 = time.perf_counter()
                vec = utilities(items, spec)
                elapsed = time.perf_counter() - t0
            except DataError as exc:
                raise HTTPException(status_code=422, detail=f"{text}: {exc}")
            results.append(
                MethodUtilities(
                    method=spec.label,
                    values=["%.17g" % v for v in vec.values.tolist()],
                    time_agg_s=elapsed,
                )
            )
        return AggregateResponse(
            round_id=round_id, clients=[s.client_id for s in items], results=results
        )

    @app.delete("/rounds/{round_id}")
    def drop(round_id: str):
        if not store.drop(round_id):
            raise HTTPException(status_code=404, detail=f"unknown round {round_id}")
        return {"deleted": round_id}

    @app.post("/validate", response_model=ValidateResponse)
    def validate(config: dict = Body(...)):
        try:
            parse_config(config)
        except ConfigError as exc:
            return ValidateResponse(ok=False, errors=str(exc).splitlines()[1:] or [str(exc)])
        return ValidateResponse(ok=True)

    return app
