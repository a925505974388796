"""Request and response models of the aggregation service."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class Health(BaseModel):
    status: str = "ok"
    protocol_version: int


class UploadReceipt(BaseModel):
    round_id: str
    client_id: str
    received_clients: int
    payload_bytes: int


class RoundStatus(BaseModel):
    round_id: str
    clients: list[str]
    p: Optional[int] = None
    R: Optional[int] = None
    sections: list[str] = Field(default_factory=list)


class AggregateRequest(BaseModel):
    methods: list[str] = Field(min_length=1)
    expected_clients: Optional[int] = Field(None, ge=1)


class MethodUtilities(BaseModel):
    method: str
    values: list[str]  # 17-significant-digit decimal strings
    time_agg_s: float


class AggregateResponse(BaseModel):
    round_id: str
    clients: list[str]
    results: list[MethodUtilities]


class ValidateResponse(BaseModel):
    ok: bool
    errors: list[str] = Field(default_factory=list)
