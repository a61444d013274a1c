"""Thin client of the simulation service.

By default requests are dispatched in process over an ASGI transport, so
the CLI works without a running server; pass a base URL to talk to a
remote instance instead.  Either way the client only moves JSON around.
"""
from __future__ import annotations

import asyncio
from typing import Any

import httpx


class ServiceError(RuntimeError):
    """The service rejected a request (configuration or usage problem)."""


class ServiceClient:
    def __init__(self, base_url: str | None = None, timeout: float | None = None):
        self.base_url = base_url
        self.timeout = timeout

    def _make_client(self) -> httpx.AsyncClient:
        if self.base_url:
            return httpx.AsyncClient(base_url=self.base_url, timeout=self.timeout)
        from .service.app import app

        return httpx.AsyncClient(
            transport=httpx.ASGITransport(app=app),
            base_url="http://romram.local",
            timeout=self.timeout,
        )

    async def _post_async(self, path: str, payload: dict) -> dict:
        async with self._make_client() as client:
            response = await client.post(path, json=payload)
        if response.status_code >= 400:
            try:
                detail = response.json().get("detail", response.text)
            except ValueError:
                detail = response.text
            raise ServiceError(f"{path}: {detail}")
        return response.json()

    def post(self, path: str, payload: dict) -> dict:
        return asyncio.run(self._post_async(path, payload))

    async def _get_async(self, path: str) -> dict:
        async with self._make_client() as client:
            response = await client.get(path)
        if response.status_code >= 400:
            raise ServiceError(f"{path}: HTTP {response.status_code}")
        return response.json()

    def get(self, path: str) -> dict:
        return asyncio.run(self._get_async(path))

    # -- commands ------------------------------------------------------------

    def simulate(self, config: dict, overrides: dict[str, str], **kwargs: Any) -> dict:
        return self.post("/simulate", {"config": config, "overrides": overrides, **kwargs})

    def mc(self, config: dict, overrides: dict[str, str], **kwargs: Any) -> dict:
        return self.post("/mc", {"config": config, "overrides": overrides, **kwargs})

    def calibrate(self, config: dict, overrides: dict[str, str], **kwargs: Any) -> dict:
        return self.post("/calibrate", {"config": config, "overrides": overrides, **kwargs})

    def table1(self, config: dict, overrides: dict[str, str], **kwargs: Any) -> dict:
        return self.post("/table1", {"config": config, "overrides": overrides, **kwargs})

    def sweep(self, config: dict, overrides: dict[str, str], **kwargs: Any) -> dict:
        return self.post("/sweep", {"config": config, "overrides": overrides, **kwargs})
