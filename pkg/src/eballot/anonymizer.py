"""Anonymizing relay between voters and the vote server.

An application-layer forwarder: it reads each request, drops the
client-identifying headers, and re-issues the request from its own socket,
so the upstream only ever observes the relay's address. Deliberately, this
module creates no logger and writes nothing anywhere; the client address in
the ASGI scope is never read.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import httpx

from .errors import FormatError

DEFAULT_STRIP_HEADERS = (
    "user-agent",
    "x-forwarded-for",
    "x-forwarded-host",
    "x-forwarded-proto",
    "x-forwarded-port",
    "x-forwarded-server",
    "forwarded",
    "via",
    "x-real-ip",
    "x-client-ip",
    "true-client-ip",
)

# Hop-by-hop fields; the relay speaks its own framing on each side.
_SKIP_RESPONSE_HEADERS = {
    "content-length",
    "content-encoding",
    "transfer-encoding",
    "connection",
    "keep-alive",
    "upgrade",
    "proxy-authenticate",
    "te",
    "trailers",
}


@dataclass
class RelayConfig:
    upstream_base_url: str
    listen_host: str = "127.0.0.1"
    listen_port: int = 8442
    strip_headers: tuple[str, ...] = field(default=DEFAULT_STRIP_HEADERS)

    def __post_init__(self):
        self.strip_headers = tuple(h.lower() for h in self.strip_headers)
        if not self.upstream_base_url.startswith(("http://", "https://")):
            raise FormatError("upstream_base_url must be an http(s) URL")

    @classmethod
    def from_file(cls, path: Path) -> "RelayConfig":
        data = json.loads(Path(path).read_text())
        return cls(
            upstream_base_url=data["upstream_base_url"],
            listen_host=data.get("listen_host", "127.0.0.1"),
            listen_port=int(data.get("listen_port", 8442)),
            strip_headers=tuple(data.get("strip_headers", DEFAULT_STRIP_HEADERS)),
        )

    def save(self, path: Path) -> None:
        Path(path).write_text(
            json.dumps(
                {
                    "upstream_base_url": self.upstream_base_url,
                    "listen_host": self.listen_host,
                    "listen_port": self.listen_port,
                    "strip_headers": list(self.strip_headers),
                },
                indent=2,
            )
            + "\n"
        )


class AnonymizingRelay:
    """ASGI application forwarding every request to the configured upstream."""

    def __init__(self, config: RelayConfig, client: httpx.AsyncClient | None = None):
        self.config = config
        self._client = self._scrub_defaults(client) if client is not None else None
        self._owns_client = client is None
        self._strip = set(config.strip_headers) | {"host"}

    def _scrub_defaults(self, client: httpx.AsyncClient) -> httpx.AsyncClient:
        # The client library's own defaults (its user-agent, for one) must not
        # reintroduce headers the relay just stripped.
        for name in self.config.strip_headers:
            client.headers.pop(name, None)
        return client

    def _ensure_client(self) -> httpx.AsyncClient:
        if self._client is None:
            self._client = self._scrub_defaults(httpx.AsyncClient(timeout=30.0))
        return self._client

    async def aclose(self) -> None:
        if self._client is not None and self._owns_client:
            await self._client.aclose()
            self._client = None

    async def __call__(self, scope, receive, send) -> None:
        if scope["type"] == "lifespan":
            await self._lifespan(receive, send)
            return
        if scope["type"] != "http":
            return
        body = bytearray()
        while True:
            message = await receive()
            if message["type"] == "http.disconnect":
                return
            body.extend(message.get("body", b""))
            if not message.get("more_body", False):
                break
        headers = [
            (k.decode("latin-1"), v.decode("latin-1"))
            for k, v in scope.get("headers", [])
            if k.decode("latin-1").lower() not in self._strip
        ]
        path = scope.get("raw_path", scope["path"].encode("ascii")).decode("latin-1")
        url = self.config.upstream_base_url.rstrip("/") + path
        query = scope.get("query_string", b"")
        if query:
            url += "?" + query.decode("latin-1")
        try:
            upstream = await self._ensure_client().request(
                scope["method"], url, headers=headers, content=bytes(body)
            )
        except httpx.HTTPError:
            payload = json.dumps({"error": "upstream_unreachable"}).encode("utf-8")
            await send(
                {
                    "type": "http.response.start",
                    "status": 502,
                    "headers": [
                        (b"content-type", b"application/json"),
                        (b"content-length", str(len(payload)).encode("ascii")),
                    ],
                }
            )
            await send({"type": "http.response.body", "body": payload})
            return
        content = upstream.content
        out_headers = [
            (k.encode("latin-1"), v.encode("latin-1"))
            for k, v in upstream.headers.items()
            if k.lower() not in _SKIP_RESPONSE_HEADERS
        ]
        out_headers.append((b"content-length", str(len(content)).encode("ascii")))
        await send(
            {
                "type": "http.response.start",
                "status": upstream.status_code,
                "headers": out_headers,
            }
        )
        await send({"type": "http.response.body", "body": content})

    async def _lifespan(self, receive, send) -> None:
        while True:
            message = await receive()
            if message["type"] == "lifespan.startup":
                await send({"type": "lifespan.startup.complete"})
            elif message["type"] == "lifespan.shutdown":
                await self.aclose()
                await send({"type": "lifespan.shutdown.complete"})
                return
