"""ThingSpeak-style upload client and an in-process mock ingestion server.

Wire format mirrors the public update API::

    GET /update?api_key=<write key>&field1=<text>   -> "<entry_id>" ("0" on rejection)
    GET /channels/<id>/feed                          -> JSON feed
    GET /channels/<id>/feeds.json                    -> same

The real service limits free accounts to one update per 15 s; the mock does
not rate-limit.
"""

from __future__ import annotations

import json
import logging
import os
import re
import secrets
import string
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlsplit

import requests

from .errors import TransportError

log = logging.getLogger(__name__)

ENV_ENDPOINT = "TELEMETRY_ENDPOINT"
ENV_WRITE_KEY = "TELEMETRY_WRITE_KEY"
MAX_FIELD_CHARS = 255
_KEY_RE = re.compile(r"^[A-Za-z0-9]{16}$")
_FIELD_RE = re.compile(r"^field([1-8])$")
_FEED_RE = re.compile(r"^/channels/([^/]+)/(feed|feeds\.json)$")


def new_write_key() -> str:
    alphabet = string.ascii_uppercase + string.digits
    return "".join(secrets.choice(alphabet) for _ in range(16))


@dataclass
class TelemetryChannel:
    channel_id: int
    write_key: str
    fields: dict[int, str] = field(default_factory=dict)
    feed: list[dict] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self):
        if not _KEY_RE.match(self.write_key):
            raise ValueError("write key must be 16 alphanumeric characters")

    def update(self, key: str | None, values: dict[int, str], now: float) -> int:
        if key != self.write_key:
            return 0
        with self.lock:
            entry_id = len(self.feed) + 1
            self.fields.update(values)
            entry = {"entry_id": entry_id, "created_at": _iso(now)}
            entry.update({f"field{i}": v for i, v in sorted(values.items())})
            self.feed.append(entry)
            return entry_id


def _iso(ts: float) -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(ts))


class MockThingSpeak:
    """Channel store plus the request handler logic, independent of any socket."""

    def __init__(self, clock=time.time):
        self.channels: dict[int, TelemetryChannel] = {}
        self._clock = clock
        self._lock = threading.Lock()

    def create_channel(self, write_key: str | None = None) -> TelemetryChannel:
        with self._lock:
            channel = TelemetryChannel(len(self.channels) + 1, write_key or new_write_key())
            self.channels[channel.channel_id] = channel
            return channel

    def handle(self, method: str, target: str) -> tuple[int, str, str]:
        """Return (status, content type, body) for one request."""
        if method != "GET":
            return 405, "text/plain", "method not allowed"
        parts = urlsplit(target)
        try:
            query = parse_qs(parts.query, keep_blank_values=True, strict_parsing=bool(parts.query))
        except ValueError:
            return 400, "text/plain", "malformed query"

        if parts.path == "/update":
            return self._update(query)
        m = _FEED_RE.match(parts.path)
        if m:
            if not m.group(1).isdigit():
                return 400, "text/plain", "channel id must be numeric"
            channel = self.channels.get(int(m.group(1)))
            if channel is None:
                return 404, "text/plain", "no such channel"
            with channel.lock:
                body = {"channel": {"id": channel.channel_id, "last_entry_id": len(channel.feed)},
                        "feeds": list(channel.feed)}
            return 200, "application/json", json.dumps(body)
        return 404, "text/plain", "not found"

    def _update(self, query: dict[str, list[str]]) -> tuple[int, str, str]:
        values = {}
        for name, vals in query.items():
            if name == "api_key":
                continue
            m = _FIELD_RE.match(name)
            if not m or len(vals) != 1:
                return 400, "text/plain", f"bad parameter {name!r}"
            values[int(m.group(1))] = vals[0]
        keys = query.get("api_key")
        if not keys:
            return 200, "text/plain", "0"
        channel = next((c for c in list(self.channels.values()) if c.write_key == keys[0]), None)
        if channel is None or not values:
            return 200, "text/plain", "0"
        return 200, "text/plain", str(channel.update(keys[0], values, self._clock()))


class _Handler(BaseHTTPRequestHandler):
    store: MockThingSpeak

    def do_GET(self):
        status, ctype, body = self.store.handle("GET", self.path)
        data = body.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, fmt, *args):
        log.debug("mock telemetry: " + fmt, *args)


class MockServer:
    """Serve a MockThingSpeak over HTTP on a background thread."""

    def __init__(self, store: MockThingSpeak | None = None, host: str = "127.0.0.1", port: int = 0):
        self.store = store or MockThingSpeak()
        handler = type("BoundHandler", (_Handler,), {"store": self.store})
        self._httpd = ThreadingHTTPServer((host, port), handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def __enter__(self) -> MockServer:
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._httpd.shutdown()
        self._httpd.server_close()
        self._thread.join()


def upload(endpoint: str, write_key: str, field1: str, timeout: float = 5.0) -> int:
    """Send one update. Returns the new entry id, or 0 if the service refused it."""
    if len(field1) > MAX_FIELD_CHARS:
        raise ValueError(f"field1 is {len(field1)} chars, limit {MAX_FIELD_CHARS}")
    try:
        resp = requests.get(
            endpoint.rstrip("/") + "/update",
            params={"api_key": write_key, "field1": field1},
            timeout=timeout,
        )
    except requests.RequestException as exc:
        raise TransportError(f"upload to {endpoint} failed: {exc}") from exc
    if resp.status_code >= 500:
        raise TransportError(f"upload to {endpoint} failed: HTTP {resp.status_code}")
    if resp.status_code != 200:
        return 0
    try:
        return int(resp.text.strip())
    except ValueError:
        raise TransportError(f"unexpected update response {resp.text[:40]!r}") from None


def fetch_feed(endpoint: str, channel_id: int, timeout: float = 5.0) -> list[dict]:
    try:
        resp = requests.get(f"{endpoint.rstrip('/')}/channels/{channel_id}/feeds.json", timeout=timeout)
        resp.raise_for_status()
    except requests.RequestException as exc:
        raise TransportError(f"feed fetch failed: {exc}") from exc
    return resp.json()["feeds"]


def settings_from_env() -> tuple[str | None, str | None]:
    return os.environ.get(ENV_ENDPOINT), os.environ.get(ENV_WRITE_KEY)
