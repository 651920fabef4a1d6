"""Minimal HTTP message types shared by the virtual and wall transports."""

from __future__ import annotations

from dataclasses import dataclass, field
from urllib.parse import urlsplit

REASONS = {
    200: "OK",
    302: "Found",
    400: "Bad Request",
    404: "Not Found",
    405: "Method Not Allowed",
    502: "Bad Gateway",
    503: "Service Unavailable",
}


@dataclass
class Response:
    status: int
    body: bytes = b""
    headers: dict[str, str] = field(default_factory=dict)
    url: str = ""

    @property
    def location(self) -> str | None:
        return self.headers.get("Location")

    @property
    def text(self) -> str:
        return self.body.decode("utf-8")


def split_url(url: str) -> tuple[str, str]:
    """Return ``(host[:port], path)`` with the query string kept on the path."""
    parts = urlsplit(url)
    path = parts.path or "/"
    if parts.query:
        path += "?" + parts.query
    return parts.netloc, path


def strip_query(path: str) -> str:
    return path.split("?", 1)[0].split("#", 1)[0]
