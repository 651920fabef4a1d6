"""Request routing between nodes.

:class:`VirtualTransport` delivers requests in-process and charges link time
from :class:`~cdnemu.netsim.Network`.  :class:`WallTransport` speaks real HTTP
to listeners started with :func:`serve_node`, sleeping for the emulated link
delay on each leg.  Both expose the same methods:

``request(src, url)``
    clock activity returning a :class:`~cdnemu.http.Response`; raises
    :class:`~cdnemu.errors.TransportError` when the host is down or unknown.
``call(src, url)``
    immediate control-plane fetch (metrics scrapes), ``None`` on failure.
``echo_rtt(src, dst)`` / ``probe_many(src, dsts)``
    application-level echo round trips in milliseconds, ``None`` on failure.
"""

from __future__ import annotations

import http.client
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Protocol

from .clock import VirtualClock, WallClock
from .errors import TransportError
from .http import REASONS, Response, split_url
from .netsim import Network
from .topology import Topology

logger = logging.getLogger(__name__)

REQUEST_BYTES = 128
ECHO_BYTES = 64


class Handler(Protocol):
    def handle(self, path: str) -> Any: ...


def run_blocking(gen) -> Any:
    """Drive a clock activity on the calling thread with real sleeps."""
    try:
        delay = next(gen)
        while True:
            if delay:
                time.sleep(float(delay))
            delay = gen.send(None)
    except StopIteration as stop:
        return stop.value


def drain(gen) -> Any:
    """Run a clock activity to completion ignoring its sleeps."""
    try:
        while True:
            next(gen)
    except StopIteration as stop:
        return stop.value


class _BaseTransport:
    def __init__(self, clock, network: Network | None, topology: Topology | None,
                 timeout_s: float):
        self.clock = clock
        self.network = network
        self.topology = topology
        self.timeout_s = timeout_s
        self.down: set[str] = set()

    def mark_down(self, node: str) -> None:
        self.down.add(node)

    def mark_up(self, node: str) -> None:
        self.down.discard(node)

    def link_for(self, src: str | None, dst: str | None) -> str | None:
        if self.topology is None or self.network is None or src is None or dst is None:
            return None
        return self.topology.link_between(src, dst)

    def _leg_s(self, link: str | None, nbytes: int, at_ms: float) -> float:
        if link is None:
            return 0.0
        return (self.network.transmit(link, nbytes, at_ms) - at_ms) / 1000.0


class VirtualTransport(_BaseTransport):
    def __init__(self, clock: VirtualClock, network: Network | None = None,
                 topology: Topology | None = None, timeout_s: float = 2.0):
        super().__init__(clock, network, topology, timeout_s)
        self.handlers: dict[str, Handler] = {}

    def register(self, node: str, handler: Handler) -> None:
        self.handlers[node] = handler

    def base_url(self, node: str) -> str:
        return f"http://{node}/"

    def node_for(self, host: str) -> str | None:
        return host if host in self.handlers else None

    def request(self, src: str | None, url: str):
        host, path = split_url(url)
        node = self.node_for(host)
        if node is None or node in self.down:
            yield self.timeout_s
            raise TransportError(f"{url}: host unreachable")
        link = self.link_for(src, node)
        yield self._leg_s(link, REQUEST_BYTES, self.clock.now_ms)
        resp = yield from self.handlers[node].handle(path)
        yield self._leg_s(link, len(resp.body), self.clock.now_ms)
        resp.url = url
        return resp

    def call(self, src: str | None, url: str) -> Response | None:
        host, path = split_url(url)
        node = self.node_for(host)
        if node is None or node in self.down:
            return None
        resp = drain(self.handlers[node].handle(path))
        resp.url = url
        return resp

    def echo_rtt(self, src: str, dst: str) -> float | None:
        if dst in self.down or dst not in self.handlers:
            return None
        link = self.link_for(src, dst)
        t0 = self.clock.now_ms
        if link is None:
            return 0.0
        there = self.network.transmit(link, ECHO_BYTES, t0)
        back = self.network.transmit(link, ECHO_BYTES, there)
        return back - t0

    def probe_many(self, src: str, dsts: list[str]) -> dict[str, float | None]:
        return {d: self.echo_rtt(src, d) for d in dsts}

    def probe_wait_s(self, rtts: list[float | None]) -> float:
        """Time a concurrent probe round occupies: slowest reply or the timeout."""
        waits = [self.timeout_s if r is None else r / 1000.0 for r in rtts]
        return max(waits, default=0.0)


class WallTransport(_BaseTransport):
    def __init__(self, clock: WallClock, network: Network | None = None,
                 topology: Topology | None = None, addresses: dict[str, str] | None = None,
                 timeout_s: float = 2.0):
        super().__init__(clock, network, topology, timeout_s)
        self.addresses: dict[str, str] = dict(addresses or {})
        self._hosts = {addr: node for node, addr in self.addresses.items()}

    def register(self, node: str, address: str) -> None:
        self.addresses[node] = address
        self._hosts[address] = node

    def base_url(self, node: str) -> str:
        return f"http://{self.addresses[node]}/"

    def node_for(self, host: str) -> str | None:
        return self._hosts.get(host)

    def _get(self, host: str, path: str) -> Response:
        hostname, _, port = host.partition(":")
        conn = http.client.HTTPConnection(hostname, int(port or 80), timeout=self.timeout_s)
        try:
            conn.request("GET", path)
            raw = conn.getresponse()
            body = raw.read()
            return Response(raw.status, body, {k: v for k, v in raw.getheaders()})
        finally:
            conn.close()

    def request(self, src: str | None, url: str):
        host, path = split_url(url)
        node = self.node_for(host)
        if node is not None and node in self.down:
            yield self.timeout_s
            raise TransportError(f"{url}: host unreachable")
        link = self.link_for(src, node)
        yield self._leg_s(link, REQUEST_BYTES, self.clock.now_ms)
        try:
            resp = self._get(host, path)
        except OSError as exc:
            raise TransportError(f"{url}: {exc}") from exc
        yield self._leg_s(link, len(resp.body), self.clock.now_ms)
        resp.url = url
        return resp

    def call(self, src: str | None, url: str) -> Response | None:
        host, path = split_url(url)
        node = self.node_for(host)
        if node is not None and node in self.down:
            return None
        try:
            resp = self._get(host, path)
        except OSError:
            return None
        resp.url = url
        return resp

    def echo_rtt(self, src: str, dst: str) -> float | None:
        if dst in self.down or dst not in self.addresses:
            return None
        try:
            start = time.monotonic()
            run_blocking(self.request(src, self.base_url(dst) + "echo"))
            return (time.monotonic() - start) * 1000.0
        except TransportError:
            return None

    def probe_many(self, src: str, dsts: list[str]) -> dict[str, float | None]:
        if not dsts:
            return {}
        with ThreadPoolExecutor(max_workers=len(dsts)) as pool:
            rtts = list(pool.map(lambda d: self.echo_rtt(src, d), dsts))
        return dict(zip(dsts, rtts))

    def probe_wait_s(self, rtts: list[float | None]) -> float:
        return 0.0  # probes already took real time


class _NodeRequestHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def do_GET(self):  # noqa: N802 - http.server naming
        try:
            resp = run_blocking(self.server.node.handle(self.path))
        except Exception:
            logger.exception("handler for %s failed", self.path)
            resp = Response(503, b"internal error")
        self.send_response(resp.status, REASONS.get(resp.status))
        for key, value in resp.headers.items():
            self.send_header(key, value)
        self.send_header("Content-Length", str(len(resp.body)))
        self.end_headers()
        self.wfile.write(resp.body)

    def log_message(self, fmt, *args):
        logger.debug("%s %s", self.address_string(), fmt % args)


class NodeServer:
    """Real HTTP listener in front of a node handler."""

    def __init__(self, node: Handler, host: str = "127.0.0.1", port: int = 0):
        self.httpd = ThreadingHTTPServer((host, port), _NodeRequestHandler)
        self.httpd.daemon_threads = True
        self.httpd.node = node
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def address(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"{host}:{port}"

    def start(self) -> NodeServer:
        self._thread.start()
        return self

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()


def serve_node(node: Handler, host: str = "127.0.0.1", port: int = 0) -> NodeServer:
    return NodeServer(node, host, port).start()
