"""Minimal JSON request API over the shared pipeline.

POST /generate  {"prompt": str, "quality": bool?}
GET  /metrics
POST /maintain
"""
from __future__ import annotations

import json
import logging
import os
import signal
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .dispatcher import Mode
from .errors import BackendFailure, BindError, EmptyInput, EmptyPrompt, SemcacheError
from .pipeline import Pipeline

log = logging.getLogger(__name__)

ADDRESS_ENV = "SEMCACHE_ADDRESS"
DEFAULT_ADDRESS = "127.0.0.1:8080"
MAX_BODY = 1 << 20


def parse_address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"address must look like host:port, got {text!r}")
    return host or "0.0.0.0", int(port)


@dataclass
class Metrics:
    requests: int = 0
    errors: int = 0
    latency_sum: float = 0.0
    modes: dict[str, int] = field(default_factory=lambda: {m.value: 0 for m in Mode})
    reasons: dict[str, int] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def observe(self, outcome) -> None:
        with self._lock:
            self.requests += 1
            self.latency_sum += outcome.latency
            self.modes[outcome.mode.value] += 1
            self.reasons[outcome.reason.value] = self.reasons.get(outcome.reason.value, 0) + 1

    def failed(self) -> None:
        with self._lock:
            self.errors += 1

    def snapshot(self, pipeline: Pipeline) -> dict:
        with self._lock:
            hits = self.modes[Mode.RETURN_CACHED.value] + self.modes[Mode.IMAGE_TO_IMAGE.value]
            return {
                "requests": self.requests,
                "errors": self.errors,
                "modes": dict(self.modes),
                "reasons": dict(sorted(self.reasons.items())),
                "hit_rate": hits / self.requests if self.requests else 0.0,
                "mean_latency_s": self.latency_sum / self.requests if self.requests else 0.0,
                "entries": {n: len(s) for n, s in sorted(pipeline.shards.items())},
                "maintenance_runs": pipeline.maintainer.runs,
            }


class _RequestError(Exception):
    def __init__(self, status: int, kind: str, message: str):
        super().__init__(message)
        self.status, self.kind = status, kind


def _generate_args(body) -> tuple[str, bool]:
    if not isinstance(body, dict):
        raise _RequestError(400, "invalid_body", "body must be a JSON object")
    prompt = body.get("prompt")
    if not isinstance(prompt, str) or not prompt.strip():
        raise _RequestError(400, "invalid_prompt", "'prompt' must be a non-empty string")
    quality = body.get("quality", False)
    if not isinstance(quality, bool):
        raise _RequestError(400, "invalid_quality", "'quality' must be a boolean")
    unknown = set(body) - {"prompt", "quality"}
    if unknown:
        raise _RequestError(400, "unknown_field", f"unknown fields: {', '.join(sorted(unknown))}")
    return prompt, quality


def make_handler(pipeline: Pipeline, metrics: Metrics):
    class Handler(BaseHTTPRequestHandler):
        server_version = "semcache/0.1"
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            log.debug("%s " + fmt, self.address_string(), *args)

        def _send(self, status: int, doc: dict) -> None:
            data = json.dumps(doc, sort_keys=True).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def _error(self, status: int, kind: str, message: str) -> None:
            self._send(status, {"error": {"type": kind, "message": message}})

        def _body(self):
            try:
                length = int(self.headers.get("Content-Length", "0"))
            except ValueError:
                raise _RequestError(400, "invalid_length", "bad Content-Length") from None
            if length > MAX_BODY:
                raise _RequestError(413, "too_large", f"body exceeds {MAX_BODY} bytes")
            raw = self.rfile.read(length) if length else b""
            if not raw:
                return {}
            try:
                return json.loads(raw.decode("utf-8"))
            except (UnicodeDecodeError, ValueError):
                raise _RequestError(400, "invalid_json", "body is not valid JSON") from None

        def do_GET(self):
            if self.path == "/metrics":
                self._send(200, metrics.snapshot(pipeline))
            else:
                self._error(404, "not_found", f"no route for GET {self.path}")

        def do_POST(self):
            try:
                body = self._body()
                if self.path == "/generate":
                    prompt, quality = _generate_args(body)
                    try:
                        out = pipeline.handle(prompt, quality)
                    except (EmptyPrompt, EmptyInput) as exc:
                        raise _RequestError(400, "invalid_prompt", str(exc)) from None
                    metrics.observe(out)
                    self._send(200, {"mode": out.mode.value, "node": out.node, "score": out.score,
                                     "latency_s": out.latency, "payload_uri": out.payload_uri,
                                     "reason": out.reason.value})
                elif self.path == "/maintain":
                    report = pipeline.maintain()
                    self._send(200, {"evicted": len(report.evicted_ids)})
                else:
                    raise _RequestError(404, "not_found", f"no route for POST {self.path}")
            except _RequestError as exc:
                metrics.failed()
                self._error(exc.status, exc.kind, str(exc))
            except BackendFailure as exc:
                metrics.failed()
                self._error(502, "backend_failure", str(exc))
            except SemcacheError as exc:
                metrics.failed()
                self._error(500, type(exc).__name__, str(exc))

    return Handler


class Service:
    def __init__(self, pipeline: Pipeline, address: str | None = None):
        self.pipeline = pipeline
        self.metrics = Metrics()
        text = address or os.environ.get(ADDRESS_ENV, DEFAULT_ADDRESS)
        host, port = parse_address(text)
        try:
            self.httpd = ThreadingHTTPServer((host, port), make_handler(pipeline, self.metrics))
        except OSError as exc:
            raise BindError(f"cannot listen on {host}:{port}: {exc}") from exc
        self.httpd.daemon_threads = True

    @property
    def address(self) -> tuple[str, int]:
        return self.httpd.server_address[:2]

    def start(self) -> threading.Thread:
        t = threading.Thread(target=self.httpd.serve_forever, args=(0.05,), name="semcache-http", daemon=True)
        t.start()
        return t

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()

    def serve_until_signal(self) -> None:
        """Block until SIGINT or SIGTERM, then shut down cleanly."""
        done = threading.Event()

        def on_signal(signum, frame):
            log.info("signal %s received, shutting down", signum)
            done.set()

        previous = {s: signal.signal(s, on_signal) for s in (signal.SIGINT, signal.SIGTERM)}
        try:
            self.start()
            log.info("listening on %s:%d", *self.address)
            done.wait()
        finally:
            self.stop()
            for s, h in previous.items():
                signal.signal(s, h)
