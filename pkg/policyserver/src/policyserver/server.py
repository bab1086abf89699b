"""The HTTP service: GET /health and POST /decide, protocol version "1"."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from . import PROTOCOL_VERSION, backends
from .validation import RequestError, validate_request

log = logging.getLogger(__name__)


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8700
    backend: str = "stub_constant"  # stub_constant | stub_greedy | external_model
    k: int = 64
    constant_skill: int = 0
    codebook_path: str | None = None
    forbidden: tuple[str, ...] = backends.DEFAULT_FORBIDDEN
    lam_forbidden: float = 10.0
    lam_close: float = 5.0
    model_hook: str | None = None
    timeout: float = 30.0  # per-request budget for the backend
    extra: dict = field(default_factory=dict)


def build_backend(config: ServerConfig):
    if config.backend == "stub_constant":
        return backends.stub_constant(config.constant_skill)
    if config.backend == "stub_greedy":
        if not config.codebook_path:
            raise ValueError("stub_greedy needs a codebook path")
        return backends.stub_greedy(
            config.codebook_path,
            k=config.k,
            forbidden=config.forbidden,
            lam_forbidden=config.lam_forbidden,
            lam_close=config.lam_close,
        )
    if config.backend == "external_model":
        if not config.model_hook:
            raise ValueError("external_model needs a model hook spec")
        return backends.external_model(config.model_hook)
    raise ValueError(f"unknown backend {config.backend!r}")


class PolicyHandler(BaseHTTPRequestHandler):
    config: ServerConfig
    backend = None

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload, sort_keys=True).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/health":
            self._send_json(200, {"version": PROTOCOL_VERSION, "backend": self.config.backend, "k": self.config.k})
        else:
            self._send_json(404, {"error": f"unknown path {self.path}"})

    def do_POST(self):
        if self.path != "/decide":
            self._send_json(404, {"error": f"unknown path {self.path}"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            raw = self.rfile.read(length)
            payload = json.loads(raw.decode("utf-8"))
        except (ValueError, UnicodeDecodeError) as exc:
            self._send_json(400, {"error": f"body: not valid JSON ({exc})"})
            return
        try:
            agents = validate_request(payload, expected_k=self.config.k)
        except RequestError as exc:
            self._send_json(400, {"error": str(exc), "field": exc.path})
            return
        observations = [agent["observation"] for agent in agents]
        try:
            decisions = type(self).backend(observations, self.config.k)
            decisions = backends.validate_decisions(decisions, observations, self.config.k)
        except Exception as exc:  # backend contract breach -> 500, client falls back
            log.exception("backend failure")
            self._send_json(500, {"error": f"backend failure: {exc}"})
            return
        response = {
            "version": PROTOCOL_VERSION,
            "decisions": [
                {"agent_id": agent["agent_id"], **decision}
                for agent, decision in zip(agents, decisions)
            ],
        }
        self._send_json(200, response)

    def log_message(self, fmt, *args):
        log.debug("%s - %s", self.address_string(), fmt % args)


def serve(config: ServerConfig) -> ThreadingHTTPServer:
    """Bind and return the server; call serve_forever() to run it."""
    backend = build_backend(config)
    handler = type("ConfiguredPolicyHandler", (PolicyHandler,), {"config": config, "backend": staticmethod(backend)})
    server = ThreadingHTTPServer((config.host, config.port), handler)
    return server
