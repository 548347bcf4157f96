"""Shared test fixtures: scripted gateways for the bank/Scotia demo and a
scriptable local HTTP stub server."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from crat import fixtures
from crat.config import mock_script_from_dict
from crat.gateway import Gateway
from crat.pipeline import PipelineConfig
from crat.retrieval import LocalIndexSource, build_index


def register_demo_backends(gateway: Gateway) -> dict[str, str]:
    """Register the demo's scripted mock backends; returns the role map."""
    scripts = {
        "det": fixtures.detector_script(),
        "ext": fixtures.extractor_script(),
        "jdg": fixtures.judge_script(),
        "trn": fixtures.translator_script(),
        "con": fixtures.consis_script(),
    }
    for backend_id, script in scripts.items():
        rules, fallback = mock_script_from_dict(script)
        gateway.register_mock(backend_id, rules, fallback)
    return {"detector": "det", "extractor": "ext", "judge": "jdg",
            "translator": "trn", "consis": "con"}


def demo_pipeline_config(**overrides) -> PipelineConfig:
    defaults = dict(
        detector_backend="det",
        extractor_backend="ext",
        judge_backend="jdg",
        translator_backend="trn",
        sources=[LocalIndexSource(build_index(fixtures.DEMO_CORPUS))],
        k_per_source=3,
    )
    defaults.update(overrides)
    return PipelineConfig(**defaults)


@pytest.fixture
def demo_gateway() -> Gateway:
    gateway = Gateway()
    register_demo_backends(gateway)
    return gateway


class StubHandler(BaseHTTPRequestHandler):
    def _respond(self):
        server = self.server
        with server.lock:
            if server.responses:
                status, body = server.responses.pop(0)
            else:
                status, body = server.default_response
            server.requests.append(self.path)
        payload = body if isinstance(body, (bytes, str)) else json.dumps(body)
        if isinstance(payload, str):
            payload = payload.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    do_GET = _respond
    do_POST = _respond

    def log_message(self, *args):  # keep test output quiet
        pass


class StubServer:
    """Local HTTP server that replays a scripted (status, body) sequence and
    records request paths."""

    def __init__(self):
        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), StubHandler)
        self.httpd.lock = threading.Lock()
        self.httpd.responses = []
        self.httpd.requests = []
        self.httpd.default_response = (200, {"choices": [{"message": {"content": "ok"}}]})
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address
        return f"http://{host}:{port}"

    def script(self, *responses: tuple[int, object]) -> None:
        with self.httpd.lock:
            self.httpd.responses = list(responses)

    def set_default(self, status: int, body: object) -> None:
        self.httpd.default_response = (status, body)

    @property
    def requests(self) -> list[str]:
        with self.httpd.lock:
            return list(self.httpd.requests)

    def close(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def stub_server():
    server = StubServer()
    yield server
    server.close()
