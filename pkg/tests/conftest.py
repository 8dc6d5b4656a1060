import json
import sys
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import urlsplit

import pytest

from textsignals.dataset import build_dataset, load_config
from textsignals.sources.http import HostThrottle, HttpClient, HttpResponse, RetryPolicy

FIXTURES = Path(__file__).parent / "fixtures"
PINNED_BUILT_AT = "2024-01-01T00:00:00Z"


class FakeTransport:
    """Replays a scripted list of responses (or exceptions) and records every call."""

    def __init__(self, script):
        self.script = list(script)
        self.calls = []

    def __call__(self, method, url, *, params=None, headers=None, data=None):
        self.calls.append({"method": method, "url": url, "params": params, "headers": headers, "data": data})
        item = self.script[min(len(self.calls), len(self.script)) - 1]
        if isinstance(item, BaseException):
            raise item
        return item


def ok_json(payload, status=200):
    return HttpResponse(status, json.dumps(payload).encode("utf-8"), {"Content-Type": "application/json"})


def make_client(transport, max_attempts=3, cache_dir=None):
    return HttpClient(
        RetryPolicy(max_attempts=max_attempts, base_delay=0.01, max_delay=0.05, jitter_fraction=0.0),
        transport=transport,
        cache_dir=cache_dir,
        throttle=HostThrottle(min_interval=0.0, sleep=lambda s: None),
        sleep=lambda s: None,
    )


@pytest.fixture
def no_cache_env(monkeypatch):
    monkeypatch.delenv("NEWS_SIGNALS_CACHE_DIR", raising=False)


@pytest.fixture(scope="session")
def fixture_config():
    return load_config(FIXTURES / "fixture.yaml")


@pytest.fixture(scope="session")
def fixture_dataset(fixture_config):
    return build_dataset(fixture_config, built_at=PINNED_BUILT_AT)


class _Server:
    def __init__(self):
        self.routes = {}
        self.hits = []
        routes, hits = self.routes, self.hits

        class Handler(BaseHTTPRequestHandler):
            def _serve(self):
                path = urlsplit(self.path).path
                hits.append((self.command, self.path))
                status, body, headers = routes.get(path, (404, b'{"detail":"not found"}', {}))
                self.send_response(status)
                for k, v in headers.items():
                    self.send_header(k, v)
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            do_GET = _serve
            do_POST = _serve

            def log_message(self, *args):
                pass

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.httpd.server_address[1]}"
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    def route(self, path, body, status=200, headers=None):
        if isinstance(body, (dict, list)):
            body = json.dumps(body).encode("utf-8")
        elif isinstance(body, str):
            body = body.encode("utf-8")
        self.routes[path] = (status, body, headers or {"Content-Type": "application/json"})

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def http_server():
    server = _Server()
    yield server
    server.close()


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
