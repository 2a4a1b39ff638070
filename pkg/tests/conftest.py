import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np
import pytest

from marketflow.geo import GeoPoint
from marketflow.model import (
    CustomerOrigin,
    SupplyLocation,
    create_interaction_matrix,
    set_transport_costs,
)

DATA = Path(__file__).parent / "data"


def random_instance(rng, n_origins, n_locations, *, attributes=("size", "price"), costs=True,
                    demand_range=(50.0, 1000.0)):
    origins = [
        CustomerOrigin(
            GeoPoint(f"o{i}", rng.uniform(49.0, 50.0), rng.uniform(9.0, 10.5)),
            rng.uniform(*demand_range),
        )
        for i in range(n_origins)
    ]
    locations = [
        SupplyLocation(
            GeoPoint(f"l{j}", rng.uniform(49.0, 50.0), rng.uniform(9.0, 10.5)),
            rng.uniform(1.0, 100.0),
            {name: rng.uniform(0.5, 20.0) for name in attributes},
        )
        for j in range(n_locations)
    ]
    matrix = create_interaction_matrix(origins, locations)
    if costs:
        matrix = set_transport_costs(matrix)
    return matrix


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


@pytest.fixture
def data_dir():
    return DATA


class MockMatrixServer:
    """Local stand-in for the travel-time matrix endpoint.

    ``responder(path, body, headers) -> (status, payload)`` decides each
    answer; every request is recorded in ``requests``.
    """

    def __init__(self):
        self.requests = []
        self.responder = self.default_responder
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) or b"{}")
                outer.requests.append({"path": self.path, "body": body,
                                       "headers": dict(self.headers)})
                status, payload = outer.responder(self.path, body, self.headers)
                raw = payload if isinstance(payload, bytes) else json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(raw)))
                self.end_headers()
                self.wfile.write(raw)

            def log_message(self, *args):
                pass

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.httpd.server_address[1]}"
        self.thread = threading.Thread(target=self.httpd.serve_forever, args=(0.01,), daemon=True)

    @staticmethod
    def default_responder(path, body, headers):
        # 10 minutes per unit of index distance, in seconds
        n_src, n_dst = len(body["sources"]), len(body["destinations"])
        durations = [[600.0 * (1 + i + j) for j in range(n_dst)] for i in range(n_src)]
        return 200, {"durations": durations}

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def mock_server():
    with MockMatrixServer() as server:
        yield server


# one "PASS"/"FAIL" line per acceptance criterion, shown after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
