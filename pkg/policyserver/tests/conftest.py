import json
import threading
import urllib.error
import urllib.request

import pytest

from policyserver.server import ServerConfig, serve


class RunningServer:
    def __init__(self, server):
        self.server = server
        host, port = server.server_address[:2]
        self.base = f"http://{host}:{port}"

    def post(self, path: str, payload) -> tuple[int, dict]:
        body = json.dumps(payload).encode()
        request = urllib.request.Request(
            self.base + path, data=body, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(request, timeout=10) as resp:
                return resp.status, json.loads(resp.read().decode())
        except urllib.error.HTTPError as exc:
            return exc.code, json.loads(exc.read().decode())

    def get(self, path: str) -> tuple[int, dict]:
        try:
            with urllib.request.urlopen(self.base + path, timeout=10) as resp:
                return resp.status, json.loads(resp.read().decode())
        except urllib.error.HTTPError as exc:
            return exc.code, json.loads(exc.read().decode())


@pytest.fixture
def run_server():
    servers = []

    def start(config: ServerConfig) -> RunningServer:
        config.port = 0  # ephemeral
        server = serve(config)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        servers.append(server)
        return RunningServer(server)

    yield start
    for server in servers:
        server.shutdown()
        server.server_close()
