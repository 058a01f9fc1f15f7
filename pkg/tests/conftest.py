import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


class StubChatServer:
    """Minimal chat-completions server. Replies come from ``queue`` if set,
    otherwise the last user message is echoed back."""

    def __init__(self):
        self.requests: list[dict] = []
        self.headers: list[dict] = []
        self.queue: list[tuple[int, object]] = []
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):  # noqa: N802
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                stub.requests.append(body)
                stub.headers.append(dict(self.headers))
                if self.path != "/v1/chat/completions":
                    status, payload = 404, {"error": "not found"}
                elif stub.queue:
                    status, payload = stub.queue.pop(0)
                else:
                    text = body["messages"][-1]["content"]
                    status, payload = 200, {
                        "choices": [{"index": 0, "message": {"role": "assistant", "content": text}}],
                        "usage": {"prompt_tokens": 3, "completion_tokens": 1},
                    }
                data = payload.encode() if isinstance(payload, str) else json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *a):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_address[1]}"
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def stub_server():
    s = StubChatServer()
    yield s
    s.close()


@pytest.fixture
def completion_fixture():
    return json.loads((FIXTURES / "chat_completion.json").read_text())


# -- acceptance summary --------------------------------------------------------

_CRITERIA: list[tuple[str, str, str]] = []


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    props = dict(report.user_properties)
    if "criterion" in props:
        _CRITERIA.append((props["criterion"], "PASS" if report.passed else "FAIL", props.get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, verdict, detail in sorted(_CRITERIA):
        terminalreporter.write_line(f"{verdict} {name}: {detail}")
