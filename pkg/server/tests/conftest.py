from __future__ import annotations

import json
import socket
import threading
import time
from pathlib import Path

import pytest
import uvicorn

from fusion_server.app import create_app
from fusion_server.engine import GenerationEngine
from fusion_server.tiny import make_tiny_checkpoint

# golden request suite shipped with the pipeline package
GOLDEN_REQUESTS = Path(__file__).parents[2] / "tests" / "data" / "generation_requests.json"


@pytest.fixture(scope="session")
def checkpoint(tmp_path_factory) -> Path:
    return make_tiny_checkpoint(tmp_path_factory.mktemp("ck") / "tiny", seed=0)


@pytest.fixture(scope="session")
def engine(checkpoint) -> GenerationEngine:
    return GenerationEngine(str(checkpoint), max_batch_size=4)


@pytest.fixture(scope="session")
def golden_suite() -> list[dict]:
    return json.loads(GOLDEN_REQUESTS.read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def live_server(engine):
    """The app served over a real socket, for wire-level conformance."""
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    config = uvicorn.Config(
        create_app(engine), host="127.0.0.1", port=port, log_level="error"
    )
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 15
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("server did not start")
        time.sleep(0.05)
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)
