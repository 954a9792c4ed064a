"""The thin client against a real uvicorn process boundary."""
from __future__ import annotations

import threading
import time

import httpx
import pytest

from reftrack.cli import EXIT_OK, EXIT_RUNTIME, main
from reftrack.service.app import create_app


@pytest.fixture(scope="module")
def live_server():
    import uvicorn

    config = uvicorn.Config(create_app(), host="127.0.0.1", port=0, log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 15
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("uvicorn did not start")
        time.sleep(0.02)
    port = server.servers[0].sockets[0].getsockname()[1]
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)


class TestLiveServer:
    def test_health_over_the_wire(self, live_server):
        body = httpx.get(f"{live_server}/health").json()
        assert body["name"] == "reftrack"

    def test_cli_against_live_server_matches_in_process(self, live_server, tmp_path, capsys):
        for mode, server in (("local", None), ("remote", live_server)):
            args = ["synth", "--output-dir", str(tmp_path / mode), "--name", "d",
                    "--frames", "20", "--seed", "6"]
            if server:
                args += ["--server", server]
            assert main(args) == EXIT_OK
            args = ["track", str(tmp_path / mode / "d"),
                    "--output-dir", str(tmp_path / mode / "p"), "--seed", "6"]
            if server:
                args += ["--server", server]
            assert main(args) == EXIT_OK
        capsys.readouterr()
        assert (tmp_path / "local/d/gt.txt").read_bytes() == \
               (tmp_path / "remote/d/gt.txt").read_bytes()
        assert (tmp_path / "local/p/d/001.txt").read_bytes() == \
               (tmp_path / "remote/p/d/001.txt").read_bytes()

    def test_input_errors_map_to_exit_2_over_the_wire(self, live_server, tmp_path, capsys):
        code = main(["track", str(tmp_path / "ghost"), "--output-dir", str(tmp_path / "o"),
                     "--server", live_server])
        capsys.readouterr()
        assert code == 2

    def test_unreachable_server_exit_3(self, tmp_path, capsys):
        code = main(["eval", str(tmp_path), str(tmp_path), "--server", "http://127.0.0.1:9"])
        _, err = capsys.readouterr().out, capsys.readouterr().err
        assert code == EXIT_RUNTIME
