import json
import threading

import httpx
import pytest

from tiermem.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main, make_server

from helpers import make_engine


def _json_lines(capsys):
    return [json.loads(line) for line in capsys.readouterr().out.splitlines() if line.startswith("{")]


def _paths(tmp_path):
    return ["--state", str(tmp_path / "state.json"), "--ltm", str(tmp_path / "ltm.jsonl")]


def test_bench_zero_games_writes_header_only(tmp_path, capsys):
    csv_path = tmp_path / "b.csv"
    assert main(["bench", "--games", "0", "--csv", str(csv_path)]) == EXIT_OK
    assert csv_path.read_text().strip() == "mode,game_seed,turn,prompt_tokens"
    out = _json_lines(capsys)[0]
    assert out["games"] == 0 and "plot" not in out
    assert not csv_path.with_suffix(".png").exists()


def test_bench_and_report(tmp_path, capsys):
    a, b = tmp_path / "cog.csv", tmp_path / "base.csv"
    assert main(["bench", "--games", "1", "--turns", "6", "--csv", str(a)]) == EXIT_OK
    assert main(["bench", "--mode", "baseline", "--games", "1", "--turns", "6", "--csv", str(b), "--no-plot"]) == 0
    summaries = _json_lines(capsys)
    assert summaries[0]["mode"] == "cogmem" and summaries[1]["mode"] == "baseline"
    assert a.with_suffix(".png").stat().st_size > 0
    out = tmp_path / "overlay.png"
    assert main(["report", str(a), str(b), "--out", str(out), "--budget", "2048"]) == EXIT_OK
    assert out.stat().st_size > 0
    assert _json_lines(capsys)[0]["modes"] == ["baseline", "cogmem"]


def test_mem_gc_on_empty_state(tmp_path, capsys):
    assert main(["mem", *_paths(tmp_path), "gc"]) == EXIT_OK
    assert _json_lines(capsys)[0] == {"sessions_expired": 0, "turns_freed": 0, "work_units": 0}


def test_run_then_mem_commands(tmp_path, capsys):
    script = tmp_path / "script.txt"
    script.write_text("hello there\nhow are you\n")
    assert main(["run", *_paths(tmp_path), "--script", str(script)]) == EXIT_OK
    turns = _json_lines(capsys)
    assert [t["turn"] for t in turns] == [1, 2]
    assert [t["resolution"] for t in turns] == ["fresh", "extend"]

    assert main(["mem", *_paths(tmp_path), "ls"]) == EXIT_OK
    listing = _json_lines(capsys)[0]
    assert listing["sessions"][0]["turns"] == 2 and listing["turn_store"] == 2
    sid = listing["sessions"][0]["session_id"]

    assert main(["mem", *_paths(tmp_path), "show", sid]) == EXIT_OK
    assert _json_lines(capsys)[0]["session_id"] == sid
    assert main(["mem", *_paths(tmp_path), "show", "nope"]) == EXIT_RUNTIME
    capsys.readouterr()

    assert main(["mem", *_paths(tmp_path), "gc", "--advance", "200"]) == EXIT_OK
    report = _json_lines(capsys)[0]
    assert report["sessions_expired"] == 1 and report["turns_freed"] == 2

    out = tmp_path / "copy.jsonl"
    assert main(["mem", *_paths(tmp_path), "persist", "--out", str(out)]) == EXIT_OK
    persisted = _json_lines(capsys)[0]["persisted"]
    assert main(["mem", *_paths(tmp_path), "load", str(out)]) == EXIT_OK
    assert _json_lines(capsys)[0]["loaded"] == persisted


def test_exit_codes(tmp_path, capsys):
    assert main([]) == EXIT_USAGE
    assert main(["bench"]) == EXIT_USAGE
    assert main(["bench", "--games", "-1", "--csv", str(tmp_path / "x.csv")]) == EXIT_USAGE
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"budget_tokens": "many"}))
    assert main(["mem", "--config", str(cfg), *_paths(tmp_path), "ls"]) == EXIT_CONFIG
    assert "budget_tokens" in capsys.readouterr().err
    bad = tmp_path / "bad.jsonl"
    bad.write_text("garbage\n")
    assert main(["mem", *_paths(tmp_path), "load", str(bad)]) == EXIT_RUNTIME


def test_ablation_command_saves_scenarios(tmp_path, capsys):
    path = tmp_path / "suite.json"
    assert main(["ablation", "--games", "1", "--save-scenarios", str(path)]) == EXIT_OK
    rows = _json_lines(capsys)
    assert [r["config"] for r in rows] == ["foa", "foa_da", "foa_da_ltm"]
    assert main(["ablation", "--scenarios", str(path)]) == EXIT_OK
    assert _json_lines(capsys) == rows


@pytest.fixture
def server():
    engine = make_engine()
    srv = make_server(engine)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    yield engine, f"http://127.0.0.1:{srv.server_address[1]}"
    srv.shutdown()
    srv.server_close()
    engine.close()


def test_serve_replay_is_free(server):
    engine, url = server
    body = {"messages": [{"role": "user", "content": "ping"}]}
    first = httpx.post(f"{url}/v1/sessions/chat", json=body).json()
    body["messages"].append({"role": "assistant", "content": first["answer"]})
    body["messages"].append({"role": "user", "content": "pong"})
    second = httpx.post(f"{url}/v1/sessions/chat", json=body).json()
    calls = (engine.reasoning_agent.calls, engine.memory_agent.calls)
    again = httpx.post(f"{url}/v1/sessions/chat", json=body).json()
    assert again["answer"] == second["answer"]
    assert (engine.reasoning_agent.calls, engine.memory_agent.calls) == calls
    assert httpx.get(f"{url}/healthz").json()["status"] == "ok"


def test_serve_rejects_bad_requests(server):
    _, url = server
    assert httpx.post(f"{url}/v1/sessions/chat", content=b"{}").status_code == 400
    assert httpx.post(f"{url}/v1/sessions/chat", json={"messages": [{"role": "robot", "content": "x"}]}).status_code == 400
    assert httpx.post(f"{url}/v1/other", json={}).status_code == 404
