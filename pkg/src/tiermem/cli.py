"""Command line: run, bench, ablation, report, mem and serve.

Exit codes: 0 success, 2 usage error, 3 config error, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Sequence

from .agents import MalformedResponse, TransportError
from .config import Config, ConfigError, build_provider, load_config
from .core import Message
from .engine import Engine
from .foa import BudgetExceeded, TurnFailed
from .ltm import LtmStore, RefusedLoad, SnapshotError
from .session import MalformedRequest
from .state import StateError, load_state, save_state

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3, 4
DEFAULT_STATE = ".tiermem/state.json"
DEFAULT_LTM = ".tiermem/ltm.jsonl"

RUNTIME_ERRORS = (
    TurnFailed,
    BudgetExceeded,
    TransportError,
    MalformedResponse,
    StateError,
    RefusedLoad,
    SnapshotError,
    OSError,
)

log = logging.getLogger("tiermem")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _out(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


# -- engine plumbing -----------------------------------------------------------

def _config(args) -> Config:
    return load_config(args.config) if getattr(args, "config", None) else Config()


def _paths(args, cfg: Config) -> tuple[Path, Path]:
    state = getattr(args, "state", None) or cfg.state_path or DEFAULT_STATE
    ltm = getattr(args, "ltm", None) or cfg.ltm_path or DEFAULT_LTM
    return Path(state), Path(ltm)


def _load_ltm(cfg: Config, path: Path) -> LtmStore:
    if path.exists():
        return LtmStore.load(path, cfg.embed_dimension, cfg.tau_merge)
    return LtmStore(cfg.embed_dimension, cfg.tau_merge)


def open_engine(cfg: Config, state_path: Path | None, ltm_path: Path | None, **overrides) -> Engine:
    ltm = _load_ltm(cfg, ltm_path) if ltm_path else None
    engine = Engine(
        build_provider(cfg.reasoning_provider, "reasoning"),
        build_provider(cfg.memory_provider, "memory"),
        cfg.engine_settings(**overrides),
        ltm,
    )
    if state_path and state_path.exists():
        load_state(engine.manager, state_path)
    return engine


def save_engine(engine: Engine, state_path: Path, ltm_path: Path) -> None:
    engine.quiesce()
    state_path.parent.mkdir(parents=True, exist_ok=True)
    ltm_path.parent.mkdir(parents=True, exist_ok=True)
    save_state(engine.manager, state_path)
    engine.ltm.persist(ltm_path)


# -- run ---------------------------------------------------------------------

def cmd_run(args) -> int:
    cfg = _config(args)
    state_path, ltm_path = _paths(args, cfg)
    if args.script in (None, "-"):
        lines = sys.stdin.read().splitlines()
    else:
        lines = Path(args.script).read_text(encoding="utf-8").splitlines()
    inputs = [ln for ln in lines if ln.strip()]
    engine = open_engine(cfg, state_path, ltm_path)
    try:
        dialogue: list[Message] = []
        for i, text in enumerate(inputs, 1):
            dialogue.append(Message.user(text))
            res = engine.chat(dialogue)
            dialogue.append(Message.assistant(res.answer))
            _out({"turn": i, "resolution": res.resolution, **res.to_wire()})
        save_engine(engine, state_path, ltm_path)
    finally:
        engine.close()
    return EXIT_OK


# -- bench / ablation / report ----------------------------------------------

def cmd_bench(args) -> int:
    from .harness.runner import ABLATIONS, make_games, run_suite
    from .plotting import mean_curves, plot_token_curves

    if args.games < 0 or args.turns < 1 or args.budget < 1:
        raise UsageError("bench: --games must be >= 0, --turns and --budget >= 1")
    config = ABLATIONS["baseline" if args.mode == "baseline" else args.ablation]
    games = make_games(args.games, args.seed, max_turns=args.turns, rounds=None)
    report = run_suite(games, config, budget_tokens=args.budget, csv_path=args.csv)
    summary = {
        "mode": config.mode,
        "ablation": config.name,
        "games": len(games),
        "csv": str(args.csv),
        "rounds_solved": sum(r.rounds_solved for r in report.results),
        "max_window_tokens": report.max_window_tokens,
        "mean_tokens_by_turn": {str(t): round(v, 1) for t, v in report.mean_tokens_by_turn().items()},
    }
    if not args.no_plot and report.results:
        png = Path(args.plot) if args.plot else Path(args.csv).with_suffix(".png")
        plot_token_curves(mean_curves(report.rows()), png, budget=args.budget if config.mode == "cogmem" else None)
        summary["plot"] = str(png)
    _out(summary)
    return EXIT_OK


def cmd_ablation(args) -> int:
    from .harness.ablation import CraftedSuite, crafted_suite, run_ablation

    suite = CraftedSuite.load(args.scenarios) if args.scenarios else crafted_suite(args.games, args.seed)
    if args.save_scenarios:
        suite.save(args.save_scenarios)
    for row in run_ablation(suite).table():
        _out(row)
    return EXIT_OK


def cmd_report(args) -> int:
    from .harness.runner import read_csv
    from .plotting import mean_curves, plot_token_curves

    rows = [row for path in args.csv for row in read_csv(path)]
    curves = mean_curves(rows)
    plot_token_curves(curves, args.out, budget=args.budget)
    _out({"plot": str(args.out), "modes": sorted(curves)})
    return EXIT_OK


# -- mem -----------------------------------------------------------------------

def cmd_mem(args) -> int:
    cfg = _config(args)
    state_path, ltm_path = _paths(args, cfg)
    if args.action == "load":
        # validate before installing; a bad file leaves the current store alone
        store = LtmStore.load(args.path, cfg.embed_dimension, cfg.tau_merge)
        ltm_path.parent.mkdir(parents=True, exist_ok=True)
        store.persist(ltm_path)
        _out({"loaded": len(store), "ltm_path": str(ltm_path)})
        return EXIT_OK
    engine = open_engine(cfg, state_path, ltm_path)
    try:
        if args.action == "ls":
            _out({
                "sessions": [
                    {
                        "session_id": s.session_id,
                        "status": engine.manager.refresh_status(s).value,
                        "messages": s.message_count,
                        "turns": s.turn_count,
                        "last_active": s.last_active,
                        "ancestor_id": s.ancestor_id,
                    }
                    for s in engine.manager.live_sessions()
                ],
                "turn_store": len(engine.manager.store),
                "ltm": [
                    {"entry_id": e.entry_id, "status": e.status.value, "use_count": e.use_count,
                     "content": e.content[:80]}
                    for e in engine.ltm.entries()
                ],
            })
        elif args.action == "show":
            session = engine.manager.sessions.get(args.id)
            entry = engine.ltm.get(args.id)
            if session is not None:
                _out(session.snapshot())
            elif entry is not None:
                rec = entry.to_record()
                rec.pop("vector")
                _out(rec)
            else:
                print(f"mem show: no session or memory named {args.id!r}", file=sys.stderr)
                return EXIT_RUNTIME
        elif args.action == "gc":
            report = engine.manager.tick(args.advance) if args.advance else engine.manager.gc_event()
            save_engine(engine, state_path, ltm_path)
            _out({"sessions_expired": report.sessions_expired, "turns_freed": report.turns_freed,
                  "work_units": report.work_units})
        elif args.action == "persist":
            out = Path(args.out) if args.out else ltm_path
            out.parent.mkdir(parents=True, exist_ok=True)
            engine.ltm.persist(out)
            _out({"persisted": len(engine.ltm), "path": str(out)})
    finally:
        engine.close()
    return EXIT_OK


# -- serve -----------------------------------------------------------------------

def make_handler(engine: Engine):
    class Handler(BaseHTTPRequestHandler):
        server_version = "tiermem"

        def _send(self, status: int, body: dict) -> None:
            data = json.dumps(body).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self):  # noqa: N802
            if self.path == "/healthz":
                self._send(200, {"status": "ok", "sessions": len(engine.manager.sessions)})
            else:
                self._send(404, {"error": "not found"})

        def do_POST(self):  # noqa: N802
            if self.path != "/v1/sessions/chat":
                self._send(404, {"error": "not found"})
                return
            try:
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) or b"null")
                if not isinstance(body, dict) or not isinstance(body.get("messages"), list):
                    raise MalformedRequest("body must be an object with a 'messages' list")
                messages = [Message.from_wire(m) for m in body["messages"]]
                result = engine.chat(messages)
            except (MalformedRequest, ValueError, KeyError, TypeError) as exc:
                self._send(400, {"error": str(exc)})
                return
            except RUNTIME_ERRORS as exc:
                self._send(502, {"error": f"{type(exc).__name__}: {exc}"})
                return
            self._send(200, result.to_wire())

        def log_message(self, fmt, *a):
            log.info("%s " + fmt, self.address_string(), *a)

    return Handler


def make_server(engine: Engine, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    server = ThreadingHTTPServer((host, port), make_handler(engine))
    server.daemon_threads = True
    return server


def cmd_serve(args) -> int:
    cfg = _config(args)
    state_path, ltm_path = _paths(args, cfg)
    engine = open_engine(cfg, state_path, ltm_path)
    server = make_server(engine, args.host, args.port)
    print(f"serving on http://{args.host}:{server.server_address[1]}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
        save_engine(engine, state_path, ltm_path)
        engine.close()
    return EXIT_OK


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tiermem", description="Layered dialogue memory engine")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def state_flags(sp):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--state", help=f"session state file (default {DEFAULT_STATE})")
        sp.add_argument("--ltm", help=f"long-term memory snapshot (default {DEFAULT_LTM})")

    run = sub.add_parser("run", help="drive a dialogue from a script of user messages")
    state_flags(run)
    run.add_argument("--script", help="one user message per line; '-' or omitted reads stdin")
    run.set_defaults(func=cmd_run)

    bench = sub.add_parser("bench", help="token-per-turn benchmark on rule-discovery games")
    bench.add_argument("--mode", choices=("cogmem", "baseline"), default="cogmem")
    bench.add_argument("--ablation", choices=("foa", "foa_da", "foa_da_ltm"), default="foa_da_ltm")
    bench.add_argument("--games", type=int, default=4, help="games per difficulty")
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--csv", required=True)
    bench.add_argument("--turns", type=int, default=30)
    bench.add_argument("--budget", type=int, default=2048)
    bench.add_argument("--plot", help="PNG path (default: CSV path with .png)")
    bench.add_argument("--no-plot", action="store_true")
    bench.set_defaults(func=cmd_bench)

    abl = sub.add_parser("ablation", help="crafted suite across memory configurations")
    abl.add_argument("--games", type=int, default=6)
    abl.add_argument("--seed", type=int, default=0)
    abl.add_argument("--scenarios", help="scenario JSON to run instead of the generated suite")
    abl.add_argument("--save-scenarios", help="write the suite that was run to this JSON file")
    abl.set_defaults(func=cmd_ablation)

    rep = sub.add_parser("report", help="overlay token curves from bench CSVs")
    rep.add_argument("csv", nargs="+")
    rep.add_argument("--out", required=True)
    rep.add_argument("--budget", type=int)
    rep.set_defaults(func=cmd_report)

    mem = sub.add_parser("mem", help="inspect and maintain stored memory")
    state_flags(mem)
    acts = mem.add_subparsers(dest="action", required=True, parser_class=_Parser)
    acts.add_parser("ls")
    show = acts.add_parser("show")
    show.add_argument("id")
    gc = acts.add_parser("gc")
    gc.add_argument("--advance", type=int, default=0, help="logical ticks to advance first")
    persist = acts.add_parser("persist")
    persist.add_argument("--out")
    load = acts.add_parser("load")
    load.add_argument("path")
    mem.set_defaults(func=cmd_mem)

    serve = sub.add_parser("serve", help="HTTP endpoint POST /v1/sessions/chat")
    state_flags(serve)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8080)
    serve.set_defaults(func=cmd_serve)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RUNTIME_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
