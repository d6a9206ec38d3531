"""HTTP steering service: drive a backtest session step by step and change
the stock pool mid-run.

Endpoints (JSON request/response unless noted):

    POST /sessions                  {split?, pool?, temperature?, initial_cash?}
    POST /sessions/{id}/step        {count}
    POST /sessions/{id}/pool        {add: [tickers], remove: [tickers]}
    GET  /sessions/{id}             full snapshot
    GET  /sessions                  summaries
    GET  /sessions/{id}/events      server-sent event stream (text/event-stream)
    GET  /universe                  global stock pool tickers

One command at a time mutates a session (per-session lock); the event log
is append-only and strictly step-ordered, so stream subscribers replay the
full history and then tail live events. Sessions live in memory; inference
uses the same deterministic code path as the CLI backtest, so identical
(checkpoint, split, event schedule) produce identical value series.
"""
from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .evaluator import MetricsError, ReturnSeries, compute_metrics
from .marketdata import MarketDataset
from .portfolio_env import (EnvError, PoolEvent, PoolMask, PortfolioEnv,
                            apply_pool_event)
from .representation import plan_mask, represent_window
from .sac_agent import act


class SteeringError(ValueError):
    pass


class UnknownSession(KeyError):
    pass


@dataclass
class Session:
    """One steerable backtest run; mutate only under ``lock``."""
    id: str
    split: str
    env: PortfolioEnv
    state: object
    temperature: float
    mode: str = "paused"
    exhausted: bool = False
    values: list[float] = field(default_factory=list)
    dates: list[str] = field(default_factory=list)
    weights: list[list[float]] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    pool_log: list[dict] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)
    changed: threading.Condition = field(default_factory=threading.Condition)

    def emit(self, event: dict) -> None:
        self.events.append(event)
        with self.changed:
            self.changed.notify_all()


class SteeringService:
    """Session registry bound to one dataset + checkpoint."""

    def __init__(self, dataset: MarketDataset, params: dict,
                 default_temperature: float = 0.1,
                 default_initial_cash: float = 1.0,
                 default_split: str = "test",
                 sparsify_epsilon: float = 0.0):
        self.dataset = dataset
        self.params = params
        self.default_temperature = default_temperature
        self.default_initial_cash = default_initial_cash
        self.default_split = default_split
        self.sparsify_epsilon = sparsify_epsilon
        self.sessions: dict[str, Session] = {}
        self._registry_lock = threading.Lock()

    # -- commands ---------------------------------------------------------

    def create_session(self, split: str | None = None,
                       pool: list[str] | None = None,
                       temperature: float | None = None,
                       initial_cash: float | None = None) -> Session:
        split = split or self.default_split
        temperature = self.default_temperature if temperature is None else temperature
        initial_cash = self.default_initial_cash if initial_cash is None else initial_cash
        if temperature <= 0:
            raise SteeringError("temperature must be positive")
        if pool is None:
            mask = PoolMask.full(self.dataset.n_stocks)
        else:
            if not pool:
                raise SteeringError("pool must be non-empty")
            mask = PoolMask.from_tickers(pool, self.dataset.tickers)
        env = PortfolioEnv(self.dataset, split)
        state = env.reset(initial_cash, mask, env.max_steps)
        session = Session(id=uuid.uuid4().hex[:12], split=split, env=env,
                          state=state, temperature=temperature)
        session.values.append(state.portfolio_value)
        session.dates.append(self.dataset.valid_dates[state.day_index].isoformat())
        session.emit({"type": "start", "step": 0,
                      "value": state.portfolio_value,
                      "mask": mask.selected.tolist()})
        with self._registry_lock:
            self.sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise UnknownSession(session_id) from None

    def step_session(self, session_id: str, count: int) -> dict:
        """Advance up to ``count`` steps with the session's current mask."""
        s = self.get(session_id)
        if count < 0:
            raise SteeringError("count must be non-negative")
        with s.lock:
            done = 0
            for _ in range(count):
                if s.state.step_index >= s.env.max_steps:
                    s.exhausted = True
                    break
                plan = plan_mask(self.dataset.n_stocks, 0.0,
                                 forced=s.state.mask)
                rep = represent_window(s.state.window, plan, self.params)
                action = act(self.params, rep, stochastic=False,
                             temperature=s.temperature,
                             sparsify_epsilon=self.sparsify_epsilon)
                s.state, _ = s.env.step(s.state, action)
                s.values.append(s.state.portfolio_value)
                s.dates.append(
                    self.dataset.valid_dates[s.state.day_index].isoformat())
                s.weights.append(action.as_array().tolist())
                s.emit({"type": "step", "step": s.state.step_index,
                        "value": s.state.portfolio_value,
                        "weights": action.as_array().tolist(),
                        "mask": s.state.mask.selected.tolist()})
                done += 1
            if s.state.step_index >= s.env.max_steps:
                s.exhausted = True
            return self.snapshot(session_id, tail=1) | {"stepped": done}

    def update_pool(self, session_id: str, add: list[str],
                    remove: list[str]) -> dict:
        """Apply a pool change; effective from the next step."""
        s = self.get(session_id)
        with s.lock:
            event = PoolEvent(
                date=self.dataset.valid_dates[s.state.day_index],
                add=tuple(add), remove=tuple(remove))
            unknown = [t for t in (*event.add, *event.remove)
                       if t not in self.dataset.tickers]
            if unknown:
                raise SteeringError(f"unknown tickers {unknown}")
            mask = apply_pool_event(s.state.mask, event, self.dataset.tickers)
            s.state = s.env.update_pool(s.state, mask)
            entry = {"step": s.state.step_index, "add": list(add),
                     "remove": list(remove),
                     "mask": mask.selected.tolist()}
            s.pool_log.append(entry)
            s.emit({"type": "pool", **entry})
            return {"mask": mask.selected.tolist(),
                    "selected_tickers": [t for t, on in
                                         zip(self.dataset.tickers, mask.selected)
                                         if on]}

    # -- queries ----------------------------------------------------------

    def snapshot(self, session_id: str, tail: int | None = None) -> dict:
        s = self.get(session_id)
        values = s.values if tail is None else s.values[-tail:]
        dates = s.dates if tail is None else s.dates[-tail:]
        metrics = None
        if len(s.values) >= 2:
            try:
                series = ReturnSeries(dates=list(s.dates),
                                      values=np.array(s.values))
                row = compute_metrics(series).as_row()
                metrics = {k: (v if np.isfinite(v) else None)
                           for k, v in row.items()
                           if k not in ("strategy", "split")}
            except MetricsError:
                metrics = None
        return {
            "id": s.id,
            "split": s.split,
            "mode": s.mode,
            "step": s.state.step_index,
            "exhausted": s.exhausted,
            "value": s.state.portfolio_value,
            "values": list(values),
            "dates": list(dates),
            "weights": s.weights[-1] if s.weights else None,
            "mask": s.state.mask.selected.tolist(),
            "selected_tickers": [t for t, on in zip(self.dataset.tickers,
                                                    s.state.mask.selected) if on],
            "pool_log": list(s.pool_log),
            "metrics": metrics,
        }

    def summaries(self) -> list[dict]:
        with self._registry_lock:
            ids = list(self.sessions)
        return [{"id": i, "split": self.sessions[i].split,
                 "step": self.sessions[i].state.step_index,
                 "mode": self.sessions[i].mode,
                 "exhausted": self.sessions[i].exhausted,
                 "value": self.sessions[i].state.portfolio_value}
                for i in ids]


class _Handler(BaseHTTPRequestHandler):
    service: SteeringService  # set by make_server
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # quiet by default
        pass

    # -- helpers -----------------------------------------------------------

    def _json_body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        if length == 0:
            return {}
        try:
            return json.loads(self.rfile.read(length))
        except json.JSONDecodeError as exc:
            raise SteeringError(f"invalid JSON body: {exc}") from exc

    def _send_json(self, obj: dict, status: int = 200) -> None:
        blob = json.dumps(obj).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(blob)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(blob)

    def _send_error_json(self, exc: Exception) -> None:
        if isinstance(exc, UnknownSession):
            self._send_json({"error": f"unknown session {exc.args[0]}"}, 404)
        elif isinstance(exc, (SteeringError, EnvError, MetricsError, ValueError)):
            self._send_json({"error": str(exc)}, 400)
        else:
            self._send_json({"error": f"internal error: {exc}"}, 500)

    # -- routes ------------------------------------------------------------

    def do_GET(self):
        try:
            parts = [p for p in self.path.split("?")[0].split("/") if p]
            if parts == ["universe"]:
                self._send_json({"tickers": self.service.dataset.tickers})
            elif parts == ["sessions"]:
                self._send_json({"sessions": self.service.summaries()})
            elif len(parts) == 2 and parts[0] == "sessions":
                self._send_json(self.service.snapshot(parts[1]))
            elif len(parts) == 3 and parts[:1] == ["sessions"] and parts[2] == "events":
                self._stream_events(parts[1])
            else:
                self._send_json({"error": f"no route {self.path}"}, 404)
        except Exception as exc:  # noqa: BLE001 - boundary
            self._send_error_json(exc)

    def do_POST(self):
        try:
            parts = [p for p in self.path.split("?")[0].split("/") if p]
            body = self._json_body()
            if parts == ["sessions"]:
                session = self.service.create_session(
                    split=body.get("split"), pool=body.get("pool"),
                    temperature=body.get("temperature"),
                    initial_cash=body.get("initial_cash"))
                self._send_json(self.service.snapshot(session.id), 201)
            elif len(parts) == 3 and parts[0] == "sessions" and parts[2] == "step":
                self._send_json(self.service.step_session(
                    parts[1], int(body.get("count", 1))))
            elif len(parts) == 3 and parts[0] == "sessions" and parts[2] == "pool":
                self._send_json(self.service.update_pool(
                    parts[1], body.get("add", []), body.get("remove", [])))
            else:
                self._send_json({"error": f"no route {self.path}"}, 404)
        except Exception as exc:  # noqa: BLE001 - boundary
            self._send_error_json(exc)

    def _stream_events(self, session_id: str) -> None:
        session = self.service.get(session_id)
        self.send_response(200)
        self.send_header("Content-Type", "text/event-stream")
        self.send_header("Cache-Control", "no-cache")
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        cursor = 0
        try:
            while True:
                progressed = False
                while cursor < len(session.events):
                    event = session.events[cursor]
                    payload = json.dumps({"seq": cursor, **event})
                    self.wfile.write(f"data: {payload}\n\n".encode())
                    self.wfile.flush()
                    cursor += 1
                    progressed = True
                if not progressed:
                    # comment line probes the connection so dropped
                    # subscribers release their handler thread
                    self.wfile.write(b": keepalive\n\n")
                    self.wfile.flush()
                with session.changed:
                    if cursor >= len(session.events):
                        session.changed.wait(timeout=0.5)
        except (BrokenPipeError, ConnectionResetError):
            return


def make_server(service: SteeringService, host: str = "127.0.0.1",
                port: int = 0) -> ThreadingHTTPServer:
    """Build (but do not start) the HTTP server; port 0 picks a free port."""
    handler = type("BoundHandler", (_Handler,), {"service": service})
    server = ThreadingHTTPServer((host, port), handler)
    server.daemon_threads = True
    return server


def serve(service: SteeringService, host: str = "127.0.0.1",
          port: int = 8700) -> None:
    server = make_server(service, host, port)
    print(f"steering service listening on http://{host}:{server.server_address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
