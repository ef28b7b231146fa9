"""Server runtime: one engine thread, a stimulus queue, and the two backends.

The propagation engine runs on a single thread and consumes a multi-producer
queue of stimuli: client batches, connection lifecycle events, timer ticks
and async task completions. Each stimulus is exactly one server cycle;
cycles never interleave. Transports run on their own threads and only
enqueue; the cycle's per-client output batches are handed back by value.

Both backends share one HTTP listener:

* ``POST /frp/bootstrap``            request/response mode connect
* ``POST /frp/exchange?client=<t>``  request/response mode: batch in, batch out
* ``GET  /frp/ws``                   WebSocket upgrade (bootstrap is the first frame)
* ``GET  /frp/manifest``             the program manifest (canonical JSON)
* ``GET  /...``                      static assets, when a web root is configured

Transport mode is decided before the listener binds: mode inference runs
first, and an XHR assertion violation aborts startup with nothing bound.
"""

from __future__ import annotations

import logging
import mimetypes
import queue
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any, Optional
from urllib.parse import parse_qs, urlsplit

from . import ws as wslib
from .core import Engine, EngineError
from .graph import ProgramGraph, Ref
from .modes import VERDICT_WEBSOCKET, VERDICT_XHR, check_xhr_asserts, infer_modes
from .wire import (
    DEFAULT_MAX_FRAME,
    Batch,
    BootstrapPayload,
    WireError,
    WireMessage,
    decode_batch,
    encode_batch,
    encode_bootstrap,
)

log = logging.getLogger("tierfrp.server")


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 0  # 0: pick a free port
    mode: str = "auto"  # auto | ws | xhr
    disconnect_timeout: float = 30.0  # xhr inactivity window
    web_root: Optional[str] = None  # serve static assets from here
    max_frame: int = DEFAULT_MAX_FRAME
    tick_periods: dict = field(default_factory=dict)  # node id -> period override


class ServerStartupError(Exception):
    pass


class _Reply:
    """One-shot hand-off from the engine thread back to a transport thread."""

    def __init__(self):
        self._event = threading.Event()
        self.value: Any = None
        self.error: Optional[Exception] = None

    def set(self, value=None, error=None):
        self.value = value
        self.error = error
        self._event.set()

    def get(self, timeout=30.0):
        if not self._event.wait(timeout):
            raise TimeoutError("engine did not answer")
        if self.error is not None:
            raise self.error
        return self.value


class ServerHandle:
    def __init__(self, program: ProgramGraph, config: ServerConfig, verdict: str, mode_report):
        self.program = program
        self.config = config
        self.verdict = verdict
        self.mode_report = mode_report
        self.counters = {
            "cycles": 0,
            "connects": 0,
            "disconnects": 0,
            "messages_in": 0,
            "messages_out": 0,
            "batches_out": 0,
            "xhr_dropped": 0,
            "protocol_errors": 0,
        }
        self._queue: queue.Queue = queue.Queue()
        self._engine = Engine(program, "server")
        self._conns: dict[str, wslib.WSConn] = {}
        self._last_seen: dict[str, float] = {}
        self._stopping = threading.Event()
        self._httpd: Optional[ThreadingHTTPServer] = None
        self._threads: list[threading.Thread] = []
        self._tasks = ThreadPoolExecutor(max_workers=4, thread_name_prefix="tierfrp-task")
        self.host = config.host
        self.port: int = 0

    # -- public ------------------------------------------------------------

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def queue_size(self) -> int:
        return self._queue.qsize()

    def live_clients(self) -> list[str]:
        return list(self._engine.live)

    def fire(self, source: Ref, value: Any) -> None:
        """Push a value onto a server-tier source."""
        self._queue.put(("fire", [(source, value)]))

    def read(self, ref, token=None):
        # Intended for tests and diagnostics; reads race with the engine
        # thread only in the trivial sense of seeing before/after a cycle.
        return self._engine.read(ref, token)

    def stop(self) -> None:
        if self._stopping.is_set():
            return
        self._stopping.set()
        self._queue.put(("stop",))
        if self._httpd is not None:
            self._httpd.shutdown()
        for conn in list(self._conns.values()):
            try:
                conn.close()
            except Exception:
                pass
        for t in self._threads:
            t.join(timeout=5)
        self._tasks.shutdown(wait=False)
        if self._httpd is not None:
            self._httpd.server_close()

    # -- engine loop -------------------------------------------------------

    def _engine_loop(self) -> None:
        engine = self._engine
        while True:
            item = self._queue.get()
            kind = item[0]
            try:
                if kind == "stop":
                    self._fail_pending_replies()
                    return
                log.debug("cycle=%d stimulus=%s", engine.cycle + 1, kind)
                if kind == "connect":
                    _, token, reply = item
                    result, boot = engine.connect(token)
                    self.counters["connects"] += 1
                    self.counters["cycles"] += 1
                    log.info("connect client=%s cycle=%d", token, result.cycle)
                    payload = BootstrapPayload(
                        client=token,
                        manifest_version=self.program.manifest_version,
                        values=tuple(sorted(boot.items())),
                    )
                    self._submit_tasks(result.tasks)
                    # The new client's own outputs are folded into its bootstrap.
                    self._dispatch(result.outputs, requester=None, reply=None, skip=token)
                    reply.set(encode_bootstrap(payload, self.program))
                elif kind == "disconnect":
                    _, token = item
                    if token not in engine.live:
                        log.info("disconnect client=%s ignored (not live)", token)
                        continue
                    result = engine.disconnect(token)
                    self.counters["disconnects"] += 1
                    self.counters["cycles"] += 1
                    log.info("disconnect client=%s cycle=%d", token, result.cycle)
                    self._last_seen.pop(token, None)
                    conn = self._conns.pop(token, None)
                    if conn is not None:
                        try:
                            conn.close()
                        except Exception:
                            pass
                    self._submit_tasks(result.tasks)
                    self._dispatch(result.outputs, requester=None, reply=None, skip=token)
                elif kind == "batch":
                    _, token, messages, reply = item
                    try:
                        result = engine.process_batch(token, messages)
                    except EngineError as exc:
                        self.counters["protocol_errors"] += 1
                        if reply is not None:
                            reply.set(error=exc)
                        else:
                            log.warning("batch rejected client=%s error=%s", token, exc)
                        continue
                    self.counters["cycles"] += 1
                    self.counters["messages_in"] += len(messages)
                    self._submit_tasks(result.tasks)
                    self._dispatch(result.outputs, requester=token, reply=reply)
                elif kind == "tick":
                    _, nid, value = item
                    result = engine.tick(nid, value)
                    self.counters["cycles"] += 1
                    self._submit_tasks(result.tasks)
                    self._dispatch(result.outputs, requester=None, reply=None)
                elif kind == "task":
                    _, nid, rep, value, is_error = item
                    result = engine.async_done(nid, value, rep, error=is_error)
                    self.counters["cycles"] += 1
                    self._submit_tasks(result.tasks)
                    self._dispatch(result.outputs, requester=None, reply=None)
                elif kind == "fire":
                    _, pairs = item
                    result = engine.fire_with_outputs(pairs)
                    self.counters["cycles"] += 1
                    self._submit_tasks(result.tasks)
                    self._dispatch(result.outputs, requester=None, reply=None)
            except Exception as exc:
                log.exception("engine stimulus failed: %r", item)
                # Never leave a transport thread waiting on a dead stimulus.
                for part in item:
                    if isinstance(part, _Reply):
                        part.set(error=exc)

    def _fail_pending_replies(self) -> None:
        """Unblock transport threads whose stimuli will never run."""
        while True:
            try:
                item = self._queue.get_nowait()
            except queue.Empty:
                return
            for part in item:
                if isinstance(part, _Reply):
                    part.set(error=ConnectionError("server stopping"))

    def _submit_tasks(self, tasks) -> None:
        for nid, rep, task in tasks:
            on_error = self.program.nodes[nid].params.get("on_error", "drop")

            def run(nid=nid, rep=rep, task=task, on_error=on_error):
                try:
                    value = task()
                except Exception as exc:
                    if on_error == "event":
                        self._queue.put(("task", nid, rep, exc, True))
                    else:
                        log.warning("async task failed node=%d error=%r", nid, exc)
                    return
                self._queue.put(("task", nid, rep, value, False))

            self._tasks.submit(run)

    def _dispatch(self, outputs: dict, requester: Optional[str], reply, skip: Optional[str] = None) -> None:
        """Hand one cycle's per-client batches to the transport."""
        requester_msgs: list = []
        # Broadcast cycles produce identical batches for many clients; encode
        # each distinct batch once.
        encoded: dict = {}
        for dest, msgs in outputs.items():
            if not msgs or dest == skip:
                continue
            if dest == requester:
                requester_msgs = msgs
                if reply is None:
                    self._send_ws(dest, msgs, encoded)
                continue
            if self.verdict_mode == VERDICT_XHR:
                # Unreachable when mode inference is sound; never buffer.
                self.counters["xhr_dropped"] += len(msgs)
                self.counters["protocol_errors"] += 1
                log.warning("xhr mode dropped %d message(s) for non-requester client=%s", len(msgs), dest)
                continue
            self._send_ws(dest, msgs, encoded)
        if reply is not None:
            data = (
                encode_batch(
                    Batch(self._engine.cycle, tuple(WireMessage(n, v) for n, v in requester_msgs)),
                    self.program,
                )
                if requester_msgs
                else b""
            )
            self.counters["messages_out"] += len(requester_msgs)
            if requester_msgs:
                self.counters["batches_out"] += 1
            reply.set(data)

    def _send_ws(self, dest: str, msgs, encoded: Optional[dict] = None) -> None:
        conn = self._conns.get(dest)
        if conn is None:
            return
        key = tuple((n, id(v)) for n, v in msgs)
        text = encoded.get(key) if encoded is not None else None
        if text is None:
            data = encode_batch(
                Batch(self._engine.cycle, tuple(WireMessage(n, v) for n, v in msgs)), self.program
            )
            text = data.decode("utf-8")
            if encoded is not None:
                encoded[key] = text
        try:
            conn.send_text(text)
            self.counters["messages_out"] += len(msgs)
            self.counters["batches_out"] += 1
        except wslib.WSClosed:
            self._queue.put(("disconnect", dest))

    # -- timers / reaper ---------------------------------------------------

    def _timer_loop(self) -> None:
        ticks = []
        start = time.monotonic()
        for nid in self.program.server_timers:
            period = self.config.tick_periods.get(nid, self.program.nodes[nid].params["period"])
            ticks.append([nid, period, 1])
        if not ticks:
            return
        while not self._stopping.is_set():
            nid, period, k = min(ticks, key=lambda t: t[1] * t[2])
            due = start + period * k
            delay = due - time.monotonic()
            if delay > 0 and self._stopping.wait(delay):
                return
            self._queue.put(("tick", nid, period * k))
            for t in ticks:
                if t[0] == nid:
                    t[2] += 1

    def _reaper_loop(self) -> None:
        while not self._stopping.wait(min(1.0, self.config.disconnect_timeout / 4)):
            cutoff = time.monotonic() - self.config.disconnect_timeout
            for token, seen in list(self._last_seen.items()):
                if seen < cutoff:
                    log.info("client %s timed out", token)
                    self._queue.put(("disconnect", token))
                    self._last_seen.pop(token, None)

    @property
    def verdict_mode(self) -> str:
        return self._mode

    # -- wiring ------------------------------------------------------------

    def _start(self) -> None:
        self._mode = self.verdict
        handler = _make_handler(self)
        try:
            self._httpd = ThreadingHTTPServer((self.config.host, self.config.port), handler)
        except OSError as exc:
            raise ServerStartupError(
                f"cannot bind {self.config.host}:{self.config.port}: {exc}"
            ) from exc
        self._httpd.daemon_threads = True
        self.port = self._httpd.server_address[1]

        engine_thread = threading.Thread(target=self._engine_loop, name="tierfrp-engine", daemon=True)
        engine_thread.start()
        self._threads.append(engine_thread)

        for nid, install in self._engine.installers():
            install(lambda value, nid=nid: self._queue.put(("fire", [(nid, value)])))

        http_thread = threading.Thread(target=self._httpd.serve_forever, name="tierfrp-http", daemon=True)
        http_thread.start()
        self._threads.append(http_thread)

        timer_thread = threading.Thread(target=self._timer_loop, name="tierfrp-timers", daemon=True)
        timer_thread.start()
        self._threads.append(timer_thread)

        if self._mode == VERDICT_XHR:
            reaper = threading.Thread(target=self._reaper_loop, name="tierfrp-reaper", daemon=True)
            reaper.start()
            self._threads.append(reaper)
        log.info("listening host=%s port=%d mode=%s", self.host, self.port, self._mode)


def _make_handler(handle: ServerHandle):
    program = handle.program

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # route through logging, not stderr
            log.debug("http %s", fmt % args)

        def _respond(self, code: int, body: bytes, content_type: str = "application/json") -> None:
            self.send_response(code)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def _error(self, code: int, message: str) -> None:
            handle.counters["protocol_errors"] += 1
            self._respond(code, message.encode("utf-8"), "text/plain; charset=utf-8")

        # -- GET -----------------------------------------------------------

        def do_GET(self):
            path = urlsplit(self.path).path
            if path == "/frp/manifest":
                self._respond(200, program.manifest_bytes())
                return
            if path == "/frp/ws":
                if handle.verdict_mode != VERDICT_WEBSOCKET:
                    # Mode discovery by auto clients lands here; not a fault.
                    self._respond(404, b"this server runs in request/response mode", "text/plain")
                    return
                self._websocket()
                return
            if handle.config.web_root is not None:
                self._static(path)
                return
            self._error(404, "not found")

        def _static(self, path: str) -> None:
            root = Path(handle.config.web_root).resolve()
            rel = path.lstrip("/") or "index.html"
            target = (root / rel).resolve()
            if not str(target).startswith(str(root)) or not target.is_file():
                self._error(404, "not found")
                return
            ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
            self._respond(200, target.read_bytes(), ctype)

        # -- POST ----------------------------------------------------------

        def do_POST(self):
            parts = urlsplit(self.path)
            if parts.path == "/frp/bootstrap":
                if handle.verdict_mode != VERDICT_XHR:
                    self._error(404, "this server runs in websocket mode; connect to /frp/ws")
                    return
                token = uuid.uuid4().hex[:16]
                reply = _Reply()
                handle._queue.put(("connect", token, reply))
                try:
                    body = reply.get()
                except Exception as exc:
                    self._error(500, f"connect failed: {exc}")
                    return
                handle._last_seen[token] = time.monotonic()
                self._respond(200, body)
                return
            if parts.path == "/frp/exchange":
                if handle.verdict_mode != VERDICT_XHR:
                    self._error(404, "this server runs in websocket mode")
                    return
                token = parse_qs(parts.query).get("client", [None])[0]
                if not token or token not in handle._engine.live:
                    self._error(410, f"unknown or expired client token {token!r}")
                    return
                length = int(self.headers.get("Content-Length", "0"))
                data = self.rfile.read(length)
                if data:
                    try:
                        batch = decode_batch(data, program, "c2s", max_size=handle.config.max_frame)
                        messages = [(m.node, m.payload) for m in batch.messages]
                    except WireError as exc:
                        self._error(400, f"bad batch: {exc}")
                        return
                else:
                    messages = []
                handle._last_seen[token] = time.monotonic()
                reply = _Reply()
                handle._queue.put(("batch", token, messages, reply))
                try:
                    body = reply.get()
                except EngineError as exc:
                    self._error(400, f"batch rejected: {exc}")
                    return
                except Exception as exc:
                    self._error(500, f"exchange failed: {exc}")
                    return
                self._respond(200, body)
                return
            self._error(404, "not found")

        # -- WebSocket -----------------------------------------------------

        def _websocket(self) -> None:
            try:
                conn = wslib.server_handshake(self)
            except wslib.WSError as exc:
                self._error(400, f"bad upgrade: {exc}")
                return
            token = uuid.uuid4().hex[:16]
            reply = _Reply()
            handle._queue.put(("connect", token, reply))
            try:
                boot = reply.get()
            except Exception:
                conn.close()
                return
            handle._conns[token] = conn
            try:
                conn.send_text(boot.decode("utf-8"))
            except wslib.WSClosed:
                handle._queue.put(("disconnect", token))
                return
            self.close_connection = True
            while True:
                try:
                    text = conn.recv_text()
                except wslib.WSClosed:
                    break
                except wslib.WSError as exc:
                    log.warning("websocket error client=%s error=%s", token, exc)
                    break
                try:
                    batch = decode_batch(
                        text.encode("utf-8"), program, "c2s", max_size=handle.config.max_frame
                    )
                except WireError as exc:
                    handle.counters["protocol_errors"] += 1
                    log.warning("rejected batch client=%s error=%s", token, exc)
                    break
                handle._queue.put(("batch", token, [(m.node, m.payload) for m in batch.messages], None))
            handle._queue.put(("disconnect", token))

    return Handler


def start_server(program: ProgramGraph, config: Optional[ServerConfig] = None) -> ServerHandle:
    """Run mode analysis, then bring up the engine and the chosen transport.

    An XHR assertion violation or an impossible mode override raises before
    any socket is bound.
    """
    config = config or ServerConfig()
    report = infer_modes(program)
    check_xhr_asserts(report)

    if config.mode == "auto":
        verdict = report.verdict
    elif config.mode == "ws":
        verdict = VERDICT_WEBSOCKET
    elif config.mode == "xhr":
        if report.verdict == VERDICT_WEBSOCKET:
            raise ServerStartupError(
                "cannot force request/response mode: the program needs server-initiated traffic\n"
                + report.format(program)
            )
        verdict = VERDICT_XHR
    else:
        raise ServerStartupError(f"unknown mode {config.mode!r} (use auto, ws or xhr)")

    if program.main_view is None:
        raise ServerStartupError("program has no main view; declare one before serving")

    handle = ServerHandle(program, config, verdict, report)
    handle._start()
    return handle
