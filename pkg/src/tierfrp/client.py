"""Client runtime: bootstrap, local propagation, per-cycle flush, rendering.

A client engine runs on its own thread, fed by a stimulus queue (source
pushes, timer ticks, inbound server batches, async completions). After every
cycle the crossing payloads the cycle produced leave as exactly one outgoing
batch — one WebSocket frame, or one request/response exchange whose response
batch comes back as one later cycle. The render callback is invoked with the
main view's value once at startup and then after every cycle in which it
steps; it runs on the engine thread and must only enqueue, never re-enter.
"""

from __future__ import annotations

import logging
import queue
import threading
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Optional

from . import ws as wslib
from .core import SERVER_DEST, Engine
from .graph import ProgramGraph, Ref
from .wire import Batch, WireError, WireMessage, decode_batch, decode_bootstrap, encode_batch

log = logging.getLogger("tierfrp.client")

Render = Callable[[Any], None]


class ClientClosed(Exception):
    pass


class ClientHandle:
    def __init__(self, program: ProgramGraph, render: Optional[Render], on_close: Optional[Callable[[str], None]]):
        self.program = program
        self.token: Optional[str] = None
        self.state = "connecting"
        self.close_reason: Optional[str] = None
        self.view_value: Any = None
        self._render = render
        self._on_close = on_close
        self._queue: queue.Queue = queue.Queue()
        self._engine: Optional[Engine] = None
        self._threads: list[threading.Thread] = []
        self._tasks = ThreadPoolExecutor(max_workers=2, thread_name_prefix="tierfrp-client-task")
        self._stopping = threading.Event()
        self._view_cond = threading.Condition()
        self._send: Optional[Callable[[bytes], None]] = None
        self._conn: Optional[wslib.WSConn] = None
        self._exchange_queue: Optional[queue.Queue] = None

    # -- public ------------------------------------------------------------

    def push(self, source: Ref, value: Any) -> None:
        """Queue a source pulse; safe from any thread, including renders."""
        self._queue.put(("push", source.id if isinstance(source, Ref) else source, value))

    def read(self, ref) -> Any:
        if self._engine is None:
            raise ClientClosed("client not started")
        return self._engine.read(ref)

    def wait_view(self, predicate: Callable[[Any], bool], timeout: float = 5.0) -> bool:
        deadline = time.monotonic() + timeout
        with self._view_cond:
            while True:
                try:
                    if predicate(self.view_value):
                        return True
                except Exception:
                    pass
                remaining = deadline - time.monotonic()
                if remaining <= 0 or self.state == "closed":
                    try:
                        return self.state != "closed" and bool(predicate(self.view_value))
                    except Exception:
                        return False
                self._view_cond.wait(remaining)

    def stop(self) -> None:
        self._close("stopped")

    def _close(self, reason: str) -> None:
        if self._stopping.is_set():
            return
        self._stopping.set()
        self.state = "closed"
        self.close_reason = reason
        self._queue.put(("stop",))
        if self._exchange_queue is not None:
            self._exchange_queue.put(None)
        if self._conn is not None:
            try:
                self._conn.close()
            except Exception:
                pass
        self._tasks.shutdown(wait=False)
        with self._view_cond:
            self._view_cond.notify_all()
        if self._on_close is not None:
            try:
                self._on_close(reason)
            except Exception:
                log.exception("close callback failed")

    # -- engine loop -------------------------------------------------------

    def _start_engine(self, bootstrap: dict[int, Any]) -> None:
        self._engine = Engine(self.program, "client", bootstrap=bootstrap)
        self._engine.run_empty_cycle()
        if self.program.main_view is not None:
            self.view_value = self._engine.read(self.program.main_view)
            if self._render is not None:
                self._render(self.view_value)
        for nid, install in self._engine.installers():
            install(lambda value, nid=nid: self._queue.put(("push", nid, value)))
        worker = threading.Thread(target=self._engine_loop, name="tierfrp-client-engine", daemon=True)
        worker.start()
        self._threads.append(worker)
        if self.program.client_timers:
            timers = threading.Thread(target=self._timer_loop, name="tierfrp-client-timers", daemon=True)
            timers.start()
            self._threads.append(timers)
        self.state = "live"

    def _engine_loop(self) -> None:
        engine = self._engine
        while not self._stopping.is_set():
            item = self._queue.get()
            kind = item[0]
            try:
                if kind == "stop":
                    return
                if kind == "push":
                    _, nid, value = item
                    result = engine.fire_with_outputs([(nid, value)])
                elif kind == "server_batch":
                    _, messages = item
                    result = engine.apply_server_batch(messages)
                elif kind == "timer":
                    _, nid, elapsed = item
                    result = engine.tick(nid, elapsed)
                elif kind == "task":
                    _, nid, value, is_error = item
                    result = engine.async_done(nid, value, error=is_error)
                else:
                    continue
            except Exception:
                log.exception("client stimulus failed: %r", item)
                continue
            self._after_cycle(result)

    def _after_cycle(self, result) -> None:
        for nid, _rep, task in result.tasks:
            on_error = self.program.nodes[nid].params.get("on_error", "drop")

            def run(nid=nid, task=task, on_error=on_error):
                try:
                    value = task()
                except Exception as exc:
                    if on_error == "event":
                        self._queue.put(("task", nid, exc, True))
                    else:
                        log.warning("async task failed node=%d error=%r", nid, exc)
                    return
                self._queue.put(("task", nid, value, False))

            self._tasks.submit(run)
        msgs = result.outputs.get(SERVER_DEST)
        if msgs and self._send is not None:
            data = encode_batch(
                Batch(result.cycle, tuple(WireMessage(n, v) for n, v in msgs)), self.program
            )
            try:
                self._send(data)
            except ClientClosed:
                return
        if result.view_stepped:
            with self._view_cond:
                self.view_value = result.view_value
                self._view_cond.notify_all()
            if self._render is not None:
                try:
                    self._render(result.view_value)
                except Exception:
                    log.exception("render callback failed")

    def _timer_loop(self) -> None:
        start = time.monotonic()
        ticks = [
            [nid, self.program.nodes[nid].params["period"], 1] for nid in self.program.client_timers
        ]
        while not self._stopping.is_set():
            nid, period, k = min(ticks, key=lambda t: t[1] * t[2])
            due = start + period * k
            delay = due - time.monotonic()
            if delay > 0 and self._stopping.wait(delay):
                return
            self._queue.put(("timer", nid, period * k))
            for t in ticks:
                if t[0] == nid:
                    t[2] += 1


def _http_post(url: str, data: bytes, timeout: float = 30.0) -> bytes:
    request = urllib.request.Request(
        url, data=data, headers={"Content-Type": "application/json"}, method="POST"
    )
    with urllib.request.urlopen(request, timeout=timeout) as resp:
        return resp.read()


def start_client(
    program: ProgramGraph,
    url: str,
    render: Optional[Render] = None,
    *,
    mode: str = "auto",
    on_close: Optional[Callable[[str], None]] = None,
    timeout: float = 10.0,
) -> ClientHandle:
    """Connect, bootstrap, run cycle zero, render the initial view.

    ``url`` is the server's http base (http://host:port). ``mode`` picks the
    transport; ``auto`` tries a WebSocket upgrade and falls back to
    request/response exchanges if the server refuses it.
    """
    if mode not in ("auto", "ws", "xhr"):
        raise ValueError(f"unknown mode {mode!r}")
    url = url.rstrip("/")
    if url.startswith("ws://"):
        url = "http://" + url[len("ws://"):]
    handle = ClientHandle(program, render, on_close)

    if mode in ("auto", "ws"):
        try:
            conn = wslib.connect(url + "/frp/ws", timeout=timeout)
        except wslib.WSError as exc:
            if mode == "ws":
                handle._close(f"websocket connect failed: {exc}")
                raise ClientClosed(handle.close_reason) from exc
            conn = None
        except OSError as exc:
            handle._close(f"connect failed: {exc}")
            raise ClientClosed(handle.close_reason) from exc
        if conn is not None:
            return _start_ws(handle, conn)

    return _start_xhr(handle, url, timeout)


def _start_ws(handle: ClientHandle, conn: wslib.WSConn) -> ClientHandle:
    program = handle.program
    handle._conn = conn
    try:
        first = conn.recv_text()
        boot = decode_bootstrap(first.encode("utf-8"), program)
    except (wslib.WSError, WireError) as exc:
        handle._close(f"bootstrap failed: {exc}")
        raise ClientClosed(handle.close_reason) from exc
    handle.token = boot.client

    def send(data: bytes) -> None:
        try:
            conn.send_text(data.decode("utf-8"))
        except wslib.WSClosed as exc:
            handle._close(f"connection lost: {exc}")
            raise ClientClosed(handle.close_reason) from exc

    handle._send = send
    handle._start_engine(dict(boot.values))

    def reader():
        while not handle._stopping.is_set():
            try:
                text = conn.recv_text()
            except wslib.WSError as exc:
                handle._close(f"connection lost: {exc}")
                return
            try:
                batch = decode_batch(text.encode("utf-8"), program, "s2c")
            except WireError as exc:
                handle._close(f"protocol error: {exc}")
                return
            handle._queue.put(("server_batch", [(m.node, m.payload) for m in batch.messages]))

    t = threading.Thread(target=reader, name="tierfrp-client-reader", daemon=True)
    t.start()
    handle._threads.append(t)
    return handle


def _start_xhr(handle: ClientHandle, url: str, timeout: float) -> ClientHandle:
    program = handle.program
    try:
        body = _http_post(url + "/frp/bootstrap", b"", timeout)
        boot = decode_bootstrap(body, program)
    except (OSError, urllib.error.URLError, WireError) as exc:
        handle._close(f"bootstrap failed: {exc}")
        raise ClientClosed(handle.close_reason) from exc
    handle.token = boot.client
    exchange_url = f"{url}/frp/exchange?client={boot.client}"

    # Each cycle's batch is its own exchange, strictly in cycle order; the
    # worker serializes them so a response can never overtake a request.
    pending: queue.Queue = queue.Queue()
    handle._exchange_queue = pending

    def send(data: bytes) -> None:
        pending.put(data)

    def worker():
        while not handle._stopping.is_set():
            data = pending.get()
            if data is None:
                return
            try:
                body = _http_post(exchange_url, data, timeout)
            except (OSError, urllib.error.URLError) as exc:
                handle._close(f"exchange failed: {exc}")
                return
            if not body:
                continue
            try:
                batch = decode_batch(body, program, "s2c")
            except WireError as exc:
                handle._close(f"protocol error: {exc}")
                return
            handle._queue.put(("server_batch", [(m.node, m.payload) for m in batch.messages]))

    handle._send = send
    handle._start_engine(dict(boot.values))
    t = threading.Thread(target=worker, name="tierfrp-client-exchange", daemon=True)
    t.start()
    handle._threads.append(t)
    return handle
