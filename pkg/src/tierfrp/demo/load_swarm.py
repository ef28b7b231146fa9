"""Synthetic chat load: N WebSocket clients posting at a fixed rate.

Run as a module for the throughput measurement::

    python -m tierfrp.demo.load_swarm --url http://127.0.0.1:8700 \
        --clients 35 --rate 10.5 --duration 31

Each simulated client connects, reads its bootstrap, then posts one message
per period on an absolute schedule while a reader thread drains and counts
the inbound frames. Prints one JSON object with totals on exit. Messages are
fixed-width so wire sizes stay comparable across the run.
"""

from __future__ import annotations

import argparse
import json
import sys
import threading
import time

from .. import ws as wslib
from ..codecs import canonical_json
from ..wire import decode_bootstrap
from .chat import build_chat_program


def run_swarm(url: str, clients: int, rate: float, duration: float, *, quiet: bool = False) -> dict:
    chat = build_chat_program("push")
    program = chat.program
    msg_crossing = sorted(program.c2s_nodes)[0]
    if url.startswith("http://"):
        url = "ws://" + url[len("http://"):]
    period = 1.0 / rate

    sent = [0] * clients
    received_frames = [0] * clients
    received_msgs = [0] * clients
    errors: list[str] = []
    stop = threading.Event()
    threads: list[threading.Thread] = []

    def one_client(i: int) -> None:
        try:
            conn = wslib.connect(url + "/frp/ws", timeout=10)
            decode_bootstrap(conn.recv_text().encode(), program)
        except Exception as exc:
            errors.append(f"client {i}: connect failed: {exc}")
            return

        def reader():
            while not stop.is_set():
                try:
                    text = conn.recv_text()
                except wslib.WSError:
                    return
                received_frames[i] += 1
                try:
                    received_msgs[i] += len(json.loads(text).get("m", ()))
                except ValueError:
                    pass

        rt = threading.Thread(target=reader, daemon=True)
        rt.start()
        threads.append(rt)

        body = {"name": f"user{i:02d}", "message": "0123456789abcdef"}
        start = time.monotonic()
        k = 1
        while not stop.is_set():
            due = start + k * period
            now = time.monotonic()
            if now - start >= duration:
                break
            if due - now > 0:
                if stop.wait(due - now):
                    break
            frame = canonical_json({"t": "batch", "c": k, "m": [{"n": msg_crossing, "p": body}]})
            try:
                conn.send_text(frame)
            except wslib.WSError as exc:
                errors.append(f"client {i}: send failed: {exc}")
                return
            sent[i] += 1
            k += 1
        time.sleep(0.5)  # drain the tail before closing
        try:
            conn.close()
        except Exception:
            pass

    t0 = time.monotonic()
    for i in range(clients):
        t = threading.Thread(target=one_client, args=(i,), daemon=True)
        t.start()
        threads.append(t)
        time.sleep(0.002)  # stagger connects slightly
    deadline = t0 + duration + 15
    for t in threads:
        t.join(max(0.1, deadline - time.monotonic()))
    stop.set()
    elapsed = time.monotonic() - t0

    report = {
        "clients": clients,
        "sent": sum(sent),
        "received_frames": sum(received_frames),
        "received_messages": sum(received_msgs),
        "elapsed": round(elapsed, 3),
        "send_rate": round(sum(sent) / elapsed, 1),
        "errors": errors[:10],
    }
    if not quiet:
        print(json.dumps(report))
    return report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--url", required=True)
    parser.add_argument("--clients", type=int, default=35)
    parser.add_argument("--rate", type=float, default=10.5)
    parser.add_argument("--duration", type=float, default=31.0)
    args = parser.parse_args(argv)
    report = run_swarm(args.url, args.clients, args.rate, args.duration)
    return 1 if report["errors"] else 0


if __name__ == "__main__":
    sys.exit(main())
