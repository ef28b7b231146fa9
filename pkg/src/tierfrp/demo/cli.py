"""Command line entry points for the chat demo.

serve::

    demo-chat serve --mode auto|ws|xhr --port 8700 --host 127.0.0.1 \
        --variant push|polled|control [--web-ui [DIR]]

client::

    demo-chat client --url http://127.0.0.1:8700 --name alice \
        [--variant push|polled|control] [--mode auto|ws|xhr]

The client reads lines from standard input and posts each one as a message;
every update re-renders the log to the terminal. ``auto`` mode defers to the
transport verdict computed from the graph; forcing ``xhr`` on a program that
needs server push aborts with the analysis as the diagnostic.
"""

from __future__ import annotations

import argparse
import logging
import sys
import threading
from pathlib import Path

from ..client import ClientClosed, start_client
from ..modes import ModeAssertionError, infer_modes
from ..server import ServerConfig, ServerStartupError, start_server
from .chat import Message, VARIANTS, build_chat_program

DEFAULT_WEB_ROOT = Path(__file__).resolve().parents[3] / "frontend" / "dist"


def _add_serve(sub):
    p = sub.add_parser("serve", help="run the chat server")
    p.add_argument("--mode", choices=("auto", "ws", "xhr"), default="auto")
    p.add_argument("--port", type=int, default=8700)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--variant", choices=VARIANTS, default="push")
    p.add_argument("--disconnect-timeout", type=float, default=30.0)
    p.add_argument(
        "--web-ui",
        nargs="?",
        const=str(DEFAULT_WEB_ROOT),
        default=None,
        metavar="DIR",
        help="serve the browser client's static assets (and the manifest)",
    )
    p.add_argument("--print-modes", action="store_true", help="print the per-node transport tags")


def _add_client(sub):
    p = sub.add_parser("client", help="run a terminal chat client")
    p.add_argument("--url", required=True, help="server base url, e.g. http://127.0.0.1:8700")
    p.add_argument("--name", required=True)
    p.add_argument("--variant", choices=VARIANTS, default="push")
    p.add_argument("--mode", choices=("auto", "ws", "xhr"), default="auto")


def cmd_serve(args) -> int:
    chat = build_chat_program(args.variant)
    if args.print_modes:
        print(infer_modes(chat.program).format(chat.program))
    config = ServerConfig(
        host=args.host,
        port=args.port,
        mode=args.mode,
        disconnect_timeout=args.disconnect_timeout,
        web_root=args.web_ui,
    )
    try:
        handle = start_server(chat.program, config)
    except (ModeAssertionError, ServerStartupError) as exc:
        print(f"startup refused: {exc}", file=sys.stderr)
        return 2
    print(f"chat server ({args.variant}) on {handle.url} mode={handle.verdict_mode}")
    if args.web_ui:
        print(f"browser client at {handle.url}/ (assets: {args.web_ui})")
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        handle.stop()
    return 0


def _render_terminal(view) -> None:
    log = view.get("log", []) if isinstance(view, dict) else view
    uptime = view.get("uptime") if isinstance(view, dict) else None
    header = f"--- chat: {len(log)} message(s)"
    if uptime is not None:
        header += f", server up {uptime}s"
    print(header + " ---", flush=True)
    for line in log:
        print(line, flush=True)


def cmd_client(args) -> int:
    chat = build_chat_program(args.variant)
    closed = threading.Event()

    def on_close(reason: str) -> None:
        if reason != "stopped":
            print(f"connection closed: {reason}", file=sys.stderr)
        closed.set()

    try:
        handle = start_client(chat.program, args.url, _render_terminal, mode=args.mode, on_close=on_close)
    except ClientClosed as exc:
        print(f"could not connect: {exc}", file=sys.stderr)
        return 1

    def stdin_reader():
        for line in sys.stdin:
            line = line.rstrip("\n")
            if line:
                handle.push(chat.msg_source, Message(args.name, line))
        closed.wait(0.5)  # let the last exchange land before leaving
        handle.stop()

    reader = threading.Thread(target=stdin_reader, daemon=True)
    reader.start()
    try:
        closed.wait()
    except KeyboardInterrupt:
        handle.stop()
    return 0 if handle.close_reason in (None, "stopped") else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="demo-chat", description="multi-tier chat demo")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_serve(sub)
    _add_client(sub)
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    if args.command == "serve":
        return cmd_serve(args)
    return cmd_client(args)


if __name__ == "__main__":
    sys.exit(main())
