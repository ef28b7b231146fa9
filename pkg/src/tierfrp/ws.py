"""Minimal WebSocket (RFC 6455) framing: enough for text frames both ways.

Implemented directly so the HTTP server, the WebSocket endpoint and the
static assets can share one stdlib listener. Supports text/binary messages,
fragmentation on receive, ping/pong and clean closes; no extensions, no
compression.
"""

from __future__ import annotations

import base64
import hashlib
import os
import socket
import struct
import threading
from typing import Optional
from urllib.parse import urlsplit

_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

OP_CONT = 0x0
OP_TEXT = 0x1
OP_BINARY = 0x2
OP_CLOSE = 0x8
OP_PING = 0x9
OP_PONG = 0xA


class WSError(Exception):
    pass


class WSClosed(WSError):
    """The peer closed the connection (or the socket died)."""


def accept_key(key: str) -> str:
    digest = hashlib.sha1((key + _GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


class WSConn:
    """One established connection; reads are single-threaded, writes are locked."""

    def __init__(self, rfile, wfile, *, mask_outgoing: bool, max_size: int = 16 * 1024 * 1024):
        self._rfile = rfile
        self._wfile = wfile
        self._mask = mask_outgoing
        self._max = max_size
        self._wlock = threading.Lock()
        self._closed = False

    # -- sending -----------------------------------------------------------

    def _send_frame(self, opcode: int, payload: bytes) -> None:
        head = bytearray([0x80 | opcode])
        n = len(payload)
        mask_bit = 0x80 if self._mask else 0
        if n < 126:
            head.append(mask_bit | n)
        elif n < 1 << 16:
            head.append(mask_bit | 126)
            head += struct.pack(">H", n)
        else:
            head.append(mask_bit | 127)
            head += struct.pack(">Q", n)
        if self._mask:
            key = os.urandom(4)
            head += key
            payload = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
        with self._wlock:
            if self._closed:
                raise WSClosed("connection already closed")
            try:
                self._wfile.write(bytes(head) + payload)
                self._wfile.flush()
            except (OSError, ValueError) as exc:
                self._closed = True
                raise WSClosed(str(exc)) from exc

    def send_text(self, text: str) -> None:
        self._send_frame(OP_TEXT, text.encode("utf-8"))

    def send_binary(self, data: bytes) -> None:
        self._send_frame(OP_BINARY, data)

    def close(self, code: int = 1000) -> None:
        try:
            self._send_frame(OP_CLOSE, struct.pack(">H", code))
        except WSClosed:
            pass
        self._closed = True

    # -- receiving ---------------------------------------------------------

    def _read_exact(self, n: int) -> bytes:
        data = self._rfile.read(n)
        if data is None or len(data) < n:
            raise WSClosed("socket closed mid-frame")
        return data

    def _read_frame(self) -> tuple[int, bool, bytes]:
        try:
            b0, b1 = self._read_exact(2)
        except WSClosed:
            raise
        except OSError as exc:
            raise WSClosed(str(exc)) from exc
        fin = bool(b0 & 0x80)
        opcode = b0 & 0x0F
        masked = bool(b1 & 0x80)
        n = b1 & 0x7F
        if n == 126:
            (n,) = struct.unpack(">H", self._read_exact(2))
        elif n == 127:
            (n,) = struct.unpack(">Q", self._read_exact(8))
        if n > self._max:
            raise WSError(f"frame of {n} bytes exceeds the {self._max} byte limit")
        key = self._read_exact(4) if masked else None
        payload = self._read_exact(n) if n else b""
        if key:
            payload = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
        return opcode, fin, payload

    def recv_message(self) -> bytes:
        """Next complete text/binary message payload; control frames handled inline."""
        buffer = b""
        in_message = False
        while True:
            opcode, fin, payload = self._read_frame()
            if opcode == OP_PING:
                self._send_frame(OP_PONG, payload)
                continue
            if opcode == OP_PONG:
                continue
            if opcode == OP_CLOSE:
                self.close()
                raise WSClosed("peer closed")
            if opcode in (OP_TEXT, OP_BINARY):
                if in_message:
                    raise WSError("new message started mid-fragmentation")
                buffer = payload
                in_message = True
            elif opcode == OP_CONT:
                if not in_message:
                    raise WSError("continuation frame without a message")
                buffer += payload
            else:
                raise WSError(f"unsupported opcode {opcode}")
            if fin:
                return buffer

    def recv_text(self) -> str:
        return self.recv_message().decode("utf-8")


def server_handshake(handler) -> WSConn:
    """Upgrade an http.server request; returns the live connection."""
    headers = handler.headers
    if headers.get("Upgrade", "").lower() != "websocket":
        raise WSError("not a websocket upgrade request")
    if "upgrade" not in headers.get("Connection", "").lower():
        raise WSError("missing Connection: Upgrade")
    key = headers.get("Sec-WebSocket-Key")
    if not key:
        raise WSError("missing Sec-WebSocket-Key")
    response = (
        "HTTP/1.1 101 Switching Protocols\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Accept: {accept_key(key)}\r\n"
        "\r\n"
    )
    handler.wfile.write(response.encode("ascii"))
    handler.wfile.flush()
    return WSConn(handler.rfile, handler.wfile, mask_outgoing=False)


def connect(url: str, *, timeout: Optional[float] = None) -> WSConn:
    """Dial ws://host:port/path and perform the client handshake."""
    parts = urlsplit(url)
    if parts.scheme not in ("ws", "http"):
        raise WSError(f"unsupported scheme {parts.scheme!r}")
    host = parts.hostname or "127.0.0.1"
    port = parts.port or 80
    path = parts.path or "/"
    if parts.query:
        path += "?" + parts.query
    sock = socket.create_connection((host, port), timeout=timeout)
    key = base64.b64encode(os.urandom(16)).decode("ascii")
    request = (
        f"GET {path} HTTP/1.1\r\n"
        f"Host: {host}:{port}\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Key: {key}\r\n"
        "Sec-WebSocket-Version: 13\r\n"
        "\r\n"
    )
    sock.sendall(request.encode("ascii"))
    rfile = sock.makefile("rb")
    wfile = sock.makefile("wb")
    status = rfile.readline().decode("ascii", "replace").strip()
    if " 101 " not in status + " ":
        parts_ = status.split(" ", 2)
        raise WSError(f"upgrade refused: {status!r}" if len(parts_) < 2 else f"upgrade refused: {status}")
    headers = {}
    while True:
        line = rfile.readline().decode("ascii", "replace")
        if line in ("\r\n", "\n", ""):
            break
        name, _, value = line.partition(":")
        headers[name.strip().lower()] = value.strip()
    if headers.get("sec-websocket-accept") != accept_key(key):
        raise WSError("bad Sec-WebSocket-Accept from server")
    conn = WSConn(rfile, wfile, mask_outgoing=True)
    conn._sock = sock  # keep a reference so the socket outlives the files
    return conn
