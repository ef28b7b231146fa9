"""Wire protocol: batches, bootstrap payloads and their framing.

Everything that crosses the network in one direction within one propagation
cycle travels as a single *batch*: an ordered list of (crossing node id,
payload) messages. The receiver injects a whole batch as one cycle or rejects
it whole — that atomicity is what keeps simultaneous updates simultaneous
across the wire.

Frames are canonical JSON (sorted keys, no whitespace, UTF-8):

* batch:     ``{"c": <sender cycle>, "m": [{"n": <id>, "p": <payload>}], "t": "batch"}``
* bootstrap: ``{"client": <token>, "t": "boot", "v": <manifest version>,
  "vals": [{"n": <id>, "p": <payload>}]}``

The sender cycle counter is diagnostic only. On transports without native
message boundaries, frames carry a 4-byte big-endian length prefix; WebSocket
and HTTP use their own framing.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Any, Optional

from . import graph as g
from .codecs import CodecError, canonical_json_bytes
from .graph import ProgramGraph

DEFAULT_MAX_FRAME = 4 * 1024 * 1024


class WireError(Exception):
    """Base class for protocol faults; the batch involved is rejected whole."""


class MalformedFrame(WireError):
    pass


class UnknownNode(WireError):
    pass


class PayloadError(WireError):
    pass


class OversizeFrame(WireError):
    pass


@dataclass(frozen=True)
class WireMessage:
    node: int
    payload: Any  # decoded value on the way in, raw value on the way out


@dataclass(frozen=True)
class Batch:
    cycle: int
    messages: tuple[WireMessage, ...]


@dataclass(frozen=True)
class BootstrapPayload:
    client: str
    manifest_version: int
    values: tuple[tuple[int, Any], ...]  # (session-to-client crossing id, full value)


def _payload_codec(program: ProgramGraph, nid: int):
    """The codec a batch message on this crossing uses (deltas for incrementals)."""
    node = program.nodes[nid]
    codecs = program.wire_codecs(nid)
    if node.op in (g.OP_CROSS_C2S_IB, g.OP_CROSS_S2C_IB):
        return codecs["delta"]
    return codecs["value"]


def encode_batch(batch: Batch, program: ProgramGraph) -> bytes:
    if not batch.messages:
        raise WireError("batches are never sent empty")
    msgs = []
    for m in batch.messages:
        try:
            payload = _payload_codec(program, m.node).encode(m.payload)
        except CodecError as exc:
            raise PayloadError(f"node {m.node}: {exc}") from exc
        msgs.append({"n": m.node, "p": payload})
    return canonical_json_bytes({"t": "batch", "c": batch.cycle, "m": msgs})


def decode_batch(
    data: bytes,
    program: ProgramGraph,
    direction: str,
    *,
    max_size: int = DEFAULT_MAX_FRAME,
) -> Batch:
    """Parse, validate and codec-decode one batch frame.

    ``direction`` is ``"c2s"`` or ``"s2c"``; node ids outside the crossing set
    for that direction are rejected.
    """
    if len(data) > max_size:
        raise OversizeFrame(f"frame of {len(data)} bytes exceeds the {max_size} byte limit")
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedFrame(f"undecodable frame: {exc}") from exc
    if not isinstance(obj, dict) or obj.get("t") != "batch":
        raise MalformedFrame(f"not a batch frame: {obj!r}")
    cycle = obj.get("c")
    msgs = obj.get("m")
    if not isinstance(cycle, int) or not isinstance(msgs, list):
        raise MalformedFrame("batch frame missing cycle counter or message list")
    allowed = program.c2s_nodes if direction == "c2s" else program.s2c_nodes
    out = []
    for m in msgs:
        if not isinstance(m, dict) or "n" not in m or "p" not in m:
            raise MalformedFrame(f"malformed message {m!r}")
        nid = m["n"]
        if not isinstance(nid, int) or nid not in allowed:
            raise UnknownNode(f"node {nid!r} is not a {direction} crossing of this program")
        try:
            value = _payload_codec(program, nid).decode(m["p"])
        except CodecError as exc:
            raise PayloadError(f"node {nid}: {exc}") from exc
        out.append(WireMessage(nid, value))
    return Batch(cycle=cycle, messages=tuple(out))


def encode_bootstrap(payload: BootstrapPayload, program: ProgramGraph) -> bytes:
    vals = []
    for nid, value in payload.values:
        try:
            encoded = program.wire_codecs(nid)["value"].encode(value)
        except CodecError as exc:
            raise PayloadError(f"node {nid}: {exc}") from exc
        vals.append({"n": nid, "p": encoded})
    return canonical_json_bytes(
        {"t": "boot", "client": payload.client, "v": payload.manifest_version, "vals": vals}
    )


def decode_bootstrap(data: bytes, program: ProgramGraph, *, max_size: int = DEFAULT_MAX_FRAME) -> BootstrapPayload:
    if len(data) > max_size:
        raise OversizeFrame(f"frame of {len(data)} bytes exceeds the {max_size} byte limit")
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedFrame(f"undecodable frame: {exc}") from exc
    if not isinstance(obj, dict) or obj.get("t") != "boot":
        raise MalformedFrame(f"not a bootstrap frame: {obj!r}")
    client = obj.get("client")
    version = obj.get("v")
    vals = obj.get("vals")
    if not isinstance(client, str) or not isinstance(version, int) or not isinstance(vals, list):
        raise MalformedFrame("bootstrap frame missing client, version or values")
    if version != program.manifest_version:
        raise WireError(
            f"manifest version mismatch: server speaks {version}, this program is {program.manifest_version}"
        )
    out = []
    expected = set(program.s2c_value_nodes)
    for v in vals:
        if not isinstance(v, dict) or "n" not in v or "p" not in v:
            raise MalformedFrame(f"malformed bootstrap value {v!r}")
        nid = v["n"]
        if nid not in expected:
            raise UnknownNode(f"node {nid!r} is not a bootstrapped crossing of this program")
        try:
            value = program.wire_codecs(nid)["value"].decode(v["p"])
        except CodecError as exc:
            raise PayloadError(f"node {nid}: {exc}") from exc
        out.append((nid, value))
    missing = expected - {nid for nid, _ in out}
    if missing:
        raise WireError(f"bootstrap lacks values for crossing nodes {sorted(missing)}")
    return BootstrapPayload(client=client, manifest_version=version, values=tuple(out))


def frame_kind(data: bytes) -> Optional[str]:
    """Peek at a frame's type tag without validating it."""
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        return None
    if isinstance(obj, dict):
        return obj.get("t")
    return None


# Length-prefixed framing for raw byte-stream transports.

def write_frame(sock, data: bytes) -> None:
    sock.sendall(struct.pack(">I", len(data)) + data)


def read_frame(sock, *, max_size: int = DEFAULT_MAX_FRAME) -> bytes:
    header = _read_exact(sock, 4)
    (length,) = struct.unpack(">I", header)
    if length > max_size:
        raise OversizeFrame(f"frame of {length} bytes exceeds the {max_size} byte limit")
    return _read_exact(sock, length)


def _read_exact(sock, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            raise MalformedFrame("connection closed mid-frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)
