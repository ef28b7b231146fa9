"""Golden transcript of a scripted WebSocket session against the push server.

The recorded file freezes the full connect/bootstrap/exchange wire dialogue;
tokens are normalized since they are random per connection. Re-record with
RECORD_GOLDEN=1 after intentional protocol changes.
"""

import json
import os
from pathlib import Path

import pytest

from tierfrp import ws as wslib
from tierfrp.codecs import canonical_json
from tierfrp.demo.chat import build_chat_program
from tierfrp.server import ServerConfig, start_server
from tierfrp.wire import decode_bootstrap

GOLDEN = Path(__file__).parent / "golden" / "ws_transcript.json"


def test_scripted_ws_session_matches_golden():
    chat = build_chat_program("push", tick_period=3600.0)  # no tick during the script
    handle = start_server(chat.program, ServerConfig(port=0))
    transcript = []
    try:
        conn = wslib.connect(f"ws://127.0.0.1:{handle.port}/frp/ws", timeout=5)
        boot_text = conn.recv_text()
        transcript.append(["in", boot_text])
        token = decode_bootstrap(boot_text.encode(), chat.program).client

        crossing = sorted(chat.program.c2s_nodes)[0]
        out = canonical_json(
            {"t": "batch", "c": 1, "m": [{"n": crossing, "p": {"name": "gold", "message": "ws"}}]}
        )
        conn.send_text(out)
        transcript.append(["out", out])
        transcript.append(["in", conn.recv_text()])
        conn.close()
    finally:
        handle.stop()

    normalized = [[d, t.replace(token, "<client>")] for d, t in transcript]
    if os.environ.get("RECORD_GOLDEN"):
        GOLDEN.parent.mkdir(exist_ok=True)
        GOLDEN.write_text(json.dumps(normalized, indent=1) + "\n")
    if not GOLDEN.exists():
        pytest.fail("golden transcript missing; run with RECORD_GOLDEN=1 once")
    assert normalized == json.loads(GOLDEN.read_text())
