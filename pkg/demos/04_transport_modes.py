"""How the runtime decides between request/response and WebSocket transport.

The graph is analyzed at startup: any path on which the server would have to
push to a client unprompted forces WebSocket mode. Sampling a server value at
the pace of a client-initiated event breaks such a path — that rewrite is
what keeps the polled chat variant plain-HTTP compatible.

Run: python demos/04_transport_modes.py
"""

from tierfrp import GraphBuilder, ModeAssertionError, check_xhr_asserts, infer_modes
from tierfrp.codecs import FLOAT
from tierfrp.demo.chat import build_chat_program

for variant in ("push", "polled"):
    chat = build_chat_program(variant)
    report = infer_modes(chat.program)
    print(f"{variant:>7} variant -> {report.verdict}")

print("\nper-node tags for the polled variant:")
chat = build_chat_program("polled")
print(infer_modes(chat.program).format(chat.program))

print("\nan xhr assertion on a timer-derived value is caught before serving:")
b = GraphBuilder()
tick = b.session.tick(1.0)
down = tick.hold(0.0).as_incremental().to_client(FLOAT, FLOAT)
b.xhr_assert(down)
b.main_view(down.to_dbehavior())
program = b.finalize()
try:
    check_xhr_asserts(infer_modes(program))
except ModeAssertionError as exc:
    print(f"  {exc}")
