"""The chat demo: one program, three transport-shaped variants.

Pipeline: a client message source crosses to its session, the sessions
funnel into the application tier, and an incremental fold accumulates the
log (newest first) — so after a client is bootstrapped, only the new lines
ever cross the wire back down.

Variants:

* ``push``    incremental log plus a server uptime tick; the server pushes
              every update, so it needs WebSocket transport.
* ``polled``  a client-side timer crosses to the session and samples the
              log there; the server only ever answers, so it runs over
              request/response exchanges, full log per poll.
* ``control`` like ``push`` but crossing the log as a plain discrete
              behavior: every update re-ships the whole log. Exists to
              measure what the incremental crossing saves.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..codecs import FLOAT, INT, STR, list_of, record_of
from ..graph import GraphBuilder, ProgramGraph, Ref


@dataclass(frozen=True)
class Message:
    name: str
    message: str

    def render(self) -> str:
        return f"{self.name} says {self.message}"


MESSAGE = record_of("message", Message, {"name": STR, "message": STR})

VARIANTS = ("push", "polled", "control")


@dataclass
class ChatProgram:
    program: ProgramGraph
    variant: str
    msg_source: Ref  # client event source of Message
    chat: Ref  # application-tier incremental log
    view: Ref  # client main view: {"log": [...], "uptime": seconds | None}
    log_crossing: Ref  # the session-to-client crossing carrying the log


def _render_incoming(per_client: dict) -> list:
    # One server cycle can gather messages from several clients at once;
    # order them by token so every run agrees.
    return [m.render() for _, m in sorted(per_client.items())]


def _prepend(acc: list, new: list) -> list:
    return list(new) + acc


def build_chat_program(variant: str = "push", *, tick_period: float = 1.0, poll_period: float = 0.5) -> ChatProgram:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; pick one of {VARIANTS}")
    b = GraphBuilder()

    msg_source = b.client.source()
    msgs = msg_source.to_session(codec=MESSAGE)
    incoming = msgs.to_app().map(_render_incoming)
    chat = incoming.fold_incremental([], _prepend)

    if variant == "push":
        ticks = b.app.tick(tick_period)
        uptime = ticks.fold(0, lambda n, _t: n + 1)
        uptime_c = uptime.to_session().to_client(INT)
        log_c = chat.to_session().to_client(list_of(STR), list_of(STR))
        log_crossing = log_c
        view = log_c.to_dbehavior().map2(uptime_c, lambda log, up: {"log": log, "uptime": up})
    elif variant == "control":
        ticks = b.app.tick(tick_period)
        uptime = ticks.fold(0, lambda n, _t: n + 1)
        uptime_c = uptime.to_session().to_client(INT)
        # Whole-log crossing: the wire cost grows with the log.
        log_crossing = chat.to_dbehavior().to_session().as_incremental().to_client(
            list_of(STR), list_of(STR)
        )
        log_c = log_crossing.to_dbehavior()
        view = log_c.map2(uptime_c, lambda log, up: {"log": log, "uptime": up})
    else:  # polled
        poll = b.client.interval(poll_period)
        poll_s = poll.to_session(codec=FLOAT).hold(0.0)
        polled_log = chat.to_session().to_dbehavior().snapshot_with(poll_s, lambda log, _t: log)
        log_crossing = polled_log.as_incremental().to_client(list_of(STR), list_of(STR))
        log_c = log_crossing.to_dbehavior()
        view = log_c.map(lambda log: {"log": log, "uptime": None})

    b.main_view(view)
    program = b.finalize()
    return ChatProgram(
        program=program,
        variant=variant,
        msg_source=msg_source,
        chat=chat,
        view=view,
        log_crossing=log_crossing,
    )
