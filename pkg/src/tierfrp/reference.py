"""Brute-force reference interpreter for single-tier programs.

This is the semantic oracle the propagation engine is tested against. It
interprets the combinator equations directly, demand-driven: the pulse of a
node at a cycle and the value of a behavior at the end of a cycle are defined
recursively in terms of dependencies and earlier cycles, with memo tables to
keep it tractable. It shares no machinery with the engine — no pulse routing,
no incremental recomputation, no replication — which is the point.

Restrictions: programs may use only local combinators (no tier crossings, no
lifecycle intrinsics, no async execution), and poll functions must be pure if
traces are to be compared against an engine run.
"""

from __future__ import annotations

from typing import Any, Optional

from . import graph as g
from .graph import ProgramGraph

_NONE = object()  # memo marker for "did not fire"

_UNSUPPORTED = frozenset(
    {
        g.OP_ASYNC,
        g.OP_ASYNC_ERRORS,
        g.OP_CLIENT_CHANGES,
        g.OP_SESSION_CLIENT,
        g.OP_CROSS_C2S_EVENT,
        g.OP_CROSS_S2C_EVENT,
        g.OP_CROSS_C2S_IB,
        g.OP_CROSS_S2C_IB,
        g.OP_CROSS_S2A_EVENT,
        g.OP_CROSS_A2S_EVENT,
        g.OP_CROSS_S2A_BEHAVIOR,
        g.OP_CROSS_A2S_BEHAVIOR,
        g.OP_CROSS_S2A_IB,
        g.OP_CROSS_A2S_IB,
    }
)


class ReferenceError_(Exception):
    pass


class _Interp:
    def __init__(self, program: ProgramGraph, inputs: list[dict[int, Any]], sinks: Optional[dict] = None):
        self.nodes = program.nodes
        self.inputs = inputs
        self.sinks = sinks or {}
        self._pulse: dict[tuple[int, int], Any] = {}
        self._value: dict[tuple[int, int], Any] = {}
        self._poll: dict[tuple[int, int], Any] = {}
        for node in self.nodes:
            if node.op in _UNSUPPORTED:
                raise ReferenceError_(f"node {node.id} ({node.op}) is outside the reference subset")

    # pulse(n, c): the value node n fires at cycle c, or _NONE.
    def pulse(self, nid: int, c: int) -> Any:
        key = (nid, c)
        hit = self._pulse.get(key, _NONE)
        if key in self._pulse:
            return hit
        node = self.nodes[nid]
        op = node.op
        if op in (g.OP_SOURCE, g.OP_SOURCE_EFFECT, g.OP_INTERVAL, g.OP_TICK):
            out = self.inputs[c].get(nid, _NONE) if c < len(self.inputs) else _NONE
        elif op == g.OP_MAP:
            v = self.pulse(node.deps[0], c)
            out = _NONE if v is _NONE else node.params["f"](v)
        elif op == g.OP_SNAPSHOT:
            b, e = node.deps
            v = self.pulse(e, c)
            out = _NONE if v is _NONE else node.params["f"](self.read(b, c), v)
        elif op == g.OP_DB_CHANGES or op == g.OP_IB_CHANGES:
            out = self.value(node.deps[0], c) if self.stepped(node.deps[0], c) else _NONE
        elif op == g.OP_IB_DELTAS:
            out = self.delta(node.deps[0], c)
        else:
            raise ReferenceError_(f"node {nid} ({op}) is not an event")
        self._pulse[key] = out
        return out

    # stepped(n, c): did discrete/incremental behavior n step at cycle c?
    def stepped(self, nid: int, c: int) -> bool:
        if c < 0:
            return False
        node = self.nodes[nid]
        op = node.op
        if op in (g.OP_FOLD, g.OP_FOLD_I):
            return self.pulse(node.deps[0], c) is not _NONE
        if op == g.OP_DB_MAP or op == g.OP_IB_TO_DB or op == g.OP_DB_AS_IB:
            return self.stepped(node.deps[0], c)
        if op == g.OP_DB_MAP2:
            return self.stepped(node.deps[0], c) or self.stepped(node.deps[1], c)
        if op == g.OP_DB_SNAPSHOT:
            return self.stepped(node.deps[1], c)
        if op == g.OP_DB_CONST:
            return False
        raise ReferenceError_(f"node {nid} ({op}) is not a stepping behavior")

    # value(n, c): value of n at the end of cycle c (c == -1: the initial).
    def value(self, nid: int, c: int) -> Any:
        key = (nid, c)
        if key in self._value:
            return self._value[key]
        node = self.nodes[nid]
        op = node.op
        if op == g.OP_DB_CONST:
            out = node.params["value"]
        elif op in (g.OP_FOLD, g.OP_FOLD_I):
            if c < 0:
                out = node.params["init"]
            else:
                v = self.pulse(node.deps[0], c)
                prev = self.value(nid, c - 1)
                out = prev if v is _NONE else node.params["f"](prev, v)
        elif op == g.OP_DB_MAP:
            out = node.params["f"](self.value(node.deps[0], c))
        elif op in (g.OP_DB_MAP2, g.OP_DB_SNAPSHOT):
            if op == g.OP_DB_SNAPSHOT and c >= 0 and not self.stepped(node.deps[1], c):
                out = self.value(nid, c - 1)
            else:
                out = node.params["f"](self.value(node.deps[0], c), self.value(node.deps[1], c))
        elif op == g.OP_IB_TO_DB or op == g.OP_DB_AS_IB:
            out = self.value(node.deps[0], c)
        else:
            raise ReferenceError_(f"node {nid} ({op}) has no value")
        self._value[key] = out
        return out

    # delta(n, c): the delta an incremental behavior emitted at cycle c.
    def delta(self, nid: int, c: int) -> Any:
        node = self.nodes[nid]
        if node.op == g.OP_FOLD_I:
            return self.pulse(node.deps[0], c)
        if node.op == g.OP_DB_AS_IB:
            return self.value(node.deps[0], c) if self.stepped(node.deps[0], c) else _NONE
        raise ReferenceError_(f"node {nid} ({node.op}) has no deltas")

    # read(n, c): reading a behavior-like node during cycle c.
    def read(self, nid: int, c: int) -> Any:
        node = self.nodes[nid]
        kind = node.kind
        if kind in (g.DBEHAVIOR, g.IBEHAVIOR):
            return self.value(nid, c)
        op = node.op
        if op == g.OP_DELAYED:
            return self.value(node.params["target"], c - 1)
        if op == g.OP_FROM_POLL:
            key = (nid, c)
            if key not in self._poll:
                self._poll[key] = node.params["f"]()
            return self._poll[key]
        if op == g.OP_SINK:
            fn = self.sinks.get(nid)
            if fn is None:
                return node.params["default"]
            key = (nid, c)
            if key not in self._poll:
                self._poll[key] = fn()
            return self._poll[key]
        raise ReferenceError_(f"node {nid} ({op}) is not readable")


def reference_eval(
    program: ProgramGraph,
    inputs: list[dict[int, Any]],
    *,
    sinks: Optional[dict] = None,
) -> list:
    """Interpret ``program`` over the given per-cycle source pulses.

    ``inputs[c]`` maps source node ids to the value pulsed at cycle ``c``.
    Returns a trace in the engine's format: (cycle, node id, kind, payload)
    tuples, orderered by cycle then node id.
    """
    interp = _Interp(program, inputs, sinks)
    trace: list = []
    for c in range(len(inputs)):
        for node in program.nodes:
            if node.kind == g.EVENT:
                v = interp.pulse(node.id, c)
                if v is not _NONE:
                    trace.append((c, node.id, "fire", v))
            elif node.kind == g.DBEHAVIOR:
                if interp.stepped(node.id, c):
                    trace.append((c, node.id, "step", interp.value(node.id, c)))
            elif node.kind == g.IBEHAVIOR:
                if interp.stepped(node.id, c):
                    d = interp.delta(node.id, c)
                    trace.append((c, node.id, "step", (interp.value(node.id, c), None if d is _NONE else d)))
    return trace
