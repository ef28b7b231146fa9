"""Startup-time transport mode inference.

Request/response transport is sufficient as long as the server never has to
initiate traffic towards a client. That is decided before any listener binds
by tagging every node of the finalized graph:

* engine-driven server sources (ticks, server FFI sources, server async
  results) need bidirectional transport; client sources do not;
* single-input operations inherit their parent's tag, combining operations
  take the most restrictive tag of their inputs;
* snapshot-style operations inherit only the sampler's tag: a
  server-initiated value read at the pace of a client-initiated event stays
  request/response;
* application-to-session crossings are treated as bidirectional roots —
  application state reaching a session replica may have been caused by a
  *different* client, and pushing it unprompted is server-initiated traffic —
  unless it is consumed through sampling as above;
* all other crossings preserve their input's tag.

The final verdict is request/response (XHR) exactly when no session-to-client
crossing ends up bidirectional. Nodes flagged with an XHR assertion abort
startup when tagged bidirectional, with a shortest dependency path from a
bidirectional root as the witness.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from . import graph as g
from .graph import ProgramGraph

REQUEST_RESPONSE = "request-response"
BIDIRECTIONAL = "bidirectional"

VERDICT_XHR = "xhr"
VERDICT_WEBSOCKET = "websocket"

_A2S_OPS = frozenset({g.OP_CROSS_A2S_EVENT, g.OP_CROSS_A2S_BEHAVIOR, g.OP_CROSS_A2S_IB})


class ModeAssertionError(Exception):
    """An XHR-asserted node requires bidirectional communication."""

    def __init__(self, report: "ModeReport"):
        self.report = report
        lines = ["xhr assertion failed: server-initiated traffic reaches asserted nodes"]
        for nid, path in report.violations:
            lines.append(f"  node {nid}: tainted via {' -> '.join(str(p) for p in path)}")
        super().__init__("\n".join(lines))


@dataclass
class ModeReport:
    tags: dict[int, str]
    verdict: str
    violations: list = field(default_factory=list)

    def format(self, program: ProgramGraph) -> str:
        lines = [f"transport verdict: {self.verdict}"]
        for node in program.nodes:
            lines.append(f"  node {node.id:>3} {node.tier.value}/{node.kind} {node.op}: {self.tags[node.id]}")
        for nid, path in self.violations:
            lines.append(f"  VIOLATION node {nid}: {' -> '.join(str(p) for p in path)}")
        return "\n".join(lines)


def _is_root(node: g.GraphNode) -> bool:
    if node.op == g.OP_TICK:
        return True
    if node.op in (g.OP_SOURCE, g.OP_SOURCE_EFFECT) and node.tier in g.SERVER_TIERS:
        return True
    if node.op in (g.OP_ASYNC, g.OP_ASYNC_ERRORS) and node.tier in g.SERVER_TIERS:
        return True
    if node.op in _A2S_OPS:
        return True
    return False


def _taint_parents(node: g.GraphNode) -> tuple[int, ...]:
    """Dependencies whose bidirectional tag propagates to this node."""
    if node.op in _A2S_OPS:
        return ()  # forced root; the session side starts a fresh taint
    if node.op == g.OP_SNAPSHOT:
        return (node.deps[1],)  # only the sampling event
    if node.op == g.OP_DB_SNAPSHOT:
        return (node.deps[1],)  # only the behavior that drives the steps
    if node.op == g.OP_DELAYED:
        return (node.params["target"],)
    return node.deps


def infer_modes(program: ProgramGraph) -> ModeReport:
    nodes = program.nodes
    tags = {n.id: BIDIRECTIONAL if _is_root(n) else REQUEST_RESPONSE for n in nodes}

    # Delayed nodes may reference forward targets, so iterate to the fixed
    # point; the lattice has two points and tags only ever go up.
    changed = True
    while changed:
        changed = False
        for node in nodes:
            if tags[node.id] == BIDIRECTIONAL:
                continue
            if any(tags[p] == BIDIRECTIONAL for p in _taint_parents(node)):
                tags[node.id] = BIDIRECTIONAL
                changed = True

    verdict = VERDICT_XHR
    for node in nodes:
        if node.op in g.S2C_CROSSINGS and tags[node.id] == BIDIRECTIONAL:
            verdict = VERDICT_WEBSOCKET
            break

    # Shortest witness paths from bidirectional roots, for diagnostics.
    asserted = [n.id for n in nodes if g.XHR_ASSERT in n.mode_flags and tags[n.id] == BIDIRECTIONAL]
    violations = []
    if asserted:
        children: dict[int, list[int]] = {n.id: [] for n in nodes}
        for node in nodes:
            for p in _taint_parents(node):
                children[p].append(node.id)
        parent: dict[int, int] = {}
        queue = deque(n.id for n in nodes if _is_root(n))
        seen = set(queue)
        while queue:
            cur = queue.popleft()
            for child in children[cur]:
                if child not in seen:
                    seen.add(child)
                    parent[child] = cur
                    queue.append(child)
        for nid in asserted:
            path = [nid]
            while path[-1] in parent:
                path.append(parent[path[-1]])
            violations.append((nid, list(reversed(path))))

    return ModeReport(tags=tags, verdict=verdict, violations=violations)


def check_xhr_asserts(report: ModeReport) -> None:
    """Raise before any listener binds if an asserted node went bidirectional."""
    if report.violations:
        raise ModeAssertionError(report)
