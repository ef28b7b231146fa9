"""Multi-tier program graphs.

A program is written once as a single first-order dataflow graph whose nodes
are tagged with a tier: client (browser side, one copy per connection),
session (server side, one copy per connection) or application (server side,
singleton). Tier-crossing nodes connect the tiers; everything else combines
values within one tier.

Node identifiers are dense integers assigned in construction order. Because
both engine roles (and the exported manifest) are derived from the same
construction sequence, the identifiers agree everywhere without any
annotation burden — a crossing node's id doubles as its wire identifier.

Construction happens through :class:`GraphBuilder` and the typed reference
objects it hands out; :meth:`GraphBuilder.finalize` validates the graph and
freezes it into an immutable :class:`ProgramGraph`.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Optional, Union

from .clients import apply_client_change
from .codecs import Codec, CodecRegistry, canonical_json, canonical_json_bytes, standard_registry


class Tier(Enum):
    CLIENT = "client"
    SESSION = "session"
    APPLICATION = "application"


SERVER_TIERS = frozenset({Tier.SESSION, Tier.APPLICATION})

# Node kinds.
EVENT = "event"
BEHAVIOR = "behavior"
DBEHAVIOR = "dbehavior"
IBEHAVIOR = "ibehavior"

# Combinator ops.
OP_SOURCE = "source"
OP_SOURCE_EFFECT = "source_effect"
OP_INTERVAL = "interval"  # engine-driven client timer
OP_TICK = "tick"  # engine-driven server timer
OP_MAP = "map"
OP_FOLD = "fold"
OP_DB_MAP = "db_map"
OP_DB_MAP2 = "db_map2"
OP_DB_CONST = "db_const"
OP_DB_CHANGES = "db_changes"
OP_SNAPSHOT = "snapshot"
OP_DB_SNAPSHOT = "db_snapshot"
OP_DELAYED = "delayed"
OP_FOLD_I = "fold_incremental"
OP_IB_TO_DB = "ib_to_db"
OP_DB_AS_IB = "db_as_ib"
OP_IB_CHANGES = "ib_changes"
OP_IB_DELTAS = "ib_deltas"
OP_FROM_POLL = "from_poll"
OP_SINK = "sink"
OP_ASYNC = "async_exec"
OP_ASYNC_ERRORS = "async_errors"

# Tier-crossing ops.
OP_CROSS_C2S_EVENT = "cross_c2s_event"
OP_CROSS_S2C_EVENT = "cross_s2c_event"
OP_CROSS_C2S_IB = "cross_c2s_ib"
OP_CROSS_S2C_IB = "cross_s2c_ib"
OP_CROSS_S2A_EVENT = "cross_s2a_event"
OP_CROSS_A2S_EVENT = "cross_a2s_event"
OP_CROSS_S2A_BEHAVIOR = "cross_s2a_behavior"
OP_CROSS_A2S_BEHAVIOR = "cross_a2s_behavior"
OP_CROSS_S2A_IB = "cross_s2a_ib"
OP_CROSS_A2S_IB = "cross_a2s_ib"

# Intrinsics.
OP_SESSION_CLIENT = "session_client"
OP_CLIENT_CHANGES = "client_changes"

CROSSING_DIRECTION = {
    OP_CROSS_C2S_EVENT: "c2s",
    OP_CROSS_C2S_IB: "c2s",
    OP_CROSS_S2C_EVENT: "s2c",
    OP_CROSS_S2C_IB: "s2c",
    OP_CROSS_S2A_EVENT: "s2a",
    OP_CROSS_S2A_BEHAVIOR: "s2a",
    OP_CROSS_S2A_IB: "s2a",
    OP_CROSS_A2S_EVENT: "a2s",
    OP_CROSS_A2S_BEHAVIOR: "a2s",
    OP_CROSS_A2S_IB: "a2s",
}

# Crossings whose payloads travel over the network and therefore need codecs.
WIRE_CROSSINGS = frozenset(
    {OP_CROSS_C2S_EVENT, OP_CROSS_S2C_EVENT, OP_CROSS_C2S_IB, OP_CROSS_S2C_IB}
)
C2S_CROSSINGS = frozenset({OP_CROSS_C2S_EVENT, OP_CROSS_C2S_IB})
S2C_CROSSINGS = frozenset({OP_CROSS_S2C_EVENT, OP_CROSS_S2C_IB})

IB_OPS = frozenset({OP_FOLD_I, OP_DB_AS_IB, OP_CROSS_C2S_IB, OP_CROSS_S2C_IB, OP_CROSS_A2S_IB, OP_CROSS_S2A_IB})

XHR_ASSERT = "xhr-assert"


class GraphError(Exception):
    """A structural problem detected while building or finalizing a graph."""


def _keep_newest(_old: Any, new: Any) -> Any:
    return new


@dataclass
class GraphNode:
    """One dataflow node. Treat as immutable once the graph is finalized."""

    id: int
    tier: Tier
    kind: str
    op: str
    deps: tuple[int, ...] = ()
    params: dict = field(default_factory=dict)
    codec: Optional[dict[str, str]] = None  # role name -> codec name
    mode_flags: frozenset = frozenset()

    def __repr__(self) -> str:
        return f"<node {self.id} {self.tier.value}/{self.kind} {self.op}>"


class Ref:
    """Handle to one graph node, usable during construction and afterwards."""

    __slots__ = ("builder", "id", "tier", "kind")

    def __init__(self, builder: "GraphBuilder", node: GraphNode):
        self.builder = builder
        self.id = node.id
        self.tier = node.tier
        self.kind = node.kind

    def _node(self) -> GraphNode:
        return self.builder._nodes[self.id]

    def __repr__(self) -> str:
        return f"<{type(self).__name__} #{self.id} {self.tier.value}>"


def _as_behavior_dep(b: "Union[BehaviorRef, DBehaviorRef]") -> int:
    if not isinstance(b, (BehaviorRef, DBehaviorRef)):
        raise GraphError(f"expected a behavior or discrete behavior, got {b!r}")
    return b.id


class EventRef(Ref):
    def map(self, f: Callable[[Any], Any]) -> "EventRef":
        return self.builder._event(self.tier, OP_MAP, (self.id,), {"f": f})

    def fold(self, init: Any, f: Callable[[Any, Any], Any]) -> "DBehaviorRef":
        return self.builder._dbehavior(self.tier, OP_FOLD, (self.id,), {"init": init, "f": f})

    def hold(self, init: Any) -> "DBehaviorRef":
        # hold is fold that keeps the newest pulse.
        return self.fold(init, _keep_newest)

    def fold_incremental(self, init: Any, f: Callable[[Any, Any], Any]) -> "IBehaviorRef":
        return self.builder._ibehavior(self.tier, OP_FOLD_I, (self.id,), {"init": init, "f": f})

    def execute_tasks(self, on_error: str = "drop"):
        """Run pulsed zero-argument tasks off-engine; results fire in later cycles.

        ``on_error="drop"`` logs and discards failures; ``on_error="event"``
        additionally returns a companion event firing the exceptions.
        """
        if on_error not in ("drop", "event"):
            raise GraphError(f"on_error must be 'drop' or 'event', got {on_error!r}")
        result = self.builder._event(self.tier, OP_ASYNC, (self.id,), {"on_error": on_error})
        if on_error == "event":
            errors = self.builder._event(self.tier, OP_ASYNC_ERRORS, (), {})
            result._node().params["error_node"] = errors.id
            return result, errors
        return result

    def to_session(self, codec: Optional[Codec] = None) -> "EventRef":
        if self.tier is Tier.CLIENT:
            if codec is None:
                raise GraphError(f"client-to-session event crossing of node {self.id} needs a codec")
            self.builder._use_codec(codec)
            return self.builder._event(
                Tier.SESSION, OP_CROSS_C2S_EVENT, (self.id,), {}, codec={"value": codec.name}
            )
        if self.tier is Tier.APPLICATION:
            return self.builder._event(Tier.SESSION, OP_CROSS_A2S_EVENT, (self.id,), {})
        raise GraphError(f"node {self.id} is already on the session tier")

    def to_client(self, codec: Codec) -> "EventRef":
        if self.tier is not Tier.SESSION:
            raise GraphError(f"only session events cross to the client; node {self.id} is {self.tier.value}")
        self.builder._use_codec(codec)
        return self.builder._event(
            Tier.CLIENT, OP_CROSS_S2C_EVENT, (self.id,), {}, codec={"value": codec.name}
        )

    def to_app(self) -> "EventRef":
        if self.tier is not Tier.SESSION:
            raise GraphError(f"only session events cross to the application; node {self.id} is {self.tier.value}")
        return self.builder._event(Tier.APPLICATION, OP_CROSS_S2A_EVENT, (self.id,), {})


class EventSourceRef(EventRef):
    """An event with an open end: values are pushed in from outside the graph."""


class DBehaviorRef(Ref):
    def map(self, f: Callable[[Any], Any]) -> "DBehaviorRef":
        return self.builder._dbehavior(self.tier, OP_DB_MAP, (self.id,), {"f": f})

    def map2(self, other: "DBehaviorRef", f: Callable[[Any, Any], Any]) -> "DBehaviorRef":
        self.builder._same_tier(self, other)
        return self.builder._dbehavior(self.tier, OP_DB_MAP2, (self.id, other.id), {"f": f})

    def changes(self) -> EventRef:
        return self.builder._event(self.tier, OP_DB_CHANGES, (self.id,), {})

    def snapshot(self, event: EventRef, f: Callable[[Any, Any], Any]) -> EventRef:
        self.builder._same_tier(self, event)
        return self.builder._event(self.tier, OP_SNAPSHOT, (self.id, event.id), {"f": f})

    def sampled_by(self, event: EventRef) -> EventRef:
        # snapshot that ignores the pulse and takes the behavior's value
        return self.snapshot(event, lambda value, _pulse: value)

    def snapshot_with(self, other: "DBehaviorRef", f: Callable[[Any, Any], Any]) -> "DBehaviorRef":
        """Combine like map2, but the result steps only when ``other`` does."""
        self.builder._same_tier(self, other)
        return self.builder._dbehavior(self.tier, OP_DB_SNAPSHOT, (self.id, other.id), {"f": f})

    def as_incremental(self) -> "IBehaviorRef":
        return self.builder._ibehavior(self.tier, OP_DB_AS_IB, (self.id,), {})

    def to_session(self, codec: Optional[Codec] = None) -> "DBehaviorRef":
        # Discrete behaviors cross as their incremental form whose deltas are
        # the new values, then come back out as a discrete behavior.
        if self.tier is Tier.CLIENT:
            if codec is None:
                raise GraphError(f"client-to-session crossing of node {self.id} needs a codec")
            return self.as_incremental().to_session(codec, codec).to_dbehavior()
        if self.tier is Tier.APPLICATION:
            return self.as_incremental().to_session().to_dbehavior()
        raise GraphError(f"node {self.id} is already on the session tier")

    def to_client(self, codec: Codec) -> "DBehaviorRef":
        if self.tier is not Tier.SESSION:
            raise GraphError(f"only session behaviors cross to the client; node {self.id} is {self.tier.value}")
        return self.as_incremental().to_client(codec, codec).to_dbehavior()

    def to_app(self) -> "IBehaviorRef":
        if self.tier is not Tier.SESSION:
            raise GraphError(f"only session behaviors cross to the application; node {self.id} is {self.tier.value}")
        return self.as_incremental().to_app()


class BehaviorRef(Ref):
    def snapshot(self, event: EventRef, f: Callable[[Any, Any], Any]) -> EventRef:
        self.builder._same_tier(self, event)
        return self.builder._event(self.tier, OP_SNAPSHOT, (self.id, event.id), {"f": f})

    def sampled_by(self, event: EventRef) -> EventRef:
        return self.snapshot(event, lambda value, _pulse: value)

    def to_app(self) -> "BehaviorRef":
        if self.tier is not Tier.SESSION:
            raise GraphError(f"only session behaviors cross to the application; node {self.id} is {self.tier.value}")
        return self.builder._behavior(Tier.APPLICATION, OP_CROSS_S2A_BEHAVIOR, (self.id,), {})

    def to_session(self) -> "BehaviorRef":
        if self.tier is not Tier.APPLICATION:
            # Client/session behaviors cannot cross the network: nothing marks
            # when their value changes, so the only implementation would be a
            # blocking synchronous read across the wire.
            raise GraphError(
                f"non-discrete behaviors cross only between server tiers; node {self.id} is {self.tier.value}"
            )
        return self.builder._behavior(Tier.SESSION, OP_CROSS_A2S_BEHAVIOR, (self.id,), {})


class IBehaviorRef(Ref):
    def changes(self) -> EventRef:
        return self.builder._event(self.tier, OP_IB_CHANGES, (self.id,), {})

    def deltas(self) -> EventRef:
        return self.builder._event(self.tier, OP_IB_DELTAS, (self.id,), {})

    def to_dbehavior(self) -> DBehaviorRef:
        return self.builder._dbehavior(self.tier, OP_IB_TO_DB, (self.id,), {})

    def to_session(self, value_codec: Optional[Codec] = None, delta_codec: Optional[Codec] = None) -> "IBehaviorRef":
        if self.tier is Tier.CLIENT:
            if value_codec is None or delta_codec is None:
                raise GraphError(f"incremental crossing of node {self.id} needs value and delta codecs")
            self.builder._use_codec(value_codec)
            self.builder._use_codec(delta_codec)
            return self.builder._ibehavior(
                Tier.SESSION,
                OP_CROSS_C2S_IB,
                (self.id,),
                {},
                codec={"value": value_codec.name, "delta": delta_codec.name},
            )
        if self.tier is Tier.APPLICATION:
            return self.builder._ibehavior(Tier.SESSION, OP_CROSS_A2S_IB, (self.id,), {})
        raise GraphError(f"node {self.id} is already on the session tier")

    def to_client(self, value_codec: Codec, delta_codec: Codec) -> "IBehaviorRef":
        if self.tier is not Tier.SESSION:
            raise GraphError(f"only session values cross to the client; node {self.id} is {self.tier.value}")
        self.builder._use_codec(value_codec)
        self.builder._use_codec(delta_codec)
        return self.builder._ibehavior(
            Tier.CLIENT,
            OP_CROSS_S2C_IB,
            (self.id,),
            {},
            codec={"value": value_codec.name, "delta": delta_codec.name},
        )

    def to_app(self) -> "IBehaviorRef":
        if self.tier is not Tier.SESSION:
            raise GraphError(f"only session values cross to the application; node {self.id} is {self.tier.value}")
        return self.builder._ibehavior(Tier.APPLICATION, OP_CROSS_S2A_IB, (self.id,), {})


class TierScope:
    """Construction namespace for one tier: sources, timers and primitives."""

    def __init__(self, builder: "GraphBuilder", tier: Tier):
        self._b = builder
        self.tier = tier

    def source(self) -> EventSourceRef:
        if self.tier is Tier.SESSION:
            raise GraphError("session-tier sources are not supported; push via a client crossing or use a tick")
        node = self._b._add(self.tier, EVENT, OP_SOURCE, (), {})
        return EventSourceRef(self._b, node)

    def source_with_effect(self, install: Callable[[Callable[[Any], None]], None]) -> EventSourceRef:
        """Source whose installer is invoked at engine start with a push function."""
        if self.tier is Tier.SESSION:
            raise GraphError("session-tier sources are not supported; push via a client crossing or use a tick")
        node = self._b._add(self.tier, EVENT, OP_SOURCE_EFFECT, (), {"install": install})
        return EventSourceRef(self._b, node)

    def interval(self, period: float) -> EventRef:
        if self.tier is not Tier.CLIENT:
            raise GraphError("interval timers are client-side; use tick() on server tiers")
        if period <= 0:
            raise GraphError("interval period must be positive")
        return self._b._event(self.tier, OP_INTERVAL, (), {"period": float(period)})

    def tick(self, period: float) -> EventRef:
        if self.tier is Tier.CLIENT:
            raise GraphError("ticks are server-side; use interval() on the client tier")
        if period <= 0:
            raise GraphError("tick period must be positive")
        return self._b._event(self.tier, OP_TICK, (), {"period": float(period)})

    def constant(self, value: Any) -> DBehaviorRef:
        return self._b._dbehavior(self.tier, OP_DB_CONST, (), {"value": value})

    def from_poll(self, f: Callable[[], Any]) -> BehaviorRef:
        return self._b._behavior(self.tier, OP_FROM_POLL, (), {"f": f})

    def sink(self, default: Any) -> BehaviorRef:
        return self._b._behavior(self.tier, OP_SINK, (), {"default": default})

    def delayed(self, target) -> BehaviorRef:
        """Read a discrete behavior's value as of the previous cycle.

        ``target`` may be a reference or a zero-argument callable returning
        one, which allows forward references and therefore recursive
        definitions; the reference is resolved at finalization.
        """
        params = {"target_thunk": target if callable(target) else (lambda: target)}
        return self._b._behavior(self.tier, OP_DELAYED, (), params)

    def client_token(self) -> DBehaviorRef:
        if self.tier is not Tier.SESSION:
            raise GraphError("the connection token is a session-tier value")
        return self._b._dbehavior(self.tier, OP_SESSION_CLIENT, (), {})

    def client_changes(self) -> EventRef:
        if self.tier is not Tier.APPLICATION:
            raise GraphError("connection changes are an application-tier event")
        return self._b._client_changes()

    def clients(self) -> IBehaviorRef:
        if self.tier is not Tier.APPLICATION:
            raise GraphError("the live-client set is an application-tier value")
        return self._b._clients()


class GraphBuilder:
    """Accumulates nodes in construction order and freezes them into a graph."""

    def __init__(self, registry: Optional[CodecRegistry] = None):
        self._nodes: list[GraphNode] = []
        self._registry = registry if registry is not None else standard_registry()
        self._main_views: list[int] = []
        self._client_changes_ref: Optional[EventRef] = None
        self._clients_ref: Optional[IBehaviorRef] = None
        self._finalized = False
        self.client = TierScope(self, Tier.CLIENT)
        self.session = TierScope(self, Tier.SESSION)
        self.app = TierScope(self, Tier.APPLICATION)

    @property
    def registry(self) -> CodecRegistry:
        return self._registry

    def _add(self, tier, kind, op, deps, params, codec=None) -> GraphNode:
        if self._finalized:
            raise GraphError("graph already finalized; build a new one")
        node = GraphNode(
            id=len(self._nodes), tier=tier, kind=kind, op=op, deps=tuple(deps), params=params, codec=codec
        )
        self._nodes.append(node)
        return node

    def _event(self, tier, op, deps, params, codec=None) -> EventRef:
        return EventRef(self, self._add(tier, EVENT, op, deps, params, codec))

    def _dbehavior(self, tier, op, deps, params, codec=None) -> DBehaviorRef:
        return DBehaviorRef(self, self._add(tier, DBEHAVIOR, op, deps, params, codec))

    def _behavior(self, tier, op, deps, params, codec=None) -> BehaviorRef:
        return BehaviorRef(self, self._add(tier, BEHAVIOR, op, deps, params, codec))

    def _ibehavior(self, tier, op, deps, params, codec=None) -> IBehaviorRef:
        return IBehaviorRef(self, self._add(tier, IBEHAVIOR, op, deps, params, codec))

    def _use_codec(self, codec: Codec) -> None:
        self._registry.register(codec)

    def _same_tier(self, a: Ref, b: Ref) -> None:
        if a.tier is not b.tier:
            raise GraphError(
                f"nodes {a.id} ({a.tier.value}) and {b.id} ({b.tier.value}) live on different tiers; "
                "cross explicitly before combining"
            )

    def _client_changes(self) -> EventRef:
        if self._client_changes_ref is None:
            self._client_changes_ref = self._event(Tier.APPLICATION, OP_CLIENT_CHANGES, (), {})
        return self._client_changes_ref

    def _clients(self) -> IBehaviorRef:
        if self._clients_ref is None:
            self._clients_ref = self._client_changes().fold_incremental(frozenset(), apply_client_change)
        return self._clients_ref

    def main_view(self, db: DBehaviorRef) -> None:
        """Declare the client discrete behavior whose value is rendered."""
        if not isinstance(db, DBehaviorRef) or db.tier is not Tier.CLIENT:
            raise GraphError("the main view must be a client-tier discrete behavior")
        self._main_views.append(db.id)

    def xhr_assert(self, ref: Ref) -> Ref:
        """Assert at startup that this node never needs server-initiated traffic."""
        node = ref._node()
        node.mode_flags = node.mode_flags | {XHR_ASSERT}
        return ref

    # -- finalization ------------------------------------------------------

    def finalize(self, *, require_main_view: bool = True) -> "ProgramGraph":
        nodes = self._nodes
        errors: list[str] = []

        # Resolve deferred delayed targets.
        for node in nodes:
            if node.op == OP_DELAYED:
                thunk = node.params.get("target_thunk")
                try:
                    target = thunk()
                except Exception as exc:
                    errors.append(f"node {node.id}: delayed target unresolved ({exc})")
                    continue
                if not isinstance(target, DBehaviorRef):
                    errors.append(f"node {node.id}: delayed target must be a discrete behavior")
                    continue
                if target.tier is not node.tier:
                    errors.append(
                        f"node {node.id}: delayed target {target.id} lives on tier {target.tier.value}"
                    )
                    continue
                node.params["target"] = target.id

        # Dependency ordering: every non-delayed dependency must already have
        # existed when its consumer was created, so any cycle not broken by a
        # delayed node shows up as a forward dependency here.
        for node in nodes:
            for dep in node.deps:
                if dep >= node.id or dep < 0:
                    errors.append(
                        f"node {node.id}: dependency {dep} does not precede it; "
                        "cycles must pass through a delayed node"
                    )
                elif dep >= len(nodes):
                    errors.append(f"node {node.id}: dependency {dep} does not exist")

        # Tier discipline on dependencies.
        expected_dep_tier = {
            OP_CROSS_C2S_EVENT: Tier.CLIENT,
            OP_CROSS_C2S_IB: Tier.CLIENT,
            OP_CROSS_S2C_EVENT: Tier.SESSION,
            OP_CROSS_S2C_IB: Tier.SESSION,
            OP_CROSS_S2A_EVENT: Tier.SESSION,
            OP_CROSS_S2A_BEHAVIOR: Tier.SESSION,
            OP_CROSS_S2A_IB: Tier.SESSION,
            OP_CROSS_A2S_EVENT: Tier.APPLICATION,
            OP_CROSS_A2S_BEHAVIOR: Tier.APPLICATION,
            OP_CROSS_A2S_IB: Tier.APPLICATION,
        }
        for node in nodes:
            want = expected_dep_tier.get(node.op, node.tier)
            for dep in node.deps:
                if 0 <= dep < len(nodes) and nodes[dep].tier is not want:
                    errors.append(
                        f"node {node.id}: dependency {dep} is on tier {nodes[dep].tier.value}, "
                        f"expected {want.value} (cross tiers explicitly)"
                    )

        # Codec presence and resolution on network crossings.
        for node in nodes:
            if node.op in WIRE_CROSSINGS:
                needed = ("value", "delta") if node.op in (OP_CROSS_C2S_IB, OP_CROSS_S2C_IB) else ("value",)
                names = node.codec or {}
                for role in needed:
                    name = names.get(role)
                    if name is None:
                        errors.append(f"node {node.id}: crossing lacks a {role} codec")
                    elif name not in self._registry:
                        errors.append(f"node {node.id}: codec {name!r} is not registered")

        # Resolve incremental fold functions along crossing chains so a
        # receiving engine can refold deltas.
        folds: dict[int, Optional[Callable]] = {}
        for node in nodes:
            if node.kind != IBEHAVIOR:
                continue
            if node.op == OP_FOLD_I:
                folds[node.id] = node.params["f"]
            elif node.op == OP_DB_AS_IB:
                folds[node.id] = _keep_newest
            elif node.op == OP_CROSS_S2A_IB:
                # Deltas of the replica map carry why it changed but a connect
                # entry's value comes from replica initialization, so the map
                # cannot be rebuilt from deltas alone.
                folds[node.id] = None
            else:  # wire/a2s crossings inherit the underlying fold
                folds[node.id] = folds.get(node.deps[0])
            node.params["fold"] = folds[node.id]
            if node.op in (OP_CROSS_C2S_IB, OP_CROSS_S2C_IB) and folds[node.id] is None:
                errors.append(
                    f"node {node.id}: incremental value derived from a replica map cannot cross the "
                    "network (its deltas are not refoldable); convert with to_dbehavior() first"
                )

        # Main view.
        if len(self._main_views) > 1:
            errors.append(f"multiple main views declared: nodes {self._main_views}")
        if require_main_view and not self._main_views:
            errors.append("no main view declared (call main_view on a client discrete behavior)")

        if errors:
            raise GraphError("; ".join(errors))

        self._finalized = True
        main_view = self._main_views[0] if self._main_views else None
        return ProgramGraph(tuple(nodes), main_view, self._registry)


class ProgramGraph:
    """A finalized, immutable program description shared by both engine roles."""

    def __init__(self, nodes: tuple[GraphNode, ...], main_view: Optional[int], registry: CodecRegistry):
        self.nodes = nodes
        self.main_view = main_view
        self.registry = registry
        self._manifest = self._build_manifest()
        self.manifest_version: int = self._manifest["version"]
        # Precomputed node groups used by engines and transports.
        self.c2s_nodes = frozenset(n.id for n in nodes if n.op in C2S_CROSSINGS)
        self.s2c_nodes = frozenset(n.id for n in nodes if n.op in S2C_CROSSINGS)
        self.s2c_value_nodes = tuple(n.id for n in nodes if n.op == OP_CROSS_S2C_IB)
        self.client_timers = tuple(n.id for n in nodes if n.op == OP_INTERVAL)
        self.server_timers = tuple(n.id for n in nodes if n.op == OP_TICK)

    def node(self, nid: int) -> GraphNode:
        return self.nodes[nid]

    def __len__(self) -> int:
        return len(self.nodes)

    def wire_codecs(self, nid: int) -> dict[str, Codec]:
        node = self.nodes[nid]
        return {role: self.registry.get(name) for role, name in (node.codec or {}).items()}

    def _build_manifest(self) -> dict:
        entries = []
        for n in self.nodes:
            entry: dict[str, Any] = {"id": n.id, "tier": n.tier.value, "kind": n.kind, "op": n.op}
            direction = CROSSING_DIRECTION.get(n.op)
            if direction is not None:
                entry["direction"] = direction
            if n.codec:
                entry["codec"] = dict(sorted(n.codec.items()))
            entries.append(entry)
        skeleton = {"version": 0, "mainView": self.main_view, "nodes": entries}
        version = zlib.crc32(canonical_json_bytes(skeleton))
        skeleton["version"] = version
        return skeleton

    def manifest(self) -> dict:
        return self._manifest

    def manifest_json(self) -> str:
        return canonical_json(self._manifest)

    def manifest_bytes(self) -> bytes:
        return canonical_json_bytes(self._manifest)
