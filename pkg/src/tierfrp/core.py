"""Synchronous propagation engine.

One :class:`Engine` executes one side of a finalized program: the client role
runs the client tier, the server role runs the session and application tiers
with the session tier replicated per connected client. Both roles are driven
by discrete propagation cycles: a set of simultaneous pulses enters, every
affected node computes exactly once in dependency order, and any values bound
for the other side come out as per-destination output batches.

The engine itself is single-threaded and performs no I/O; runtimes, the
simulation harness and tests feed it stimuli one cycle at a time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Optional, Union

from . import graph as g
from .clients import ClientToken, Connected, Disconnected
from .graph import ProgramGraph, Ref, Tier

# Destination key for client-role output batches (the one possible peer).
SERVER_DEST = "server"

_MISSING = object()

# Stateful ops whose current value is stored per execution context. Everything
# else either never holds a value or reads through to its dependency.
_STORED_OPS = frozenset(
    {g.OP_FOLD, g.OP_FOLD_I, g.OP_DB_MAP, g.OP_DB_MAP2, g.OP_DB_SNAPSHOT, g.OP_CROSS_C2S_IB, g.OP_CROSS_S2C_IB}
)

_PULSE_OPS = frozenset(
    {
        g.OP_SOURCE,
        g.OP_SOURCE_EFFECT,
        g.OP_INTERVAL,
        g.OP_TICK,
        g.OP_ASYNC,
        g.OP_ASYNC_ERRORS,
        g.OP_CLIENT_CHANGES,
        g.OP_CROSS_C2S_EVENT,
        g.OP_CROSS_S2C_EVENT,
    }
)


class EngineError(Exception):
    """Misuse of an engine: foreign nodes, unknown clients, malformed input."""


@dataclass(frozen=True)
class FireResult:
    cycle: int
    fired_nodes: frozenset


@dataclass
class CycleResult:
    cycle: int
    fired: frozenset
    # destination -> ordered (node id, payload) pairs produced by this cycle;
    # destinations are client tokens on the server, SERVER_DEST on the client.
    outputs: dict
    # deferred computations requested this cycle: (async node id, replica, task)
    tasks: list
    view_stepped: bool = False
    view_value: Any = None


@dataclass
class SessionReplicaState:
    client: ClientToken
    connected_at_cycle: int


# Trace entries are (cycle, node id, record kind, payload) tuples; payload is
# the fired value, the new step value, or (value, delta) for incremental steps.
TraceEntry = tuple


class Engine:
    def __init__(
        self,
        program: ProgramGraph,
        role: str,
        *,
        bootstrap: Optional[dict[int, Any]] = None,
        trace: Optional[list] = None,
    ):
        if role not in ("client", "server"):
            raise EngineError(f"role must be 'client' or 'server', got {role!r}")
        self.program = program
        self.role = role
        self.cycle = -1
        self.trace = trace
        self._server = role == "server"
        self._tiers = g.SERVER_TIERS if self._server else frozenset({Tier.CLIENT})

        nodes = program.nodes
        if self._server:
            self._eval_nodes = [n for n in nodes if n.tier in g.SERVER_TIERS or n.op in g.S2C_CROSSINGS]
        else:
            self._eval_nodes = [n for n in nodes if n.tier is Tier.CLIENT or n.op in g.C2S_CROSSINGS]
        self._local_ids = frozenset(
            n.id for n in self._eval_nodes if n.tier in self._tiers
        )
        self._delayed_nodes = [n for n in self._eval_nodes if n.op == g.OP_DELAYED and n.tier in self._tiers]

        self.live: dict[ClientToken, SessionReplicaState] = {}
        self._state: dict[int, Any] = {}
        self._rstate: dict[int, dict[ClientToken, Any]] = {}
        self._memo: dict[tuple, tuple[int, Any]] = {}
        self._delay_cap: dict[int, Any] = {}
        self._sinks: dict[int, Optional[Callable[[], Any]]] = {}
        self._ib_last: dict[tuple, Any] = {}
        self._cycle_change = None  # lifecycle change represented in the running cycle

        self._init_static(bootstrap)

    # -- initialization ----------------------------------------------------

    def _init_static(self, bootstrap: Optional[dict[int, Any]]) -> None:
        for node in self.program.nodes:
            if node.op == g.OP_SINK and node.tier in self._tiers:
                self._sinks[node.id] = None
        if self._server:
            for node in self.program.nodes:
                if node.tier is Tier.APPLICATION and node.op in _STORED_OPS:
                    self._state[node.id] = self._initial_value(node, None)
                elif node.tier is Tier.SESSION and node.op in _STORED_OPS:
                    self._rstate[node.id] = {}
        else:
            needed = [n for n in self.program.nodes if n.op == g.OP_CROSS_S2C_IB]
            if needed and bootstrap is None:
                raise EngineError(
                    "client engine needs bootstrap values for nodes "
                    f"{[n.id for n in needed]}"
                )
            for node in self.program.nodes:
                if node.tier is not Tier.CLIENT or node.op not in _STORED_OPS:
                    continue
                if node.op == g.OP_CROSS_S2C_IB:
                    if node.id not in (bootstrap or {}):
                        raise EngineError(f"bootstrap value missing for crossing node {node.id}")
                    self._state[node.id] = bootstrap[node.id]
                else:
                    self._state[node.id] = self._initial_value(node, None)

    def _initial_value(self, node: g.GraphNode, rep) -> Any:
        op = node.op
        if op in (g.OP_FOLD, g.OP_FOLD_I):
            return node.params["init"]
        if op == g.OP_DB_MAP:
            return node.params["f"](self._cur(node.deps[0], rep))
        if op in (g.OP_DB_MAP2, g.OP_DB_SNAPSHOT):
            return node.params["f"](self._cur(node.deps[0], rep), self._cur(node.deps[1], rep))
        if op == g.OP_CROSS_C2S_IB:
            # The connecting client starts from the statically known initial
            # of its side of the chain, so the replica copy starts there too.
            return self._client_initial(node.deps[0], rep)
        raise EngineError(f"node {node.id} ({op}) has no initial value")

    def _client_initial(self, nid: int, rep) -> Any:
        node = self.program.nodes[nid]
        op = node.op
        if op in (g.OP_FOLD, g.OP_FOLD_I):
            return node.params["init"]
        if op == g.OP_DB_CONST:
            return node.params["value"]
        if op == g.OP_DB_MAP:
            return node.params["f"](self._client_initial(node.deps[0], rep))
        if op in (g.OP_DB_MAP2, g.OP_DB_SNAPSHOT):
            return node.params["f"](
                self._client_initial(node.deps[0], rep), self._client_initial(node.deps[1], rep)
            )
        if op in (g.OP_IB_TO_DB, g.OP_DB_AS_IB):
            return self._client_initial(node.deps[0], rep)
        if op == g.OP_CROSS_S2C_IB:
            # Connection-time value of the server-side chain.
            return self._cur(node.deps[0], rep)
        raise EngineError(f"cannot derive a connection-time value for client node {nid} ({op})")

    # -- value access ------------------------------------------------------

    def _cur(self, nid: int, rep) -> Any:
        """Current value of a discrete or incremental behavior node."""
        node = self.program.nodes[nid]
        op = node.op
        if op == g.OP_DB_CONST:
            return node.params["value"]
        if op == g.OP_SESSION_CLIENT:
            return rep
        if op in (g.OP_IB_TO_DB, g.OP_DB_AS_IB):
            return self._cur(node.deps[0], rep)
        if op == g.OP_CROSS_A2S_IB:
            return self._cur(node.deps[0], None)
        if op == g.OP_CROSS_S2A_IB:
            return {t: self._cur(node.deps[0], t) for t in self.live}
        if self._is_replicated(node):
            try:
                return self._rstate[nid][rep]
            except KeyError:
                raise EngineError(f"node {nid} has no state for client {rep!r}") from None
        try:
            return self._state[nid]
        except KeyError:
            raise EngineError(f"node {nid} has no value on the {self.role} engine") from None

    def _read(self, nid: int, rep) -> Any:
        """Read any behavior-like node within the running cycle."""
        node = self.program.nodes[nid]
        if node.kind in (g.DBEHAVIOR, g.IBEHAVIOR):
            return self._cur(nid, rep)
        op = node.op
        if op == g.OP_DELAYED:
            cap = self._delay_cap.get(nid, _MISSING)
            if cap is _MISSING:
                # Outside any cycle (or before the first): the target's value.
                return self._cur(node.params["target"], rep)
            if isinstance(cap, dict) and self._is_replicated(self.program.nodes[node.params["target"]]):
                return cap[rep]
            return cap
        if op == g.OP_FROM_POLL:
            return self._poll(nid, rep, node.params["f"])
        if op == g.OP_SINK:
            fn = self._sinks.get(nid)
            if fn is None:
                return node.params["default"]
            return self._poll(nid, rep, fn)
        if op == g.OP_CROSS_A2S_BEHAVIOR:
            return self._read(node.deps[0], None)
        if op == g.OP_CROSS_S2A_BEHAVIOR:
            return {t: self._read(node.deps[0], t) for t in self.live}
        raise EngineError(f"node {nid} ({op}) is not readable")

    def _poll(self, nid: int, rep, fn: Callable[[], Any]) -> Any:
        key = (nid, rep)
        hit = self._memo.get(key)
        if hit is not None and hit[0] == self.cycle:
            return hit[1]
        value = fn()
        self._memo[key] = (self.cycle, value)
        return value

    def _is_replicated(self, node: g.GraphNode) -> bool:
        return self._server and node.tier is Tier.SESSION

    # -- public surface ----------------------------------------------------

    def fire(self, pulses: list[tuple[Union[Ref, int], Any]]) -> FireResult:
        """Run one cycle from simultaneous external source pulses."""
        result = self.fire_with_outputs(pulses)
        return FireResult(result.cycle, result.fired)

    def fire_with_outputs(self, pulses: list[tuple[Union[Ref, int], Any]]) -> CycleResult:
        seen = set()
        cycle_pulses: dict[int, Any] = {}
        for ref, value in pulses:
            nid = ref.id if isinstance(ref, Ref) else ref
            node = self.program.nodes[nid]
            if node.op not in (g.OP_SOURCE, g.OP_SOURCE_EFFECT):
                raise EngineError(f"node {nid} is not an event source")
            if node.tier not in self._tiers:
                raise EngineError(
                    f"source {nid} lives on tier {node.tier.value}, outside this {self.role} engine"
                )
            if nid in seen:
                raise EngineError(f"source {nid} pulsed twice in one fire call")
            seen.add(nid)
            cycle_pulses[nid] = value
        return self._cycle(cycle_pulses)

    def tick(self, nid: int, value: Any) -> CycleResult:
        """One cycle for an engine-driven timer pulse."""
        node = self.program.nodes[nid]
        if node.op not in (g.OP_TICK, g.OP_INTERVAL) or node.tier not in self._tiers:
            raise EngineError(f"node {nid} is not a timer of this engine")
        if self._is_replicated(node):
            # The tick is simultaneous across all session replicas.
            return self._cycle({nid: {t: value for t in self.live}})
        return self._cycle({nid: value})

    def async_done(self, nid: int, value: Any, rep=None, *, error: bool = False) -> CycleResult:
        node = self.program.nodes[nid]
        if node.op != g.OP_ASYNC or node.tier not in self._tiers:
            raise EngineError(f"node {nid} is not an async execution node of this engine")
        target = node.params.get("error_node") if error else nid
        if error and target is None:
            raise EngineError(f"async node {nid} has no companion error event")
        if self._is_replicated(node):
            return self._cycle({target: {rep: value}})
        return self._cycle({target: value})

    # server lifecycle

    def connect(self, token: ClientToken) -> tuple[CycleResult, dict[int, Any]]:
        """Create the replica, fire the lifecycle change, collect bootstrap values."""
        if not self._server:
            raise EngineError("connect() is a server-role operation")
        if token in self.live:
            raise EngineError(f"client {token!r} is already connected")
        result = self._cycle({}, lifecycle=("connect", token))
        bootstrap = {
            n.id: self._cur(n.deps[0], token)
            for n in self.program.nodes
            if n.op == g.OP_CROSS_S2C_IB
        }
        return result, bootstrap

    def disconnect(self, token: ClientToken) -> CycleResult:
        if not self._server:
            raise EngineError("disconnect() is a server-role operation")
        if token not in self.live:
            raise EngineError(f"client {token!r} is not connected")
        return self._cycle({}, lifecycle=("disconnect", token))

    def process_batch(self, token: ClientToken, messages: list[tuple[int, Any]]) -> CycleResult:
        """Inject one client batch as a single simultaneous server cycle."""
        if not self._server:
            raise EngineError("process_batch() is a server-role operation")
        if token not in self.live:
            raise EngineError(f"client {token!r} is not connected")
        pulses: dict[int, Any] = {}
        for nid, value in messages:
            if nid not in self.program.c2s_nodes:
                raise EngineError(f"node {nid} is not a client-to-session crossing")
            if nid in pulses:
                raise EngineError(f"node {nid} appears twice in one batch")
            pulses[nid] = {token: value}
        return self._cycle(pulses)

    # client ingress

    def apply_server_batch(self, messages: list[tuple[int, Any]]) -> CycleResult:
        """Inject one server batch as a single simultaneous client cycle."""
        if self._server:
            raise EngineError("apply_server_batch() is a client-role operation")
        pulses: dict[int, Any] = {}
        for nid, value in messages:
            if nid not in self.program.s2c_nodes:
                raise EngineError(f"node {nid} is not a session-to-client crossing")
            if nid in pulses:
                raise EngineError(f"node {nid} appears twice in one batch")
            pulses[nid] = value
        return self._cycle(pulses)

    def run_empty_cycle(self) -> CycleResult:
        return self._cycle({})

    # inspection / wiring

    def read(self, ref: Union[Ref, int], token: Optional[ClientToken] = None) -> Any:
        nid = ref.id if isinstance(ref, Ref) else ref
        node = self.program.nodes[nid]
        if node.kind == g.EVENT:
            raise EngineError(f"node {nid} is an event; events hold no value between cycles")
        if self._is_replicated(node) and token is None and node.op not in (g.OP_CROSS_A2S_IB,):
            raise EngineError(f"node {nid} is replicated per client; pass a token")
        return self._read(nid, token)

    def last_delta(self, ref: Union[Ref, int], token: Optional[ClientToken] = None) -> Any:
        nid = ref.id if isinstance(ref, Ref) else ref
        return self._ib_last.get((nid, token))

    def set_sink(self, ref: Union[Ref, int], fn: Optional[Callable[[], Any]]) -> None:
        nid = ref.id if isinstance(ref, Ref) else ref
        if self.program.nodes[nid].op != g.OP_SINK:
            raise EngineError(f"node {nid} is not a behavior sink")
        self._sinks[nid] = fn

    def clear_sink(self, ref: Union[Ref, int]) -> None:
        self.set_sink(ref, None)

    def installers(self) -> list[tuple[int, Callable]]:
        """(node id, install function) pairs for local effectful sources."""
        return [
            (n.id, n.params["install"])
            for n in self.program.nodes
            if n.op == g.OP_SOURCE_EFFECT and n.tier in self._tiers
        ]

    # -- the cycle ---------------------------------------------------------

    def _cycle(self, pulses: dict[int, Any], lifecycle=None) -> CycleResult:
        nodes = self.program.nodes
        self.cycle += 1
        self._cycle_change = None

        if lifecycle is not None:
            what, token = lifecycle
            if what == "connect":
                self.live[token] = SessionReplicaState(token, self.cycle)
                for node in nodes:
                    if node.tier is Tier.SESSION and node.op in _STORED_OPS:
                        self._rstate[node.id][token] = self._initial_value(node, token)
                self._cycle_change = Connected(token)
            else:
                self.live.pop(token)
                for store in self._rstate.values():
                    store.pop(token, None)
                self._cycle_change = Disconnected(token)
            for node in nodes:
                if node.op == g.OP_CLIENT_CHANGES:
                    pulses = dict(pulses)
                    pulses[node.id] = self._cycle_change

        # Pre-cycle capture for delayed reads: the targets' values as of the
        # end of the previous cycle.
        self._delay_cap.clear()
        for node in self._delayed_nodes:
            target = node.params["target"]
            if self._is_replicated(nodes[target]):
                self._delay_cap[node.id] = {t: self._cur(target, t) for t in self.live}
            else:
                self._delay_cap[node.id] = self._cur(target, None)

        ev: dict[int, Any] = {}
        st: dict[int, Any] = {}
        dl: dict[int, Any] = {}
        outputs: dict[Any, list] = {}
        tasks: list = []

        for node in self._eval_nodes:
            self._eval(node, pulses, ev, st, dl, outputs, tasks)

        if self.trace is not None:
            self._record_trace(ev, st, dl)

        view_stepped = False
        view_value = None
        mv = self.program.main_view
        if not self._server and mv is not None and mv in st:
            view_stepped = True
            view_value = st[mv]

        fired = frozenset(ev) | frozenset(st)
        return CycleResult(self.cycle, fired, outputs, tasks, view_stepped, view_value)

    def _eval(self, node, pulses, ev, st, dl, outputs, tasks) -> None:
        op = node.op
        nid = node.id
        deps = node.deps

        if op in _PULSE_OPS:
            # Egress side of event crossings: forward the dependency's pulses.
            if op == g.OP_CROSS_S2C_EVENT and self._server:
                src = ev.get(deps[0])
                if src:
                    for t, v in src.items():
                        outputs.setdefault(t, []).append((nid, v))
                return
            if op == g.OP_CROSS_C2S_EVENT and not self._server:
                if deps[0] in ev:
                    outputs.setdefault(SERVER_DEST, []).append((nid, ev[deps[0]]))
                return
            if nid in pulses:
                ev[nid] = pulses[nid] if not self._is_replicated(node) else dict(pulses[nid])
            if op == g.OP_ASYNC and deps and deps[0] in ev:
                src = ev[deps[0]]
                if self._is_replicated(node):
                    for t, task in src.items():
                        tasks.append((nid, t, task))
                else:
                    tasks.append((nid, None, src))
            return

        if op == g.OP_MAP:
            if deps[0] in ev:
                f = node.params["f"]
                src = ev[deps[0]]
                ev[nid] = {t: f(v) for t, v in src.items()} if self._is_replicated(node) else f(src)
            return

        if op in (g.OP_FOLD, g.OP_FOLD_I):
            if deps[0] not in ev:
                return
            f = node.params["f"]
            incremental = op == g.OP_FOLD_I
            if self._is_replicated(node):
                store = self._rstate[nid]
                news, deltas = {}, {}
                for t, v in ev[deps[0]].items():
                    if t not in store:
                        continue  # pulse for a replica torn down this cycle
                    store[t] = news[t] = f(store[t], v)
                    deltas[t] = v
                if news:
                    st[nid] = news
                    if incremental:
                        dl[nid] = deltas
                        for t, v in deltas.items():
                            self._ib_last[(nid, t)] = v
            else:
                v = ev[deps[0]]
                self._state[nid] = new = f(self._state[nid], v)
                st[nid] = new
                if incremental:
                    dl[nid] = v
                    self._ib_last[(nid, None)] = v
            return

        if op == g.OP_DB_MAP:
            if deps[0] in st:
                f = node.params["f"]
                if self._is_replicated(node):
                    store = self._rstate[nid]
                    news = {}
                    for t in st[deps[0]]:
                        store[t] = news[t] = f(self._cur(deps[0], t))
                    st[nid] = news
                else:
                    self._state[nid] = new = f(self._cur(deps[0], None))
                    st[nid] = new
            return

        if op in (g.OP_DB_MAP2, g.OP_DB_SNAPSHOT):
            trigger = deps[1:] if op == g.OP_DB_SNAPSHOT else deps
            f = node.params["f"]
            if self._is_replicated(node):
                affected: set = set()
                for d in trigger:
                    if d in st:
                        affected.update(st[d])
                if affected:
                    store = self._rstate[nid]
                    news = {}
                    for t in affected:
                        store[t] = news[t] = f(self._cur(deps[0], t), self._cur(deps[1], t))
                    st[nid] = news
            else:
                if any(d in st for d in trigger):
                    self._state[nid] = new = f(self._cur(deps[0], None), self._cur(deps[1], None))
                    st[nid] = new
            return

        if op == g.OP_DB_CHANGES or op == g.OP_IB_CHANGES:
            if deps[0] in st:
                src = st[deps[0]]
                ev[nid] = dict(src) if self._is_replicated(node) else src
            return

        if op == g.OP_IB_DELTAS:
            if deps[0] in dl:
                src = dl[deps[0]]
                ev[nid] = dict(src) if self._is_replicated(node) else src
            return

        if op == g.OP_SNAPSHOT:
            b, e = deps
            if e in ev:
                f = node.params["f"]
                if self._is_replicated(node):
                    ev[nid] = {t: f(self._read(b, t), v) for t, v in ev[e].items()}
                else:
                    ev[nid] = f(self._read(b, None), ev[e])
            return

        if op == g.OP_IB_TO_DB:
            if deps[0] in st:
                st[nid] = st[deps[0]]
            return

        if op == g.OP_DB_AS_IB:
            if deps[0] in st:
                src = st[deps[0]]
                st[nid] = src
                dl[nid] = src
                if self._is_replicated(node):
                    for t, v in src.items():
                        self._ib_last[(nid, t)] = v
                else:
                    self._ib_last[(nid, None)] = src
            return

        if op == g.OP_CROSS_C2S_IB:
            if self._server:
                if nid in pulses:
                    fold = node.params["fold"]
                    store = self._rstate[nid]
                    news, deltas = {}, {}
                    for t, d in pulses[nid].items():
                        if t not in store:
                            continue
                        store[t] = news[t] = fold(store[t], d)
                        deltas[t] = d
                        self._ib_last[(nid, t)] = d
                    if news:
                        st[nid] = news
                        dl[nid] = deltas
            else:
                # Egress: the client ships only the delta.
                if deps[0] in dl:
                    outputs.setdefault(SERVER_DEST, []).append((nid, dl[deps[0]]))
            return

        if op == g.OP_CROSS_S2C_IB:
            if self._server:
                if deps[0] in dl:
                    for t, d in dl[deps[0]].items():
                        outputs.setdefault(t, []).append((nid, d))
            else:
                if nid in pulses:
                    d = pulses[nid]
                    fold = node.params["fold"]
                    self._state[nid] = new = fold(self._state[nid], d)
                    st[nid] = new
                    dl[nid] = d
                    self._ib_last[(nid, None)] = d
            return

        if op == g.OP_CROSS_A2S_EVENT:
            if deps[0] in ev:
                v = ev[deps[0]]
                ev[nid] = {t: v for t in self.live}
            return

        if op == g.OP_CROSS_S2A_EVENT:
            src = ev.get(deps[0])
            if src:
                ev[nid] = dict(src)
            return

        if op == g.OP_CROSS_A2S_IB:
            if deps[0] in st:
                v, d = st[deps[0]], dl.get(deps[0])
                st[nid] = {t: v for t in self.live}
                dl[nid] = {t: d for t in self.live}
                for t in self.live:
                    self._ib_last[(nid, t)] = d
            return

        if op == g.OP_CROSS_S2A_IB:
            if deps[0] in dl or self._cycle_change is not None:
                st[nid] = {t: self._cur(deps[0], t) for t in self.live}
                delta = (dict(dl.get(deps[0], {})), self._cycle_change)
                dl[nid] = delta
                self._ib_last[(nid, None)] = delta
            return

        # Behaviors (delayed, poll, sink, behavior crossings), constants and
        # the per-replica token are read on demand; nothing to do eagerly.
        return

    def _record_trace(self, ev, st, dl) -> None:
        nodes = self.program.nodes
        for nid in sorted(set(ev) | set(st)):
            node = nodes[nid]
            if node.kind == g.EVENT:
                self.trace.append((self.cycle, nid, "fire", ev[nid]))
            elif node.kind == g.IBEHAVIOR:
                self.trace.append((self.cycle, nid, "step", (st[nid], dl.get(nid))))
            else:
                self.trace.append((self.cycle, nid, "step", st[nid]))
