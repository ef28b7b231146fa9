"""Deterministic in-process testbed for two-role programs.

Runs one server engine plus any number of client engines under a virtual
clock, joined by reliable FIFO links with scripted latency. Batches really
cross the links encoded — the same codecs and frames as the socket
transports — so payload bugs and wire sizes show up here.

A scenario is a program plus an ordered script of timed actions (connect,
disconnect, push a source value, change link latency). Identical scripts
produce identical traces: virtual time only advances through the scheduler,
per-link delivery is FIFO, and ties are broken by scheduling order.

Glitch probes are predicate-valued nodes registered with the scenario; a
recorded False observation is a violation, which by default fails the run.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Union

from . import graph as g
from .core import SERVER_DEST, Engine
from .graph import ProgramGraph, Ref
from .wire import Batch, WireMessage, decode_batch, decode_bootstrap, encode_batch, encode_bootstrap


class ScenarioError(Exception):
    pass


class GlitchViolation(AssertionError):
    def __init__(self, violations):
        self.violations = violations
        head = ", ".join(f"{eng} cycle {c} node {nid}" for eng, c, nid in violations[:5])
        super().__init__(f"{len(violations)} probe violation(s): {head}")


@dataclass
class Scenario:
    program: ProgramGraph
    script: list  # ordered (kind, time, ...) action tuples
    probes: list = field(default_factory=list)  # node refs/ids asserted never False
    xhr: bool = False  # request/response discipline: outputs only to the requester
    default_latency: float = 0.0
    end_time: Optional[float] = None
    fault_split_batches: bool = False  # deliver each message alone (breaks atomicity on purpose)

    def probe_ids(self) -> frozenset:
        return frozenset(p.id if isinstance(p, Ref) else p for p in self.probes)


class Trace:
    """Everything one scenario run observed."""

    def __init__(self):
        self.entries: dict[str, list] = {}
        self.violations: list = []
        self.unsolicited: int = 0  # outputs outside a request/response exchange (xhr runs)
        self.wire_log: list = []  # (time, direction, client, bytes, message count)
        self.bootstraps: dict[str, dict[int, Any]] = {}
        self.connect_cycles: dict[str, int] = {}

    def engine(self, name: str) -> list:
        return self.entries.setdefault(name, [])

    def of_node(self, engine: str, nid: Union[Ref, int]) -> list:
        nid = nid.id if isinstance(nid, Ref) else nid
        return [e for e in self.entries.get(engine, []) if e[1] == nid]

    def values_of(self, engine: str, nid: Union[Ref, int]) -> list:
        return [e[3] for e in self.of_node(engine, nid)]

    def to_jsonable(self) -> dict:
        def conv(v):
            try:
                json.dumps(v)
                return v
            except TypeError:
                return repr(v)

        return {
            "entries": {
                name: [[c, n, k, conv(p)] for (c, n, k, p) in rows] for name, rows in self.entries.items()
            },
            "unsolicited": self.unsolicited,
        }

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_jsonable(), fh, indent=1, sort_keys=True)


@dataclass
class _Link:
    latency: float
    last_delivery: float = 0.0

    def delivery_time(self, now: float) -> float:
        # FIFO even when latency drops mid-flight.
        t = max(now + self.latency, self.last_delivery)
        self.last_delivery = t
        return t


class _Client:
    def __init__(self, name: str, engine: Engine, start: float):
        self.name = name
        self.engine = engine
        self.start = start
        self.alive = True


class _Sim:
    def __init__(self, scenario: Scenario):
        self.sc = scenario
        self.program = scenario.program
        self.trace = Trace()
        self.now = 0.0
        self._heap: list = []
        self._seq = 0
        self.server = Engine(self.program, "server", trace=self.trace.engine("server"))
        self.clients: dict[str, _Client] = {}
        self.links_up: dict[str, _Link] = {}
        self.links_down: dict[str, _Link] = {}
        self.end = scenario.end_time
        if self.end is None:
            self.end = max((a[1] for a in scenario.script), default=0.0)

    def _schedule(self, time: float, fn: Callable[[], None]) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (time, self._seq, fn))

    def run(self) -> Trace:
        times = [a[1] for a in self.sc.script]
        if times != sorted(times):
            raise ScenarioError("action times must be non-decreasing")
        for action in self.sc.script:
            kind, t = action[0], action[1]
            self._schedule(t, lambda a=action: self._action(a))
        for nid in self.program.server_timers:
            period = self.program.nodes[nid].params["period"]
            self._schedule_timer_server(nid, period, 1)
        while self._heap:
            self.now, _, fn = heapq.heappop(self._heap)
            fn()
        self._check_probes()
        return self.trace

    # -- actions -----------------------------------------------------------

    def _action(self, action) -> None:
        kind = action[0]
        if kind == "connect":
            _, _, name = action
            self._connect(name)
        elif kind == "disconnect":
            _, _, name = action
            self._disconnect(name)
        elif kind == "push":
            _, _, where, ref, value = action
            self._push(where, ref, value)
        elif kind == "set_latency":
            _, _, name, c2s, s2c = action
            if name not in self.links_up:
                raise ScenarioError(f"no link for client {name!r}")
            if c2s is not None:
                self.links_up[name].latency = c2s
            if s2c is not None:
                self.links_down[name].latency = s2c
        else:
            raise ScenarioError(f"unknown action {kind!r}")

    def _connect(self, name: str) -> None:
        if name in self.clients:
            raise ScenarioError(f"client {name!r} already connected")
        self.links_up[name] = _Link(self.sc.default_latency)
        self.links_down[name] = _Link(self.sc.default_latency)
        result, boot = self.server.connect(name)
        self.trace.connect_cycles[name] = result.cycle
        self.trace.bootstraps[name] = dict(boot)
        payload = encode_bootstrap(
            _bootstrap_obj(name, self.program, boot), self.program
        )
        self.trace.wire_log.append((self.now, "s2c", name, len(payload), len(boot)))
        # The connect cycle's outputs for the new client are already folded
        # into its bootstrap values, which are read after the cycle.
        self._dispatch_outputs(result.outputs, origin=None, skip=name)
        link = self.links_down[name]
        self._schedule(link.delivery_time(self.now), lambda: self._boot_client(name, payload))

    def _boot_client(self, name: str, payload: bytes) -> None:
        if name not in self.server.live:
            return  # disconnected while the bootstrap was in flight
        boot = decode_bootstrap(payload, self.program)
        engine = Engine(
            self.program, "client", bootstrap=dict(boot.values), trace=self.trace.engine(f"client:{name}")
        )
        client = _Client(name, engine, self.now)
        self.clients[name] = client
        engine.run_empty_cycle()
        for nid in self.program.client_timers:
            period = self.program.nodes[nid].params["period"]
            self._schedule_timer_client(name, nid, period, 1)

    def _disconnect(self, name: str) -> None:
        client = self.clients.get(name)
        if client is not None:
            client.alive = False
        result = self.server.disconnect(name)
        self._dispatch_outputs(result.outputs, origin=None)

    def _push(self, where: Optional[str], ref, value) -> None:
        nid = ref.id if isinstance(ref, Ref) else ref
        if not isinstance(nid, int) or nid >= len(self.program.nodes):
            raise ScenarioError(f"push references unknown node {nid!r}")
        if self.program.nodes[nid].op not in (g.OP_SOURCE, g.OP_SOURCE_EFFECT):
            raise ScenarioError(f"push target {nid} is not an event source")
        if where is None:
            result = self.server._cycle({nid: value})
            self._dispatch_outputs(result.outputs, origin=None)
        else:
            client = self._live_client(where)
            result = client.engine._cycle({nid: value})
            self._flush_client(client, result)

    def _live_client(self, name: str) -> _Client:
        client = self.clients.get(name)
        if client is None or not client.alive:
            raise ScenarioError(f"client {name!r} is not running")
        return client

    # -- timers ------------------------------------------------------------

    def _schedule_timer_server(self, nid: int, period: float, k: int) -> None:
        t = period * k
        if t > self.end:
            return
        def fire():
            result = self.server.tick(nid, self.now)
            self._dispatch_outputs(result.outputs, origin=None)
            self._schedule_timer_server(nid, period, k + 1)
        self._schedule(t, fire)

    def _schedule_timer_client(self, name: str, nid: int, period: float, k: int) -> None:
        client = self.clients.get(name)
        if client is None:
            return
        t = client.start + period * k
        if t > self.end:
            return
        def fire():
            if not client.alive:
                return
            result = client.engine.tick(nid, self.now - client.start)
            self._flush_client(client, result)
            self._schedule_timer_client(name, nid, period, k + 1)
        self._schedule(t, fire)

    # -- links -------------------------------------------------------------

    def _flush_client(self, client: _Client, result) -> None:
        msgs = result.outputs.get(SERVER_DEST)
        if not msgs:
            return
        batches = [[m] for m in msgs] if self.sc.fault_split_batches else [msgs]
        for chunk in batches:
            data = encode_batch(
                Batch(result.cycle, tuple(WireMessage(n, v) for n, v in chunk)), self.program
            )
            self.trace.wire_log.append((self.now, "c2s", client.name, len(data), len(chunk)))
            link = self.links_up[client.name]
            self._schedule(link.delivery_time(self.now), lambda d=data, c=client: self._deliver_to_server(c, d))

    def _deliver_to_server(self, client: _Client, data: bytes) -> None:
        if client.name not in self.server.live:
            return  # disconnected while in flight
        batch = decode_batch(data, self.program, "c2s")
        result = self.server.process_batch(client.name, [(m.node, m.payload) for m in batch.messages])
        self._dispatch_outputs(result.outputs, origin=client.name)

    def _dispatch_outputs(self, outputs: dict, origin: Optional[str], skip: Optional[str] = None) -> None:
        for dest, msgs in outputs.items():
            if not msgs or dest == skip:
                continue
            if self.sc.xhr and dest != origin:
                # Request/response discipline: the server cannot push.
                self.trace.unsolicited += len(msgs)
                continue
            batches = [[m] for m in msgs] if self.sc.fault_split_batches else [msgs]
            for chunk in batches:
                data = encode_batch(
                    Batch(self.server.cycle, tuple(WireMessage(n, v) for n, v in chunk)), self.program
                )
                self.trace.wire_log.append((self.now, "s2c", dest, len(data), len(chunk)))
                link = self.links_down.get(dest)
                if link is None:
                    continue
                self._schedule(link.delivery_time(self.now), lambda d=data, t=dest: self._deliver_to_client(t, d))

    def _deliver_to_client(self, dest: str, data: bytes) -> None:
        client = self.clients.get(dest)
        if client is None or not client.alive:
            return
        batch = decode_batch(data, self.program, "s2c")
        result = client.engine.apply_server_batch([(m.node, m.payload) for m in batch.messages])
        self._flush_client(client, result)

    # -- probes ------------------------------------------------------------

    def _check_probes(self) -> None:
        probe_ids = self.sc.probe_ids()
        if not probe_ids:
            return
        for engine, rows in self.trace.entries.items():
            for cycle, nid, kind, payload in rows:
                if nid not in probe_ids:
                    continue
                if kind == "step" and isinstance(payload, tuple) and len(payload) == 2:
                    payload = payload[0]  # incremental: check the folded value
                values = payload.values() if isinstance(payload, dict) else [payload]
                if any(v is False for v in values):
                    self.trace.violations.append((engine, cycle, nid))


def _bootstrap_obj(name: str, program: ProgramGraph, boot: dict[int, Any]):
    from .wire import BootstrapPayload

    return BootstrapPayload(
        client=name, manifest_version=program.manifest_version, values=tuple(sorted(boot.items()))
    )


def run_scenario(scenario: Scenario, *, check_probes: bool = True) -> Trace:
    """Execute the scenario; raises :class:`GlitchViolation` on probe failure."""
    trace = _Sim(scenario).run()
    if check_probes and trace.violations:
        raise GlitchViolation(trace.violations)
    return trace


def load_scenario(path, programs: dict[str, Callable[[], Any]]) -> Scenario:
    """Read a scenario from a JSON file; ``programs`` maps names to builders."""
    with open(path) as fh:
        obj = json.load(fh)
    try:
        build = programs[obj["program"]]
    except KeyError:
        raise ScenarioError(f"unknown program {obj.get('program')!r}") from None
    built = build()
    program = built if isinstance(built, ProgramGraph) else built[0]
    script = [tuple(a) for a in obj.get("actions", [])]
    times = [a[1] for a in script]
    if times != sorted(times):
        raise ScenarioError("action times must be non-decreasing")
    return Scenario(
        program=program,
        script=script,
        xhr=bool(obj.get("xhr", False)),
        default_latency=float(obj.get("latency", 0.0)),
        end_time=obj.get("end"),
    )
