"""What "crossing the network atomically" buys, and what it cannot.

Two copies of the same comparison. In the first, both values cross from the
client to the session tier together: they travel in one batch and land in
one server cycle, so the server never sees them half-updated. In the second,
one of the values takes a round trip back to the client and races a locally
derived value: during the flight the comparison is simply stale, and nothing
hides that.

Run: python demos/02_tiers_and_glitches.py
"""

from tierfrp import GraphBuilder, INT
from tierfrp.sim import Scenario, run_scenario


def together():
    b = GraphBuilder()
    src = b.client.source()
    x = src.hold(1)
    y = x.map(lambda v: v + 1)
    t = x.to_session(INT).map2(y.to_session(INT), lambda a, c: a < c)
    return b.finalize(require_main_view=False), src, t


def round_trip():
    b = GraphBuilder()
    src = b.client.source()
    x = src.hold(1)
    y = x.map(lambda v: v + 1)
    t = x.to_session(INT).to_client(INT).map2(y, lambda a, c: a < c)
    return b.finalize(require_main_view=False), src, t


def script_for(src):
    return [
        ("connect", 0.0, "c1"),
        ("push", 1.0, "c1", src, 20),
        ("push", 5.0, "c1", src, 3),
    ]


program, src, t = together()
trace = run_scenario(
    Scenario(program=program, script=script_for(src), probes=[t], default_latency=0.25)
)
print("crossed together, observed on the session tier:", trace.values_of("server", t))

program, src, t = round_trip()
trace = run_scenario(
    Scenario(program=program, script=script_for(src), probes=[t], default_latency=0.25),
    check_probes=False,
)
print("round-tripped, observed on the client:         ", trace.values_of("client:c1", t))
print("probe violations (expected here):", trace.violations)
