"""Graph construction, finalization diagnostics, and the manifest contract."""

import json

import pytest

from tierfrp import GraphBuilder, GraphError, INT, STR, list_of
from tierfrp.graph import OP_CROSS_C2S_IB, OP_CROSS_S2C_IB, Tier


def two_tier_compare():
    b = GraphBuilder()
    src = b.client.source()
    x = src.hold(1)
    y = x.map(lambda v: v + 1)
    xs = x.to_session(INT)
    ys = y.to_session(INT)
    t = xs.map2(ys, lambda a, c: a < c)
    return b, (src, x, y, xs, ys, t)


class TestFinalize:
    def test_ids_dense_construction_order(self):
        b, _ = two_tier_compare()
        program = b.finalize(require_main_view=False)
        assert [n.id for n in program.nodes] == list(range(len(program.nodes)))

    def test_compare_graph_node_count(self):
        # source + hold + map + two crossings (each an incremental triplet:
        # as-incremental, wire node, back to discrete) + the comparison.
        b, _ = two_tier_compare()
        program = b.finalize(require_main_view=False)
        assert len(program.nodes) == 10

    def test_forced_cycle_detected(self):
        b = GraphBuilder()
        src = b.client.source()
        out = src.map(lambda v: v)
        node = out._node()
        node.deps = (node.id,)  # self-loop, unreachable through the public API
        with pytest.raises(GraphError, match="cycles must pass through a delayed node"):
            b.finalize(require_main_view=False)

    def test_cross_tier_dep_rejected_at_construction(self):
        b = GraphBuilder()
        cx = b.client.source().hold(0)
        sx = b.client.source().to_session(INT).hold(0)
        with pytest.raises(GraphError, match="different tiers"):
            cx.map2(sx, lambda a, c: a + c)

    def test_forced_cross_tier_dep_detected(self):
        b = GraphBuilder()
        cdb = b.client.source().hold(0)
        out = cdb.map(lambda v: v)
        out._node().tier = Tier.SESSION  # corrupt: session node reading client state
        with pytest.raises(GraphError, match="cross tiers explicitly"):
            b.finalize(require_main_view=False)

    def test_missing_codec_detected(self):
        b = GraphBuilder()
        crossing = b.client.source().to_session(INT)
        crossing._node().codec = {"value": "no-such-codec"}
        with pytest.raises(GraphError, match="not registered"):
            b.finalize(require_main_view=False)

    def test_unresolved_delayed_target(self):
        b = GraphBuilder()
        b.client.delayed(lambda: (_ for _ in ()).throw(LookupError("missing")))
        with pytest.raises(GraphError, match="delayed target unresolved"):
            b.finalize(require_main_view=False)

    def test_delayed_target_must_be_discrete(self):
        b = GraphBuilder()
        poll = b.client.from_poll(lambda: 1)
        b.client.delayed(lambda: poll)
        with pytest.raises(GraphError, match="must be a discrete behavior"):
            b.finalize(require_main_view=False)

    def test_missing_main_view(self):
        b = GraphBuilder()
        b.client.source()
        with pytest.raises(GraphError, match="no main view"):
            b.finalize()

    def test_duplicate_main_view(self):
        b = GraphBuilder()
        v1 = b.client.constant(1)
        v2 = b.client.constant(2)
        b.main_view(v1)
        b.main_view(v2)
        with pytest.raises(GraphError, match="multiple main views"):
            b.finalize()

    def test_main_view_must_be_client_discrete(self):
        b = GraphBuilder()
        sdb = b.client.source().to_session(INT).hold(0)
        with pytest.raises(GraphError, match="client-tier discrete behavior"):
            b.main_view(sdb)

    def test_non_discrete_behavior_cannot_cross_network(self):
        b = GraphBuilder()
        poll = b.client.from_poll(lambda: 1)
        with pytest.raises(GraphError, match="cross only between server tiers"):
            poll.to_session()

    def test_replica_map_deltas_cannot_cross_network(self):
        b = GraphBuilder()
        per = b.session.client_token().map(lambda t: t)
        app_map = per.to_app()  # incremental whose deltas describe replicas
        app_map.to_session().to_client(list_of(STR), list_of(STR))
        with pytest.raises(GraphError, match="cannot cross the network"):
            b.finalize(require_main_view=False)
        # converting to a discrete behavior first is the supported route
        b2 = GraphBuilder()
        per2 = b2.session.client_token().map(lambda t: t)
        per2.to_app().to_dbehavior()
        b2.finalize(require_main_view=False)

    def test_finalize_is_terminal(self):
        b = GraphBuilder()
        b.client.source()
        b.finalize(require_main_view=False)
        with pytest.raises(GraphError, match="already finalized"):
            b.client.source()


class TestCrossingTypes:
    def test_event_crossing_directions(self):
        b = GraphBuilder()
        ce = b.client.source()
        se = ce.to_session(INT)
        ae = se.to_app()
        back = ae.to_session()
        down = back.to_client(INT)
        assert (se.tier, ae.tier, back.tier, down.tier) == (
            Tier.SESSION,
            Tier.APPLICATION,
            Tier.SESSION,
            Tier.CLIENT,
        )

    def test_wrong_direction_raises(self):
        b = GraphBuilder()
        se = b.client.source().to_session(INT)
        with pytest.raises(GraphError, match="already on the session tier"):
            se.to_session(INT)
        ce = b.client.source()
        with pytest.raises(GraphError, match="only session events"):
            ce.to_app()

    def test_event_crossing_requires_codec(self):
        b = GraphBuilder()
        with pytest.raises(GraphError, match="needs a codec"):
            b.client.source().to_session()

    def test_clients_intrinsics_cached(self):
        b = GraphBuilder()
        assert b.app.client_changes().id == b.app.client_changes().id
        assert b.app.clients().id == b.app.clients().id

    def test_intrinsics_tier_checked(self):
        b = GraphBuilder()
        with pytest.raises(GraphError):
            b.client.client_changes()
        with pytest.raises(GraphError):
            b.app.client_token()
        with pytest.raises(GraphError):
            b.session.source()


class TestManifest:
    def build(self):
        b = GraphBuilder()
        src = b.client.source()
        msgs = src.to_session(codec=STR)
        log = msgs.to_app().map(lambda m: list(m.values())).fold_incremental([], lambda a, n: n + a)
        log_c = log.to_session().to_client(list_of(STR), list_of(STR))
        b.main_view(log_c.to_dbehavior())
        return b.finalize()

    def test_deterministic_across_builds(self):
        p1, p2 = self.build(), self.build()
        assert p1.manifest_bytes() == p2.manifest_bytes()
        assert p1.manifest_version == p2.manifest_version

    def test_schema(self):
        program = self.build()
        manifest = json.loads(program.manifest_bytes())
        assert set(manifest) == {"version", "mainView", "nodes"}
        assert manifest["version"] == program.manifest_version
        assert manifest["mainView"] == program.main_view
        ids = [n["id"] for n in manifest["nodes"]]
        assert ids == sorted(ids) == list(range(len(program.nodes)))
        for entry in manifest["nodes"]:
            assert {"id", "tier", "kind", "op"} <= set(entry)
            if entry["op"] in (OP_CROSS_C2S_IB, OP_CROSS_S2C_IB):
                assert entry["direction"] in ("c2s", "s2c")
                assert set(entry["codec"]) == {"delta", "value"}

    def test_version_tracks_structure(self):
        p1 = self.build()
        b = GraphBuilder()
        b.main_view(b.client.source().hold(0))
        p2 = b.finalize()
        assert p1.manifest_version != p2.manifest_version

    def test_canonical_bytes_sorted_keys(self):
        data = self.build().manifest_bytes()
        assert data.startswith(b'{"mainView":')
