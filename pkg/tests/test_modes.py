"""Transport mode inference: tagging rules, verdicts, assertions, witnesses."""

import random

import pytest

from tierfrp import (
    BIDIRECTIONAL,
    GraphBuilder,
    INT,
    ModeAssertionError,
    REQUEST_RESPONSE,
    VERDICT_WEBSOCKET,
    VERDICT_XHR,
    check_xhr_asserts,
    infer_modes,
)
from tierfrp.demo.chat import build_chat_program


class TestRoots:
    def test_client_sources_request_response(self):
        b = GraphBuilder()
        src = b.client.source()
        timer = b.client.interval(0.1)
        report = infer_modes(b.finalize(require_main_view=False))
        assert report.tags[src.id] == REQUEST_RESPONSE
        assert report.tags[timer.id] == REQUEST_RESPONSE

    def test_server_timers_bidirectional(self):
        b = GraphBuilder()
        tick = b.session.tick(0.1)
        app_tick = b.app.tick(1.0)
        report = infer_modes(b.finalize(require_main_view=False))
        assert report.tags[tick.id] == BIDIRECTIONAL
        assert report.tags[app_tick.id] == BIDIRECTIONAL

    def test_server_ffi_and_async_bidirectional(self):
        b = GraphBuilder()
        app_src = b.app.source()
        results = app_src.execute_tasks()
        client_async = b.client.source().execute_tasks()
        report = infer_modes(b.finalize(require_main_view=False))
        assert report.tags[app_src.id] == BIDIRECTIONAL
        assert report.tags[results.id] == BIDIRECTIONAL
        assert report.tags[client_async.id] == REQUEST_RESPONSE


class TestPropagation:
    def test_single_dep_inherits(self):
        b = GraphBuilder()
        tick = b.session.tick(0.1)
        derived = tick.map(lambda t: t).hold(0).map(lambda v: v)
        report = infer_modes(b.finalize(require_main_view=False))
        assert report.tags[derived.id] == BIDIRECTIONAL

    def test_combining_takes_most_restrictive(self):
        b = GraphBuilder()
        tick_db = b.session.tick(0.1).hold(0)
        quiet = b.client.source().to_session(INT).hold(0)
        combined = quiet.map2(tick_db, lambda a, c: (a, c))
        report = infer_modes(b.finalize(require_main_view=False))
        assert report.tags[quiet.id] == REQUEST_RESPONSE
        assert report.tags[combined.id] == BIDIRECTIONAL

    def test_snapshot_takes_sampler_tag(self):
        b = GraphBuilder()
        tick_db = b.session.tick(0.1).hold(0)
        quiet_ev = b.client.source().to_session(INT)
        sampled = tick_db.sampled_by(quiet_ev)
        report = infer_modes(b.finalize(require_main_view=False))
        assert report.tags[sampled.id] == REQUEST_RESPONSE

    def test_snapshot_of_bidi_event_stays_bidi(self):
        b = GraphBuilder()
        quiet_db = b.client.source().to_session(INT).hold(0)
        tick = b.session.tick(0.1)
        sampled = quiet_db.sampled_by(tick)
        report = infer_modes(b.finalize(require_main_view=False))
        assert report.tags[sampled.id] == BIDIRECTIONAL

    def test_app_to_session_is_bidirectional_root(self):
        b = GraphBuilder()
        quiet = b.client.source().to_session(INT).to_app()
        back = quiet.to_session()
        report = infer_modes(b.finalize(require_main_view=False))
        assert report.tags[quiet.id] == REQUEST_RESPONSE
        assert report.tags[back.id] == BIDIRECTIONAL

    def test_sampling_clears_app_crossing(self):
        b = GraphBuilder()
        held = b.client.source().to_session(INT).to_app().to_session().hold(0)
        pace = b.client.source().to_session(INT)
        polled = held.sampled_by(pace)
        report = infer_modes(b.finalize(require_main_view=False))
        assert report.tags[held.id] == BIDIRECTIONAL
        assert report.tags[polled.id] == REQUEST_RESPONSE

    def test_crossings_preserve_tags(self):
        b = GraphBuilder()
        up = b.client.source().to_session(INT)
        gathered = up.to_app()
        report = infer_modes(b.finalize(require_main_view=False))
        assert report.tags[up.id] == REQUEST_RESPONSE
        assert report.tags[gathered.id] == REQUEST_RESPONSE


class TestVerdicts:
    def test_push_chat_needs_websocket(self):
        chat = build_chat_program("push")
        assert infer_modes(chat.program).verdict == VERDICT_WEBSOCKET

    def test_polled_chat_is_xhr(self):
        chat = build_chat_program("polled")
        assert infer_modes(chat.program).verdict == VERDICT_XHR

    def test_all_client_local_is_xhr(self):
        b = GraphBuilder()
        src = b.client.source()
        b.main_view(src.hold(0))
        assert infer_modes(b.finalize()).verdict == VERDICT_XHR

    def test_unconsumed_tick_does_not_force_websocket(self):
        b = GraphBuilder()
        b.app.tick(1.0)
        log = b.client.source().to_session(INT).hold(0)
        polled = log.to_client(INT)
        b.main_view(polled)
        assert infer_modes(b.finalize()).verdict == VERDICT_XHR


class TestAsserts:
    def test_assert_on_tick_derived_node_fails_with_witness(self):
        b = GraphBuilder()
        tick = b.session.tick(0.1)
        held = tick.hold(0)
        down = held.to_client(INT)
        b.xhr_assert(down)
        report = infer_modes(b.finalize(require_main_view=False))
        assert len(report.violations) == 1
        nid, path = report.violations[0]
        assert nid == down.id
        assert path[0] == tick.id and path[-1] == down.id
        with pytest.raises(ModeAssertionError, match="xhr assertion failed"):
            check_xhr_asserts(report)

    def test_assert_on_client_local_ok(self):
        b = GraphBuilder()
        held = b.client.source().hold(0)
        b.xhr_assert(held)
        report = infer_modes(b.finalize(require_main_view=False))
        assert report.violations == []
        check_xhr_asserts(report)

    def test_assert_on_sampled_app_value_ok(self):
        b = GraphBuilder()
        held = b.client.source().to_session(INT).to_app().to_session().hold(0)
        pace = b.client.source().to_session(INT)
        polled = held.sampled_by(pace)
        b.xhr_assert(polled)
        report = infer_modes(b.finalize(require_main_view=False))
        assert report.violations == []


class TestReportProperties:
    def test_deterministic(self):
        chat = build_chat_program("push")
        r1, r2 = infer_modes(chat.program), infer_modes(chat.program)
        assert r1.tags == r2.tags and r1.verdict == r2.verdict

    def test_format_mentions_verdict(self):
        chat = build_chat_program("polled")
        report = infer_modes(chat.program)
        assert "transport verdict: xhr" in report.format(chat.program)

    @pytest.mark.parametrize("seed", range(10))
    def test_monotone_under_added_bidi_source(self, seed):
        # Two structurally identical graphs; the second wires a server timer
        # into the derived chain where the first used a constant. Every node
        # bidirectional in the quiet graph must stay bidirectional.
        def build(with_tick):
            rng = random.Random(seed)
            b = GraphBuilder()
            held = b.client.source().to_session(INT).hold(0)
            tick_held = b.session.tick(0.5).hold(0)
            quiet_base = b.session.constant(0)
            base = tick_held if with_tick else quiet_base
            nodes = [held, base]
            for _ in range(rng.randint(1, 6)):
                nodes.append(rng.choice(nodes).map2(rng.choice(nodes), lambda a, c: (a, c)))
            nodes[-1].snapshot_with(held, lambda a, c: a).as_incremental()
            return b.finalize(require_main_view=False)

        quiet = infer_modes(build(False))
        loud = infer_modes(build(True))
        for nid, tag in quiet.tags.items():
            if tag == BIDIRECTIONAL:
                assert loud.tags[nid] == BIDIRECTIONAL
