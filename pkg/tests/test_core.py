"""Local combinator semantics on a single client-role engine."""

import itertools

import pytest

from tierfrp import Engine, EngineError, GraphBuilder
from tierfrp.demo.chat import Message


def run(builder, script, refs=None):
    """Finalize, run one fire per script entry, return the trace."""
    program = builder.finalize(require_main_view=False)
    trace = []
    engine = Engine(program, "client", trace=trace)
    for pulses in script:
        engine.fire(pulses)
    return engine, trace


def fires_of(trace, ref):
    return [p for (_, nid, kind, p) in trace if nid == ref.id and kind == "fire"]


def steps_of(trace, ref):
    return [p for (_, nid, kind, p) in trace if nid == ref.id and kind == "step"]


class TestEventMap:
    def test_pointwise(self, builder):
        src = builder.client.source()
        out = src.map(lambda x: x + 1)
        _, trace = run(builder, [[(src, 1)], [(src, 2)], [(src, 3)]])
        assert fires_of(trace, out) == [2, 3, 4]

    def test_empty_trace(self, builder):
        src = builder.client.source()
        out = src.map(lambda x: x + 1)
        _, trace = run(builder, [[], []])
        assert fires_of(trace, out) == []

    def test_message_render(self, builder):
        src = builder.client.source()
        out = src.map(lambda m: m.render())
        _, trace = run(builder, [[(src, Message("bob", "hi"))]])
        assert fires_of(trace, out) == ["bob says hi"]


class TestEventFold:
    def test_prepend_log(self, builder):
        src = builder.client.source()
        log = src.fold([], lambda acc, n: [n] + acc)
        engine, trace = run(builder, [[(src, "a")], [(src, "b")]])
        assert steps_of(trace, log) == [["a"], ["b", "a"]]
        assert engine.read(log) == ["b", "a"]

    def test_no_pulses_constant(self, builder):
        src = builder.client.source()
        total = src.fold(0, lambda a, b: a + b)
        engine, trace = run(builder, [[], [], []])
        assert steps_of(trace, total) == []
        assert engine.read(total) == 0

    def test_running_sum(self, builder):
        src = builder.client.source()
        total = src.fold(0, lambda a, b: a + b)
        _, trace = run(builder, [[(src, v)] for v in [1, 2, 3, 4, 5]])
        assert steps_of(trace, total) == [1, 3, 6, 10, 15]


class TestEventHold:
    def test_holds_pulse(self, builder):
        src = builder.client.source()
        name = src.hold(None)
        engine, _ = run(builder, [[(src, "bob")]])
        assert engine.read(name) == "bob"

    def test_init_forever(self, builder):
        src = builder.client.source()
        held = src.hold(7)
        engine, _ = run(builder, [[], []])
        assert engine.read(held) == 7

    def test_newest_wins(self, builder):
        src = builder.client.source()
        held = src.hold(0)
        engine, _ = run(builder, [[(src, "a")], [(src, "b")]])
        assert engine.read(held) == "b"


class TestDBehaviorMaps:
    def test_same_cycle_consistency(self, builder):
        src = builder.client.source()
        x = src.hold(1)
        y = x.map(lambda v: v + 1)
        observed = []

        def compare(a, b):
            observed.append((a, b))
            return a < b

        t = x.map2(y, compare)
        engine, _ = run(builder, [[(src, 20)]])
        assert engine.read(t) is True
        # exactly one recomputation, and it saw both new values together
        assert observed == [(1, 2), (20, 21)]

    def test_map2_constants(self, builder):
        t = builder.client.constant(3).map2(builder.client.constant(4), lambda a, b: a + b)
        engine, trace = run(builder, [[]])
        assert engine.read(t) == 7
        assert steps_of(trace, t) == []

    def test_map2_joint_step(self, builder):
        a_src = builder.client.source()
        b_src = builder.client.source()
        a = a_src.hold(0)
        b = b_src.hold(0)
        s = a.map2(b, lambda x, y: x + y)
        _, trace = run(builder, [[(a_src, 1), (b_src, 2)]])
        assert steps_of(trace, s) == [3]  # one step, not two


class TestChangesAndConstant:
    def test_fold_changes(self, builder):
        src = builder.client.source()
        total = src.fold(0, lambda a, b: a + b)
        ch = total.changes()
        _, trace = run(builder, [[(src, 1)], [(src, 2)]])
        assert fires_of(trace, ch) == [1, 3]

    def test_constant_never_fires(self, builder):
        ch = builder.client.constant(5).changes()
        _, trace = run(builder, [[], []])
        assert fires_of(trace, ch) == []

    def test_no_equality_suppression(self, builder):
        src = builder.client.source()
        held = src.hold(5)
        ch = held.changes()
        _, trace = run(builder, [[(src, 5)], [(src, 5)]])
        assert fires_of(trace, ch) == [5, 5]


class TestSnapshot:
    def test_direction_from_delayed_position(self, builder):
        mouse = builder.client.source()
        position_cell = []
        prev_pos = builder.client.delayed(lambda: position_cell[0])
        direction_ev = prev_pos.snapshot(mouse, lambda prev, cur: cur - prev)
        position = direction_ev.fold(0, lambda p, d: p + d)
        position_cell.append(position)
        engine, trace = run(builder, [[(mouse, 10)], [(mouse, 13)]])
        # first cycle: prev=0, direction 10; second: prev=10, direction 3
        assert fires_of(trace, direction_ev) == [10, 3]
        assert engine.read(position) == 13

    def test_snapshot_constant(self, builder):
        src = builder.client.source()
        snap = builder.client.constant(9).snapshot(src, lambda k, _v: k)
        _, trace = run(builder, [[(src, 1)], [(src, 2)]])
        assert fires_of(trace, snap) == [9, 9]

    def test_snapshot_sees_same_cycle_step(self, builder):
        src = builder.client.source()
        total = src.fold(0, lambda a, b: a + b)
        snap = total.snapshot(src, lambda cur, _v: cur)
        _, trace = run(builder, [[(src, 4)], [(src, 6)]])
        assert fires_of(trace, snap) == [4, 10]


class TestSampledBy:
    def test_sample_on_timer(self, builder):
        inp = builder.client.source()
        timer = builder.client.source()
        held = inp.hold(0)
        sampled = held.sampled_by(timer)
        _, trace = run(builder, [[(inp, 1)], [(inp, 2)], [(timer, None)], [(inp, 3)], [(timer, None)]])
        assert fires_of(trace, sampled) == [2, 3]

    def test_sample_constant(self, builder):
        timer = builder.client.source()
        sampled = builder.client.constant("k").sampled_by(timer)
        _, trace = run(builder, [[(timer, 0)], [(timer, 1)]])
        assert fires_of(trace, sampled) == ["k", "k"]

    def test_never_fires_without_event(self, builder):
        timer = builder.client.source()
        sampled = builder.client.constant("k").sampled_by(timer)
        _, trace = run(builder, [[], []])
        assert fires_of(trace, sampled) == []


class TestSnapshotWith:
    def test_constant_other_never_steps(self, builder):
        src = builder.client.source()
        a = src.hold(1)
        out = a.snapshot_with(builder.client.constant(10), lambda x, y: x + y)
        engine, trace = run(builder, [[(src, 5)]])
        assert steps_of(trace, out) == []
        assert engine.read(out) == 11  # initial f(1, 10)

    def test_a_steps_alone_no_step(self, builder):
        sa, sb = builder.client.source(), builder.client.source()
        a, other = sa.hold(0), sb.hold(0)
        out = a.snapshot_with(other, lambda x, y: (x, y))
        _, trace = run(builder, [[(sa, 5)]])
        assert steps_of(trace, out) == []

    def test_both_step_same_cycle(self, builder):
        sa, sb = builder.client.source(), builder.client.source()
        a, other = sa.hold(0), sb.hold(0)
        out = a.snapshot_with(other, lambda x, y: (x, y))
        _, trace = run(builder, [[(sa, 5), (sb, 6)]])
        assert steps_of(trace, out) == [(5, 6)]


class TestDelayed:
    def test_never_stepping_target(self, builder):
        src = builder.client.source()
        target = builder.client.constant(3)
        prev = builder.client.delayed(target)
        snap = prev.sampled_by(src)
        _, trace = run(builder, [[(src, None)], [(src, None)]])
        assert fires_of(trace, snap) == [3, 3]

    def test_one_cycle_shift(self, builder):
        src = builder.client.source()
        held = src.hold(1)
        prev = builder.client.delayed(held)
        snap = prev.sampled_by(src)
        _, trace = run(builder, [[(src, 2)], [(src, 9)]])
        # cycle 0 reads the value before the step to 2; cycle 1 reads 2
        assert fires_of(trace, snap) == [1, 2]

    def test_recursive_definition_finalizes(self, builder):
        move = builder.client.source()
        cell = []
        prev = builder.client.delayed(lambda: cell[0])
        stepped = prev.snapshot(move, lambda p, d: p + d)
        position = stepped.hold(0)
        cell.append(position)
        engine, _ = run(builder, [[(move, 5)], [(move, -2)]])
        assert engine.read(position) == 3


class TestIncremental:
    def test_chat_log_deltas_vs_current(self, builder):
        src = builder.client.source()
        log = src.fold_incremental([], lambda acc, new: list(new) + acc)
        deltas = log.deltas()
        _, trace = run(builder, [[(src, ["one"])], [(src, ["two"])]])
        assert fires_of(trace, deltas) == [["one"], ["two"]]
        assert steps_of(trace, log) == [
            (["one"], ["one"]),
            (["two", "one"], ["two"]),
        ]

    def test_no_pulses(self, builder):
        src = builder.client.source()
        log = src.fold_incremental([], lambda acc, new: list(new) + acc)
        engine, trace = run(builder, [[], []])
        assert engine.read(log) == []
        assert steps_of(trace, log) == []

    def test_refold_equals_current(self, builder):
        import functools

        src = builder.client.source()
        fold = lambda a, b: a + b
        ib = src.fold_incremental(2, fold)
        deltas_ev = ib.deltas()
        engine, trace = run(builder, [[(src, v)] for v in [3, -1, 10, 4]])
        received = fires_of(trace, deltas_ev)
        assert engine.read(ib) == functools.reduce(fold, received, 2)

    def test_changes_and_deltas_fire_same_cycles(self, builder):
        src = builder.client.source()
        ib = src.fold_incremental(0, lambda a, b: a + b)
        ch, dl = ib.changes(), ib.deltas()
        _, trace = run(builder, [[(src, 1)], [], [(src, 2)]])
        ch_cycles = [c for (c, nid, _, _) in trace if nid == ch.id]
        dl_cycles = [c for (c, nid, _, _) in trace if nid == dl.id]
        assert ch_cycles == dl_cycles == [0, 2]


class TestIncrementalConversions:
    def test_to_dbehavior_tracks_changes(self, builder):
        src = builder.client.source()
        ib = src.fold_incremental(0, lambda a, b: a + b)
        db = ib.to_dbehavior()
        reconstructed = ib.changes().hold(0)
        _, trace = run(builder, [[(src, 2)], [(src, 3)]])
        assert steps_of(trace, db) == steps_of(trace, reconstructed) == [2, 5]

    def test_to_dbehavior_constant_without_deltas(self, builder):
        src = builder.client.source()
        db = src.fold_incremental(5, lambda a, b: b).to_dbehavior()
        engine, trace = run(builder, [[], []])
        assert steps_of(trace, db) == []
        assert engine.read(db) == 5

    def test_as_incremental_deltas_equal_changes(self, builder):
        src = builder.client.source()
        held = src.hold(0)
        ib = held.as_incremental()
        dl = ib.deltas()
        ch = held.changes()
        _, trace = run(builder, [[(src, 4)], [(src, 9)]])
        assert fires_of(trace, dl) == fires_of(trace, ch) == [4, 9]

    def test_round_trip_preserves_steps(self, builder):
        src = builder.client.source()
        held = src.hold(0)
        rt = held.as_incremental().to_dbehavior()
        _, trace = run(builder, [[(src, 4)], [(src, 9)]])
        assert steps_of(trace, rt) == steps_of(trace, held)


class TestSourcesAndFire:
    def test_two_pushes_two_cycles(self, builder):
        src = builder.client.source()
        program = builder.finalize(require_main_view=False)
        trace = []
        engine = Engine(program, "client", trace=trace)
        engine.fire([(src, 1)])
        engine.fire([(src, 2)])
        assert [(c, p) for (c, _, _, p) in trace] == [(0, 1), (1, 2)]

    def test_silent_without_pushes(self, builder):
        builder.client.source()
        _, trace = run(builder, [[], []])
        assert trace == []

    def test_installer_style_source(self, builder):
        installed = []
        src = builder.client.source_with_effect(installed.append)
        program = builder.finalize(require_main_view=False)
        engine = Engine(program, "client")
        hooks = engine.installers()
        assert [nid for nid, _ in hooks] == [src.id]
        pushes = []
        hooks[0][1](pushes.append)  # the runtime hands the installer a push fn
        assert installed == [pushes.append]

    def test_empty_fire_refreshes_poll_memo(self, builder):
        counter = itertools.count()
        poll = builder.client.from_poll(lambda: next(counter))
        program = builder.finalize(require_main_view=False)
        engine = Engine(program, "client")
        engine.fire([])
        first = engine.read(poll)
        assert engine.read(poll) == first  # memoized within the cycle
        engine.fire([])
        assert engine.read(poll) == first + 1

    def test_foreign_source_rejected(self):
        b = GraphBuilder()
        app_src = b.app.source()
        program = b.finalize(require_main_view=False)
        engine = Engine(program, "client")
        with pytest.raises(EngineError, match="outside this client engine"):
            engine.fire([(app_src, 1)])

    def test_duplicate_source_rejected(self, builder):
        src = builder.client.source()
        program = builder.finalize(require_main_view=False)
        engine = Engine(program, "client")
        with pytest.raises(EngineError, match="twice"):
            engine.fire([(src, 1), (src, 2)])

    def test_two_sources_one_cycle(self, builder):
        a, b2 = builder.client.source(), builder.client.source()
        s = a.hold(0).map2(b2.hold(0), lambda x, y: x + y)
        program = builder.finalize(require_main_view=False)
        engine = Engine(program, "client")
        result = engine.fire([(a, 1), (b2, 2)])
        assert engine.read(s) == 3
        assert {a.id, b2.id, s.id} <= set(result.fired_nodes)


class TestPollAndSink:
    def test_poll_memoized_within_cycle(self, builder):
        counter = itertools.count(100)
        src = builder.client.source()
        poll = builder.client.from_poll(lambda: next(counter))
        s1 = poll.sampled_by(src)
        s2 = poll.sampled_by(src)
        _, trace = run(builder, [[(src, None)]])
        assert fires_of(trace, s1) == fires_of(trace, s2) == [100]

    def test_sink_default(self, builder):
        src = builder.client.source()
        sink = builder.client.sink("fallback")
        snap = sink.sampled_by(src)
        _, trace = run(builder, [[(src, None)]])
        assert fires_of(trace, snap) == ["fallback"]

    def test_sink_set_then_cleared(self, builder):
        src = builder.client.source()
        sink = builder.client.sink("fallback")
        snap = sink.sampled_by(src)
        program = builder.finalize(require_main_view=False)
        trace = []
        engine = Engine(program, "client", trace=trace)
        engine.set_sink(sink, lambda: "live")
        engine.fire([(src, None)])
        engine.clear_sink(sink)
        engine.fire([(src, None)])
        assert fires_of(trace, snap) == ["live", "fallback"]


class TestAsyncExecution:
    def test_result_in_later_cycle(self, builder):
        src = builder.client.source()
        results = src.execute_tasks()
        program = builder.finalize(require_main_view=False)
        trace = []
        engine = Engine(program, "client", trace=trace)
        result = engine.fire_with_outputs([(src, lambda: 42)])
        assert [t[0] for t in result.tasks] == [results.id]
        submitted_cycle = result.cycle
        done = engine.async_done(results.id, 42)
        assert done.cycle > submitted_cycle
        assert fires_of(trace, results) == [42]

    def test_silent_without_tasks(self, builder):
        src = builder.client.source()
        results = src.execute_tasks()
        _, trace = run(builder, [[], []])
        assert fires_of(trace, results) == []

    def test_completion_order_not_submission_order(self, builder):
        src = builder.client.source()
        results = src.execute_tasks()
        program = builder.finalize(require_main_view=False)
        trace = []
        engine = Engine(program, "client", trace=trace)
        first = engine.fire_with_outputs([(src, lambda: "slow")])
        second = engine.fire_with_outputs([(src, lambda: "fast")])
        pending = [t for r in (first, second) for t in r.tasks]
        # the second task finishes first
        engine.async_done(results.id, pending[1][2]())
        engine.async_done(results.id, pending[0][2]())
        assert fires_of(trace, results) == ["fast", "slow"]

    def test_error_routed_to_companion_event(self, builder):
        src = builder.client.source()
        results, errors = src.execute_tasks(on_error="event")
        program = builder.finalize(require_main_view=False)
        trace = []
        engine = Engine(program, "client", trace=trace)
        boom = ValueError("boom")
        engine.fire([(src, lambda: (_ for _ in ()).throw(boom))])
        engine.async_done(results.id, boom, error=True)
        assert fires_of(trace, errors) == [boom]
        assert fires_of(trace, results) == []


class TestLocalInvariants:
    def test_fold_foldi_coherence(self, builder):
        src = builder.client.source()
        f = lambda a, b: a + b
        plain = src.fold(3, f)
        via_ib = src.fold_incremental(3, f).to_dbehavior()
        _, trace = run(builder, [[(src, v)] for v in [5, -2, 8]])
        assert steps_of(trace, plain) == steps_of(trace, via_ib)

    def test_delayed_shift_property(self, builder):
        src = builder.client.source()
        held = src.hold(0)
        prev = builder.client.delayed(held)
        probe = prev.sampled_by(src)
        program = builder.finalize(require_main_view=False)
        trace = []
        engine = Engine(program, "client", trace=trace)
        values = [3, 1, 4, 1, 5, 9]
        for v in values:
            engine.fire([(src, v)])
        observed = fires_of(trace, probe)
        assert observed == [0] + values[:-1]

    def test_glitch_probe_always_true(self, builder):
        src = builder.client.source()
        x = src.hold(0)
        probe = x.map2(x.map(lambda v: v + 1), lambda a, b: a < b)
        pv = probe.changes()
        _, trace = run(builder, [[(src, v)] for v in range(20)])
        assert all(v is True for v in fires_of(trace, pv))

    def test_poll_memo_under_nondeterminism(self, builder):
        import random as _random

        rng = _random.Random(7)
        src = builder.client.source()
        poll = builder.client.from_poll(lambda: rng.random())
        a = poll.sampled_by(src)
        b2 = poll.sampled_by(src)
        _, trace = run(builder, [[(src, None)] for _ in range(5)])
        assert fires_of(trace, a) == fires_of(trace, b2)
