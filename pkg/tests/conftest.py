"""Shared helpers: seeded random single-tier programs and trace runners."""

from __future__ import annotations

import random

import pytest

from tierfrp import Engine, GraphBuilder

# Small pure function pools; everything stays in the integers.
UNARY = [
    ("inc", lambda x: x + 1),
    ("dbl", lambda x: x * 2),
    ("neg", lambda x: -x),
    ("dec", lambda x: x - 1),
    ("ident", lambda x: x),
]

BINARY = [
    ("add", lambda a, b: a + b),
    ("sub", lambda a, b: a - b),
    ("mix", lambda a, b: a + 2 * b),
    ("max", lambda a, b: max(a, b)),
    ("min", lambda a, b: min(a, b)),
]


def random_program(seed: int, max_nodes: int = 20):
    """Build a random client-tier program from the full local combinator set.

    Returns (program, sources, builder). Deterministic in the seed.
    """
    rng = random.Random(seed)
    b = GraphBuilder()
    n_sources = rng.randint(1, 3)
    sources = [b.client.source() for _ in range(n_sources)]
    events = list(sources)
    dbs = []
    ibs = []
    pending_delayed = []  # (cell, event) pairs needing a forward target

    def pick_unary():
        return rng.choice(UNARY)[1]

    def pick_binary():
        return rng.choice(BINARY)[1]

    def room(n=1):
        return len(b._nodes) + n <= max_nodes

    choices = [
        "map", "fold", "hold", "foldi", "db_map", "db_map2", "changes",
        "snapshot", "sampled", "db_snapshot", "as_ib", "ib_to_db",
        "ib_changes", "ib_deltas", "constant", "delayed_now",
        "delayed_forward", "poll_snapshot",
    ]
    for _ in range(max_nodes * 3):
        if not room():
            break
        op = rng.choice(choices)
        if op == "map" and events and room():
            events.append(rng.choice(events).map(pick_unary()))
        elif op == "fold" and events and room():
            dbs.append(rng.choice(events).fold(rng.randint(-5, 5), pick_binary()))
        elif op == "hold" and events and room():
            dbs.append(rng.choice(events).hold(rng.randint(-5, 5)))
        elif op == "foldi" and events and room():
            ibs.append(rng.choice(events).fold_incremental(rng.randint(-5, 5), pick_binary()))
        elif op == "db_map" and dbs and room():
            dbs.append(rng.choice(dbs).map(pick_unary()))
        elif op == "db_map2" and dbs and room():
            dbs.append(rng.choice(dbs).map2(rng.choice(dbs), pick_binary()))
        elif op == "changes" and dbs and room():
            events.append(rng.choice(dbs).changes())
        elif op == "snapshot" and dbs and events and room():
            events.append(rng.choice(dbs).snapshot(rng.choice(events), pick_binary()))
        elif op == "sampled" and dbs and events and room():
            events.append(rng.choice(dbs).sampled_by(rng.choice(events)))
        elif op == "db_snapshot" and dbs and room():
            dbs.append(rng.choice(dbs).snapshot_with(rng.choice(dbs), pick_binary()))
        elif op == "as_ib" and dbs and room():
            ibs.append(rng.choice(dbs).as_incremental())
        elif op == "ib_to_db" and ibs and room():
            dbs.append(rng.choice(ibs).to_dbehavior())
        elif op == "ib_changes" and ibs and room():
            events.append(rng.choice(ibs).changes())
        elif op == "ib_deltas" and ibs and room():
            events.append(rng.choice(ibs).deltas())
        elif op == "constant" and room():
            dbs.append(b.client.constant(rng.randint(-5, 5)))
        elif op == "delayed_now" and dbs and events and room(2):
            target = rng.choice(dbs)
            prev = b.client.delayed(target)
            events.append(prev.snapshot(rng.choice(events), pick_binary()))
        elif op == "delayed_forward" and events and room(2):
            cell = []
            prev = b.client.delayed(lambda cell=cell: cell[0])
            events.append(prev.snapshot(rng.choice(events), pick_binary()))
            pending_delayed.append(cell)
        elif op == "poll_snapshot" and events and room(2):
            k = rng.randint(-9, 9)
            poll = b.client.from_poll(lambda k=k: k)
            events.append(poll.snapshot(rng.choice(events), pick_binary()))

    # Bind forward-declared delayed targets; prefer behaviors created later.
    for cell in pending_delayed:
        if dbs:
            cell.append(rng.choice(dbs))
        else:
            dbs.append(b.client.constant(0))
            cell.append(dbs[-1])

    program = b.finalize(require_main_view=False)
    return program, sources, b


def random_inputs(seed: int, sources, n_cycles: int = 50, fire_prob: float = 0.45):
    rng = random.Random(seed ^ 0x5EED)
    inputs = []
    for _ in range(n_cycles):
        pulses = {}
        for src in sources:
            if rng.random() < fire_prob:
                pulses[src.id] = rng.randint(-50, 50)
        inputs.append(pulses)
    return inputs


def engine_trace(program, inputs):
    """Drive a client-role engine with one fire per scripted cycle."""
    trace = []
    engine = Engine(program, "client", trace=trace)
    for pulses in inputs:
        engine.fire(list(pulses.items()))
    return trace


@pytest.fixture
def builder():
    return GraphBuilder()
