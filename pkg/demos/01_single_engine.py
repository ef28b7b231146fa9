"""A tour of the local reactive kernel on one engine.

Events are streams of pulses; discrete behaviors are step functions that
change only at cycle boundaries; incremental behaviors remember *how* they
changed. A propagation cycle is the unit of simultaneity: everything that
happens in one cycle is seen together, and nothing is ever seen half-done.

Run: python demos/01_single_engine.py
"""

from tierfrp import Engine, GraphBuilder

b = GraphBuilder()

# A source is an event with an open end; we push values into it below.
keys = b.client.source()

# Fold the pulses into a running total, and derive a comparison from it.
total = keys.fold(0, lambda acc, v: acc + v)
bigger = total.map(lambda v: v + 1)
always_true = total.map2(bigger, lambda a, c: a < c)

# Read the total at the pace of a second source (snapshot-style sampling).
sample_clock = b.client.source()
sampled = total.sampled_by(sample_clock)

# A recursive definition: the position is folded from steps whose size
# depends on the *previous* position. `delayed` reads last cycle's value,
# which is what makes the forward reference legal.
cell = []
previous = b.client.delayed(lambda: cell[0])
steps = previous.snapshot(keys, lambda prev, key: prev + key)
position = steps.hold(0)
cell.append(position)

program = b.finalize(require_main_view=False)
trace = []
engine = Engine(program, "client", trace=trace)

print("pushing 3, 4, 5 with a sample in between:")
engine.fire([(keys, 3)])
engine.fire([(keys, 4)])
engine.fire([(sample_clock, None)])
engine.fire([(keys, 5)])

print(f"  total           = {engine.read(total)}")
print(f"  always_true     = {engine.read(always_true)}  (never glitches to False)")
print(f"  sampled at tick = {[p for (_, n, _, p) in trace if n == sampled.id]}")
print(f"  position        = {engine.read(position)}  (recursive definition)")

print("\nfull trace (cycle, node, kind, payload):")
for entry in trace:
    print(f"  {entry}")
