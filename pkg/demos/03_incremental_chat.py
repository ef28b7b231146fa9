"""Why the chat log crosses as deltas, measured on the (simulated) wire.

The log is an incremental fold on the application tier: its value is the
whole list, its deltas are just the new lines. A connecting client gets the
full value once, in its bootstrap; afterwards only deltas travel. The
simulation links really encode every frame, so we can just read the sizes.

Run: python demos/03_incremental_chat.py
"""

from tierfrp.demo.chat import Message, build_chat_program
from tierfrp.sim import Scenario, run_scenario

chat = build_chat_program("push", tick_period=3600)

script = [("connect", 0.0, "alice")]
at = 1.0
for i in range(30):
    script.append(("push", at, "alice", chat.msg_source, Message("alice", f"message number {i}")))
    at += 0.25
script.append(("connect", at, "bob"))  # joins after 30 messages
script.append(("push", at + 1.0, "alice", chat.msg_source, Message("alice", "welcome bob")))

trace = run_scenario(Scenario(program=chat.program, script=script, default_latency=0.02))

down_frames = [(t, n) for (t, d, who, n, count) in trace.wire_log if d == "s2c" and who == "alice" and count]
print("server->alice frame sizes over time (bytes):")
print(" ", [n for (_t, n) in down_frames])
print("  (flat: each frame carries one new line, not the whole log)")

boot = trace.bootstraps["bob"][chat.log_crossing.id]
print(f"\nbob's bootstrap carried the full log: {len(boot)} lines, newest first:")
print("  ", boot[:2], "...")

final_bob = trace.values_of("client:bob", chat.view)[-1]["log"]
print(f"\nafter one more message, bob's view has {len(final_bob)} lines; top:", final_bob[0])
