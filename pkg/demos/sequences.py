"""Laser switching sequences: construction, validation, simulation.

Builds the canonical transfer / hold / recapture protocol from timed
channel events, shows what the validator rejects, round-trips the
sequence through its CSV form, and simulates single runs to watch the
prepared and recaptured atom numbers.
"""

import atomtrap as at

seq = at.chain(
    at.build_protocol("transfer", overlap_s=5e-3),
    1.0,  # hold in the dark for one second
    at.build_protocol("recapture", overlap_s=5e-3),
)
print("transfer / 1 s hold / recapture sequence:")
print(f"  {'time_s':>10}  channel    state")
for ev in seq.events:
    print(f"  {ev.time:10.4f}  {ev.channel.name:<9}  "
          f"{'on' if ev.state else 'off'}")
print(f"violations: {at.validate_sequence(seq) or 'none'}")

bad = at.chain(at.build_protocol("transfer"), 0.5,
               at.build_protocol("detect", gap_s=10e-6))
print("\na detection pulse only 10 us after the trap light switches off:")
for v in at.validate_sequence(bad):
    print(f"  {v.code} at t = {v.time:.6f} s: {v.message}")

text = at.sequence_to_csv(seq)
print("\nCSV round trip preserves the event list:",
      at.sequence_from_csv(text).events == seq.events)

bundle = at.PhysicsBundle()
print("\nsimulated single runs (2 atoms prepared, 1 s hold):")
for i in range(5):
    rec = at.simulate_sequence(seq, 2, bundle, at.run_stream(51, i))
    print(f"  run {i}: prepared {rec.prepared_n} "
          f"({rec.prepared_state}), recaptured {rec.recaptured_n}")
