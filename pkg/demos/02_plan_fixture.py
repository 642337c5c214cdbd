"""
Finishing process plan for the fixture die
==========================================

Assign a strategy to every feature, apply the closed-cavity and feed-loss
adaptations, sequence the operations and print the plan report.
"""
import time

from forgecam.fixtures import default_machine, default_ncu, default_tools, fixture_die
from forgecam.ppg import generate_plan

die = fixture_die()
tools = default_tools()
print("tools:", ", ".join(f"{t.id} ({t.shape}, R{t.cutting_radius:g})" for t in tools))

t0 = time.perf_counter()
plan = generate_plan(die, tools, default_machine(), default_ncu())
print(f"planned in {time.perf_counter() - t0:.1f} s\n")
print(plan.report())

# the adaptation notes record what each rule changed
for op in plan.operations:
    for note in op.notes:
        print(f"{op.feature_id}: {note}")

# switching the adaptations off shows what they buy
bare = generate_plan(die, tools, default_machine(), default_ncu(), disable=("cavity", "feedloss"))
print(f"\nwithout adaptations: {bare.total_time_s:.1f} s, {bare.retract_total} retracts")
print(f"with adaptations:    {plan.total_time_s:.1f} s, {plan.retract_total} retracts")
