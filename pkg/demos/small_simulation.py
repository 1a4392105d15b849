"""A reduced version of the t5 scale-alternative simulation.

The bundled plan runs 2500 replications per level; this demo uses 300 so it
finishes in a few seconds. Use `rankscatter simulate table2_t5` for the full run.

Run: python3 demos/small_simulation.py
"""
from rankscatter.simulation import SimulationPlan, run_plan

plan = SimulationPlan.load("table2_t5").replace(replications=300)
table = run_plan(plan)
print(table.format_text())
