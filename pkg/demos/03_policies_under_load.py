"""Short simulated runs: how each policy copes as devices are added.

Each run covers 300 s of simulated time with arrivals spread over 20 s,
the same settings as the acceptance study. Expect about a minute.
"""
from mecoffload import Scenario, generate_scenario
from mecoffload.baselines import Policy
from mecoffload.engine import run_episode

POLICIES = ("random", "max_sinr", "max_compute", "combined", "pricing")

print(f"{'devices':>7} " + " ".join(f"{p:>11}" for p in POLICIES))
for n in (20, 60, 100):
    sc = Scenario(n_md=n, n_es=4, seed=0, steps=3000, dt=0.1, step_sizes=(1.0, 1.0), arrival_window=20.0)
    lat = [run_episode(generate_scenario(sc), Policy(p, 0.2)).mean_latency for p in POLICIES]
    print(f"{n:7d} " + " ".join(f"{v:10.2f}s" for v in lat))

# the energy weight trades latency for battery
print("\nalpha  latency  MD energy/task")
for a in (0.0, 10.0, 100.0):
    sc = Scenario(n_md=60, n_es=4, seed=0, steps=3000, dt=0.1, step_sizes=(1.0, 1.0), arrival_window=20.0, alpha=a)
    m = run_episode(generate_scenario(sc), "pricing")
    print(f"{a:5.0f} {m.mean_latency:8.2f} {m.energy_per_task_local:10.1f} J")
