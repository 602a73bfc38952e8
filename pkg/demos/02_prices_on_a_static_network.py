"""Dual prices on a frozen network, checked against brute force.

Each server posts a bandwidth price and a compute price. Devices pick the
cheapest server (or stay local) and the prices move with the load. The dual
value is a lower bound on the best association, and the gap of the
recovered association is certified by the price/load mismatch.
"""
import numpy as np

from mecoffload import Scenario, generate_scenario
from mecoffload.allocator import matrix_from_choice
from mecoffload.baselines import exhaustive_oracle
from mecoffload.pricing import duality_report, init_prices, run_pricing, terms_from_problem
from mecoffload.problem import build_problem

net = generate_scenario(Scenario(n_md=7, n_es=3, seed=11))
problem = build_problem(net)
terms = terms_from_problem(problem)

res = run_pricing(terms, init_prices(net.n_es, 11, 0.01, 0.01), 2000, problem, trace=True)
g_best = res.trace.g_max
for t in (0, 10, 100, 1000, 2000):
    print(f"step {t:5d}: best dual value {g_best[t]:9.3f}   objective at these prices {res.trace.primal[t]:9.3f}")

_, optimum = exhaustive_oracle(problem)
rep = duality_report(terms, res.prices, matrix_from_choice(res.choice, net.n_es), problem)
print(f"\nexhaustive optimum {optimum:.3f} over {4 ** 7} associations")
print(f"priced association {rep.primal:.3f}, excess {rep.primal - optimum:.3f}, certified bound {rep.bound:.3f}")
print("association (-1 = local):", res.choice)

# with a constant step the recovered association keeps cycling; keeping the
# best one seen along the way is cheap
best = int(np.argmin(res.trace.primal))
print(f"best association seen: step {best}, objective {res.trace.primal[best]:.3f}")
