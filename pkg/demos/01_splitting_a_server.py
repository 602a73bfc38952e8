"""How one server splits its bandwidth and cores among the devices it serves.

The split that minimizes total delay gives each device a share proportional
to the square root of its load. Here we compare it to an even split.
"""
import numpy as np

from mecoffload.allocator import allocate_bandwidth, allocate_cores
from mecoffload.perf import amdahl_speedup

rng = np.random.default_rng(0)

# five devices uploading to one server over very different links
bits = rng.uniform(1e5, 2e7, 5)
rates = 10 ** rng.uniform(6, 8, 5)
y = allocate_bandwidth(bits, rates)
even = np.full(5, 0.2)
print("bandwidth shares:", np.round(y, 3))
print(f"total upload time  sqrt split {np.sum(bits / (rates * y)):7.2f} s"
      f"   even split {np.sum(bits / (rates * even)):7.2f} s")

# cores follow the parallel part of the work only
flops = np.array([4e12, 4e12, 1e12, 8e12, 2e12])
rho = np.array([0.99, 0.5, 0.99, 0.95, 0.0])
z = allocate_cores(flops, rho)
print("core shares:      ", np.round(z, 3), "(the serial-only task gets none)")

# why parallel fraction matters: speedup on 10 and 1000 cores
for r in (0.5, 0.95, 0.99):
    print(f"rho={r:4}: speedup x{amdahl_speedup(r, 10):6.2f} on 10 cores, x{amdahl_speedup(r, 1000):7.2f} on 1000")
