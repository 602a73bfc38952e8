"""Static offloading instance and its direct objective.

The objective charges every task its end-to-end delay plus an energy
penalty ``alpha * E / B_i`` on limited-battery devices.  ``B_i`` is the
remaining charge in joules by default; with ``battery_penalty="level"`` it
is the charge over capacity, so ``alpha`` reads as seconds per joule at a
full battery.  ``E`` is the local compute energy ``delta_cp f`` when run locally and the transmit
energy ``delta_cm P (W_j / 1 MHz) d / R_ij`` when offloaded to server
``j``.  The difference of the two is the offload gain ``G_ij``.  The
transmit term is exactly what the simulator charges for an upload, since
radio power scales with the occupied bandwidth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import perf
from .allocator import matrix_from_choice


@dataclass(frozen=True, eq=False)
class OffloadProblem:
    bits: np.ndarray          # (N,)
    flops: np.ndarray         # (N,)
    rho: np.ndarray           # (N,)
    memory: np.ndarray        # (N,)
    rate: np.ndarray          # (N, E)
    es_flops_per_core: np.ndarray  # (E,)
    es_cores: np.ndarray      # (E,)
    es_reserved_memory: np.ndarray  # (E,)
    local_delay: np.ndarray   # (N,)
    energy_weight: np.ndarray  # (N,) alpha / B_i, zero for unlimited devices
    local_energy: np.ndarray  # (N,)
    tx_energy: np.ndarray     # (N, E)
    alpha: float
    eps: float = perf.REG_EPSILON

    @property
    def n_md(self) -> int:
        return self.bits.shape[0]

    @property
    def n_es(self) -> int:
        return self.rate.shape[1]

    @property
    def gain(self) -> np.ndarray:
        """Offload energy gain ``G_ij``."""
        return self.local_energy[:, None] - self.tx_energy

    @property
    def local_cost(self) -> np.ndarray:
        return self.local_delay + self.energy_weight * self.local_energy

    @property
    def es_serial(self) -> np.ndarray:
        return perf.es_delay(self.flops[:, None], self.rho[:, None], self.es_flops_per_core[None, :],
                             self.es_cores[None, :], 1.0, self.eps)[0]

    def subset(self, idx) -> "OffloadProblem":
        idx = np.asarray(idx)
        return OffloadProblem(self.bits[idx], self.flops[idx], self.rho[idx], self.memory[idx],
                              self.rate[idx], self.es_flops_per_core, self.es_cores,
                              self.es_reserved_memory, self.local_delay[idx], self.energy_weight[idx],
                              self.local_energy[idx], self.tx_energy[idx], self.alpha, self.eps)


def energy_weights(alpha: float, batteries, unlimited, eps=perf.REG_EPSILON) -> np.ndarray:
    b = np.maximum(np.asarray(batteries, dtype=float), eps)
    w = np.where(np.asarray(unlimited, dtype=bool), 0.0, alpha / np.where(np.isinf(b), 1.0, b))
    return w


def penalty_battery(network, batteries=None) -> np.ndarray:
    """Battery figure ``B_i`` used in the energy penalty."""
    b = network.batteries if batteries is None else np.asarray(batteries, dtype=float)
    if network.scenario.battery_penalty == "joules":
        return b
    cap = network.md_array("battery_capacity")
    return np.where(np.isinf(cap), b, b / np.where(np.isinf(cap), 1.0, cap))


def build_problem(network, alpha: float | None = None, tasks=None, batteries=None) -> OffloadProblem:
    """Instance for the network's current tasks (or ``tasks``) and batteries."""
    sc = network.scenario
    alpha = sc.alpha if alpha is None else alpha
    eps = sc.reg_epsilon
    tasks = network.current_tasks() if tasks is None else tasks
    bits = np.array([t.bits for t in tasks], dtype=float)
    flops = np.array([t.flops for t in tasks], dtype=float)
    rho = np.array([t.parallel_fraction for t in tasks], dtype=float)
    mem = np.array([t.memory_fraction for t in tasks], dtype=float)
    md_fpc = network.md_array("flops_per_core")
    md_cores = network.md_array("cores")
    unlimited = np.array([m.cls.unlimited for m in network.mds])
    b = penalty_battery(network, batteries)
    rate = network.channel.rate
    local_energy = network.md_array("compute_energy_coeff") * flops
    tx_coeff = network.md_array("comm_energy_coeff") * network.md_array("tx_power")
    tx_energy = (tx_coeff[:, None] * (network.es_bandwidth / perf.BANDWIDTH_UNIT)[None, :]
                 * bits[:, None] / (rate + eps))
    return OffloadProblem(
        bits=bits, flops=flops, rho=rho, memory=mem, rate=rate,
        es_flops_per_core=network.es_array("flops_per_core"), es_cores=network.es_array("cores"),
        es_reserved_memory=network.es_array("reserved_memory_fraction"),
        local_delay=perf.local_delay(flops, rho, md_fpc, md_cores),
        energy_weight=energy_weights(alpha, b, unlimited, eps),
        local_energy=local_energy, tx_energy=tx_energy, alpha=float(alpha), eps=eps)


def _shares(weights, x):
    # weights (N,E), x (K,N,E) -> closed-form shares (K,N,E), zero where x == 0
    r = np.sqrt(weights)[None] * x
    tot = r.sum(axis=1, keepdims=True)
    cnt = x.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        share = np.where(tot > 0, r / np.where(tot > 0, tot, 1.0), x / np.maximum(cnt, 1))
    return share * x


def direct_objective(problem: OffloadProblem, choices, return_assignment=False):
    """Objective of one association (``(N,)`` choices) or a batch (``(K, N)``).

    Resource shares come from the closed-form allocator and delays from the
    ``perf`` formulas, without using the squared-sum identity.
    """
    p = problem
    choices = np.asarray(choices)
    single = choices.ndim == 1
    ch = np.atleast_2d(choices)
    x = matrix_from_choice(ch, p.n_es).astype(float)
    y = _shares(p.bits[:, None] / p.rate, x)
    z = _shares((p.flops * p.rho)[:, None] / (p.es_flops_per_core * p.es_cores)[None, :], x)
    comm = perf.comm_delay(p.bits[None, :, None], p.rate[None], y, p.eps)
    ser, par = perf.es_delay(p.flops[None, :, None], p.rho[None, :, None],
                             p.es_flops_per_core[None, None, :], p.es_cores[None, None, :], z, p.eps)
    off = comm + ser + par + p.energy_weight[None, :, None] * p.tx_energy[None]
    total = np.where(x > 0, off, 0.0).sum(axis=(1, 2))
    local = (ch < 0)
    total = total + (local * p.local_cost[None, :]).sum(axis=1)
    out = total[0] if single else total
    if return_assignment:
        from .allocator import Assignment
        a = Assignment(x[0].astype(np.int8), y[0], z[0]) if single else None
        return out, a
    return out
