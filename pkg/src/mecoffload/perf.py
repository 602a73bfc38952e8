"""Delay, energy and memory formulas shared by every policy and the optimizer.

Functions accept scalars or broadcastable numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

REG_EPSILON = 1e-12
# transmit power is accounted per MHz of occupied bandwidth
BANDWIDTH_UNIT = 1e6


@dataclass(frozen=True)
class DelayBreakdown:
    comm: float = 0.0
    es_serial: float = 0.0
    es_parallel: float = 0.0
    local: float = 0.0

    @property
    def total(self) -> float:
        return self.comm + self.es_serial + self.es_parallel + self.local


@dataclass(frozen=True)
class EnergyBreakdown:
    md_compute: float = 0.0
    md_comm: float = 0.0
    md_base: float = 0.0
    es_total: float = 0.0

    @property
    def md_total(self) -> float:
        return self.md_compute + self.md_comm + self.md_base


def amdahl_speedup(rho, s):
    """Speed-up of a task with parallel fraction ``rho`` on ``s`` units."""
    return 1.0 / ((1.0 - np.asarray(rho, dtype=float)) + np.asarray(rho, dtype=float) / s)


def comm_delay(bits, rate, y, eps=REG_EPSILON):
    return np.asarray(bits, dtype=float) / (np.asarray(rate, dtype=float) * y + eps)


def local_delay(flops, rho, flops_per_core, cores):
    """Serial part on one core plus parallel part on all cores."""
    flops = np.asarray(flops, dtype=float)
    return flops / flops_per_core * (1.0 - rho) + flops / (flops_per_core * cores) * rho


def es_delay(flops, rho, flops_per_core, cores, z, eps=REG_EPSILON):
    """Return ``(serial, parallel)`` delay on a server granting core fraction ``z``."""
    flops = np.asarray(flops, dtype=float)
    rho = np.asarray(rho, dtype=float)
    serial = flops * (1.0 - rho) / (flops_per_core + eps)
    # rho == 0 yields an exact zero even at z == 0
    parallel = flops * rho / (flops_per_core * cores * np.asarray(z, dtype=float) + eps)
    return serial, parallel


def md_compute_power(cls, rho):
    return cls.compute_energy_coeff * (cls.flops_per_core * (1.0 - rho)
                                       + cls.flops_per_core * cls.cores * rho)


def md_comm_power(cls, y, bandwidth):
    return cls.comm_energy_coeff * y * (bandwidth / BANDWIDTH_UNIT) * cls.tx_power


def md_powers(cls, rho, offloaded: bool, y=0.0, bandwidth=0.0) -> EnergyBreakdown:
    """Instantaneous MD power split (W) while its task runs locally or is uploaded."""
    if offloaded:
        return EnergyBreakdown(md_comm=float(md_comm_power(cls, y, bandwidth)), md_base=cls.base_power)
    return EnergyBreakdown(md_compute=float(md_compute_power(cls, rho)), md_base=cls.base_power)


def es_power(cls, rho, z) -> float:
    """Server compute power for the served tasks with parallel fractions ``rho`` and core shares ``z``."""
    rho = np.asarray(rho, dtype=float)
    z = np.asarray(z, dtype=float)
    if rho.size == 0:
        return 0.0
    return float(cls.compute_energy_coeff * np.sum(cls.flops_per_core * (1.0 - rho)
                                                   + cls.flops_per_core * cls.cores * z * rho))


def transformer_memory(p, s, b, h, L, t, a, params):
    """Bytes needed for a transformer's activations plus weights."""
    return p * (s * b * h * L * (10.0 + 24.0 / t + 5.0 * a * s / (h * t)) + params)


def memory_feasible(memory_fractions, reserved_fraction):
    """``(fits, slack)`` for the tasks served by one server."""
    slack = 1.0 - reserved_fraction - float(np.sum(memory_fractions))
    return slack >= -1e-12, slack


def offload_energy_gain(compute_coeff, flops, comm_coeff, bits, rate, eps=REG_EPSILON):
    """Energy saved by not computing locally: ``delta_cp f - delta_cm d / R``."""
    return compute_coeff * np.asarray(flops, dtype=float) - comm_coeff * np.asarray(bits, dtype=float) / (
        np.asarray(rate, dtype=float) + eps)
