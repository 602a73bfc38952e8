"""Closed-form per-server bandwidth and core splits for a fixed association.

Both splits minimize a sum of ``w_i / share_i`` over the simplex, whose
KKT solution is ``share_i = sqrt(w_i) / sum_k sqrt(w_k)``.  Members with
zero weight take an equal share of whatever is left over (nothing, unless
every weight is zero).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class Allocation:
    y: np.ndarray
    z: np.ndarray


@dataclass(frozen=True, eq=False)
class Assignment:
    """Association matrix ``x`` with bandwidth ``y`` and core ``z`` fractions."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray

    @property
    def choice(self) -> np.ndarray:
        return choice_from_matrix(self.x)


def sqrt_share(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.size == 0:
        return np.zeros(0)
    r = np.sqrt(np.maximum(w, 0.0))
    total = r.sum()
    if total > 0:
        return r / total
    return np.full(w.shape, 1.0 / w.size)


def allocate_bandwidth(bits, rates) -> np.ndarray:
    """Optimal bandwidth fractions for the served devices of one server."""
    bits = np.asarray(bits, dtype=float)
    rates = np.asarray(rates, dtype=float)
    if bits.size and np.any(rates <= 0):
        raise ValueError("served rates must be > 0")
    return sqrt_share(bits / rates if bits.size else bits)


def allocate_cores(flops, rho, es_class=None) -> np.ndarray:
    """Optimal core fractions; server throughput factors cancel out."""
    flops = np.asarray(flops, dtype=float)
    rho = np.asarray(rho, dtype=float)
    scale = 1.0 if es_class is None else es_class.total_flops
    return sqrt_share(flops * rho / scale)


def allocate(served_bits, served_rates, served_flops, served_rho) -> Allocation:
    return Allocation(allocate_bandwidth(served_bits, served_rates),
                      allocate_cores(served_flops, served_rho))


def grouped_sqrt_share(weights, groups, n_groups: int) -> np.ndarray:
    """``sqrt_share`` applied independently within each group label (``-1`` = unassigned).

    Works on a flat array; unassigned entries get 0.
    """
    w = np.sqrt(np.maximum(np.asarray(weights, dtype=float), 0.0))
    g = np.asarray(groups)
    out = np.zeros_like(w)
    mask = g >= 0
    if not mask.any():
        return out
    gm = g[mask]
    wm = w[mask]
    tot = np.bincount(gm, weights=wm, minlength=n_groups)
    cnt = np.bincount(gm, minlength=n_groups)
    pos = tot[gm] > 0
    share = np.empty_like(wm)
    share[pos] = wm[pos] / tot[gm][pos]
    share[~pos] = 1.0 / cnt[gm][~pos]
    out[mask] = share
    return out


def choice_from_matrix(x) -> np.ndarray:
    """Per-device server index from a binary matrix, ``-1`` for local."""
    x = np.asarray(x)
    c = np.argmax(x, axis=-1)
    return np.where(x.max(axis=-1) > 0, c, -1)


def matrix_from_choice(choice, n_es: int) -> np.ndarray:
    choice = np.asarray(choice)
    x = np.zeros(choice.shape + (n_es,), dtype=np.int8)
    idx = np.nonzero(choice >= 0)
    x[idx + (choice[idx],)] = 1
    return x
