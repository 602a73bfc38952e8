"""Pathloss, SNR and link rates between every device/server pair.

Noise power is ``N0 * W_j`` (N0 is a PSD), rates are in bits/s (log2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MIN_DISTANCE = 1.0


@dataclass(frozen=True, eq=False)
class ChannelTable:
    gain: np.ndarray  # |h_ij|^2, linear
    snr: np.ndarray
    rate: np.ndarray  # bits/s


def pathloss_db(distance):
    """``41 + 28 log10(d)`` with ``d`` in metres, clamped below at 1 m."""
    d = np.maximum(np.asarray(distance, dtype=float), MIN_DISTANCE)
    out = 41.0 + 28.0 * np.log10(d)
    return float(out) if out.ndim == 0 else out


def gain_from_distance(distance):
    return 10.0 ** (-np.asarray(pathloss_db(distance)) / 10.0)


def snr(md, es, noise_psd: float) -> float:
    """Linear SNR of device ``md`` transmitting to server ``es``."""
    d = np.hypot(md.position[0] - es.position[0], md.position[1] - es.position[1])
    return float(snr_from(gain_from_distance(d), md.cls.tx_power, noise_psd, es.bandwidth))


def snr_from(gain, tx_power, noise_psd, bandwidth):
    return np.asarray(gain) * tx_power / (noise_psd * bandwidth)


def spectral_rate(snr_value, bandwidth):
    """``W_j log2(1 + SNR)`` in bits/s."""
    return bandwidth * np.log2(1.0 + np.asarray(snr_value, dtype=float))


def channel_table(mds, ess, noise_psd: float, shadowing_db: float = 0.0, rng=None) -> ChannelTable:
    md_pos = np.array([m.position for m in mds], dtype=float)
    es_pos = np.array([e.position for e in ess], dtype=float)
    dist = np.hypot(md_pos[:, None, 0] - es_pos[None, :, 0], md_pos[:, None, 1] - es_pos[None, :, 1])
    pl = pathloss_db(dist)
    if shadowing_db > 0:
        pl = pl + rng.normal(0.0, shadowing_db, size=pl.shape)
    gain = 10.0 ** (-np.atleast_2d(pl) / 10.0)
    power = np.array([m.cls.tx_power for m in mds], dtype=float)[:, None]
    bw = np.array([e.bandwidth for e in ess], dtype=float)[None, :]
    s = snr_from(gain, power, noise_psd, bw)
    return ChannelTable(gain=gain, snr=s, rate=spectral_rate(s, bw))
