import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mecoffload import perf
from mecoffload.channel import channel_table, gain_from_distance, pathloss_db, snr_from, spectral_rate
from mecoffload.model import DeviceClass, EdgeServer, MobileDevice


def test_amdahl_limits():
    assert perf.amdahl_speedup(0.0, 64) == pytest.approx(1.0)
    assert perf.amdahl_speedup(1.0, 64) == pytest.approx(64.0)
    # rho = 0.95 caps the speed-up at 20
    assert perf.amdahl_speedup(0.95, 1e12) == pytest.approx(20.0, rel=1e-9)
    assert perf.amdahl_speedup(0.5, 2) == pytest.approx(4 / 3)


@given(rho=st.floats(0, 1), s1=st.floats(1, 1e4), s2=st.floats(1, 1e4))
def test_amdahl_monotone_in_units(rho, s1, s2):
    lo, hi = sorted((s1, s2))
    assert perf.amdahl_speedup(rho, lo) <= perf.amdahl_speedup(rho, hi) * (1 + 1e-12)


def test_local_delay_matches_amdahl():
    f, rho, fpc, cores = 4e12, 0.9, 2e11, 8
    single_core = f / fpc
    assert perf.local_delay(f, rho, fpc, cores) == pytest.approx(single_core / perf.amdahl_speedup(rho, cores))


def test_es_delay_split():
    ser, par = perf.es_delay(1e12, 0.75, 1e11, 10, 0.5, eps=0.0)
    assert ser == pytest.approx(2.5)
    assert par == pytest.approx(1.5)
    # serial-only task costs nothing in the parallel phase, even with no cores
    assert perf.es_delay(1e12, 0.0, 1e11, 10, 0.0)[1] == 0.0


def test_comm_delay_and_guard():
    assert perf.comm_delay(8e6, 4e6, 0.5, eps=0.0) == pytest.approx(4.0)
    assert np.isfinite(perf.comm_delay(8e6, 4e6, 0.0))


def test_transformer_memory_known_value():
    # p s b h L (10 + 24/t + 5 a s/(h t)) + p |theta|, evaluated by hand
    got = perf.transformer_memory(2, 512, 1, 4096, 32, 1, 32, 6.7e9)
    act = 512 * 4096 * 32 * (10 + 24 + 5 * 32 * 512 / 4096)
    assert got == pytest.approx(2 * (act + 6.7e9))


def test_memory_feasible():
    ok, slack = perf.memory_feasible([0.3, 0.5], 0.1)
    assert ok and slack == pytest.approx(0.1)
    assert not perf.memory_feasible([0.6, 0.5], 0.1)[0]


def test_energy_gain_sign():
    assert perf.offload_energy_gain(1e-12, 1e13, 2.0, 1e6, 1e7) == pytest.approx(10.0 - 0.2)


def test_powers():
    cls = DeviceClass("p", cores=4, flops_per_core=1e11, compute_energy_coeff=1e-11, tx_power=0.5,
                      comm_energy_coeff=2.0, base_power=0.3, battery_capacity=100.0)
    loc = perf.md_powers(cls, 0.5, offloaded=False)
    assert loc.md_compute == pytest.approx(1e-11 * (0.5e11 + 2e11))
    off = perf.md_powers(cls, 0.5, offloaded=True, y=0.5, bandwidth=2e6)
    assert off.md_comm == pytest.approx(2.0 * 0.5 * 2.0 * 0.5)
    assert off.md_total == pytest.approx(off.md_comm + 0.3)


def test_pathloss_values():
    assert pathloss_db(1.0) == pytest.approx(41.0)
    assert pathloss_db(100.0) == pytest.approx(41.0 + 56.0)
    # clamped below 1 m
    assert pathloss_db(0.0) == pathloss_db(1.0)
    assert gain_from_distance(10.0) == pytest.approx(10 ** (-6.9))


def test_rate_formula():
    s = snr_from(1e-9, 1.0, 1e-20, 1e6)
    assert s == pytest.approx(1e5)
    assert spectral_rate(s, 1e6) == pytest.approx(1e6 * math.log2(1 + 1e5))


def test_channel_table_shapes_and_order():
    md_cls = DeviceClass("m", 1, 1e10, tx_power=1.0)
    es_cls = DeviceClass("e", 1, 1e10)
    mds = [MobileDevice(i, (10.0 * i, 0.0), md_cls, 1.0) for i in range(3)]
    ess = [EdgeServer(0, (0.0, 0.0), es_cls, 2.5e6), EdgeServer(1, (100.0, 0.0), es_cls, 2.5e6)]
    ch = channel_table(mds, ess, 4e-21)
    assert ch.rate.shape == (3, 2)
    # the nearer server is always the faster one
    assert ch.rate[0, 0] > ch.rate[0, 1]
    assert np.all(np.diff(ch.rate[:, 0]) < 0)
    assert ch.snr[1, 0] == pytest.approx(gain_from_distance(10.0) / (4e-21 * 2.5e6))
