import numpy as np
import pytest

from mecoffload.problem import OffloadProblem


def random_problem(rng, n_md, n_es, alpha=None, unlimited_frac=0.25):
    """Synthetic instance with spread-out magnitudes, independent of the catalog."""
    bits = rng.uniform(1e4, 5e7, n_md)
    flops = 10 ** rng.uniform(8, 13.5, n_md)
    rho = rng.uniform(0.0, 1.0, n_md)
    rate = 10 ** rng.uniform(5, 8, (n_md, n_es))
    es_fpc = 10 ** rng.uniform(10.5, 11.8, n_es)
    es_cores = rng.integers(8, 90, n_es).astype(float)
    md_fpc = 10 ** rng.uniform(10, 11.5, n_md)
    md_cores = rng.integers(1, 9, n_md).astype(float)
    local_delay = flops * (1 - rho) / md_fpc + flops * rho / (md_fpc * md_cores)
    alpha = float(rng.choice([0.0, 1.0, 10.0, 100.0])) if alpha is None else alpha
    batteries = rng.uniform(100.0, 4000.0, n_md)
    unlimited = rng.random(n_md) < unlimited_frac
    weight = np.where(unlimited, 0.0, alpha / batteries)
    local_energy = rng.uniform(1e-12, 6e-12, n_md) * flops
    tx_energy = rng.uniform(1.0, 8.0, (n_md, 1)) * bits[:, None] / rate
    return OffloadProblem(bits=bits, flops=flops, rho=rho, memory=rng.uniform(0, 0.3, n_md), rate=rate,
                          es_flops_per_core=es_fpc, es_cores=es_cores,
                          es_reserved_memory=np.full(n_es, 0.1), local_delay=local_delay,
                          energy_weight=weight, local_energy=local_energy, tx_energy=tx_energy, alpha=alpha)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
