import itertools

import numpy as np
import pytest
from conftest import random_problem

from mecoffload.allocator import choice_from_matrix
from mecoffload.baselines import (LOCAL, OracleTooLarge, Policy, combined_policy, decide, exhaustive_oracle,
                                  max_compute_policy, max_sinr_policy, oracle_choices, random_policy)
from mecoffload.problem import direct_objective


def test_policy_names():
    assert Policy("proposed").kind == "pricing"
    assert Policy("Max-SINR").kind == "max_sinr"
    assert Policy("random").is_heuristic and not Policy("oracle").is_heuristic
    with pytest.raises(ValueError):
        Policy("greedy")
    with pytest.raises(ValueError):
        Policy("random", 1.5)


def test_local_fraction_statistics():
    rng = np.random.default_rng(0)
    n = 100_000
    ch = decide(Policy("random", 0.2), np.zeros(n, dtype=int), rng, n_es=4)
    frac = np.mean(ch == LOCAL)
    assert abs(frac - 0.2) <= 3 * np.sqrt(0.2 * 0.8 / n)
    # the remote picks are uniform over servers
    counts = np.bincount(ch[ch >= 0], minlength=4) / np.sum(ch >= 0)
    assert np.allclose(counts, 0.25, atol=0.01)


def test_rules_pick_the_expected_server():
    rng = np.random.default_rng(1)
    snr = np.array([[1.0, 5.0, 3.0], [9.0, 2.0, 8.0]])
    load = np.array([4.0, 0.5, 2.0])
    assert max_sinr_policy(0, snr, rng, 0.0) == 1
    assert max_sinr_policy(1, snr, rng, 0.0) == 0
    assert max_compute_policy(0, load, rng, 0.0) == 1
    # device 1: sinr ranks (0, 2, 1), load ranks (2, 0, 1) -> sums (2, 2, 2): lowest index
    assert combined_policy(1, snr, load, rng, 0.0) == 0
    assert combined_policy(1, snr, load, rng, 0.0, sinr_weight=1.0, load_weight=3.0) == 1
    assert random_policy(0, 3, rng, 1.0) == LOCAL


def test_rng_use_does_not_depend_on_epsilon():
    a, b = np.random.default_rng(5), np.random.default_rng(5)
    decide(Policy("max_sinr", 0.0), [0, 1], a, snr=np.ones((2, 2)))
    decide(Policy("max_sinr", 1.0), [0, 1], b, snr=np.ones((2, 2)))
    assert a.random() == b.random()


def test_oracle_matches_itertools_enumeration(rng):
    for _ in range(25):
        p = random_problem(rng, int(rng.integers(1, 6)), int(rng.integers(1, 4)))
        x, val = exhaustive_oracle(p)
        vals = {c: direct_objective(p, np.array(c)) for c in itertools.product(range(-1, p.n_es), repeat=p.n_md)}
        best = min(vals.values())
        assert val == pytest.approx(best, rel=1e-12)
        assert vals[tuple(choice_from_matrix(x))] == pytest.approx(best, rel=1e-12)


def test_oracle_size_guard(rng):
    p = random_problem(rng, 6, 3)
    exhaustive_oracle(p, limit=4 ** 6)
    with pytest.raises(OracleTooLarge, match="limit of 4095"):
        exhaustive_oracle(p, limit=4 ** 6 - 1)


def test_oracle_choices_respects_fixed(rng):
    p = random_problem(rng, 5, 2)
    fixed = np.array([0, 1, -1, -1, -1])
    got = oracle_choices(p, [2, 3, 4], fixed)
    best = min(itertools.product(range(-1, 2), repeat=3),
               key=lambda c: direct_objective(p, np.r_[fixed[:2], c]))
    assert direct_objective(p, np.r_[fixed[:2], got]) == pytest.approx(
        direct_objective(p, np.r_[fixed[:2], best]), rel=1e-12)
