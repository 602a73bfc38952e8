"""Reference association policies and the exhaustive-search oracle.

Every heuristic first keeps the task local with probability
``epsilon_local`` and otherwise picks a server by its own rule.  Choices
are server indices, ``-1`` meaning local execution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import OffloadProblem, build_problem, direct_objective

LOCAL = -1
KINDS = ("random", "max_sinr", "max_compute", "combined", "pricing", "oracle")
HEURISTICS = KINDS[:4]
ORACLE_LIMIT = 10 ** 7

_ALIASES = {
    "maxsinr": "max_sinr", "max-sinr": "max_sinr", "maxcompute": "max_compute",
    "max-compute": "max_compute", "proposed": "pricing",
}


@dataclass(frozen=True)
class Policy:
    """Which association rule to run.

    ``sinr_weight`` and ``load_weight`` weight the two ranks of the
    combined rule.
    """

    kind: str
    epsilon_local: float = 0.2
    sinr_weight: float = 1.0
    load_weight: float = 1.0

    def __post_init__(self):
        kind = _ALIASES.get(self.kind.lower(), self.kind.lower())
        if kind not in KINDS:
            raise ValueError(f"unknown policy {self.kind!r}; expected one of {', '.join(KINDS)}")
        object.__setattr__(self, "kind", kind)
        if not 0.0 <= self.epsilon_local <= 1.0:
            raise ValueError("epsilon_local must lie in [0, 1]")

    @property
    def is_heuristic(self) -> bool:
        return self.kind in HEURISTICS


class OracleTooLarge(ValueError):
    pass


def _index(md) -> int:
    return int(getattr(md, "id", md))


def _local_mask(rng, n, eps):
    # one uniform per decision, drawn even when eps is 0 or 1 so that
    # the rng stream does not depend on eps
    return rng.random(n) < eps


def _ranks(values, descending=False):
    """Ordinal ranks along the last axis; ties ranked by index."""
    v = -values if descending else values
    order = np.argsort(v, axis=-1, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(v.shape[-1])[None, :].repeat(v.shape[0], 0), axis=-1)
    return ranks


def decide(policy: Policy, idx, rng, snr=None, load=None, n_es=None) -> np.ndarray:
    """Choices of the devices ``idx`` under a heuristic policy.

    Parameters
    ----------
    policy : Policy
        A heuristic policy (random, max_sinr, max_compute, combined).
    idx : array_like of int
        Deciding devices.
    rng : numpy.random.Generator
    snr : ndarray, shape (N, E), optional
        Link SNRs, needed by max_sinr and combined.
    load : ndarray, shape (E,), optional
        Normalised server load, needed by max_compute and combined.
    n_es : int, optional
        Server count when neither ``snr`` nor ``load`` is given.
    """
    idx = np.asarray(idx, dtype=np.int64)
    n = idx.size
    if n_es is None:
        n_es = snr.shape[1] if snr is not None else len(load)
    local = _local_mask(rng, n, policy.epsilon_local)
    kind = policy.kind
    if kind == "random":
        pick = rng.integers(0, n_es, size=n)
    elif kind == "max_sinr":
        pick = np.argmax(snr[idx], axis=1)
    elif kind == "max_compute":
        pick = np.full(n, int(np.argmin(load)), dtype=np.int64)
    elif kind == "combined":
        rs = _ranks(snr[idx], descending=True)
        rl = _ranks(np.asarray(load, dtype=float)[None, :])
        score = policy.sinr_weight * rs + policy.load_weight * rl
        pick = np.argmin(score, axis=1)
    else:
        raise ValueError(f"{kind} is not a heuristic policy")
    return np.where(local, LOCAL, pick).astype(np.int64)


def random_policy(md, n_es: int, rng, epsilon: float = 0.2) -> int:
    return int(decide(Policy("random", epsilon), [0], rng, n_es=n_es)[0])


def max_sinr_policy(md, channel, rng, epsilon: float = 0.2) -> int:
    """``channel`` is a ChannelTable or an (N, E) SNR array."""
    snr = getattr(channel, "snr", channel)
    return int(decide(Policy("max_sinr", epsilon), [_index(md)], rng, snr=np.asarray(snr))[0])


def max_compute_policy(md, load, rng, epsilon: float = 0.2) -> int:
    """``load`` holds queued parallel flops per server over ``F_ES Z_ES``."""
    return int(decide(Policy("max_compute", epsilon), [_index(md)], rng, load=np.asarray(load, dtype=float))[0])


def combined_policy(md, channel, load, rng, epsilon: float = 0.2, sinr_weight=1.0, load_weight=1.0) -> int:
    snr = np.asarray(getattr(channel, "snr", channel))
    pol = Policy("combined", epsilon, sinr_weight, load_weight)
    return int(decide(pol, [_index(md)], rng, snr=snr, load=np.asarray(load, dtype=float))[0])


def _enumerate(problem: OffloadProblem, free, fixed, limit, chunk=1 << 16):
    n_free = len(free)
    base = problem.n_es + 1
    total = base ** n_free
    if total > limit:
        raise OracleTooLarge(
            f"exhaustive search needs {base}^{n_free} = {total} evaluations, above the limit of {limit}")
    best_val, best = np.inf, None
    powers = base ** np.arange(n_free, dtype=np.int64)
    rows = max(1, chunk // max(problem.n_md, 1))
    for start in range(0, total, rows):
        codes = np.arange(start, min(total, start + rows), dtype=np.int64)
        digits = (codes[:, None] // powers[None, :]) % base - 1
        ch = np.broadcast_to(fixed, (codes.size, problem.n_md)).copy()
        ch[:, free] = digits
        vals = direct_objective(problem, ch)
        k = int(np.argmin(vals))  # first minimizer wins; codes increase so the merge is order-stable
        if vals[k] < best_val:
            best_val, best = float(vals[k]), ch[k].copy()
    return best, best_val


def exhaustive_oracle(network_or_problem, channel=None, alpha=None, limit: int = ORACLE_LIMIT):
    """Best association by full enumeration.

    Returns
    -------
    x : ndarray, shape (N, E)
        Optimal binary association.
    objective : float
        Its objective value.

    Raises
    ------
    OracleTooLarge
        If ``(E + 1) ** N`` exceeds ``limit``.
    """
    from .allocator import matrix_from_choice

    p = network_or_problem if isinstance(network_or_problem, OffloadProblem) \
        else build_problem(network_or_problem, alpha=alpha)
    if channel is not None and not isinstance(network_or_problem, OffloadProblem):
        from dataclasses import replace
        p = replace(p, rate=channel.rate)
    free = np.arange(p.n_md)
    best, val = _enumerate(p, free, np.full(p.n_md, LOCAL), limit)
    return matrix_from_choice(best, p.n_es), val


def oracle_choices(problem: OffloadProblem, deciding, fixed, limit: int = ORACLE_LIMIT) -> np.ndarray:
    """Best choices for ``deciding`` devices with the others held at ``fixed``."""
    best, _ = _enumerate(problem, np.asarray(deciding), np.asarray(fixed), limit)
    return best[np.asarray(deciding)]
