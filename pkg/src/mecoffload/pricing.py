"""Pricing-based distributed user association.

Every server ``j`` keeps two prices: ``mu_j`` on its communication
congestion ``sum_i sqrt(d_i/R_ij) x_ij`` and ``nu_j`` on its shared-core
congestion ``sum_i sqrt(f_i rho_i / (F_j Z_j)) x_ij``.  A device picks the
server minimizing its price-weighted score and stays local when no score
is negative.  Prices follow unprojected sub-gradient ascent on the
Lagrangian dual.

With the closed-form resource split, the objective of any association
``x`` equals::

    sum_j (sum_i s_ij x_ij)^2 + sum_j (sum_i e_ij x_ij)^2 + sum_ij c_ij x_ij + constant

with ``s = sqrt_dcm``, ``e = sqrt_des``,
``c_ij = f_i (1 - rho_i) / F_j - D_MD,i - (alpha / B_i) G_ij`` and
``constant = sum_i (D_MD,i + (alpha / B_i) delta_cp f_i)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .allocator import matrix_from_choice
from .model import PRICES, rng_for
from .problem import OffloadProblem, build_problem, direct_objective


@dataclass(frozen=True, eq=False)
class ScoreTerms:
    sqrt_dcm: np.ndarray  # (N, E)
    sqrt_des: np.ndarray  # (N, E)
    c: np.ndarray         # (N, E)
    constant: float = 0.0

    @property
    def shape(self):
        return self.c.shape


@dataclass(frozen=True, eq=False)
class PriceState:
    mu: np.ndarray
    nu: np.ndarray
    eta1: float = 0.01
    eta2: float = 0.01
    step: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.eta1) and np.isfinite(self.eta2)):
            raise ValueError("step sizes must be finite")

    @property
    def a(self) -> np.ndarray:
        return self.mu ** 2 / 4.0

    @property
    def b(self) -> np.ndarray:
        return self.nu ** 2 / 4.0


@dataclass(frozen=True, eq=False)
class DualReport:
    g: float        # dual lower bound on the full objective
    primal: float   # objective of the recovered association
    gap: float
    bound: float    # sum_j (delta1^2 + delta2^2); equals gap at the recovering prices
    expanded_bound: float  # the same with the -2 sqrt(a) delta1 - 2 sqrt(b) delta2 cross terms
    delta1: np.ndarray
    delta2: np.ndarray


def init_prices(n_es: int, seed: int, eta1: float = 0.01, eta2: float = 0.01) -> PriceState:
    rng = rng_for(seed, PRICES)
    return PriceState(rng.random(n_es), rng.random(n_es), float(eta1), float(eta2), 0)


def score_terms(network_or_problem, channel=None, alpha: float | None = None) -> ScoreTerms:
    """Per (device, server) congestion roots and linear coefficients."""
    if isinstance(network_or_problem, OffloadProblem):
        p = network_or_problem
    else:
        p = build_problem(network_or_problem, alpha=alpha)
        if channel is not None and channel is not network_or_problem.channel:
            p = replace(p, rate=channel.rate)
    return terms_from_problem(p)


def terms_from_problem(p: OffloadProblem) -> ScoreTerms:
    s = np.sqrt(p.bits[:, None] / p.rate)
    e = np.sqrt((p.flops * p.rho)[:, None] / (p.es_flops_per_core * p.es_cores)[None, :])
    c = p.es_serial - p.local_delay[:, None] - p.energy_weight[:, None] * p.gain
    return ScoreTerms(s, e, c, float(np.sum(p.local_cost)))


def scores(terms: ScoreTerms, prices: PriceState) -> np.ndarray:
    return prices.mu[None, :] * terms.sqrt_dcm + prices.nu[None, :] * terms.sqrt_des + terms.c


def recover_choice(terms: ScoreTerms, prices: PriceState) -> np.ndarray:
    """Lagrangian-minimizing server per device (``-1`` = local)."""
    w = scores(terms, prices)
    j = np.argmin(w, axis=1)
    return np.where(w[np.arange(w.shape[0]), j] < 0, j, -1)


def recover_assignment(terms: ScoreTerms, prices: PriceState) -> np.ndarray:
    return matrix_from_choice(recover_choice(terms, prices), terms.c.shape[1])


def dual_value(terms: ScoreTerms, prices: PriceState) -> float:
    """Lagrangian dual function, excluding ``terms.constant``."""
    w = scores(terms, prices)
    return float(-np.sum(prices.mu ** 2 + prices.nu ** 2) / 4.0 + np.sum(np.minimum(0.0, w.min(axis=1))))


def loads(terms: ScoreTerms, x) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    return (terms.sqrt_dcm * x).sum(axis=0), (terms.sqrt_des * x).sum(axis=0)


def price_step(terms: ScoreTerms, prices: PriceState, x) -> PriceState:
    """One sub-gradient ascent step given the association ``x`` (N, E)."""
    s, e = loads(terms, x)
    mu = prices.mu + prices.eta1 * (s - prices.mu / 2.0)
    nu = prices.nu + prices.eta2 * (e - prices.nu / 2.0)
    return PriceState(mu, nu, prices.eta1, prices.eta2, prices.step + 1)


def p5_objective(terms: ScoreTerms, choices) -> np.ndarray:
    """Objective via the squared-sum form, for one or a batch of associations."""
    choices = np.asarray(choices)
    x = matrix_from_choice(np.atleast_2d(choices), terms.c.shape[1]).astype(float)
    s = np.einsum("ij,kij->kj", terms.sqrt_dcm, x)
    e = np.einsum("ij,kij->kj", terms.sqrt_des, x)
    val = (s ** 2).sum(axis=1) + (e ** 2).sum(axis=1) + np.einsum("ij,kij->k", terms.c, x) + terms.constant
    return val[0] if choices.ndim == 1 else val


def duality_report(terms: ScoreTerms, prices: PriceState, x_hat, problem: OffloadProblem | None = None) -> DualReport:
    from .allocator import choice_from_matrix
    choice = choice_from_matrix(np.asarray(x_hat))
    primal = float(direct_objective(problem, choice) if problem is not None else p5_objective(terms, choice))
    g = dual_value(terms, prices) + terms.constant
    s, e = loads(terms, x_hat)
    d1 = prices.mu / 2.0 - s
    d2 = prices.nu / 2.0 - e
    sa = np.sqrt(prices.a)
    sb = np.sqrt(prices.b)
    return DualReport(g=g, primal=primal, gap=primal - g,
                      bound=float(np.sum(d1 ** 2 + d2 ** 2)),
                      expanded_bound=float(np.sum(d1 ** 2 + d2 ** 2 - 2 * sa * d1 - 2 * sb * d2)),
                      delta1=d1, delta2=d2)


def recommended_step_size(delta1: float, delta2: float, T: int) -> tuple[float, float, float]:
    """Constant step size and accuracy after ``T`` steps.

    ``delta1`` bounds the squared sub-gradient norm and ``delta2`` the
    squared distance from the initial prices to an optimum.
    """
    eta = float(np.sqrt(delta2 / ((T + 1) * delta1)))
    return eta, eta, float(np.sqrt(delta1 * delta2 / (T + 1)))


@dataclass
class PricingTrace:
    t: list = field(default_factory=list)
    mu: list = field(default_factory=list)
    nu: list = field(default_factory=list)
    g: list = field(default_factory=list)
    primal: list = field(default_factory=list)
    gap: list = field(default_factory=list)

    def append(self, t, prices, g, primal):
        self.t.append(t)
        self.mu.append(prices.mu.copy())
        self.nu.append(prices.nu.copy())
        self.g.append(g)
        self.primal.append(primal)
        self.gap.append(primal - g)

    def __len__(self):
        return len(self.t)

    @property
    def g_max(self) -> np.ndarray:
        return np.maximum.accumulate(np.asarray(self.g)) if self.g else np.zeros(0)


@dataclass(eq=False)
class PricingResult:
    prices: PriceState
    choice: np.ndarray
    g_max: float
    max_grad_sq: float
    trace: PricingTrace | None = None


def run_pricing(terms: ScoreTerms, prices: PriceState, steps: int, problem: OffloadProblem | None = None,
                trace: bool = False) -> PricingResult:
    """Iterate recover -> price update ``steps`` times on a static instance.

    Trace rows hold the state *before* each update: prices, dual value and
    the objective of the association recovered at those prices.
    """
    tr = PricingTrace() if trace else None
    s_, e_ = terms.sqrt_dcm, terms.sqrt_des
    n_es = terms.c.shape[1]
    g_max = -np.inf
    max_grad = 0.0
    # reused buffers keep the per-step cost linear in the instance size
    w = np.empty(terms.c.shape)
    tmp = np.empty(terms.c.shape)
    rows = np.arange(terms.c.shape[0])
    for t in range(steps + 1):
        np.multiply(s_, prices.mu, out=w)
        np.multiply(e_, prices.nu, out=tmp)
        w += tmp
        w += terms.c
        j = np.argmin(w, axis=1)
        wmin = w[rows, j]
        choice = np.where(wmin < 0, j, -1)
        g = float(-np.sum(prices.mu ** 2 + prices.nu ** 2) / 4.0 + np.minimum(0.0, wmin).sum()) + terms.constant
        g_max = max(g_max, g)
        off = choice >= 0
        s_load = np.bincount(choice[off], weights=s_[off, choice[off]], minlength=n_es)
        e_load = np.bincount(choice[off], weights=e_[off, choice[off]], minlength=n_es)
        gmu = s_load - prices.mu / 2.0
        gnu = e_load - prices.nu / 2.0
        max_grad = max(max_grad, float(gmu @ gmu), float(gnu @ gnu))
        if tr is not None:
            primal = float(direct_objective(problem, choice)) if problem is not None \
                else float(p5_objective(terms, choice))
            tr.append(t, prices, g, primal)
        if t == steps:
            break
        prices = PriceState(prices.mu + prices.eta1 * gmu, prices.nu + prices.eta2 * gnu,
                            prices.eta1, prices.eta2, prices.step + 1)
    return PricingResult(prices, choice, g_max, max_grad, tr)


def dual_optimum(terms: ScoreTerms) -> tuple[float, np.ndarray, np.ndarray]:
    """Exact maximum of the dual function (a concave QP), including ``constant``.

    Solved with SLSQP in the epigraph form
    ``max -|mu|^2/4 - |nu|^2/4 + sum_i t_i`` s.t. ``t_i <= 0``, ``t_i <= w_ij``.
    """
    from scipy.optimize import minimize

    n, m = terms.c.shape
    nv = 2 * m + n

    def f(v):
        mu, nu, t = v[:m], v[m:2 * m], v[2 * m:]
        return (mu @ mu + nu @ nu) / 4.0 - t.sum()

    def grad(v):
        mu, nu = v[:m], v[m:2 * m]
        return np.concatenate([mu / 2.0, nu / 2.0, -np.ones(n)])

    rows, cons_b = [], []
    for i in range(n):
        for j in range(m):
            r = np.zeros(nv)
            r[j] = terms.sqrt_dcm[i, j]
            r[m + j] = terms.sqrt_des[i, j]
            r[2 * m + i] = -1.0
            rows.append(r)
            cons_b.append(terms.c[i, j])
        r = np.zeros(nv)
        r[2 * m + i] = -1.0
        rows.append(r)
        cons_b.append(0.0)
    A = np.array(rows)
    bvec = np.array(cons_b)
    cons = {"type": "ineq", "fun": lambda v: A @ v + bvec, "jac": lambda v: A}
    best = None
    for start in (np.zeros(nv),):
        res = minimize(f, start, jac=grad, constraints=[cons], method="SLSQP",
                       options={"ftol": 1e-14, "maxiter": 2000})
        if best is None or res.fun < best.fun:
            best = res
    v = best.x
    mu, nu = v[:m], v[m:2 * m]
    # evaluate the dual exactly at the returned prices
    val = dual_value(terms, PriceState(mu, nu)) + terms.constant
    return val, mu, nu


def write_trace(path, trace: PricingTrace | None, n_es: int | None = None) -> None:
    """CSV with one row per step: t, mu_j..., nu_j..., g, primal, gap."""
    n_es = n_es if n_es is not None else (len(trace.mu[0]) if trace and len(trace) else 0)
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"mu_{j}" for j in range(n_es)] + [f"nu_{j}" for j in range(n_es)]
                   + ["g", "primal", "gap"])
        if trace is None:
            return
        for k in range(len(trace)):
            w.writerow([trace.t[k]] + [repr(float(v)) for v in trace.mu[k]]
                       + [repr(float(v)) for v in trace.nu[k]]
                       + [repr(float(trace.g[k])), repr(float(trace.primal[k])), repr(float(trace.gap[k]))])
