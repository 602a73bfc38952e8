"""Time-stepped episode simulator.

Each step of length ``dt`` runs, in order:

1. devices whose previous task finished draw a new task and pick a
   server (or local execution) with the active policy, at the prices
   currently posted by the servers;
2. each server splits bandwidth among its uploading devices and cores
   among the devices in their parallel phase, using the closed forms on
   the *remaining* work;
3. every task advances through at most one phase: upload, serial
   compute, parallel compute (local tasks skip the upload);
4. batteries drain by the energy spent, depleted devices go idle for good;
5. the pricing policy takes one sub-gradient price step on the live
   association.

Phases are sequential and a phase that finishes mid-step leaves the rest
of the step unused, so latencies are whole multiples of ``dt``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import perf
from .allocator import grouped_sqrt_share
from .baselines import LOCAL, Policy, decide, oracle_choices
from .model import ARRIVALS, POLICY, TaskStream, rng_for
from .pricing import PriceState, init_prices
from .problem import OffloadProblem, direct_objective, energy_weights

IDLE, TRANSFER, SERIAL, PARALLEL, DEAD = 0, 1, 2, 3, 4
_TOL = 1e-9


@dataclass
class Metrics:
    """Episode summary; latency and energy averages cover post-warm-up completions.

    Means are ``None`` when no task completed.
    """

    policy: str
    seed: int
    steps: int
    dt: float
    n_md: int
    n_es: int
    alpha: float
    epsilon_local: float
    tasks_completed: int = 0
    tasks_offloaded: int = 0
    mean_latency: float | None = None
    comm_latency: float | None = None
    es_serial_latency: float | None = None
    es_parallel_latency: float | None = None
    local_latency: float | None = None
    energy_per_task_local: float | None = None
    energy_per_task_edge: float | None = None
    battery_energy_per_task: float | None = None
    offload_ratio: float | None = None
    memory_violation_steps: int = 0
    depleted_devices: int = 0
    dropped_tasks: int = 0
    censored_tasks: int = 0
    drain_steps: int = 0
    base_energy: float = 0.0
    final_gap: float | None = None
    mean_gap: float | None = None
    g_max: float | None = None

    @property
    def comp_latency(self) -> float | None:
        if self.mean_latency is None:
            return None
        return self.es_serial_latency + self.es_parallel_latency + self.local_latency

    def to_dict(self) -> dict:
        d = asdict(self)
        d["comp_latency"] = self.comp_latency
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass
class EpisodeState:
    """Mutable per-device state of a running episode (arrays of length N)."""

    time: float
    step: int
    task: np.ndarray
    assoc: np.ndarray      # server index, -1 local
    phase: np.ndarray
    bits_rem: np.ndarray
    serial_rem: np.ndarray
    par_rem: np.ndarray
    y: np.ndarray          # bandwidth share at the own server this step
    z: np.ndarray          # core share at the own server this step
    created: np.ndarray
    batteries: np.ndarray
    prices: PriceState | None = None

    def x(self, n_es: int) -> np.ndarray:
        """Binary association of in-flight offloaded tasks."""
        from .allocator import matrix_from_choice
        live = (self.phase >= TRANSFER) & (self.phase <= PARALLEL)
        return matrix_from_choice(np.where(live, self.assoc, LOCAL), n_es)


def battery_update(battery, power, dt):
    """Drain ``power * dt`` joules, floored at zero; unlimited stays infinite."""
    b = np.asarray(battery, dtype=float)
    out = np.where(np.isinf(b), b, np.maximum(0.0, b - np.asarray(power, dtype=float) * dt))
    return float(out) if out.ndim == 0 else out


class _Tables:
    """Per (task type, device, server) quantities, gathered by task index."""

    def __init__(self, net):
        tasks = net.tasks
        self.bits = np.array([t.bits for t in tasks])
        self.flops = np.array([t.flops for t in tasks])
        self.rho = np.array([t.parallel_fraction for t in tasks])
        self.mem = np.array([t.memory_fraction for t in tasks])
        self.serial_work = self.flops * (1 - self.rho)
        self.par_work = self.flops * self.rho
        self.rate = net.channel.rate
        self.md_fpc = net.md_array("flops_per_core")
        self.md_cores = net.md_array("cores")
        self.md_dcp = net.md_array("compute_energy_coeff")
        self.md_base = net.md_array("base_power")
        self.unlimited = np.array([m.cls.unlimited for m in net.mds])
        cap = net.md_array("battery_capacity")
        self.level_scale = np.ones_like(cap) if net.scenario.battery_penalty == "joules" \
            else np.where(np.isinf(cap), 1.0, 1.0 / np.where(np.isinf(cap), 1.0, cap))
        self.es_fpc = net.es_array("flops_per_core")
        self.es_cores = net.es_array("cores")
        self.es_fz = self.es_fpc * self.es_cores
        self.es_dcp = net.es_array("compute_energy_coeff")
        self.es_reserved = net.es_array("reserved_memory_fraction")
        # memory fractions are stored against a reference card
        self.es_mem_scale = net.catalog.memory_reference_bytes / np.maximum(net.es_array("vram_bytes"), 1.0)
        # energy per transmitted bit, (N, E)
        tx = net.md_array("comm_energy_coeff") * net.md_array("tx_power")
        self.tx_per_bit = tx[:, None] * (net.es_bandwidth / perf.BANDWIDTH_UNIT)[None, :] / self.rate
        eps = net.scenario.reg_epsilon
        self.eps = eps
        self.local_delay = perf.local_delay(self.flops[:, None], self.rho[:, None], self.md_fpc[None], self.md_cores[None])
        self.es_serial = self.serial_work[:, None] / (self.es_fpc[None] + eps)
        self.local_energy = self.md_dcp[None] * self.flops[:, None]
        self.tx_energy = (tx[:, None] * (net.es_bandwidth / perf.BANDWIDTH_UNIT)[None, :])[None] \
            * self.bits[:, None, None] / (self.rate[None] + eps)
        self.sqrt_dcm = np.sqrt(self.bits[:, None, None] / self.rate[None])
        self.sqrt_des = np.sqrt(self.par_work[:, None] / self.es_fz[None])

    def weights(self, idx, batteries, alpha):
        b = batteries[idx] * self.level_scale[idx]
        return energy_weights(alpha, b, self.unlimited[idx], self.eps)

    def problem(self, idx, task, batteries, alpha) -> OffloadProblem:
        tk = task[idx]
        return OffloadProblem(
            bits=self.bits[tk], flops=self.flops[tk], rho=self.rho[tk], memory=self.mem[tk],
            rate=self.rate[idx], es_flops_per_core=self.es_fpc, es_cores=self.es_cores,
            es_reserved_memory=self.es_reserved, local_delay=self.local_delay[tk, idx],
            energy_weight=self.weights(idx, batteries, alpha),
            local_energy=self.local_energy[tk, idx], tx_energy=self.tx_energy[tk, idx],
            alpha=float(alpha), eps=self.eps)

    def terms(self, idx, task, batteries, alpha):
        tk = task[idx]
        ew = self.weights(idx, batteries, alpha)
        s = self.sqrt_dcm[tk, idx]
        e = self.sqrt_des[tk]
        gain = self.local_energy[tk, idx][:, None] - self.tx_energy[tk, idx]
        c = self.es_serial[tk] - self.local_delay[tk, idx][:, None] - ew[:, None] * gain
        const = float(np.sum(self.local_delay[tk, idx] + ew * self.local_energy[tk, idx]))
        return s, e, c, const


class Episode:
    """One simulated episode of a network under a policy.

    Parameters
    ----------
    network : Network
    policy : Policy or str
    steps, dt : optional
        Default to the scenario's values.
    prices : PriceState, optional
        Initial prices for the pricing policy; drawn from the seed otherwise.
    record_trace : bool
        Keep one row per step (see :meth:`write_trace`).
    """

    def __init__(self, network, policy, steps=None, dt=None, prices=None, record_trace=False):
        self.net = network
        self.policy = policy if isinstance(policy, Policy) else Policy(policy, network.scenario.epsilon_local)
        sc = network.scenario
        self.steps = int(sc.steps if steps is None else steps)
        self.dt = float(sc.dt if dt is None else dt)
        if self.steps < 0 or not self.dt > 0:
            raise ValueError("steps must be >= 0 and dt > 0")
        self.alpha = sc.alpha
        self.tab = _Tables(network)
        n = network.n_md
        self.n_es = network.n_es
        self.stream = TaskStream(sc.seed, n, network.task_weights)
        self.rng = rng_for(sc.seed, POLICY)
        if self.policy.kind == "pricing" and prices is None:
            prices = init_prices(self.n_es, sc.seed, *sc.step_sizes)
        self.state = EpisodeState(
            time=0.0, step=0, task=np.full(n, -1, dtype=np.int64), assoc=np.full(n, LOCAL, dtype=np.int64),
            phase=np.zeros(n, dtype=np.int8), bits_rem=np.zeros(n), serial_rem=np.zeros(n), par_rem=np.zeros(n),
            y=np.zeros(n), z=np.zeros(n), created=np.zeros(n), batteries=network.batteries.copy(),
            prices=prices if self.policy.kind == "pricing" else None)
        self.ready_at = rng_for(sc.seed, ARRIVALS).uniform(0.0, sc.arrival_window, n) \
            if sc.arrival_window > 0 else np.zeros(n)
        self.warmup = int(math.floor(sc.warmup_fraction * self.steps))
        # per-task accumulators
        self._t_comm = np.zeros(n)
        self._t_ser = np.zeros(n)
        self._t_par = np.zeros(n)
        self._t_loc = np.zeros(n)
        self._e_md = np.zeros(n)
        self._e_es = np.zeros(n)
        # episode accumulators
        self.completed = 0
        self.offloaded = 0
        self.sum_lat = np.zeros(4)  # comm, es serial, es parallel, local
        self.sum_e_md = 0.0
        self.sum_e_es = 0.0
        self.sum_e_batt = 0.0
        self.completed_batt = 0
        self.mem_viol = 0
        self.depleted = 0
        self.dropped = 0
        self.base_energy = 0.0
        self.gaps = []
        self.g_values = []
        self.record_trace = record_trace
        self.trace: list[list] = []
        self.latencies: list[float] = []
        # tasks created in the measurement window, followed until they finish
        self.measured = np.zeros(n, dtype=bool)
        self.drain_steps = 0
        self.censored = 0

    # -- decisions -----------------------------------------------------

    def _server_load(self):
        st = self.state
        live = (st.phase >= TRANSFER) & (st.phase <= PARALLEL) & (st.assoc >= 0)
        return np.bincount(st.assoc[live], weights=st.par_rem[live], minlength=self.n_es) / self.tab.es_fz

    def _decide(self, ids):
        st, tab, pol = self.state, self.tab, self.policy
        if pol.kind == "pricing":
            s, e, c, _ = tab.terms(ids, st.task, st.batteries, self.alpha)
            w = st.prices.mu * s + st.prices.nu * e + c
            j = np.argmin(w, axis=1)
            return np.where(w[np.arange(ids.size), j] < 0, j, LOCAL)
        if pol.kind == "oracle":
            alive = np.flatnonzero(st.phase != DEAD)
            prob = tab.problem(alive, st.task, st.batteries, self.alpha)
            pos = np.searchsorted(alive, ids)
            fixed = np.where((st.phase[alive] >= TRANSFER) & (st.phase[alive] <= PARALLEL), st.assoc[alive], LOCAL)
            return oracle_choices(prob, pos, fixed)
        if pol.kind in ("random", "max_sinr"):
            return decide(pol, ids, self.rng, snr=self.net.channel.snr, n_es=self.n_es)
        # load-aware rules see the load left by earlier deciders of the same step
        load = self._server_load()
        out = np.empty(ids.size, dtype=np.int64)
        for k, i in enumerate(ids):
            ch = int(decide(pol, [i], self.rng, snr=self.net.channel.snr, load=load)[0])
            out[k] = ch
            if ch >= 0:
                load[ch] += tab.par_work[st.task[i]] / tab.es_fz[ch]
        return out

    def _admit_memory(self, ids, choice):
        """Strict mode: later offloads that would overflow a server fall back to local."""
        st, tab = self.state, self.tab
        live = (st.phase >= TRANSFER) & (st.phase <= PARALLEL) & (st.assoc >= 0)
        used = np.bincount(st.assoc[live], weights=tab.mem[st.task[live]], minlength=self.n_es) * tab.es_mem_scale
        cap = 1.0 - tab.es_reserved
        for k, i in enumerate(ids):
            j = choice[k]
            if j < 0:
                continue
            m = tab.mem[st.task[i]] * tab.es_mem_scale[j]
            if used[j] + m > cap[j] + 1e-12:
                choice[k] = LOCAL
            else:
                used[j] += m
        return choice

    def _start_tasks(self, t):
        st, tab = self.state, self.tab
        ids = np.flatnonzero((st.phase == IDLE) & (self.ready_at <= t * self.dt))
        if ids.size == 0:
            return
        # draw 0 of every stream is the network's initial task
        st.task[ids] = [self.stream.next(int(i)) for i in ids]
        choice = np.asarray(self._decide(ids), dtype=np.int64)
        if self.net.scenario.strict_memory:
            choice = self._admit_memory(ids, choice)
        tk = st.task[ids]
        st.assoc[ids] = choice
        st.bits_rem[ids] = np.where(choice >= 0, tab.bits[tk], 0.0)
        st.serial_rem[ids] = tab.serial_work[tk]
        st.par_rem[ids] = tab.par_work[tk]
        st.phase[ids] = np.where(choice >= 0, TRANSFER, SERIAL)
        st.created[ids] = t * self.dt
        self.measured[ids] = self.warmup <= t < self.steps
        for a in (self._t_comm, self._t_ser, self._t_par, self._t_loc, self._e_md, self._e_es):
            a[ids] = 0.0
        self._advance(ids, t, at_start=True)

    # -- dynamics ------------------------------------------------------

    def _advance(self, ids, t, at_start=False):
        """Skip finished phases of ``ids``; record completions."""
        st, tab = self.state, self.tab
        tk = st.task[ids]
        ph = st.phase[ids]
        m = (ph == TRANSFER) & (st.bits_rem[ids] <= _TOL * np.maximum(tab.bits[tk], 1.0))
        st.bits_rem[ids[m]] = 0.0
        ph[m] = SERIAL
        m = (ph == SERIAL) & (st.serial_rem[ids] <= _TOL * np.maximum(tab.serial_work[tk], 1.0))
        st.serial_rem[ids[m]] = 0.0
        ph[m] = PARALLEL
        m = (ph == PARALLEL) & (st.par_rem[ids] <= _TOL * np.maximum(tab.par_work[tk], 1.0))
        st.par_rem[ids[m]] = 0.0
        st.phase[ids] = ph
        done = ids[m]
        if done.size:
            st.phase[done] = IDLE
            done = done[self.measured[done]]
            self.measured[ids[m]] = False
            if done.size:
                end = t * self.dt if at_start else (t + 1) * self.dt
                lat = end - st.created[done]
                self.latencies.extend(lat.tolist())
                self.completed += done.size
                self.offloaded += int(np.sum(st.assoc[done] >= 0))
                self.sum_lat += [self._t_comm[done].sum(), self._t_ser[done].sum(),
                                 self._t_par[done].sum(), self._t_loc[done].sum()]
                self.sum_e_md += float(self._e_md[done].sum())
                self.sum_e_es += float(self._e_es[done].sum())
                b = done[~tab.unlimited[done]]
                self.completed_batt += b.size
                self.sum_e_batt += float(self._e_md[b].sum())

    def _allocate(self):
        st, tab = self.state, self.tab
        st.y[:] = 0.0
        st.z[:] = 0.0
        tr = np.flatnonzero(st.phase == TRANSFER)
        if tr.size:
            j = st.assoc[tr]
            st.y[tr] = grouped_sqrt_share(st.bits_rem[tr] / tab.rate[tr, j], j, self.n_es)
        pp = np.flatnonzero((st.phase == PARALLEL) & (st.assoc >= 0))
        if pp.size:
            j = st.assoc[pp]
            st.z[pp] = grouped_sqrt_share(st.par_rem[pp] / tab.es_fz[j], j, self.n_es)

    def _memory_check(self):
        st, tab = self.state, self.tab
        live = (st.phase >= TRANSFER) & (st.phase <= PARALLEL) & (st.assoc >= 0)
        used = np.bincount(st.assoc[live], weights=tab.mem[st.task[live]], minlength=self.n_es) * tab.es_mem_scale
        self.mem_viol += int(np.sum(used > 1.0 - tab.es_reserved + 1e-12))

    def _progress(self, t):
        st, tab, dt = self.state, self.tab, self.dt
        n = st.phase.size
        e_md = np.zeros(n)
        off = st.assoc >= 0

        tr = np.flatnonzero(st.phase == TRANSFER)
        if tr.size:
            j = st.assoc[tr]
            sent = np.minimum(st.bits_rem[tr], tab.rate[tr, j] * st.y[tr] * dt)
            st.bits_rem[tr] -= sent
            e_md[tr] += tab.tx_per_bit[tr, j] * sent
            self._t_comm[tr] += dt

        se = np.flatnonzero(st.phase == SERIAL)
        if se.size:
            o = off[se]
            j = st.assoc[se]
            speed = np.where(o, tab.es_fpc[np.maximum(j, 0)], tab.md_fpc[se])
            work = np.minimum(st.serial_rem[se], speed * dt)
            st.serial_rem[se] -= work
            e_md[se] += np.where(o, 0.0, tab.md_dcp[se] * work)
            self._e_es[se] += np.where(o, tab.es_dcp[np.maximum(j, 0)] * work, 0.0)
            self._t_ser[se[o]] += dt
            self._t_loc[se[~o]] += dt

        pa = np.flatnonzero(st.phase == PARALLEL)
        if pa.size:
            o = off[pa]
            j = st.assoc[pa]
            speed = np.where(o, tab.es_fz[np.maximum(j, 0)] * st.z[pa], tab.md_fpc[pa] * tab.md_cores[pa])
            work = np.minimum(st.par_rem[pa], speed * dt)
            st.par_rem[pa] -= work
            e_md[pa] += np.where(o, 0.0, tab.md_dcp[pa] * work)
            self._e_es[pa] += np.where(o, tab.es_dcp[np.maximum(j, 0)] * work, 0.0)
            self._t_par[pa[o]] += dt
            self._t_loc[pa[~o]] += dt

        self._e_md += e_md
        alive = st.phase != DEAD
        base = np.where(alive, tab.md_base * dt, 0.0)
        if self.warmup <= t < self.steps:
            self.base_energy += float(base.sum())
        lim = alive & ~tab.unlimited
        st.batteries[lim] = np.maximum(0.0, st.batteries[lim] - e_md[lim] - base[lim])
        active = np.flatnonzero((st.phase >= TRANSFER) & (st.phase <= PARALLEL))
        self._advance(active, t)
        dead = np.flatnonzero(lim & (st.batteries <= 0.0))
        if dead.size:
            self.depleted += dead.size
            self.dropped += int(np.sum((st.phase[dead] >= TRANSFER) & (st.phase[dead] <= PARALLEL)))
            self.measured[dead] = False
            st.phase[dead] = DEAD
            st.assoc[dead] = LOCAL
            st.bits_rem[dead] = st.serial_rem[dead] = st.par_rem[dead] = 0.0

    def _price_step(self, t):
        """Dual bookkeeping on the live instance, then one price update."""
        st, tab = self.state, self.tab
        alive = np.flatnonzero((st.phase >= TRANSFER) & (st.phase <= PARALLEL))
        pr = st.prices
        row = [None, None, None]
        if alive.size:
            s, e, c, const = tab.terms(alive, st.task, st.batteries, self.alpha)
            w = pr.mu * s + pr.nu * e + c
            g = float(-np.sum(pr.mu ** 2 + pr.nu ** 2) / 4.0 + np.minimum(0.0, w.min(axis=1)).sum()) + const
            choice = st.assoc[alive]
            primal = float(direct_objective(tab.problem(alive, st.task, st.batteries, self.alpha), choice))
            o = choice >= 0
            s_load = np.bincount(choice[o], weights=s[o, choice[o]], minlength=self.n_es)
            e_load = np.bincount(choice[o], weights=e[o, choice[o]], minlength=self.n_es)
            row = [g, primal, primal - g]
            if self.warmup <= t < self.steps:
                self.g_values.append(g)
                self.gaps.append(primal - g)
        else:
            s_load = e_load = np.zeros(self.n_es)
        new = PriceState(pr.mu + pr.eta1 * (s_load - pr.mu / 2.0), pr.nu + pr.eta2 * (e_load - pr.nu / 2.0),
                         pr.eta1, pr.eta2, pr.step + 1)
        return new, row

    # -- driver --------------------------------------------------------

    def step(self, t):
        st = self.state
        self._start_tasks(t)
        self._allocate()
        if t < self.steps:
            self._memory_check()
        row = [None, None, None]
        new_prices = None
        if st.prices is not None:
            # dual bookkeeping sees the association and prices of this step
            new_prices, row = self._price_step(t)
        n_off = int(np.sum((st.phase >= TRANSFER) & (st.phase <= PARALLEL) & (st.assoc >= 0)))
        n_loc = int(np.sum((st.phase >= TRANSFER) & (st.phase <= PARALLEL) & (st.assoc < 0)))
        prices_now = st.prices
        self._progress(t)
        if new_prices is not None:
            st.prices = new_prices
        st.step = t + 1
        st.time = (t + 1) * self.dt
        if self.record_trace and t < self.steps:
            mu = list(prices_now.mu) if prices_now is not None else [None] * self.n_es
            nu = list(prices_now.nu) if prices_now is not None else [None] * self.n_es
            self.trace.append([t, t * self.dt, n_off, n_loc, int(np.sum(st.phase == DEAD)), self.completed]
                              + row + mu + nu)

    def run(self) -> "Episode":
        """Run ``steps`` steps, then keep going (at most ``steps`` more) until
        every task created after the warm-up has finished."""
        for t in range(self.steps):
            self.step(t)
        t = self.steps
        while self.measured.any() and t < 2 * self.steps:
            self.step(t)
            t += 1
        self.drain_steps = t - self.steps
        self.censored = int(self.measured.sum())
        return self

    @property
    def metrics(self) -> Metrics:
        return collect_metrics(self)

    def write_trace(self, path) -> None:
        header = ["t", "time", "offloaded", "local", "depleted", "completed", "g", "primal", "gap"] \
            + [f"mu_{j}" for j in range(self.n_es)] + [f"nu_{j}" for j in range(self.n_es)]
        with open(Path(path), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in self.trace:
                w.writerow([_fmt(v) for v in r])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def collect_metrics(episode: Episode) -> Metrics:
    ep = episode
    sc = ep.net.scenario
    m = Metrics(policy=ep.policy.kind, seed=sc.seed, steps=ep.steps, dt=ep.dt, n_md=ep.net.n_md,
                n_es=ep.n_es, alpha=float(ep.alpha), epsilon_local=float(ep.policy.epsilon_local),
                memory_violation_steps=ep.mem_viol, depleted_devices=ep.depleted, dropped_tasks=ep.dropped,
                base_energy=ep.base_energy, censored_tasks=ep.censored, drain_steps=ep.drain_steps)
    n = ep.completed
    m.tasks_completed = n
    m.tasks_offloaded = ep.offloaded
    if n:
        lat = ep.sum_lat / n
        m.comm_latency, m.es_serial_latency, m.es_parallel_latency, m.local_latency = map(float, lat)
        m.mean_latency = float(np.mean(ep.latencies))
        m.energy_per_task_local = ep.sum_e_md / n
        m.energy_per_task_edge = ep.sum_e_es / n
        m.offload_ratio = ep.offloaded / n
    if ep.completed_batt:
        m.battery_energy_per_task = ep.sum_e_batt / ep.completed_batt
    if ep.gaps:
        m.final_gap = float(ep.gaps[-1])
        m.mean_gap = float(np.mean(ep.gaps))
        m.g_max = float(np.max(ep.g_values))
    return m


def run_episode(network, policy, T=None, dt=None, prices=None) -> Metrics:
    """Simulate ``T`` steps of ``dt`` seconds and return the metrics."""
    return Episode(network, policy, T, dt, prices).run().metrics
