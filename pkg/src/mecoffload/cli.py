"""Command-line front end.

Every command reads a JSON config (scenario keys plus optional study
sections), writes CSV/JSON files into ``--out`` and prints a one-line JSON
summary.  Failures print ``{"error": ..., "message": ...}`` and exit
non-zero.

Config layout::

    {
      "n_md": 20, "n_es": 4, ...            scenario keys
      "policies": ["random", "pricing"],     simulate / sweep
      "replicates": 1,                       seeds seed, seed+1, ...
      "sweep": {"axis": "n_md", "values": [20, 40]},
      "pareto": {"epsilons": [0.0, 0.5, 1.0], "alphas": [1.0]},
      "convergence": {"step_sizes": [0.001, 0.01], "steps": 2000},
      "oracle": {"n_md": 6, "n_es": 3, "steps": 2000, "step_size": 0.01}
    }

CSV floats are written with ``repr`` so they round-trip exactly.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import HEURISTICS, ORACLE_LIMIT, OracleTooLarge, Policy, exhaustive_oracle
from .engine import Episode
from .model import Scenario, ScenarioError, default_config_path, generate_scenario
from .pricing import duality_report, init_prices, run_pricing, terms_from_problem, write_trace
from .problem import build_problem

SECTIONS = ("policies", "replicates", "sweep", "pareto", "convergence", "oracle")
DEFAULT_POLICIES = ("random", "max_sinr", "max_compute", "combined", "pricing")
SWEEP_AXES = ("n_md", "n_es", "alpha")
SWEEP_COLUMNS = ("axis", "value", "policy", "replicates", "mean_latency", "comm_latency", "comp_latency",
                 "local_energy_per_task", "battery_energy_per_task", "edge_energy_per_task",
                 "offload_ratio", "gap")
PARETO_COLUMNS = ("policy", "epsilon_local", "alpha", "replicates", "mean_latency", "local_energy_per_task",
                  "inv_latency", "inv_energy", "pareto_optimal", "dominated_by_pricing")


class CliError(Exception):
    """Bad input; reported as an error JSON."""


# -- config ------------------------------------------------------------

def load_config(path) -> dict:
    p = Path(path)
    if not p.exists():
        # bare names resolve to the bundled configs
        bundled = default_config_path(str(path))
        if not bundled.exists():
            raise CliError(f"config file not found: {path}")
        p = bundled
    try:
        cfg = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CliError(f"config {p} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise CliError("config must be a JSON object")
    if cfg.get("catalog"):
        cat = Path(cfg["catalog"])
        if not cat.is_absolute():
            cat = p.parent / cat
        if not cat.exists():
            raise CliError(f"catalog file not found: {cfg['catalog']}")
        cfg["catalog"] = str(cat)
    return cfg


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply ``key=value`` overrides; dotted keys reach into study sections."""
    cfg = copy.deepcopy(cfg)
    scenario_keys = set(Scenario.__dataclass_fields__)
    for item in overrides or ():
        if "=" not in item:
            raise CliError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        key = key.strip()
        value = _parse_value(raw)
        head, _, rest = key.partition(".")
        if rest:
            if head not in SECTIONS or head in ("policies", "replicates"):
                raise CliError(f"unknown override key {key!r}")
            cfg.setdefault(head, {})[rest] = value
        elif head in scenario_keys or head in SECTIONS:
            cfg[head] = value
        else:
            raise CliError(f"unknown override key {key!r}")
    return cfg


def scenario_of(cfg: dict, **changes) -> Scenario:
    d = {k: v for k, v in cfg.items() if k not in SECTIONS}
    d.update(changes)
    return Scenario.from_dict(d)


def _policies(cfg: dict) -> list[Policy]:
    names = cfg.get("policies", list(DEFAULT_POLICIES))
    if not names:
        raise CliError("policies list is empty")
    eps = float(cfg.get("epsilon_local", Scenario.epsilon_local))
    return [Policy(n, eps) for n in names]


def _seeds(cfg: dict, seed: int) -> list[int]:
    k = int(cfg.get("replicates", 1))
    if k < 1:
        raise CliError("replicates must be >= 1")
    return [seed + r for r in range(k)]


# -- helpers -------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def _run_jobs(jobs, threads: int):
    """Run ``(key, fn)`` jobs, return ``{key: result}``; order-independent."""
    if threads <= 1:
        return {k: f() for k, f in jobs}
    with ThreadPoolExecutor(max_workers=threads) as ex:
        futs = {k: ex.submit(f) for k, f in jobs}
        return {k: fu.result() for k, fu in futs.items()}


def _episode(scenario: Scenario, policy: Policy, trace_path=None):
    ep = Episode(generate_scenario(scenario), policy, record_trace=trace_path is not None).run()
    if trace_path is not None:
        ep.write_trace(trace_path)
    return ep.metrics


def _mean(values):
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


# -- commands ------------------------------------------------------------

def cmd_simulate(cfg, out: Path, seed: int, threads: int, trace: bool = False) -> dict:
    sc = scenario_of(cfg, seed=seed)
    pols = _policies(cfg)
    jobs = [(i, (lambda p=p, i=i: _episode(sc, p, out / f"trace_{i}_{p.kind}.csv" if trace else None)))
            for i, p in enumerate(pols)]
    res = _run_jobs(jobs, threads)
    records = [res[i].to_dict() for i in range(len(pols))]
    write_json(out / "metrics.json", records)
    files = ["metrics.json"] + ([f"trace_{i}_{p.kind}.csv" for i, p in enumerate(pols)] if trace else [])
    return {"command": "simulate", "files": files, "episodes": len(records)}


def sweep_rows(cfg, seed: int, axis: str, values, threads: int = 1) -> list[list]:
    if axis not in SWEEP_AXES:
        raise CliError(f"sweep axis must be one of {', '.join(SWEEP_AXES)}")
    if not values:
        raise CliError("sweep values list is empty")
    pols = _policies(cfg)
    seeds = _seeds(cfg, seed)
    cast = float if axis == "alpha" else int
    values = [cast(v) for v in values]
    jobs = []
    for vi, v in enumerate(values):
        for pi, p in enumerate(pols):
            for s in seeds:
                sc = scenario_of(cfg, seed=s, **{axis: v})
                jobs.append(((vi, pi, s), (lambda sc=sc, p=p: _episode(sc, p))))
    res = _run_jobs(jobs, threads)
    rows = []
    for vi, v in enumerate(values):
        for pi, p in enumerate(pols):
            ms = [res[(vi, pi, s)] for s in seeds]
            rows.append([axis, v, p.kind, len(ms),
                         _mean(m.mean_latency for m in ms), _mean(m.comm_latency for m in ms),
                         _mean(m.comp_latency for m in ms), _mean(m.energy_per_task_local for m in ms),
                         _mean(m.battery_energy_per_task for m in ms), _mean(m.energy_per_task_edge for m in ms),
                         _mean(m.offload_ratio for m in ms), _mean(m.mean_gap for m in ms)])
    return rows


def cmd_sweep(cfg, out: Path, seed: int, threads: int, axis=None, values=None) -> dict:
    sec = cfg.get("sweep", {})
    axis = axis or sec.get("axis")
    values = values if values is not None else sec.get("values")
    if axis is None or values is None:
        raise CliError("sweep needs an axis and values (config 'sweep' section or --axis/--values)")
    rows = sweep_rows(cfg, seed, axis, values, threads)
    write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows)
    return {"command": "sweep", "files": ["sweep.csv"], "rows": len(rows)}


def dominates(a, b) -> bool:
    """``a`` dominates ``b`` when maximizing both coordinates."""
    return a[0] >= b[0] and a[1] >= b[1] and (a[0] > b[0] or a[1] > b[1])


def pareto_rows(cfg, seed: int, epsilons, alphas, threads: int = 1) -> list[list]:
    if not epsilons or not alphas:
        raise CliError("pareto needs non-empty epsilon and alpha grids")
    eps = [float(e) for e in epsilons]
    if any(not 0.0 <= e <= 1.0 for e in eps):
        raise CliError("epsilon values must lie in [0, 1]")
    names = [n for n in cfg.get("policies", list(HEURISTICS)) if Policy(n).is_heuristic]
    seeds = _seeds(cfg, seed)
    points = [(n, e, float(cfg.get("alpha", Scenario.alpha))) for n in names for e in eps]
    points += [("pricing", float(cfg.get("epsilon_local", Scenario.epsilon_local)), float(a)) for a in alphas]
    jobs = []
    for k, (n, e, a) in enumerate(points):
        for s in seeds:
            sc = scenario_of(cfg, seed=s, alpha=a)
            jobs.append(((k, s), (lambda sc=sc, n=n, e=e: _episode(sc, Policy(n, e)))))
    res = _run_jobs(jobs, threads)
    lat, en = [], []
    for k in range(len(points)):
        ms = [res[(k, s)] for s in seeds]
        lat.append(_mean(m.mean_latency for m in ms))
        en.append(_mean(m.energy_per_task_local for m in ms))
    inv = [(1.0 / la if la else 0.0, 1.0 / e if e else np.inf) for la, e in zip(lat, en)]
    pricing_pts = [inv[k] for k, p in enumerate(points) if p[0] == "pricing"]
    rows = []
    for k, (n, e, a) in enumerate(points):
        optimal = not any(dominates(inv[o], inv[k]) for o in range(len(points)) if o != k)
        by_pricing = None if n == "pricing" else any(dominates(q, inv[k]) for q in pricing_pts)
        rows.append([n, e, a, len(seeds), lat[k], en[k], inv[k][0], inv[k][1], optimal, by_pricing])
    return rows


def cmd_pareto(cfg, out: Path, seed: int, threads: int) -> dict:
    sec = cfg.get("pareto", {})
    epsilons = sec.get("epsilons", [round(0.1 * k, 1) for k in range(11)])
    alphas = sec.get("alphas", [1.0])
    rows = pareto_rows(cfg, seed, epsilons, alphas, threads)
    write_csv(out / "pareto.csv", PARETO_COLUMNS, rows)
    return {"command": "pareto", "files": ["pareto.csv"], "rows": len(rows)}


def cmd_convergence(cfg, out: Path, seed: int, threads: int) -> dict:
    sec = cfg.get("convergence", {})
    etas = [float(v) for v in sec.get("step_sizes", [0.001, 0.01, 0.05])]
    steps = int(sec.get("steps", 2000))
    if not etas:
        raise CliError("convergence needs at least one step size")
    if len(set(etas)) != len(etas):
        raise CliError("duplicate step sizes")
    if any(not (e > 0 and np.isfinite(e)) for e in etas):
        raise CliError("step sizes must be finite and > 0")
    if steps < 0:
        raise CliError("convergence steps must be >= 0")
    net = generate_scenario(scenario_of(cfg, seed=seed))
    problem = build_problem(net)
    terms = terms_from_problem(problem)
    files = []
    for eta in etas:
        name = f"convergence_eta{eta!r}.csv"
        # T steps give T trace rows: the state before each update
        result = run_pricing(terms, init_prices(net.n_es, seed, eta, eta), steps - 1, problem, trace=True) \
            if steps > 0 else None
        write_trace(out / name, result.trace if result else None, net.n_es)
        files.append(name)
    return {"command": "convergence", "files": files, "steps": steps}


def oracle_report(cfg, seed: int) -> dict:
    sec = cfg.get("oracle", {})
    changes = {k: sec[k] for k in ("n_md", "n_es", "alpha") if k in sec}
    net = generate_scenario(scenario_of(cfg, seed=seed, **changes))
    steps = int(sec.get("steps", 2000))
    eta = float(sec.get("step_size", 0.01))
    limit = int(sec.get("limit", ORACLE_LIMIT))
    problem = build_problem(net)
    terms = terms_from_problem(problem)
    _, oracle_obj = exhaustive_oracle(problem, limit=limit)
    res = run_pricing(terms, init_prices(net.n_es, seed, eta, eta), steps, problem)
    from .allocator import matrix_from_choice
    rep = duality_report(terms, res.prices, matrix_from_choice(res.choice, net.n_es), problem)
    gap = rep.primal - oracle_obj
    return {"n_md": net.n_md, "n_es": net.n_es, "steps": steps, "step_size": eta,
            "oracle_obj": oracle_obj, "pricing_obj": rep.primal, "dual_value": rep.g, "gap": gap,
            "bound": rep.bound, "expanded_bound": rep.expanded_bound,
            "within_bound": bool(gap <= rep.bound + 1e-6)}


def cmd_oracle_compare(cfg, out: Path, seed: int, threads: int) -> dict:
    rep = oracle_report(cfg, seed)
    write_json(out / "oracle_compare.json", rep)
    return {"command": "oracle-compare", "files": ["oracle_compare.json"], "within_bound": rep["within_bound"]}


# -- entry point -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="default", help="config JSON path or bundled config name")
    common.add_argument("--out", default=".", help="output directory (created if missing)")
    common.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key; repeatable, dotted keys for sections")
    common.add_argument("--threads", type=int, default=1, help="worker threads for independent episodes")

    ap = argparse.ArgumentParser(prog="mecoffload", description="Edge offloading simulator and optimizer.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    sim = sub.add_parser("simulate", parents=[common], help="one episode per configured policy")
    sim.add_argument("--trace", action="store_true", help="also write a per-step trace CSV per policy")
    sw = sub.add_parser("sweep", parents=[common], help="metrics over one scenario axis")
    sw.add_argument("--axis", choices=SWEEP_AXES)
    sw.add_argument("--values", type=str, help="comma-separated axis values")
    sub.add_parser("pareto", parents=[common], help="latency / energy points of every policy")
    sub.add_parser("convergence", parents=[common], help="price traces for several step sizes")
    sub.add_parser("oracle-compare", parents=[common], help="pricing versus exhaustive search")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise CliError("--threads must be >= 1")
        cfg = apply_overrides(load_config(args.config), args.overrides)
        seed = int(args.seed if args.seed is not None else cfg.get("seed", 0))
        if seed < 0:
            raise CliError("--seed must be >= 0")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            summary = cmd_simulate(cfg, out, seed, args.threads, args.trace)
        elif args.command == "sweep":
            values = None
            if args.values is not None:
                values = [_parse_value(v) for v in args.values.split(",") if v.strip()]
            summary = cmd_sweep(cfg, out, seed, args.threads, args.axis, values)
        elif args.command == "pareto":
            summary = cmd_pareto(cfg, out, seed, args.threads)
        elif args.command == "convergence":
            summary = cmd_convergence(cfg, out, seed, args.threads)
        else:
            summary = cmd_oracle_compare(cfg, out, seed, args.threads)
    except (CliError, ScenarioError, OracleTooLarge, ValueError, TypeError, KeyError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc).strip("'\"")}, sort_keys=True))
        return 1
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
