"""Domain types, device/task catalogs and seeded scenario generation.

All randomness is drawn from PCG64 generators keyed by ``(seed, stream)``
so that placement, task draws, battery levels, prices and policy coin flips
never share a generator.  Task sequences are per device: the k-th task of
device ``i`` depends only on ``(seed, i, k)``.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

UNLIMITED = math.inf

# stream identifiers for ``rng_for``
PLACEMENT = 1
TASKS = 2
BATTERY = 3
PRICES = 4
POLICY = 5
SHADOWING = 6
CLASSES = 7
ARRIVALS = 8


class ScenarioError(ValueError):
    """Raised for invalid scenario configurations."""


def rng_for(seed: int, stream: int, *sub: int) -> np.random.Generator:
    """Independent PCG64 generator for one named stream of a seed."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), stream, *sub])))


@dataclass(frozen=True)
class DeviceClass:
    name: str
    cores: int
    flops_per_core: float
    compute_energy_coeff: float = 0.0
    tx_power: float = 0.0
    comm_energy_coeff: float = 0.0
    base_power: float = 0.0
    battery_capacity: float = UNLIMITED
    reserved_memory_fraction: float = 0.0
    vram_bytes: float = 0.0

    def __post_init__(self):
        if self.cores < 1:
            raise ScenarioError(f"{self.name}: cores must be >= 1")
        if not self.flops_per_core > 0:
            raise ScenarioError(f"{self.name}: flops_per_core must be > 0")
        for attr in ("compute_energy_coeff", "tx_power", "comm_energy_coeff", "base_power",
                     "battery_capacity", "vram_bytes"):
            if getattr(self, attr) < 0:
                raise ScenarioError(f"{self.name}: {attr} must be >= 0")
        if not 0.0 <= self.reserved_memory_fraction <= 1.0:
            raise ScenarioError(f"{self.name}: reserved_memory_fraction must be in [0, 1]")

    @property
    def total_flops(self) -> float:
        return self.cores * self.flops_per_core

    @property
    def unlimited(self) -> bool:
        return math.isinf(self.battery_capacity)

    @classmethod
    def from_dict(cls, d: Mapping) -> "DeviceClass":
        d = dict(d)
        cap = d.get("battery_capacity", None)
        if cap is None or (isinstance(cap, str) and cap.upper() == "UNLIMITED"):
            d["battery_capacity"] = UNLIMITED
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if self.unlimited:
            d["battery_capacity"] = None
        return d


@dataclass(frozen=True)
class TaskSpec:
    bits: float
    flops: float
    parallel_fraction: float
    memory_fraction: float = 0.0
    kind: str = "vision"
    name: str = ""

    def __post_init__(self):
        if self.bits < 0:
            raise ScenarioError("task bits must be >= 0")
        if not self.flops > 0:
            raise ScenarioError("task flops must be > 0")
        if not 0.0 <= self.parallel_fraction <= 1.0:
            raise ScenarioError("parallel_fraction must be in [0, 1]")
        if not 0.0 <= self.memory_fraction <= 1.0:
            raise ScenarioError("memory_fraction must be in [0, 1]")


@dataclass(frozen=True)
class MobileDevice:
    id: int
    position: tuple[float, float]
    cls: DeviceClass
    battery: float
    current_task: TaskSpec | None = None


@dataclass(frozen=True)
class EdgeServer:
    id: int
    position: tuple[float, float]
    cls: DeviceClass
    bandwidth: float

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ScenarioError("edge server bandwidth must be > 0")


@dataclass(frozen=True)
class Catalog:
    mobile_devices: tuple[DeviceClass, ...]
    edge_servers: tuple[DeviceClass, ...]
    tasks: tuple[TaskSpec, ...]
    # task memory fractions are relative to this many bytes
    memory_reference_bytes: float = 24e9

    def md_class(self, name: str) -> DeviceClass:
        return _by_name(self.mobile_devices, name, "mobile device class")

    def es_class(self, name: str) -> DeviceClass:
        return _by_name(self.edge_servers, name, "edge server class")

    def task(self, name: str) -> TaskSpec:
        return _by_name(self.tasks, name, "task")


def _by_name(items, name, what):
    for it in items:
        if it.name == name:
            return it
    raise ScenarioError(f"unknown {what} {name!r}")


def load_catalog(path: str | Path | None = None) -> Catalog:
    """Load a device/task catalog; ``None`` loads the bundled default."""
    from .perf import transformer_memory

    if path is None:
        text = resources.files("mecoffload").joinpath("data/catalog.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    raw = json.loads(text)
    ref = float(raw.get("memory_reference_bytes", 24e9))
    tasks = []
    for t in raw.get("tasks", []):
        if "memory_fraction" in t:
            m = float(t["memory_fraction"])
        else:
            mem = t.get("memory", {})
            if "layers" in mem:
                b = transformer_memory(mem["precision"], mem["seq_len"], 1, mem["hidden"], mem["layers"],
                                       mem.get("tensor_parallel", 1), mem["heads"], mem["params"])
            else:
                # non-transformer models: weights-only term of the same formula
                b = transformer_memory(mem.get("precision", 2), 1, 0, 1, 1, 1, 1, mem.get("params", 0.0))
            m = min(1.0, b / ref)
        tasks.append(TaskSpec(bits=float(t["bits"]), flops=float(t["flops"]),
                              parallel_fraction=float(t.get("parallel_fraction", 0.95)),
                              memory_fraction=m, kind=t.get("kind", "vision"), name=t["name"]))
    return Catalog(
        mobile_devices=tuple(DeviceClass.from_dict(d) for d in raw.get("mobile_devices", [])),
        edge_servers=tuple(DeviceClass.from_dict(d) for d in raw.get("edge_servers", [])),
        tasks=tuple(tasks),
        memory_reference_bytes=ref,
    )


@dataclass(frozen=True)
class ClusterSpec:
    count: int = 3
    radius: float = 30.0
    member_fraction: float = 0.5


def _default_task_mix():
    return {"language": 0.5, "vision": 0.5}


def _default_md_mix():
    return {"galaxy_s23": 0.25, "mate_60": 0.25, "iphone_14": 0.25, "imac_m1": 0.25}


def _default_es_mix():
    return {"rtx_2080": 1.0, "rtx_3090": 1.0, "a6000": 1.0}


@dataclass(frozen=True)
class Scenario:
    """Static configuration of one simulated MEC network.

    ``task_mix`` keys may name task kinds (``language``/``vision``, weight
    split evenly across that kind's catalog entries) or individual catalog
    tasks.  ``reg_epsilon`` is the shared division guard.
    """

    n_md: int = 20
    n_es: int = 4
    area_side: float = 300.0
    cluster_spec: ClusterSpec = field(default_factory=ClusterSpec)
    task_mix: Mapping[str, float] = field(default_factory=_default_task_mix)
    alpha: float = 1.0
    epsilon_local: float = 0.2
    total_bandwidth: float = 10e6
    noise_psd: float = 10 ** (-174 / 10) * 1e-3
    reg_epsilon: float = 1e-12
    seed: int = 0
    steps: int = 3000
    step_sizes: tuple[float, float] = (0.01, 0.01)
    dt: float = 0.01
    md_class_mix: Mapping[str, float] = field(default_factory=_default_md_mix)
    es_class_mix: Mapping[str, float] = field(default_factory=_default_es_mix)
    es_positions: tuple[tuple[float, float], ...] | None = None
    initial_battery: tuple[float, float] = (0.3, 1.0)
    shadowing_db: float = 0.0
    warmup_fraction: float = 0.1
    strict_memory: bool = False
    # first tasks arrive uniformly over this many seconds
    arrival_window: float = 0.0
    # B_i in the energy penalty: "level" (remaining / capacity) or "joules"
    battery_penalty: str = "joules"
    catalog: str | None = None

    def __post_init__(self):
        if self.n_md < 1 or self.n_es < 1:
            raise ScenarioError("scenario needs at least one mobile device and one edge server")
        if self.alpha < 0:
            raise ScenarioError("alpha must be >= 0")
        if not 0.0 <= self.epsilon_local <= 1.0:
            raise ScenarioError("epsilon_local must be in [0, 1]")
        if not self.dt > 0:
            raise ScenarioError("dt must be > 0")
        if self.arrival_window < 0:
            raise ScenarioError("arrival_window must be >= 0")
        if self.battery_penalty not in ("level", "joules"):
            raise ScenarioError("battery_penalty must be 'level' or 'joules'")
        if self.steps < 0:
            raise ScenarioError("steps must be >= 0")
        if not self.area_side > 0:
            raise ScenarioError("area_side must be > 0")
        if self.cluster_spec.radius > self.area_side:
            raise ScenarioError("cluster radius exceeds the area")
        if not 0.0 <= self.cluster_spec.member_fraction <= 1.0:
            raise ScenarioError("cluster member fraction must be in [0, 1]")
        if self.total_bandwidth <= 0 or self.noise_psd <= 0:
            raise ScenarioError("bandwidth and noise PSD must be > 0")
        lo, hi = self.initial_battery
        if not 0.0 <= lo <= hi <= 1.0:
            raise ScenarioError("initial_battery must be a sub-range of [0, 1]")
        if self.es_positions is not None and len(self.es_positions) != self.n_es:
            raise ScenarioError("es_positions length must equal n_es")

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, d: Mapping) -> "Scenario":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
        d = dict(d)
        if "cluster_spec" in d and not isinstance(d["cluster_spec"], ClusterSpec):
            cs = d["cluster_spec"]
            d["cluster_spec"] = ClusterSpec(**cs) if isinstance(cs, Mapping) else ClusterSpec(*cs)
        for key in ("step_sizes", "initial_battery"):
            if key in d:
                d[key] = tuple(float(v) for v in d[key])
        if d.get("es_positions") is not None:
            d["es_positions"] = tuple(tuple(float(c) for c in p) for p in d["es_positions"])
        return cls(**d)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["task_mix"] = dict(self.task_mix)
        d["md_class_mix"] = dict(self.md_class_mix)
        d["es_class_mix"] = dict(self.es_class_mix)
        return d


@dataclass(frozen=True, eq=False)
class Network:
    """A generated scenario: devices, servers, initial tasks and channels.

    Per-device quantities are also exposed as arrays (``md_*``/``es_*``)
    for the vectorised code paths.
    """

    scenario: Scenario
    catalog: Catalog
    mds: tuple[MobileDevice, ...]
    ess: tuple[EdgeServer, ...]
    task_weights: np.ndarray
    initial_task_index: np.ndarray
    channel: "ChannelTable"

    @property
    def n_md(self) -> int:
        return len(self.mds)

    @property
    def n_es(self) -> int:
        return len(self.ess)

    @property
    def tasks(self) -> tuple[TaskSpec, ...]:
        return self.catalog.tasks

    def md_array(self, attr: str) -> np.ndarray:
        return np.array([getattr(m.cls, attr) for m in self.mds], dtype=float)

    def es_array(self, attr: str) -> np.ndarray:
        return np.array([getattr(e.cls, attr) for e in self.ess], dtype=float)

    @property
    def md_positions(self) -> np.ndarray:
        return np.array([m.position for m in self.mds], dtype=float)

    @property
    def es_positions(self) -> np.ndarray:
        return np.array([e.position for e in self.ess], dtype=float)

    @property
    def batteries(self) -> np.ndarray:
        return np.array([m.battery for m in self.mds], dtype=float)

    @property
    def es_bandwidth(self) -> np.ndarray:
        return np.array([e.bandwidth for e in self.ess], dtype=float)

    def current_tasks(self) -> list[TaskSpec]:
        return [m.current_task for m in self.mds]

    def equals(self, other: "Network") -> bool:
        """Exact (bit-level) equality of everything generated."""
        return (self.scenario == other.scenario and self.mds == other.mds and self.ess == other.ess
                and np.array_equal(self.initial_task_index, other.initial_task_index)
                and np.array_equal(self.channel.gain, other.channel.gain))


def mix_weights(mix: Mapping[str, float], tasks: Sequence[TaskSpec]) -> np.ndarray:
    """Per-catalog-entry probabilities from a kind- or name-keyed mix."""
    if not tasks:
        raise ScenarioError("empty task catalog")
    w = np.zeros(len(tasks))
    names = [t.name for t in tasks]
    for key, weight in mix.items():
        if weight < 0:
            raise ScenarioError("task mix weights must be non-negative")
        if key in names:
            w[names.index(key)] += weight
            continue
        members = [k for k, t in enumerate(tasks) if t.kind == key]
        if not members:
            raise ScenarioError(f"task mix key {key!r} matches no task name or kind")
        w[members] += weight / len(members)
    if w.sum() <= 0:
        raise ScenarioError("task mix weights are all zero")
    return w / w.sum()


def sample_task(mix: Mapping[str, float] | np.ndarray, rng: np.random.Generator,
                tasks: Sequence[TaskSpec] | None = None) -> TaskSpec:
    """Draw one catalog task with the given mix weights."""
    if tasks is None:
        tasks = load_catalog().tasks
    if not tasks:
        raise ScenarioError("empty task catalog")
    p = mix if isinstance(mix, np.ndarray) else mix_weights(mix, tasks)
    return tasks[int(rng.choice(len(tasks), p=p))]


class TaskStream:
    """Per-device task-index sequences; draw ``k`` of device ``i`` is fixed by the seed."""

    CHUNK = 64

    def __init__(self, seed: int, n_md: int, weights: np.ndarray):
        self._rngs = [rng_for(seed, TASKS, i) for i in range(n_md)]
        self._cdf = np.cumsum(weights)
        self._cdf[-1] = 1.0
        self._buf = [np.empty(0, dtype=np.int64) for _ in range(n_md)]
        self._pos = np.zeros(n_md, dtype=np.int64)

    def next(self, i: int) -> int:
        if self._pos[i] >= self._buf[i].size:
            u = self._rngs[i].random(self.CHUNK)
            self._buf[i] = np.searchsorted(self._cdf, u, side="right")
            self._pos[i] = 0
        k = self._buf[i][self._pos[i]]
        self._pos[i] += 1
        return int(k)


def _pick_classes(mix: Mapping[str, float], n: int, rng, lookup) -> list[DeviceClass]:
    names = sorted(mix)
    p = np.array([mix[k] for k in names], dtype=float)
    if p.sum() <= 0 or np.any(p < 0):
        raise ScenarioError("class mix weights must be non-negative and not all zero")
    idx = rng.choice(len(names), size=n, p=p / p.sum())
    return [lookup(names[k]) for k in idx]


def _place_mds(sc: Scenario, rng) -> np.ndarray:
    side = sc.area_side
    cs = sc.cluster_spec
    n_members = int(round(cs.member_fraction * sc.n_md)) if cs.count > 0 else 0
    pos = np.empty((sc.n_md, 2))
    if n_members:
        centers = rng.uniform(cs.radius, side - cs.radius, size=(cs.count, 2)) if side > 2 * cs.radius \
            else np.full((cs.count, 2), side / 2)
        which = rng.integers(0, cs.count, size=n_members)
        r = cs.radius * np.sqrt(rng.random(n_members))
        th = rng.uniform(0.0, 2 * np.pi, n_members)
        pos[:n_members] = centers[which] + np.c_[r * np.cos(th), r * np.sin(th)]
    pos[n_members:] = rng.uniform(0.0, side, size=(sc.n_md - n_members, 2))
    return np.clip(pos, 0.0, side)


def generate_scenario(config: Scenario, catalog: Catalog | None = None) -> Network:
    """Build a deterministic :class:`Network` from a scenario config."""
    from .channel import channel_table

    sc = config
    if catalog is None:
        catalog = load_catalog(sc.catalog)
    weights = mix_weights(sc.task_mix, catalog.tasks)

    crng = rng_for(sc.seed, CLASSES)
    md_classes = _pick_classes(sc.md_class_mix, sc.n_md, crng, catalog.md_class)
    es_classes = _pick_classes(sc.es_class_mix, sc.n_es, crng, catalog.es_class)

    prng = rng_for(sc.seed, PLACEMENT)
    md_pos = _place_mds(sc, prng)
    if sc.es_positions is not None:
        es_pos = np.asarray(sc.es_positions, dtype=float)
    else:
        es_pos = prng.uniform(0.0, sc.area_side, size=(sc.n_es, 2))

    brng = rng_for(sc.seed, BATTERY)
    frac = brng.uniform(*sc.initial_battery, size=sc.n_md)

    stream = TaskStream(sc.seed, sc.n_md, weights)
    first = np.array([stream.next(i) for i in range(sc.n_md)], dtype=np.int64)

    w_j = sc.total_bandwidth / sc.n_es
    ess = tuple(EdgeServer(j, (float(es_pos[j, 0]), float(es_pos[j, 1])), es_classes[j], w_j)
                for j in range(sc.n_es))
    mds = tuple(
        MobileDevice(i, (float(md_pos[i, 0]), float(md_pos[i, 1])), md_classes[i],
                     UNLIMITED if md_classes[i].unlimited else float(frac[i] * md_classes[i].battery_capacity),
                     catalog.tasks[first[i]])
        for i in range(sc.n_md))
    chan = channel_table(mds, ess, sc.noise_psd, shadowing_db=sc.shadowing_db,
                         rng=rng_for(sc.seed, SHADOWING) if sc.shadowing_db > 0 else None)
    return Network(sc, catalog, mds, ess, weights, first, chan)


def load_scenario(path: str | Path) -> Scenario:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    names = {f.name for f in dataclasses.fields(Scenario)}
    return Scenario.from_dict({k: v for k, v in raw.items() if k in names})


def default_config_path(name: str) -> Path:
    return Path(str(resources.files("mecoffload").joinpath(f"data/configs/{name}.json")))
