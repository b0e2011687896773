"""Scenario configuration: validation, JSON round-trip, and resolution.

A scenario couples one tracking order with a cyclic topology schedule, a
piecewise-constant reference, selection timing, gains (auto-sized against
the worst grounded connectivity the schedule can visit unless given), a
formation shape, and seeded initial conditions.  All agent indices in the
JSON form are 1-based.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any

import numpy as np

from .errors import ConfigError
from .first_order import FirstOrderGains, shared_metric_weight
from .graphs import (
    GraphModel,
    GroundedSpectrum,
    TopologySpec,
    build_topology,
    canonical_topologies,
    eigenvalues_symmetric,
    ground,
)
from .reference import ReferenceSignal
from .second_order import (
    SecondOrderGains,
    SpectralBounds,
    check_pl_definite,
    feasibility_violations,
    select_feasible_gains,
)
from .selection import STRATEGIES

FIRST = "first"
SECOND = "second"
ORACLE = "oracle"
DECENTRALIZED = "decentralized"

#: Side of the cube initial positions are drawn from.
INITIAL_POSITION_SPAN = 5.0


@dataclass(frozen=True)
class ReferenceSpec:
    """Declarative reference: an explicit schedule or a seeded random one."""

    kind: str = "random"
    points: tuple | None = None
    low: float = -1.0
    high: float = 1.0

    def resolve(self, config: "ScenarioConfig") -> ReferenceSignal:
        if self.kind == "schedule":
            if not self.points:
                raise ConfigError("schedule reference needs points")
            sig = ReferenceSignal.from_schedule(self.points)
            if sig.dimension != config.dimension:
                raise ConfigError("reference dimension does not match the scenario")
            return sig
        if self.kind == "random":
            return ReferenceSignal.random_piecewise(
                config.sending_period,
                config.duration,
                config.dimension,
                seed=config.derived_seed("reference"),
                low=self.low,
                high=self.high,
            )
        raise ConfigError(f"unknown reference kind {self.kind!r}")


@dataclass(frozen=True)
class FormationSpec:
    """Formation offsets: a named generator or explicit stacked offsets."""

    kind: str = "auto"
    spacing: float = 1.0
    radius: float = 2.0
    offsets: tuple | None = None

    def resolve(self, config: "ScenarioConfig") -> np.ndarray:
        n, d = config.n_agents, config.dimension
        kind = self.kind
        if kind == "auto":
            kind = {1: "line", 2: "polygon", 3: "grid"}[d]
        if kind == "explicit":
            arr = np.asarray(self.offsets, dtype=float).reshape(n, d)
            if not np.all(np.isfinite(arr)):
                raise ConfigError("formation offsets must be finite")
            return arr.ravel()
        if kind == "line":
            base = (np.arange(n) - (n - 1) / 2.0) * self.spacing
            out = np.zeros((n, d))
            out[:, 0] = base
            return out.ravel()
        if kind == "polygon":
            if d < 2:
                raise ConfigError("polygon formation needs dimension >= 2")
            ang = 2.0 * np.pi * np.arange(n) / n
            out = np.zeros((n, d))
            out[:, 0] = self.radius * np.cos(ang)
            out[:, 1] = self.radius * np.sin(ang)
            return out.ravel()
        if kind == "grid":
            side = math.ceil(n ** (1.0 / d))
            pts = []
            for i in range(n):
                idx = [(i // side**k) % side for k in range(d)]
                pts.append([v * self.spacing for v in idx])
            out = np.asarray(pts, dtype=float)
            rng = np.random.default_rng(config.derived_seed("formation"))
            out += rng.uniform(-0.1, 0.1, out.shape) * self.spacing
            return out.ravel()
        raise ConfigError(f"unknown formation kind {kind!r}")


@dataclass(frozen=True)
class ScenarioConfig:
    order: str
    dimension: int
    n_agents: int
    topology_schedule: tuple[tuple[TopologySpec, float], ...]
    selection_period: float
    sending_period: float
    dt: float
    duration: float
    strategy: str
    seed: int = 0
    initial_leader: int = 1
    reference: ReferenceSpec = field(default_factory=ReferenceSpec)
    formation: FormationSpec = field(default_factory=FormationSpec)
    k_p: float = 5.0
    k_u: float = 2.5
    k_n: float | None = None
    b: float = 0.5
    k_v: float = 1.0
    metric_weights: tuple[float, float, float] | None = None
    estimation_mode: str = ORACLE
    allow_infeasible: bool = False
    tie_break: str = "lowest"
    log_messages: bool = False

    def __post_init__(self):
        if self.order not in (FIRST, SECOND):
            raise ConfigError(f"order must be 'first' or 'second', got {self.order!r}")
        if self.dimension not in (1, 2, 3):
            raise ConfigError("dimension must be 1, 2, or 3")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if self.estimation_mode not in (ORACLE, DECENTRALIZED):
            raise ConfigError(f"unknown estimation mode {self.estimation_mode!r}")
        if self.estimation_mode == DECENTRALIZED and self.order != FIRST:
            raise ConfigError("decentralized estimation covers first-order scenarios only")
        if not 1 <= self.initial_leader <= self.n_agents:
            raise ConfigError("initial leader out of range")
        if self.duration < 0.0 or self.dt <= 0.0:
            raise ConfigError("duration must be nonnegative and dt positive")
        _require_divisible(self.sending_period, self.selection_period, "sending period", "selection period")
        _require_divisible(self.selection_period, self.dt, "selection period", "dt")
        if self.duration > 0.0:
            _require_divisible(self.duration, self.dt, "duration", "dt")
        if self.log_messages and self.strategy not in ("constant", "local"):
            raise ConfigError("message logging models the neighborhood protocol; use the constant or local strategy")
        if not self.topology_schedule:
            raise ConfigError("topology schedule is empty")
        for spec, dwell in self.topology_schedule:
            if spec.n_agents != self.n_agents:
                raise ConfigError("topology size does not match n_agents")
            _require_divisible(dwell, self.dt, "topology dwell", "dt")

    def derived_seed(self, stream: str) -> int:
        offsets = {"init": 0, "reference": 1, "selection": 2, "formation": 3}
        return (int(self.seed) << 3) + offsets[stream]

    def with_strategy(self, strategy: str) -> "ScenarioConfig":
        return replace(self, strategy=strategy)


def _require_divisible(big: float, small: float, big_name: str, small_name: str) -> None:
    if small <= 0 or big <= 0:
        raise ConfigError(f"{big_name} and {small_name} must be positive")
    ratio = big / small
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        raise ConfigError(f"{big_name} ({big}) must be an integer multiple of {small_name} ({small})")


@dataclass(frozen=True)
class ResolvedScenario:
    """Everything a run needs, precomputed: graphs, spectra, gains, signals."""

    config: ScenarioConfig
    graphs: tuple[GraphModel, ...]
    spectra: dict[tuple[int, int], GroundedSpectrum]
    graph_eigenvalues: tuple[np.ndarray, ...]
    boundaries: np.ndarray
    cycle: float
    reference: ReferenceSignal
    formation: np.ndarray
    first_gains: FirstOrderGains | None
    second_gains: SecondOrderGains | None
    warnings: tuple[str, ...]

    def topology_index(self, t: float) -> int:
        """Index (0-based) of the schedule entry active at time t."""
        phase = math.fmod(t + 1e-12, self.cycle)
        return int(np.searchsorted(self.boundaries, phase, side="right"))

    def graph_at(self, t: float) -> GraphModel:
        return self.graphs[self.topology_index(t)]

    def spectrum(self, topo_index: int, leader: int) -> GroundedSpectrum:
        return self.spectra[(topo_index, leader)]

    def lambda_max(self, topo_index: int) -> float:
        return float(self.graph_eigenvalues[topo_index][-1])


def resolve(config: ScenarioConfig) -> ResolvedScenario:
    """Build graphs and spectra, auto-size gains, and validate feasibility.

    Gain auto-sizing pools the spectral extremes over every (topology,
    leader) pair the schedule can visit, so one metric serves the whole
    run.  Infeasible explicit gains fail fast unless the override flag is
    set, in which case a warning is recorded and infeasible candidates are
    excluded tick by tick.
    """
    warnings: list[str] = []
    graphs = []
    for spec, _ in config.topology_schedule:
        graph = build_topology(spec)
        if not graph.is_connected:
            raise ConfigError(f"topology {spec.label()} is not connected")
        graphs.append(graph)
    spectra = {}
    graph_eigs = []
    for ti, graph in enumerate(graphs):
        graph_eigs.append(eigenvalues_symmetric(graph.laplacian))
        for leader in range(1, config.n_agents + 1):
            spectra[(ti, leader)] = ground(graph, leader)

    lam2_min = min(s.algebraic_connectivity for s in spectra.values())
    lamNl_max = max(s.largest_eigenvalue for s in spectra.values())
    lam_max = max(float(w[-1]) for w in graph_eigs)

    first_gains = None
    second_gains = None
    if config.order == FIRST:
        k_n = config.k_n
        if k_n is None:
            k_n = shared_metric_weight(lam2_min, config.k_p, config.k_u)
        first_gains = FirstOrderGains(k_p=config.k_p, k_u=config.k_u, k_n=k_n)
        if not first_gains.feasible_for(lam2_min):
            msg = (
                f"metric weight k_n={k_n} infeasible for the schedule's worst "
                f"grounded connectivity {lam2_min}"
            )
            if not config.allow_infeasible:
                raise ConfigError(msg + " (set allow_infeasible to override)")
            warnings.append(msg + "; infeasible candidates will be excluded per tick")
    else:
        pool = SpectralBounds(lam2_min, lamNl_max, lam_max)
        if config.metric_weights is not None:
            kn1, kn2, kn3 = config.metric_weights
        else:
            trial = select_feasible_gains(pool, b_hint=config.b)
            kn1, kn2, kn3 = trial.k_n1, trial.k_n2, trial.k_n3
        second_gains = SecondOrderGains(
            b=config.b, k_v=config.k_v, k_u=config.k_u, k_n1=kn1, k_n2=kn2, k_n3=kn3
        )
        definite, witness = check_pl_definite(graphs[0], second_gains)
        if not definite:
            raise ConfigError(f"metric weight matrix is not positive definite ({witness})")
        if config.strategy in ("local", "global"):
            if config.k_v != 1.0 or config.k_u != 1.0:
                raise ConfigError("cost-based strategies need k_v = k_u = 1 in second order")
            violations = feasibility_violations(pool, second_gains)
            if violations:
                msg = "pooled feasibility box violated: " + "; ".join(violations)
                if not config.allow_infeasible:
                    raise ConfigError(msg + " (set allow_infeasible to override)")
                warnings.append(msg + "; infeasible candidates will be excluded per tick")

    dwells = np.array([dwell for _, dwell in config.topology_schedule])
    return ResolvedScenario(
        config=config,
        graphs=tuple(graphs),
        spectra=spectra,
        graph_eigenvalues=tuple(graph_eigs),
        boundaries=np.cumsum(dwells)[:-1],
        cycle=float(dwells.sum()),
        reference=config.reference.resolve(config),
        formation=config.formation.resolve(config),
        first_gains=first_gains,
        second_gains=second_gains,
        warnings=tuple(warnings),
    )


# -- JSON form ---------------------------------------------------------------

def _topology_to_json(spec: TopologySpec, dwell: float) -> dict:
    out: dict[str, Any] = {"kind": spec.kind, "dwell": dwell}
    if spec.edge_probability is not None:
        out["edge_probability"] = spec.edge_probability
    if spec.seed is not None:
        out["seed"] = spec.seed
    return out


def config_to_json(config: ScenarioConfig) -> dict:
    out = asdict(config)
    out["topology_schedule"] = [
        _topology_to_json(spec, dwell) for spec, dwell in config.topology_schedule
    ]
    out["reference"] = {k: v for k, v in asdict(config.reference).items() if v is not None}
    out["formation"] = {k: v for k, v in asdict(config.formation).items() if v is not None}
    if config.metric_weights is not None:
        out["metric_weights"] = list(config.metric_weights)
    return out


def config_from_json(data: dict) -> ScenarioConfig:
    try:
        schedule = tuple(
            (
                TopologySpec(
                    kind=entry["kind"],
                    n_agents=int(data["n_agents"]),
                    edge_probability=entry.get("edge_probability"),
                    seed=entry.get("seed"),
                ),
                float(entry["dwell"]),
            )
            for entry in data["topology_schedule"]
        )
        ref = data.get("reference", {})
        if ref.get("points") is not None:
            ref = dict(ref, points=tuple((float(t), tuple(v)) for t, v in ref["points"]))
        form = data.get("formation", {})
        if form.get("offsets") is not None:
            form = dict(form, offsets=tuple(tuple(row) for row in form["offsets"]))
        weights = data.get("metric_weights")
        return ScenarioConfig(
            order=data["order"],
            dimension=int(data["dimension"]),
            n_agents=int(data["n_agents"]),
            topology_schedule=schedule,
            selection_period=float(data["selection_period"]),
            sending_period=float(data["sending_period"]),
            dt=float(data.get("dt", 1e-3)),
            duration=float(data["duration"]),
            strategy=data["strategy"],
            seed=int(data.get("seed", 0)),
            initial_leader=int(data.get("initial_leader", 1)),
            reference=ReferenceSpec(**ref) if ref else ReferenceSpec(),
            formation=FormationSpec(**form) if form else FormationSpec(),
            k_p=float(data.get("k_p", 5.0)),
            k_u=float(data.get("k_u", 2.5)),
            k_n=None if data.get("k_n") is None else float(data["k_n"]),
            b=float(data.get("b", 0.5)),
            k_v=float(data.get("k_v", 1.0)),
            metric_weights=None if weights is None else tuple(float(w) for w in weights),
            estimation_mode=data.get("estimation_mode", ORACLE),
            allow_infeasible=bool(data.get("allow_infeasible", False)),
            tie_break=data.get("tie_break", "lowest"),
            log_messages=bool(data.get("log_messages", False)),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed scenario config: {exc}") from exc


def load_config(path) -> ScenarioConfig:
    with open(path) as fh:
        return config_from_json(json.load(fh))


def save_config(config: ScenarioConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_json(config), fh, indent=2)
        fh.write("\n")


def demo_first_order_config(seed: int = 0, strategy: str = "local", **overrides) -> ScenarioConfig:
    """Comparative first-order demo: six cycling topologies, ten agents."""
    schedule = tuple((spec, 2.0) for _, spec in canonical_topologies(10))
    base = dict(
        order=FIRST,
        dimension=3,
        n_agents=10,
        topology_schedule=schedule,
        selection_period=0.05,
        sending_period=5.0,
        dt=1e-3,
        duration=12.0,
        strategy=strategy,
        seed=seed,
        k_p=5.0,
        k_u=2.5,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


def demo_second_order_config(seed: int = 0, strategy: str = "local", **overrides) -> ScenarioConfig:
    """Comparative second-order demo on the denser canonical random graph."""
    spec = dict(canonical_topologies(10))["random-b"]
    base = dict(
        order=SECOND,
        dimension=3,
        n_agents=10,
        topology_schedule=((spec, 20.0),),
        selection_period=0.05,
        sending_period=10.0,
        dt=1e-3,
        duration=20.0,
        strategy=strategy,
        seed=seed,
        b=0.5,
        k_v=1.0,
        k_u=1.0,
        allow_infeasible=True,
    )
    base.update(overrides)
    return ScenarioConfig(**base)
