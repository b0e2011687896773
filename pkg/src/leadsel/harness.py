"""Closed-loop scenario simulation, strategy comparison, and output emission.

One run advances the swarm with fixed-step integration between selection
ticks; each tick receives any fresh reference value, runs the configured
selection strategy against the currently active topology's spectra, and
applies the reset semantics.  Topology switches take effect at their
scheduled instants.  Runs are pure functions of (config, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, SimulationDivergenceError
from .estimation import (
    ConsensusFilterState,
    agent_signals,
    aggregate_oracle,
    assemble_cost_from_aggregates,
    bundle_from_signal_sums,
    consensus_filter_step,
    estimate_grounded_connectivity,
    local_view,
)
from .first_order import SwarmStateFirstOrder, metric_first, reset_first
from .reference import EstimateField
from .scenario import (
    DECENTRALIZED,
    FIRST,
    INITIAL_POSITION_SPAN,
    ResolvedScenario,
    ScenarioConfig,
    resolve,
)
from .second_order import SwarmStateSecondOrder, metric_second, reset_second
from .selection import (
    CONSTANT,
    GLOBAL,
    LOCAL,
    LeaderSchedule,
    cost_first,
    cost_second,
    handoff_messages,
    select,
)

#: Squared-metric level treated as numerical divergence.
DIVERGENCE_ABORT = 1e12


@dataclass(frozen=True)
class TickRecord:
    """State of one selection tick, sampled just after the reset."""

    index: int
    t: float
    leader: int
    switched: bool
    reference_updated: bool
    metric: float
    topology: int
    u_r: tuple[float, ...]
    costs: dict[int, float] = field(default_factory=dict)
    excluded: dict[int, str] = field(default_factory=dict)
    oracle_leader: int | None = None


@dataclass
class SimTrace:
    """Complete record of one run.

    Step arrays sample the continuous flow after every integration step
    (plus the initial instant); tick records sample post-reset instants.
    """

    config: ScenarioConfig
    times: np.ndarray
    metrics: np.ndarray
    step_leaders: np.ndarray
    step_topologies: np.ndarray
    step_reference: np.ndarray
    ticks: list[TickRecord]
    switches: list[tuple[float, int, int]]
    warnings: list[str]
    messages: list
    selection_divergences: list[tuple[int, int, int]]

    @property
    def n_reference_updates(self) -> int:
        return sum(1 for tk in self.ticks if tk.reference_updated)

    def switches_per_quarter(self) -> list[int]:
        counts = [0, 0, 0, 0]
        duration = self.config.duration
        if duration > 0:
            for t, _, _ in self.switches:
                counts[min(3, int(4.0 * t / duration))] += 1
        return counts

    def summary(self) -> dict:
        empty = self.metrics.size == 0
        return {
            "strategy": self.config.strategy,
            "avg_metric": None if empty else _sig6(float(np.mean(self.metrics))),
            "final_metric": None if empty else _sig6(float(self.metrics[-1])),
            "switches_per_quarter": self.switches_per_quarter(),
        }


def _sig6(x: float) -> float:
    return float(f"{x:.6g}")


class _Run:
    """Mutable state of one simulation; the public entry point is run_scenario."""

    def __init__(self, rs: ResolvedScenario):
        self.rs = rs
        cfg = rs.config
        self.cfg = cfg
        self.n = cfg.n_agents
        self.d = cfg.dimension
        self.form = rs.formation.reshape(self.n, self.d)
        rng = np.random.default_rng(cfg.derived_seed("init"))
        span = INITIAL_POSITION_SPAN
        self.P = rng.uniform(-span / 2.0, span / 2.0, (self.n, self.d))
        self.U = np.zeros((self.n, self.d))
        self.V = np.zeros((self.n, self.d))
        self.sel_rng = np.random.default_rng(cfg.derived_seed("selection"))
        self.leader = cfg.initial_leader
        self.u_r = rs.reference.value_at(0.0)
        self.lambda_estimates: dict[tuple[int, int], float] = {}
        self.filter_state: ConsensusFilterState | None = None
        self.warnings = list(rs.warnings)
        self.messages: list = []
        self.divergences: list[tuple[int, int, int]] = []

    # -- state/dataclass bridges ---------------------------------------

    def first_state(self) -> SwarmStateFirstOrder:
        return SwarmStateFirstOrder(
            positions=self.P.ravel().copy(),
            estimates=EstimateField(self.U.ravel().copy(), gain=self.rs.first_gains.k_u),
            formation=self.form.ravel(),
            dimension=self.d,
        )

    def second_state(self) -> SwarmStateSecondOrder:
        return SwarmStateSecondOrder(
            positions=self.P.ravel().copy(),
            velocities=self.V.ravel().copy(),
            estimates=EstimateField(self.U.ravel().copy(), gain=self.rs.second_gains.k_u),
            formation=self.form.ravel(),
            dimension=self.d,
        )

    # -- metrics ---------------------------------------------------------

    def metric_squared(self, topo_index: int) -> float:
        lead = self.leader - 1
        off = self.P - self.form
        e_p = off - off[lead]
        e_u = self.U - self.u_r
        if self.cfg.order == FIRST:
            g = self.rs.first_gains
            ll = np.asarray(self.rs.spectrum(topo_index, self.leader).grounded_laplacian)
            e_v = e_u - g.k_p * (ll @ off)
            return float(
                np.sum(e_u * e_u) + (np.sum(e_p * e_p) + np.sum(e_v * e_v)) / g.k_n
            )
        g = self.rs.second_gains
        lap = np.asarray(self.rs.graphs[topo_index].laplacian)
        e_v = self.V - self.V[lead]
        g_ep = lap @ e_p
        return float(
            g.k_n1 * np.sum(e_p * g_ep)
            + g.k_n3 * np.sum(e_p * e_p)
            + 2.0 * g.k_n2 * np.sum(e_v * g_ep)
            + g.k_n1 * np.sum(e_v * e_v)
            + np.sum(e_u * e_u)
        )

    # -- selection -------------------------------------------------------

    def _oracle_cost_fn(self, topo_index: int):
        graph = self.rs.graphs[topo_index]
        horizon = self.cfg.selection_period
        if self.cfg.order == FIRST:
            state = self.first_state()
            gains = self.rs.first_gains
            return lambda m: cost_first(
                m, state, graph, self.u_r, gains, self.rs.spectrum(topo_index, m), horizon
            )
        state = self.second_state()
        gains = self.rs.second_gains
        lam_max = self.rs.lambda_max(topo_index)
        return lambda m: cost_second(
            m, state, graph, self.u_r, gains, self.rs.spectrum(topo_index, m), lam_max, horizon
        )

    def _estimated_lambda2(self, topo_index: int, candidate: int) -> float:
        key = (topo_index, candidate)
        if key not in self.lambda_estimates:
            est, _ = estimate_grounded_connectivity(
                self.rs.graphs[topo_index], candidate, seed=self.cfg.seed
            )
            self.lambda_estimates[key] = est
        return self.lambda_estimates[key]

    def _decentralized_cost_fn(self, topo_index: int):
        graph = self.rs.graphs[topo_index]
        gains = self.rs.first_gains
        horizon = self.cfg.selection_period
        state = self.first_state()

        def cost(m: int) -> float:
            per_agent_avg = self.filter_state.estimates[m - 1]
            bundle = bundle_from_signal_sums(self.n * per_agent_avg, self.d, self.n)
            return assemble_cost_from_aggregates(
                local_view(state, graph, gains, m),
                self.u_r,
                bundle,
                gains,
                self._estimated_lambda2(topo_index, m),
                horizon,
            )

        return cost

    def process_tick(self, k: int, t: float) -> TickRecord:
        cfg = self.cfg
        topo_index = self.rs.topology_index(t)
        graph = self.rs.graphs[topo_index]
        schedule = LeaderSchedule(
            cfg.selection_period, cfg.sending_period, self.leader, tick_index=k
        )
        ref_updated = False
        if schedule.is_sending_tick(k):
            self.u_r = self.rs.reference.value_at(t)
            ref_updated = True

        old = self.leader
        result = None
        oracle_leader = None
        if k > 0 and cfg.strategy != CONSTANT:
            decentralized = cfg.estimation_mode == DECENTRALIZED
            cost_fn = None
            if cfg.strategy in (LOCAL, GLOBAL):
                cost_fn = (
                    self._decentralized_cost_fn(topo_index)
                    if decentralized
                    else self._oracle_cost_fn(topo_index)
                )
            result = select(
                cfg.strategy, graph, schedule, self.sel_rng, cost_fn, tie_break=cfg.tie_break
            )
            if decentralized and cfg.strategy in (LOCAL, GLOBAL):
                oracle = select(
                    cfg.strategy,
                    graph,
                    schedule,
                    np.random.default_rng(0),
                    self._oracle_cost_fn(topo_index),
                    tie_break="lowest",
                )
                oracle_leader = oracle.leader
                if oracle.leader != result.leader:
                    self.divergences.append((k, result.leader, oracle.leader))
            self.leader = result.leader

        # Reset semantics: the (new) leader's estimate jumps to the command;
        # positions (and second-order velocities) are continuous.
        self.U[self.leader - 1] = self.u_r

        if cfg.log_messages and cfg.strategy in (CONSTANT, LOCAL):
            self.messages.extend(
                handoff_messages(graph, old, self.leader, self.u_r, tick=k)
            )
        switched = self.leader != old
        metric_sq = self.metric_squared(topo_index)
        return TickRecord(
            index=k,
            t=t,
            leader=self.leader,
            switched=switched,
            reference_updated=ref_updated,
            metric=math.sqrt(max(metric_sq, 0.0)),
            topology=topo_index + 1,
            u_r=tuple(self.u_r),
            costs=dict(result.table.costs) if result and result.table else {},
            excluded=dict(result.table.excluded) if result and result.table else {},
            oracle_leader=oracle_leader,
        )

    # -- integration -----------------------------------------------------

    def step_first(self, ll: np.ndarray, dt: float) -> None:
        g = self.rs.first_gains
        kp, ku = g.k_p, g.k_u
        P, U, form = self.P, self.U, self.form
        k1p = U - kp * (ll @ (P - form))
        k1u = -ku * (ll @ U)
        p2 = P + 0.5 * dt * k1p
        u2 = U + 0.5 * dt * k1u
        k2p = u2 - kp * (ll @ (p2 - form))
        k2u = -ku * (ll @ u2)
        p3 = P + 0.5 * dt * k2p
        u3 = U + 0.5 * dt * k2u
        k3p = u3 - kp * (ll @ (p3 - form))
        k3u = -ku * (ll @ u3)
        p4 = P + dt * k3p
        u4 = U + dt * k3u
        k4p = u4 - kp * (ll @ (p4 - form))
        k4u = -ku * (ll @ u4)
        self.P = P + (dt / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        self.U = U + (dt / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)

    def step_second(self, ll: np.ndarray, dt: float) -> None:
        g = self.rs.second_gains
        b, kv, ku = g.b, g.k_v, g.k_u
        P, V, U, form = self.P, self.V, self.U, self.form

        def rates(p, v, u):
            return v, b * (u - v) - kv * (ll @ (p - form)), -ku * (ll @ u)

        k1p, k1v, k1u = rates(P, V, U)
        k2p, k2v, k2u = rates(P + 0.5 * dt * k1p, V + 0.5 * dt * k1v, U + 0.5 * dt * k1u)
        k3p, k3v, k3u = rates(P + 0.5 * dt * k2p, V + 0.5 * dt * k2v, U + 0.5 * dt * k2u)
        k4p, k4v, k4u = rates(P + dt * k3p, V + dt * k3v, U + dt * k3u)
        self.P = P + (dt / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        self.V = V + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        self.U = U + (dt / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)


def run_scenario(config: ScenarioConfig, resolved: ResolvedScenario | None = None) -> SimTrace:
    """Simulate the full closed loop described by the config.

    Deterministic: identical (config, seed) produce bit-identical traces.
    Raises on numerical divergence instead of returning garbage.
    """
    rs = resolved if resolved is not None else resolve(config)
    run = _Run(rs)
    cfg = run.cfg
    dt = cfg.dt
    n_steps = int(round(cfg.duration / dt))
    if n_steps == 0:
        return SimTrace(
            config=cfg,
            times=np.empty(0),
            metrics=np.empty(0),
            step_leaders=np.empty(0, dtype=int),
            step_topologies=np.empty(0, dtype=int),
            step_reference=np.empty((0, cfg.dimension)),
            ticks=[],
            switches=[],
            warnings=run.warnings,
            messages=[],
            selection_divergences=[],
        )
    steps_per_tick = int(round(cfg.selection_period / dt))
    first = cfg.order == FIRST
    decentralized = cfg.estimation_mode == DECENTRALIZED

    times = np.arange(n_steps + 1) * dt
    metrics = np.empty(n_steps + 1)
    step_leaders = np.empty(n_steps + 1, dtype=int)
    step_topologies = np.empty(n_steps + 1, dtype=int)
    step_reference = np.empty((n_steps + 1, cfg.dimension))
    ticks: list[TickRecord] = []
    switches: list[tuple[float, int, int]] = []

    if decentralized:
        run.filter_state = ConsensusFilterState.warm_start(
            agent_signals(run.first_state(), rs.graphs[0], rs.first_gains)
        )

    def record(i: int, topo_index: int, metric_sq: float) -> None:
        metrics[i] = math.sqrt(max(metric_sq, 0.0))
        step_leaders[i] = run.leader
        step_topologies[i] = topo_index + 1
        step_reference[i] = run.u_r

    for step in range(n_steps + 1):
        t = step * dt
        topo_index = rs.topology_index(t)
        if step % steps_per_tick == 0:
            old_leader = run.leader
            tick = run.process_tick(step // steps_per_tick, t)
            ticks.append(tick)
            if tick.switched:
                switches.append((t, old_leader, tick.leader))
        metric_sq = run.metric_squared(topo_index)
        if metric_sq > DIVERGENCE_ABORT:
            raise SimulationDivergenceError(
                f"metric {metric_sq} above abort threshold at t={t}"
            )
        record(step, topo_index, metric_sq)
        if step == n_steps:
            break
        ll = np.asarray(rs.spectrum(topo_index, run.leader).grounded_laplacian)
        if decentralized:
            run.filter_state = consensus_filter_step(
                run.filter_state,
                rs.graphs[topo_index],
                agent_signals(run.first_state(), rs.graphs[topo_index], rs.first_gains),
                dt,
            )
        if first:
            run.step_first(ll, dt)
        else:
            run.step_second(ll, dt)

    return SimTrace(
        config=cfg,
        times=times,
        metrics=metrics,
        step_leaders=step_leaders,
        step_topologies=step_topologies,
        step_reference=step_reference,
        ticks=ticks,
        switches=switches,
        warnings=run.warnings,
        messages=run.messages,
        selection_divergences=run.divergences,
    )


@dataclass
class ComparisonReport:
    """Four strategy runs from identical initial conditions."""

    runs: dict[str, SimTrace]

    def summaries(self) -> list[dict]:
        return [self.runs[s].summary() for s in sorted(self.runs)]

    def ranking(self) -> list[tuple[str, float]]:
        pairs = [
            (s, tr.summary()["avg_metric"]) for s, tr in self.runs.items()
        ]
        return sorted(pairs, key=lambda kv: kv[1])


def compare_strategies(config: ScenarioConfig, strategies=("constant", "local", "global", "random")) -> ComparisonReport:
    """Run every strategy from the same seed and initial conditions."""
    runs = {}
    for strategy in strategies:
        runs[strategy] = run_scenario(config.with_strategy(strategy))
    return ComparisonReport(runs=runs)
