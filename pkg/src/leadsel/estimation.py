"""Decentralized estimation layer for the first-order candidate costs.

The candidate cost decomposes into quantities every agent owns locally plus
seven network-wide aggregates (three stacked sums and four scalar sums of
squares).  A proportional-integral average-consensus filter estimates those
aggregates with neighbor-only exchange, and a shifted power iteration on
the grounded Laplacian estimates the candidate's grounded connectivity.
Exact centralized counterparts of both live here too, as test oracles and
as the harness's oracle estimation mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FilterDivergenceError
from .first_order import FirstOrderGains, SwarmStateFirstOrder, formation_coupling, rate_mu
from .graphs import GraphModel
from .stacked import block, per_agent

#: Filter divergence guard: state growth beyond this factor of the input
#: scale aborts instead of silently producing garbage.
DIVERGENCE_FACTOR = 1e6


@dataclass(frozen=True)
class AggregateBundle:
    """The seven network sums the cost decomposition needs, plus the count.

    The group size is assumed known to every agent; with it, any average
    estimate converts to the corresponding total sum.
    """

    sum_u: np.ndarray
    sum_p: np.ndarray
    sum_ptilde: np.ndarray
    s_uu: float
    s_gg: float
    s_ug: float
    s_pp: float
    n_agents: int


@dataclass(frozen=True)
class LocalAgentView:
    """What one candidate knows without any network round-trip."""

    agent: int
    position: np.ndarray
    estimate: np.ndarray
    coupling: np.ndarray
    offset: np.ndarray


def agent_signals(
    state: SwarmStateFirstOrder, graph: GraphModel, gains: FirstOrderGains
) -> np.ndarray:
    """Per-agent inputs whose network averages the filter tracks.

    Row ``i`` holds ``[u_i, p_i, ptilde_i, u_i.u_i, g_i.g_i, u_i.g_i,
    ptilde_i.ptilde_i]`` for agent ``i+1``: stacked, that is ``3d + 4``
    columns.
    """
    d = state.dimension
    u = per_agent(state.estimates.estimates, d)
    p = per_agent(state.positions, d)
    ptil = per_agent(state.positions - state.formation, d)
    gam = per_agent(
        formation_coupling(state.positions, state.formation, graph, gains.k_p, d), d
    )
    return np.column_stack(
        [
            u,
            p,
            ptil,
            np.sum(u * u, axis=1),
            np.sum(gam * gam, axis=1),
            np.sum(u * gam, axis=1),
            np.sum(ptil * ptil, axis=1),
        ]
    )


def bundle_from_signal_sums(sums: np.ndarray, dim: int, n_agents: int) -> AggregateBundle:
    """Assemble a bundle from the column sums of the signal matrix."""
    d = dim
    return AggregateBundle(
        sum_u=sums[:d].copy(),
        sum_p=sums[d : 2 * d].copy(),
        sum_ptilde=sums[2 * d : 3 * d].copy(),
        s_uu=float(sums[3 * d]),
        s_gg=float(sums[3 * d + 1]),
        s_ug=float(sums[3 * d + 2]),
        s_pp=float(sums[3 * d + 3]),
        n_agents=n_agents,
    )


def aggregate_oracle(
    state: SwarmStateFirstOrder, graph: GraphModel, gains: FirstOrderGains
) -> AggregateBundle:
    """Exact centralized aggregates (the decentralized layer's ground truth)."""
    signals = agent_signals(state, graph, gains)
    return bundle_from_signal_sums(signals.sum(axis=0), state.dimension, state.n_agents)


def local_view(
    state: SwarmStateFirstOrder, graph: GraphModel, gains: FirstOrderGains, agent: int
) -> LocalAgentView:
    d = state.dimension
    gamma = formation_coupling(state.positions, state.formation, graph, gains.k_p, d)
    return LocalAgentView(
        agent=agent,
        position=np.array(block(state.positions, agent, d)),
        estimate=np.array(block(state.estimates.estimates, agent, d)),
        coupling=np.array(block(gamma, agent, d)),
        offset=np.array(block(state.formation, agent, d)),
    )


def assemble_cost_from_aggregates(
    view: LocalAgentView,
    u_r,
    bundle: AggregateBundle,
    gains: FirstOrderGains,
    lambda2_candidate: float,
    horizon: float,
) -> float:
    """Candidate cost from local quantities plus the aggregate bundle only.

    Reproduces the centralized candidate cost without touching any other
    agent's private state; equality with the centralized route (for exact
    aggregates) is the layer's defining invariant.
    """
    u_r = np.atleast_1d(np.asarray(u_r, dtype=float))
    n = bundle.n_agents
    u_r_sq = float(u_r @ u_r)
    common = bundle.s_uu - 2.0 * float(u_r @ bundle.sum_u) + n * u_r_sq
    own_u = view.estimate - u_r
    e_u_sq = max(0.0, common - float(own_u @ own_u))
    own_v = view.estimate - u_r + view.coupling
    e_v_sq = max(
        0.0, common + bundle.s_gg + 2.0 * bundle.s_ug - float(own_v @ own_v)
    )
    ptil = view.position - view.offset
    e_p_sq = max(
        0.0,
        bundle.s_pp - 2.0 * float(ptil @ bundle.sum_ptilde) + n * float(ptil @ ptil),
    )
    metric = e_u_sq + (e_p_sq + e_v_sq) / gains.k_n
    mu = rate_mu(lambda2_candidate, gains)
    return metric * math.exp(-2.0 * mu * horizon)


@dataclass(frozen=True)
class FilterGains:
    """Proportional-integral consensus gains plus the input-tracking leak."""

    proportional: float = 10.0
    integral: float = 25.0
    leak: float = 5.0


@dataclass(frozen=True)
class ConsensusFilterState:
    """Per-agent average estimates and integral states, one column per signal."""

    estimates: np.ndarray
    integrals: np.ndarray
    gains: FilterGains

    @classmethod
    def warm_start(cls, inputs: np.ndarray, gains: FilterGains | None = None) -> "ConsensusFilterState":
        w = np.atleast_2d(np.asarray(inputs, dtype=float))
        return cls(estimates=w.copy(), integrals=np.zeros_like(w), gains=gains or FilterGains())


def consensus_filter_step(
    state: ConsensusFilterState, graph: GraphModel, inputs: np.ndarray, dt: float
) -> ConsensusFilterState:
    """One Runge-Kutta-4 step of the PI average-consensus dynamics.

    For a connected static graph and constant inputs, every agent's
    estimate converges to the arithmetic mean of the inputs (the leak pins
    the mean mode, the proportional and integral terms kill disagreement).
    """
    lap = np.asarray(graph.laplacian)
    w = np.atleast_2d(np.asarray(inputs, dtype=float))
    g = state.gains

    def rates(x, q):
        lx = lap @ x
        return g.leak * (w - x) - g.proportional * lx + g.integral * (lap @ q), -g.integral * lx

    x0, q0 = state.estimates, state.integrals
    kx1, kq1 = rates(x0, q0)
    kx2, kq2 = rates(x0 + 0.5 * dt * kx1, q0 + 0.5 * dt * kq1)
    kx3, kq3 = rates(x0 + 0.5 * dt * kx2, q0 + 0.5 * dt * kq2)
    kx4, kq4 = rates(x0 + dt * kx3, q0 + dt * kq3)
    x = x0 + (dt / 6.0) * (kx1 + 2.0 * kx2 + 2.0 * kx3 + kx4)
    q = q0 + (dt / 6.0) * (kq1 + 2.0 * kq2 + 2.0 * kq3 + kq4)
    guard = DIVERGENCE_FACTOR * max(1.0, float(np.abs(w).max(initial=0.0)))
    if float(np.abs(x).max(initial=0.0)) > guard:
        raise FilterDivergenceError("consensus filter state exceeded the divergence guard")
    return ConsensusFilterState(estimates=x, integrals=q, gains=g)


@dataclass(frozen=True)
class PowerIterationState:
    """Shifted power iteration extracting the grounded connectivity.

    The iterate ``y`` spans all agents with the leader's entry pinned to
    zero, so the shifted multiply is a neighbor-only exchange; the Rayleigh
    estimate converges to the smallest reduced eigenvalue because the shift
    turns it into the dominant one.
    """

    leader: int
    shift: float
    iterate: np.ndarray
    estimate: float
    rounds: int
    seed: int


def init_power_iteration(graph: GraphModel, leader: int, seed: int = 0) -> PowerIterationState:
    # Shift at one above twice the max degree: a certified upper bound on
    # every Laplacian (hence grounded) eigenvalue.
    shift = 1.0 + 2.0 * graph.max_degree
    rng = np.random.default_rng(seed)
    y = rng.standard_normal(graph.n_agents)
    y[leader - 1] = 0.0
    y /= np.linalg.norm(y)
    lap = np.asarray(graph.laplacian)
    est = float(y @ lap @ y)
    return PowerIterationState(
        leader=leader, shift=shift, iterate=y, estimate=est, rounds=0, seed=seed
    )


def grounded_power_iteration_step(
    state: PowerIterationState, graph: GraphModel
) -> PowerIterationState:
    """One shifted multiply plus normalization and Rayleigh update.

    A collapsed iterate (orthogonal to everything representable) restarts
    from a fresh seeded draw.
    """
    lap = np.asarray(graph.laplacian)
    k = state.leader - 1
    z = state.shift * state.iterate - lap @ state.iterate
    z[k] = 0.0
    norm = float(np.linalg.norm(z))
    if norm < 1e-12:
        fresh = init_power_iteration(graph, state.leader, seed=state.seed + state.rounds + 1)
        return PowerIterationState(
            leader=state.leader,
            shift=state.shift,
            iterate=fresh.iterate,
            estimate=fresh.estimate,
            rounds=state.rounds + 1,
            seed=state.seed,
        )
    y = z / norm
    est = float(y @ lap @ y)
    return PowerIterationState(
        leader=state.leader,
        shift=state.shift,
        iterate=y,
        estimate=est,
        rounds=state.rounds + 1,
        seed=state.seed,
    )


def estimate_grounded_connectivity(
    graph: GraphModel,
    leader: int,
    *,
    max_rounds: int = 10_000,
    settle_tol: float = 1e-12,
    seed: int = 0,
) -> tuple[float, int]:
    """Run the power iteration until the Rayleigh estimate settles.

    Returns the estimate and the number of rounds consumed.
    """
    state = init_power_iteration(graph, leader, seed=seed)
    quiet = 0
    for _ in range(max_rounds):
        prev = state.estimate
        state = grounded_power_iteration_step(state, graph)
        quiet = quiet + 1 if abs(state.estimate - prev) < settle_tol else 0
        if quiet >= 10:
            break
    return state.estimate, state.rounds
