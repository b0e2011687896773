"""Leader-selection strategies, candidate costs, and the hand-off protocol.

A candidate's cost is the metric its hypothetical reset would leave behind,
discounted by the certified decay it would earn over one selection period.
Strategies differ only in the candidate set they minimize over: the local
one is restricted to the current leader's neighborhood, the global one
ranges over the whole group.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InfeasibleGainsError
from .first_order import (
    FirstOrderGains,
    SwarmStateFirstOrder,
    metric_first,
    rate_mu,
    reset_first,
)
from .graphs import GraphModel, GroundedSpectrum
from .second_order import (
    SecondOrderGains,
    SpectralBounds,
    SwarmStateSecondOrder,
    metric_second,
    rate_nu,
    reset_second,
)

CONSTANT = "constant"
LOCAL = "local"
GLOBAL = "global"
RANDOM = "random"
STRATEGIES = (CONSTANT, LOCAL, GLOBAL, RANDOM)

#: Two candidate costs are considered tied below this relative gap.
COST_TIE_RTOL = 1e-12

#: The external planner's address in message logs (agents are 1-based).
PLANNER = 0


@dataclass(frozen=True)
class LeaderSchedule:
    """Selection timing plus the identity of the current leader."""

    selection_period: float
    sending_period: float
    current_leader: int
    tick_index: int = 0

    def __post_init__(self):
        if not 0.0 < self.selection_period <= self.sending_period:
            raise ValueError("need 0 < selection period <= sending period")
        ratio = self.sending_period / self.selection_period
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("sending period must be an integer multiple of the selection period")

    def candidate_set(self, graph: GraphModel) -> frozenset[int]:
        """Local-strategy candidates: the current leader and its neighbors."""
        return graph.neighbors(self.current_leader) | {self.current_leader}

    def advanced(self, new_leader: int) -> "LeaderSchedule":
        return replace(self, current_leader=new_leader, tick_index=self.tick_index + 1)

    def is_sending_tick(self, tick_index: int) -> bool:
        k = tick_index * self.selection_period / self.sending_period
        return abs(k - round(k)) < 1e-9


@dataclass(frozen=True)
class CostTable:
    """Per-candidate costs, exclusions, and the tolerance-aware argmin set."""

    costs: dict[int, float]
    excluded: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        for m, c in self.costs.items():
            if c < 0.0:
                raise ValueError(f"negative cost {c} for candidate {m}")

    @property
    def argmin_set(self) -> frozenset[int]:
        if not self.costs:
            return frozenset()
        best = min(self.costs.values())
        tol = COST_TIE_RTOL * max(1.0, best)
        return frozenset(m for m, c in self.costs.items() if c - best <= tol)


def cost_first(
    candidate: int,
    state: SwarmStateFirstOrder,
    graph: GraphModel,
    u_r,
    gains: FirstOrderGains,
    spectrum: GroundedSpectrum,
    horizon: float,
) -> float:
    """Discounted post-reset metric if ``candidate`` led the next interval.

    Purely hypothetical: the passed state is never mutated.
    """
    if spectrum.leader != candidate:
        raise ValueError("spectrum was grounded at a different agent")
    mu = rate_mu(spectrum.algebraic_connectivity, gains)
    _, err = reset_first(state, graph, candidate, u_r, gains)
    return metric_first(err, gains) * math.exp(-2.0 * mu * horizon)


def cost_second(
    candidate: int,
    state: SwarmStateSecondOrder,
    graph: GraphModel,
    u_r,
    gains: SecondOrderGains,
    spectrum: GroundedSpectrum,
    lambda_max_full: float,
    horizon: float,
) -> float:
    """Second-order analogue of the candidate cost.

    Raises when the candidate's grounded spectrum leaves the feasibility
    box; the caller records the exclusion.
    """
    if spectrum.leader != candidate:
        raise ValueError("spectrum was grounded at a different agent")
    bounds = SpectralBounds.from_spectrum(spectrum, lambda_max_full)
    nu = rate_nu(bounds, gains)
    _, err = reset_second(state, candidate, u_r)
    return metric_second(err, gains, graph) * math.exp(-2.0 * nu * horizon)


@dataclass(frozen=True)
class SelectionResult:
    """Outcome of one selection tick."""

    leader: int
    table: CostTable | None
    kept_current: bool
    all_infeasible: bool = False
    tie_break_applied: bool = False


def evaluate_candidates(candidates, cost_fn) -> CostTable:
    """Run the cost closure over a candidate set, recording exclusions."""
    costs: dict[int, float] = {}
    excluded: dict[int, str] = {}
    for m in sorted(candidates):
        try:
            costs[m] = float(cost_fn(m))
        except InfeasibleGainsError as exc:
            excluded[m] = str(exc)
    return CostTable(costs=costs, excluded=excluded)


def select(
    strategy: str,
    graph: GraphModel,
    schedule: LeaderSchedule,
    rng: np.random.Generator,
    cost_fn=None,
    tie_break: str = "lowest",
) -> SelectionResult:
    """Choose the next leader under the given strategy.

    ``cost_fn(candidate) -> cost`` is only consulted by the local and
    global strategies.  When the current leader attains the minimum it is
    kept; otherwise ties break to the lowest agent index (deterministic)
    unless ``tie_break='random'``.
    """
    current = schedule.current_leader
    if strategy == CONSTANT:
        return SelectionResult(leader=current, table=None, kept_current=True)
    if strategy == RANDOM:
        pick = int(rng.integers(1, graph.n_agents + 1))
        return SelectionResult(leader=pick, table=None, kept_current=pick == current)
    if strategy not in (LOCAL, GLOBAL):
        raise ValueError(f"unknown strategy {strategy!r}")
    if cost_fn is None:
        raise ValueError(f"{strategy} strategy needs a cost function")

    if strategy == LOCAL:
        candidates = schedule.candidate_set(graph)
    else:
        candidates = frozenset(range(1, graph.n_agents + 1))
    table = evaluate_candidates(candidates, cost_fn)
    winners = table.argmin_set
    if not winners:
        return SelectionResult(leader=current, table=table, kept_current=True, all_infeasible=True)
    if current in winners:
        return SelectionResult(leader=current, table=table, kept_current=True)
    if len(winners) > 1 and tie_break == "random":
        pick = int(rng.choice(sorted(winners)))
    else:
        pick = min(winners)
    return SelectionResult(
        leader=pick, table=table, kept_current=False, tie_break_applied=len(winners) > 1
    )


@dataclass(frozen=True)
class Message:
    """One simulated protocol message."""

    tick: int
    sender: int
    recipient: int
    kind: str
    payload_size: int


def handoff_messages(
    graph: GraphModel,
    old_leader: int,
    new_leader: int,
    u_r,
    tick: int = 0,
) -> list[Message]:
    """Simulated message sequence of one selection tick.

    The outgoing leader broadcasts the command to its neighborhood, gathers
    one cost reply per neighbor, nominates the successor when leadership
    moves, and the (new) leader notifies the external planner.
    """
    hood = sorted(graph.neighbors(old_leader))
    if new_leader != old_leader and new_leader not in hood:
        raise ValueError(
            f"nomination target {new_leader} outside the neighborhood of {old_leader}"
        )
    d = np.atleast_1d(np.asarray(u_r)).size
    out = [Message(tick, old_leader, m, "reference_broadcast", d) for m in hood]
    out += [Message(tick, m, old_leader, "cost_reply", 1) for m in hood]
    if new_leader != old_leader:
        out.append(Message(tick, old_leader, new_leader, "nomination", 1))
    out.append(Message(tick, new_leader, PLANNER, "leadership_notice", 1))
    return out


def write_message_log(messages, path) -> None:
    """Append-style JSON-lines dump, one record per message."""
    with open(path, "w") as fh:
        for m in messages:
            fh.write(
                json.dumps(
                    {
                        "tick": m.tick,
                        "from": m.sender,
                        "to": m.recipient,
                        "kind": m.kind,
                        "payload_size": m.payload_size,
                    }
                )
                + "\n"
            )
