"""Communication graphs, leader-grounded Laplacians, and their spectra.

The communication graph is undirected and unweighted.  Grounding a graph at
the current leader zeroes the leader's Laplacian row; deleting that row and
column yields the reduced matrix whose smallest eigenvalue (the grounded
algebraic connectivity) drives every convergence-rate certificate in this
library.  Agent indices are 1-based throughout the public API.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConvergenceError, DisconnectedGraphError, InvalidTopologyError

LINE = "line"
RING = "ring"
STAR = "star"
RANDOM_CONNECTED = "random_connected"
CLIQUE = "clique"
TOPOLOGY_KINDS = (LINE, RING, STAR, RANDOM_CONNECTED, CLIQUE)

#: Retry budget for rejection sampling of connected random graphs.
MAX_RANDOM_RETRIES = 10_000

#: Edge probabilities and seeds of the two canonical random survey graphs.
#: The denser second graph keeps every leader's grounded connectivity above
#: 0.5 at n=10, which the second-order demo scenario relies on.
CANONICAL_RANDOM_A = (0.35, 21)
CANONICAL_RANDOM_B = (0.6, 36)


@dataclass(frozen=True)
class TopologySpec:
    """Declarative description of one communication topology."""

    kind: str
    n_agents: int
    edge_probability: float | None = None
    seed: int | None = None

    def label(self) -> str:
        if self.kind == RANDOM_CONNECTED:
            return f"random-p{self.edge_probability}-s{self.seed}"
        return self.kind


@dataclass(frozen=True)
class GraphModel:
    """Undirected communication graph with its Laplacian.

    ``adjacency`` is a symmetric 0/1 matrix with zero diagonal and
    ``laplacian = diag(adjacency @ 1) - adjacency``, so the Laplacian rows
    sum to zero exactly.  Instances are immutable and safe to share.
    """

    n_agents: int
    adjacency: np.ndarray
    neighbor_sets: tuple[frozenset[int], ...]
    laplacian: np.ndarray

    @classmethod
    def from_adjacency(cls, adjacency: np.ndarray) -> "GraphModel":
        a = np.array(adjacency, dtype=float, copy=True)
        n = a.shape[0]
        if a.shape != (n, n):
            raise InvalidTopologyError("adjacency must be square")
        if not np.array_equal(a, a.T):
            raise InvalidTopologyError("adjacency must be symmetric")
        if np.any(np.diag(a) != 0.0):
            raise InvalidTopologyError("adjacency must have a zero diagonal")
        if not np.all((a == 0.0) | (a == 1.0)):
            raise InvalidTopologyError("adjacency must be binary")
        lap = np.diag(a.sum(axis=1)) - a
        neighbors = tuple(
            frozenset(int(j) + 1 for j in np.flatnonzero(a[i])) for i in range(n)
        )
        a.setflags(write=False)
        lap.setflags(write=False)
        return cls(n_agents=n, adjacency=a, neighbor_sets=neighbors, laplacian=lap)

    def neighbors(self, agent: int) -> frozenset[int]:
        """Neighbor set of a 1-based agent index."""
        return self.neighbor_sets[agent - 1]

    def degree(self, agent: int) -> int:
        return len(self.neighbor_sets[agent - 1])

    @property
    def max_degree(self) -> int:
        return max(len(s) for s in self.neighbor_sets)

    @property
    def is_connected(self) -> bool:
        """Breadth-first reachability from agent 1 (independent of spectra)."""
        seen = {0}
        frontier = [0]
        while frontier:
            i = frontier.pop()
            for j in np.flatnonzero(self.adjacency[i]):
                j = int(j)
                if j not in seen:
                    seen.add(j)
                    frontier.append(j)
        return len(seen) == self.n_agents


@dataclass(frozen=True)
class GroundedSpectrum:
    """Leader-grounded objects for one (graph, leader) pair.

    ``grounded_laplacian`` is the Laplacian with the leader's row zeroed;
    ``reduced_matrix`` drops the leader's row and column and is symmetric
    positive definite whenever the source graph is connected.
    ``coupling_column`` holds the grounding weights of the followers (1 for
    followers adjacent to the leader, 0 otherwise) and equals the row sums of
    the reduced matrix.  ``eigenvalues`` are the reduced matrix's eigenvalues
    in ascending order; the grounded Laplacian adds a structural zero.
    """

    leader: int
    grounded_laplacian: np.ndarray
    reduced_matrix: np.ndarray
    coupling_column: np.ndarray
    eigenvalues: np.ndarray
    full_spectrum_with_zero: np.ndarray

    @property
    def algebraic_connectivity(self) -> float:
        """Smallest reduced eigenvalue; positive for connected source graphs."""
        return float(self.eigenvalues[0])

    @property
    def largest_eigenvalue(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def n_agents(self) -> int:
        return self.grounded_laplacian.shape[0]


def _line(n: int) -> np.ndarray:
    a = np.zeros((n, n))
    for i in range(n - 1):
        a[i, i + 1] = a[i + 1, i] = 1.0
    return a


def _ring(n: int) -> np.ndarray:
    a = _line(n)
    a[0, n - 1] = a[n - 1, 0] = 1.0
    return a


def _star(n: int) -> np.ndarray:
    # Agent 1 is the hub.
    a = np.zeros((n, n))
    a[0, 1:] = a[1:, 0] = 1.0
    return a


def _clique(n: int) -> np.ndarray:
    return np.ones((n, n)) - np.eye(n)


def _random_connected(n: int, p: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    for _ in range(MAX_RANDOM_RETRIES):
        a = np.triu(rng.random((n, n)) < p, 1).astype(float)
        a = a + a.T
        if GraphModel.from_adjacency(a).is_connected:
            return a
    raise DisconnectedGraphError(
        f"no connected draw in {MAX_RANDOM_RETRIES} attempts (n={n}, p={p})"
    )


def build_topology(spec: TopologySpec) -> GraphModel:
    """Construct a connected graph of the requested shape.

    Random graphs draw Bernoulli edges with the spec's seed and reject
    disconnected draws; identical specs always produce identical graphs.
    """
    n = spec.n_agents
    if n < 2:
        raise InvalidTopologyError("need at least 2 agents")
    if spec.kind == LINE:
        a = _line(n)
    elif spec.kind == RING:
        a = _ring(n)
    elif spec.kind == STAR:
        a = _star(n)
    elif spec.kind == CLIQUE:
        a = _clique(n)
    elif spec.kind == RANDOM_CONNECTED:
        p = spec.edge_probability
        if p is None or not 0.0 < p <= 1.0:
            raise InvalidTopologyError("random topology needs edge_probability in (0, 1]")
        if spec.seed is None:
            raise InvalidTopologyError("random topology needs a seed")
        a = _random_connected(n, p, spec.seed)
    else:
        raise InvalidTopologyError(f"unknown topology kind {spec.kind!r}")
    return GraphModel.from_adjacency(a)


def canonical_topologies(n_agents: int = 10) -> list[tuple[str, TopologySpec]]:
    """The six labelled survey topologies, in their conventional order."""
    pa, sa = CANONICAL_RANDOM_A
    pb, sb = CANONICAL_RANDOM_B
    return [
        ("line", TopologySpec(LINE, n_agents)),
        ("ring", TopologySpec(RING, n_agents)),
        ("star", TopologySpec(STAR, n_agents)),
        ("random-a", TopologySpec(RANDOM_CONNECTED, n_agents, pa, sa)),
        ("random-b", TopologySpec(RANDOM_CONNECTED, n_agents, pb, sb)),
        ("clique", TopologySpec(CLIQUE, n_agents)),
    ]


def eigenvalues_symmetric(
    m: np.ndarray,
    *,
    tol: float = 1e-12,
    vectors: bool = False,
    max_sweeps: int | None = None,
):
    """Eigenvalues (and optionally eigenvectors) of a symmetric matrix.

    Cyclic Jacobi rotations, swept until the off-diagonal Frobenius norm
    falls below ``tol`` relative to the matrix scale.  Chosen over faster
    factorizations because it converges unconditionally for symmetric input
    and the matrices here are small.

    Parameters
    ----------
    m : array_like
        Symmetric matrix (asymmetry above 1e-12 of scale is rejected).
    tol : float
        Off-diagonal Frobenius tolerance, relative to ``max(1, ||m||_F)``.
    vectors : bool
        Also return the orthogonal eigenvector matrix ``V`` (columns), with
        ``m ~= V diag(w) V.T``.

    Returns
    -------
    w : ndarray
        Eigenvalues in ascending order.
    V : ndarray, optional
        Only when ``vectors=True``.
    """
    a = np.array(m, dtype=float, copy=True)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    scale = max(1.0, float(np.abs(a).max(initial=0.0)))
    if float(np.abs(a - a.T).max(initial=0.0)) > 1e-12 * scale:
        raise ValueError("matrix is not symmetric within 1e-12")
    a = (a + a.T) / 2.0
    if n == 1:
        return (a[0, :1].copy(), np.eye(1)) if vectors else a[0, :1].copy()

    if max_sweeps is None:
        max_sweeps = 100 * n
    fro = max(1.0, float(np.linalg.norm(a, "fro")))
    threshold = tol * fro
    skip = threshold / (10.0 * n)
    v = np.eye(n) if vectors else None

    diag_mask = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        # Norm of the off-diagonal part, summed directly (a difference of
        # squared norms would sit on a cancellation noise floor above tol).
        off = math.sqrt(float(np.sum(a[diag_mask] ** 2)))
        if off <= threshold:
            w = np.diag(a).copy()
            order = np.argsort(w, kind="stable")
            if vectors:
                return w[order], v[:, order]
            return w[order]
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= skip:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.array([[c, -s], [s, c]])
                a[[p, q], :] = rot @ a[[p, q], :]
                a[:, [p, q]] = a[:, [p, q]] @ rot.T
                a[p, q] = a[q, p] = 0.0
                if vectors:
                    v[:, [p, q]] = v[:, [p, q]] @ rot.T
    raise ConvergenceError(f"Jacobi sweep budget exhausted ({max_sweeps} sweeps, n={n})")


def ground(graph: GraphModel, leader: int) -> GroundedSpectrum:
    """Ground a connected graph at the given (1-based) leader.

    Zeroes the leader's Laplacian row, deletes the leader's row and column
    to form the reduced matrix, and solves its symmetric eigenproblem.
    """
    if not 1 <= leader <= graph.n_agents:
        raise IndexError(f"leader {leader} out of range 1..{graph.n_agents}")
    if not graph.is_connected:
        raise DisconnectedGraphError("grounding requires a connected graph")
    k = leader - 1
    grounded_lap = np.array(graph.laplacian, copy=True)
    grounded_lap[k, :] = 0.0
    reduced = np.delete(np.delete(grounded_lap, k, axis=0), k, axis=1)
    coupling = np.delete(graph.adjacency[:, k], k)
    eigs = eigenvalues_symmetric(reduced)
    full = np.sort(np.append(eigs, 0.0))
    for arr in (grounded_lap, reduced, coupling, eigs, full):
        arr.setflags(write=False)
    return GroundedSpectrum(
        leader=leader,
        grounded_laplacian=grounded_lap,
        reduced_matrix=reduced,
        coupling_column=coupling,
        eigenvalues=eigs,
        full_spectrum_with_zero=full,
    )


@dataclass(frozen=True)
class SurveyRow:
    """Extreme Laplacian and grounded eigenvalues for one (topology, leader)."""

    topology: str
    leader: int
    lambda2: float
    lambdaN: float
    lambda2l: float
    lambdaNl: float


def spectrum_survey(
    specs: Sequence[tuple[str, TopologySpec]] | Sequence[TopologySpec],
) -> list[SurveyRow]:
    """Tabulate grounded vs. plain connectivity for every leader choice.

    Accepts either bare specs or (label, spec) pairs.  Every emitted row
    satisfies the interlacing inequalities lambda2l <= lambda2 and
    lambdaNl <= lambdaN.
    """
    rows: list[SurveyRow] = []
    for entry in specs:
        label, spec = entry if isinstance(entry, tuple) else (entry.label(), entry)
        graph = build_topology(spec)
        lams = eigenvalues_symmetric(graph.laplacian)
        for leader in range(1, graph.n_agents + 1):
            gs = ground(graph, leader)
            rows.append(
                SurveyRow(
                    topology=label,
                    leader=leader,
                    lambda2=float(lams[1]),
                    lambdaN=float(lams[-1]),
                    lambda2l=gs.algebraic_connectivity,
                    lambdaNl=gs.largest_eigenvalue,
                )
            )
    return rows


def write_survey_csv(rows: Iterable[SurveyRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["topology", "leader", "lambda2", "lambdaN", "lambda2l", "lambdaNl"])
        for r in rows:
            writer.writerow(
                [r.topology, r.leader, repr(r.lambda2), repr(r.lambdaN), repr(r.lambda2l), repr(r.lambdaNl)]
            )
