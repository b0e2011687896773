"""Single-integrator collective tracking with leader-switch reset semantics.

Agents steer with their reference estimate plus a formation-consensus term
through the grounded Laplacian.  The weighted error metric here decays
monotonically between selection ticks at a rate certified in closed form
from the grounded spectrum; the certificate operation cross-checks that
closed form against a numeric eigensolve of the reduced error drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CertificateError, InfeasibleGainsError
from .graphs import GraphModel, GroundedSpectrum, eigenvalues_symmetric
from .reference import EstimateField, clamp_leader, estimation_error
from .stacked import block, laplacian_apply, replicate, zeroed_block

CERT_TOL = 1e-8


@dataclass(frozen=True)
class FirstOrderGains:
    """Position gain, estimator gain, and the metric weight.

    The metric weight is feasible for a grounded connectivity value
    ``lam`` when ``lam**2 * (4*k_n*k_p*k_u - k_u**2) > 1``; only then is
    the decay-rate certificate valid.
    """

    k_p: float
    k_u: float
    k_n: float

    def __post_init__(self):
        if min(self.k_p, self.k_u, self.k_n) <= 0.0:
            raise ValueError("all first-order gains must be positive")

    @property
    def k1(self) -> float:
        return self.k_p + self.k_n * self.k_u

    @property
    def k2(self) -> float:
        return self.k_u**2 + (self.k_p - self.k_n * self.k_u) ** 2

    def feasible_for(self, lambda2l: float) -> bool:
        return lambda2l**2 * (4.0 * self.k_n * self.k_p * self.k_u - self.k_u**2) > 1.0

    def require_feasible(self, lambda2l: float) -> None:
        if not self.feasible_for(lambda2l):
            raise InfeasibleGainsError(
                f"metric weight k_n={self.k_n} infeasible for grounded "
                f"connectivity {lambda2l}; enlarge k_n"
            )


def shared_metric_weight(
    lambda2l_min: float, k_p: float, k_u: float, margin: float = 0.05
) -> float:
    """Smallest-plus-margin metric weight feasible for every candidate.

    One weight must serve every (topology, leader) pair a scenario can
    visit, so it is sized against the worst grounded connectivity.
    """
    if lambda2l_min <= 0.0:
        raise InfeasibleGainsError("grounded connectivity must be positive")
    return (1.0 + margin) * (1.0 / lambda2l_min**2 + k_u**2) / (4.0 * k_p * k_u)


@dataclass(frozen=True)
class SwarmStateFirstOrder:
    """Positions, reference estimates, and formation offsets (all stacked)."""

    positions: np.ndarray
    estimates: EstimateField
    formation: np.ndarray
    dimension: int

    @property
    def n_agents(self) -> int:
        return self.positions.size // self.dimension


@dataclass(frozen=True)
class ErrorStateFirstOrder:
    """Stacked tracking errors plus the formation-coupling term."""

    formation_error: np.ndarray
    velocity_error: np.ndarray
    estimation_error: np.ndarray
    coupling: np.ndarray


def control_rate_first(
    state: SwarmStateFirstOrder, spectrum: GroundedSpectrum, gains: FirstOrderGains
) -> np.ndarray:
    """Commanded stacked velocity: estimate plus grounded formation feedback.

    The leader's row reduces to its own (clamped) estimate, so the leader
    tracks the command exactly.
    """
    offset = state.positions - state.formation
    return state.estimates.estimates - gains.k_p * laplacian_apply(
        spectrum.grounded_laplacian, offset, state.dimension
    )


def formation_coupling(
    positions: np.ndarray, formation: np.ndarray, graph: GraphModel,
    k_p: float, dim: int,
) -> np.ndarray:
    """Neighbor-relative formation force, built from the full Laplacian.

    This term uses the ungrounded Laplacian: it is what each agent measures
    locally regardless of who currently leads.
    """
    return -k_p * laplacian_apply(graph.laplacian, positions - formation, dim)


def tracking_errors_first(
    state: SwarmStateFirstOrder,
    graph: GraphModel,
    spectrum: GroundedSpectrum,
    u_r,
    gains: FirstOrderGains,
) -> ErrorStateFirstOrder:
    """Errors of a running interval (no reset projection applied)."""
    d = state.dimension
    leader = spectrum.leader
    offset = state.positions - state.formation
    e_p = offset - replicate(block(offset, leader, d), state.n_agents)
    e_u = estimation_error(state.estimates, u_r)
    # Velocity is algebraic in first order, so its error is the estimate
    # error plus the grounded formation feedback.
    e_v = e_u - gains.k_p * laplacian_apply(spectrum.grounded_laplacian, offset, d)
    gamma = formation_coupling(state.positions, state.formation, graph, gains.k_p, d)
    return ErrorStateFirstOrder(e_p, e_v, e_u, gamma)


def reset_first(
    state: SwarmStateFirstOrder,
    graph: GraphModel,
    leader: int,
    u_r,
    gains: FirstOrderGains,
) -> tuple[SwarmStateFirstOrder, ErrorStateFirstOrder]:
    """Apply the tick-instant reset for a (possibly new) leader.

    Positions are continuous across the switch; the leader's estimate block
    jumps to the received command; all three error vectors are re-based on
    the new leader, which zeroes that leader's blocks.
    """
    d = state.dimension
    n = state.n_agents
    u_r = np.atleast_1d(np.asarray(u_r, dtype=float))
    clamped = clamp_leader(state.estimates, leader, u_r)
    new_state = SwarmStateFirstOrder(
        positions=state.positions, estimates=clamped,
        formation=state.formation, dimension=d,
    )

    offset = state.positions - state.formation
    e_p = zeroed_block(offset - replicate(block(offset, leader, d), n), leader, d)
    pre_estimate_error = state.estimates.estimates - replicate(u_r, n)
    gamma = formation_coupling(state.positions, state.formation, graph, gains.k_p, d)
    e_v = zeroed_block(pre_estimate_error + gamma, leader, d)
    e_u = zeroed_block(pre_estimate_error, leader, d)
    return new_state, ErrorStateFirstOrder(e_p, e_v, e_u, gamma)


def metric_first(errors: ErrorStateFirstOrder, gains: FirstOrderGains) -> float:
    """Weighted squared error: estimate part plus (position, velocity)/k_n."""
    e_p, e_v, e_u = errors.formation_error, errors.velocity_error, errors.estimation_error
    return float(e_u @ e_u + (e_p @ e_p + e_v @ e_v) / gains.k_n)


def metric_matrix_first(n_agents: int, dim: int, gains: FirstOrderGains) -> np.ndarray:
    """Dense block-diagonal weight matrix of the first-order metric."""
    eye = np.eye(n_agents * dim)
    zero = np.zeros_like(eye)
    return np.block(
        [[eye / gains.k_n, zero, zero], [zero, eye / gains.k_n, zero], [zero, zero, eye]]
    )


def rate_mu(lambda2l: float, gains: FirstOrderGains) -> float:
    """Certified exponential decay rate of the weighted metric.

    Monotonically increasing in the grounded connectivity on the feasible
    domain, and positive whenever the feasibility condition holds.
    """
    gains.require_feasible(lambda2l)
    return (
        lambda2l * gains.k1 - math.sqrt(1.0 + lambda2l**2 * gains.k2)
    ) / (2.0 * gains.k_n)


def drift_mode_rates(lambda_il: float, gains: FirstOrderGains) -> tuple[float, float, float]:
    """Closed-form eigenvalue triple of the weighted reduced drift.

    Evaluated at one grounded eigenvalue; the full certificate spectrum is
    the union of these triples over the grounded spectrum.
    """
    lam = -lambda_il
    root = math.sqrt(1.0 + lam**2 * gains.k2)
    return (
        gains.k_p * lam / gains.k_n,
        (lam * gains.k1 - root) / (2.0 * gains.k_n),
        (lam * gains.k1 + root) / (2.0 * gains.k_n),
    )


@dataclass(frozen=True)
class FirstOrderCertificate:
    """Eigenvalue agreement record for the first-order decay certificate."""

    leader: int
    rate: float
    numeric_eigenvalues: np.ndarray
    closed_form_eigenvalues: np.ndarray
    max_mismatch: float


def reduced_drift_first(
    spectrum: GroundedSpectrum, gains: FirstOrderGains, dim: int = 1
) -> np.ndarray:
    """Dense drift of the leader-excised error dynamics."""
    g = np.kron(-np.asarray(spectrum.reduced_matrix), np.eye(dim))
    m = g.shape[0]
    eye = np.eye(m)
    zero = np.zeros((m, m))
    return np.block(
        [
            [gains.k_p * g, zero, eye],
            [zero, gains.k_p * g, gains.k_u * g],
            [zero, zero, gains.k_u * g],
        ]
    )


def certificate_first(
    spectrum: GroundedSpectrum, gains: FirstOrderGains, dim: int = 1
) -> FirstOrderCertificate:
    """Cross-check the decay rate against a numeric eigensolve.

    Assembles the symmetrized product of the metric weight with the reduced
    drift, solves it numerically, and compares with the closed-form mode
    rates at every grounded eigenvalue.  Any disagreement beyond tolerance
    is an implementation bug and raises instead of being smoothed over.
    """
    lam2l = spectrum.algebraic_connectivity
    gains.require_feasible(lam2l)
    drift = reduced_drift_first(spectrum, gains, dim)
    m = drift.shape[0] // 3
    weight = np.block(
        [
            [np.eye(m) / gains.k_n, np.zeros((m, m)), np.zeros((m, m))],
            [np.zeros((m, m)), np.eye(m) / gains.k_n, np.zeros((m, m))],
            [np.zeros((m, m)), np.zeros((m, m)), np.eye(m)],
        ]
    )
    sym = weight @ drift
    sym = (sym + sym.T) / 2.0
    numeric = eigenvalues_symmetric(sym)

    closed = np.sort(
        np.concatenate(
            [np.repeat(drift_mode_rates(lam, gains), dim) for lam in spectrum.eigenvalues]
        )
    )
    mismatch = float(np.max(np.abs(numeric - closed)))
    if mismatch > CERT_TOL:
        raise CertificateError(
            f"closed-form and numeric certificate spectra differ by {mismatch}"
        )
    if closed[-1] >= 0.0:
        raise CertificateError("certificate spectrum not negative definite")
    rate = rate_mu(lam2l, gains)
    if abs(closed[-1] + rate) > CERT_TOL:
        raise CertificateError(
            f"largest certificate eigenvalue {closed[-1]} does not match -rate {-rate}"
        )
    return FirstOrderCertificate(
        leader=spectrum.leader,
        rate=rate,
        numeric_eigenvalues=numeric,
        closed_form_eigenvalues=closed,
        max_mismatch=mismatch,
    )
