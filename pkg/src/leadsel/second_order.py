"""Double-integrator collective tracking with a graph-weighted error metric.

Velocities are independent states driven by a damping-like gain toward the
reference estimate plus grounded formation feedback.  The metric here mixes
position and velocity errors through the graph Laplacian; its decay rate is
certified by Gershgorin disks of a per-eigenvalue slice of the symmetrized
metric-weighted drift, and the certificate operation cross-checks the
closed-form mode rates against a numeric eigensolve.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import CertificateError, InfeasibleGainsError
from .graphs import GraphModel, GroundedSpectrum, eigenvalues_symmetric
from .reference import EstimateField, clamp_leader
from .stacked import block, laplacian_apply, replicate, zeroed_block

CERT_TOL = 1e-8


@dataclass(frozen=True)
class SecondOrderGains:
    """Damping gain, formation/estimator gains, and metric weights.

    The rate and cost machinery assumes unit formation and estimator gains;
    other values are allowed for plain simulation and the per-mode
    certificate.  Metric weights may be left unset when no metric is used.
    """

    b: float
    k_v: float = 1.0
    k_u: float = 1.0
    k_n1: float | None = None
    k_n2: float | None = None
    k_n3: float | None = None

    def __post_init__(self):
        if min(self.b, self.k_v, self.k_u) <= 0.0:
            raise ValueError("b, k_v, k_u must be positive")
        weights = (self.k_n1, self.k_n2, self.k_n3)
        if any(w is not None for w in weights):
            if any(w is None or w <= 0.0 for w in weights):
                raise ValueError("metric weights must all be set and positive")

    @property
    def has_metric_weights(self) -> bool:
        return self.k_n1 is not None

    def require_metric_weights(self) -> None:
        if not self.has_metric_weights:
            raise InfeasibleGainsError("metric weights k_n1..k_n3 are unset")

    def require_unit_tracking_gains(self) -> None:
        if self.k_v != 1.0 or self.k_u != 1.0:
            raise InfeasibleGainsError(
                "rate and cost certificates assume k_v = k_u = 1"
            )


@dataclass(frozen=True)
class SpectralBounds:
    """The three spectral extremes the feasibility box is built from."""

    lambda2l: float
    lambdaNl: float
    lambda_max_full: float

    @classmethod
    def from_spectrum(cls, spectrum: GroundedSpectrum, lambda_max_full: float) -> "SpectralBounds":
        return cls(
            lambda2l=spectrum.algebraic_connectivity,
            lambdaNl=spectrum.largest_eigenvalue,
            lambda_max_full=float(lambda_max_full),
        )


def definiteness_margin(gains: SecondOrderGains, lambda_max_full: float) -> float:
    """Slack of the sufficient positive-definiteness condition on the metric."""
    gains.require_metric_weights()
    return gains.k_n1 / math.sqrt(lambda_max_full) - gains.k_n2


def feasibility_violations(bounds: SpectralBounds, gains: SecondOrderGains) -> list[str]:
    """Which of the open-box feasibility conditions fail, as messages."""
    gains.require_metric_weights()
    b, kn1, kn2, kn3 = gains.b, gains.k_n1, gains.k_n2, gains.k_n3
    out = []
    if not b < bounds.lambda2l:
        out.append(f"b={b} not below grounded connectivity {bounds.lambda2l}")
    else:
        if not kn1 < 2.0 * bounds.lambda2l / b:
            out.append(f"k_n1={kn1} not below {2.0 * bounds.lambda2l / b}")
        kn2_cap = min(
            b * kn1 / (bounds.lambdaNl * (2.0 + b)),
            2.0 / b - kn1 / bounds.lambda2l,
            kn1 / math.sqrt(bounds.lambda_max_full),
        )
        if not kn2 < kn2_cap:
            out.append(f"k_n2={kn2} not below {kn2_cap}")
        elif not kn3 < b * kn2 * bounds.lambda2l / 2.0:
            out.append(f"k_n3={kn3} not below {b * kn2 * bounds.lambda2l / 2.0}")
    return out


def is_feasible(bounds: SpectralBounds, gains: SecondOrderGains) -> bool:
    return gains.has_metric_weights and not feasibility_violations(bounds, gains)


def select_feasible_gains(bounds: SpectralBounds, b_hint: float) -> SecondOrderGains:
    """Pick gains strictly inside the feasibility box.

    The damping hint is clamped below the grounded connectivity; the
    remaining weights sit at fixed fractions of their open bounds, so the
    box is never left empty for a connected graph.
    """
    b = min(b_hint, 0.9 * bounds.lambda2l)
    kn1 = 0.5 * (2.0 * bounds.lambda2l / b)
    kn2 = 0.75 * min(
        b * kn1 / (bounds.lambdaNl * (2.0 + b)),
        2.0 / b - kn1 / bounds.lambda2l,
        kn1 / math.sqrt(bounds.lambda_max_full),
    )
    kn3 = 0.8 * (b * kn2 * bounds.lambda2l / 2.0)
    return SecondOrderGains(b=b, k_v=1.0, k_u=1.0, k_n1=kn1, k_n2=kn2, k_n3=kn3)


def gershgorin_points(phi: float, gains: SecondOrderGains):
    """Disk reach and proof bounds for one grounded eigenvalue slice.

    Returns ``(z1, z2, z3, zbar1, zbar2)``: the largest real coordinate of
    each Gershgorin disk of the 3x3 slice, plus the two closed-form
    majorants used by the worst-case rate.
    """
    gains.require_metric_weights()
    b, kn1, kn2, kn3 = gains.b, gains.k_n1, gains.k_n2, gains.k_n3
    cross = abs(kn3 - b * kn2 * phi) / 2.0
    z1 = -kn2 * phi**2 + cross + b * kn2 * phi / 2.0
    z2 = kn2 * phi - b * kn1 + cross + b * kn1 / 2.0
    z3 = -phi + b * kn2 * phi / 2.0 + b * kn1 / 2.0
    zbar1 = kn2 * phi * (b - phi)
    zbar2 = kn2 * phi * (1.0 + b / 2.0) - b * kn1 / 2.0
    return z1, z2, z3, zbar1, zbar2


def rate_nu(bounds: SpectralBounds, gains: SecondOrderGains) -> float:
    """Certified decay rate of the graph-weighted metric.

    The negative of the worst Gershgorin majorant, each evaluated at its
    worst-case grounded eigenvalue; positive whenever the feasibility box
    conditions hold.
    """
    gains.require_unit_tracking_gains()
    violations = feasibility_violations(bounds, gains)
    if violations:
        raise InfeasibleGainsError("; ".join(violations))
    _, _, z3_low, zbar1_low, _ = gershgorin_points(bounds.lambda2l, gains)
    _, _, _, _, zbar2_high = gershgorin_points(bounds.lambdaNl, gains)
    return -max(zbar1_low, zbar2_high, z3_low)


@dataclass(frozen=True)
class SwarmStateSecondOrder:
    """Positions, independent velocities, estimates, and formation offsets."""

    positions: np.ndarray
    velocities: np.ndarray
    estimates: EstimateField
    formation: np.ndarray
    dimension: int

    @property
    def n_agents(self) -> int:
        return self.positions.size // self.dimension


@dataclass(frozen=True)
class ErrorStateSecondOrder:
    """Stacked tracking errors; the velocity error is leader-relative."""

    formation_error: np.ndarray
    velocity_error: np.ndarray
    estimation_error: np.ndarray


def control_rate_second(state, spectrum: GroundedSpectrum, gains: SecondOrderGains):
    """Stacked (position, velocity) derivatives of the double integrator.

    The leader's acceleration reduces to pure damping toward its clamped
    estimate: its grounded Laplacian row is zero.
    """
    offset = state.positions - state.formation
    accel = gains.b * (state.estimates.estimates - state.velocities) - gains.k_v * laplacian_apply(
        spectrum.grounded_laplacian, offset, state.dimension
    )
    return state.velocities.copy(), accel


def reset_second(state: SwarmStateSecondOrder, leader: int, u_r):
    """Tick-instant reset: clamp the leader's estimate, re-base the errors.

    Positions and velocities are continuous across the switch.  The
    velocity error is measured against the new leader's actual velocity,
    which generally differs from the command until the transient dies.
    """
    d = state.dimension
    n = state.n_agents
    u_r = np.atleast_1d(np.asarray(u_r, dtype=float))
    clamped = clamp_leader(state.estimates, leader, u_r)
    new_state = SwarmStateSecondOrder(
        positions=state.positions,
        velocities=state.velocities,
        estimates=clamped,
        formation=state.formation,
        dimension=d,
    )
    offset = state.positions - state.formation
    e_p = zeroed_block(offset - replicate(block(offset, leader, d), n), leader, d)
    e_v = zeroed_block(
        state.velocities - replicate(block(state.velocities, leader, d), n), leader, d
    )
    e_u = zeroed_block(state.estimates.estimates - replicate(u_r, n), leader, d)
    return new_state, ErrorStateSecondOrder(e_p, e_v, e_u)


def tracking_errors_second(state: SwarmStateSecondOrder, leader: int, u_r) -> ErrorStateSecondOrder:
    """Errors of a running interval (no reset projection applied)."""
    d = state.dimension
    n = state.n_agents
    u_r = np.atleast_1d(np.asarray(u_r, dtype=float))
    offset = state.positions - state.formation
    e_p = offset - replicate(block(offset, leader, d), n)
    e_v = state.velocities - replicate(block(state.velocities, leader, d), n)
    e_u = state.estimates.estimates - replicate(u_r, n)
    return ErrorStateSecondOrder(e_p, e_v, e_u)


def metric_second(errors: ErrorStateSecondOrder, gains: SecondOrderGains, graph: GraphModel) -> float:
    """Graph-weighted squared error.

    Evaluated blockwise against the full (ungrounded) Laplacian:
    ``kn1*ep'G ep + kn3*|ep|^2 + 2 kn2*ep'G ev + kn1*|ev|^2 + |eu|^2``.
    """
    gains.require_metric_weights()
    e_p, e_v, e_u = errors.formation_error, errors.velocity_error, errors.estimation_error
    dim = e_p.size // graph.n_agents
    g_ep = laplacian_apply(graph.laplacian, e_p, dim)
    return float(
        gains.k_n1 * (e_p @ g_ep)
        + gains.k_n3 * (e_p @ e_p)
        + 2.0 * gains.k_n2 * (e_v @ g_ep)
        + gains.k_n1 * (e_v @ e_v)
        + e_u @ e_u
    )


def _metric_blocks(core: np.ndarray, gains: SecondOrderGains, dim: int) -> np.ndarray:
    g = np.kron(core, np.eye(dim))
    m = g.shape[0]
    eye = np.eye(m)
    zero = np.zeros((m, m))
    return np.block(
        [
            [gains.k_n1 * g + gains.k_n3 * eye, gains.k_n2 * g, zero],
            [gains.k_n2 * g, gains.k_n1 * eye, zero],
            [zero, zero, eye],
        ]
    )


def metric_matrix_second(graph: GraphModel, gains: SecondOrderGains, dim: int = 1) -> np.ndarray:
    """Dense weight matrix of the graph-weighted metric."""
    gains.require_metric_weights()
    return _metric_blocks(np.asarray(graph.laplacian), gains, dim)


def reduced_metric_matrix(spectrum: GroundedSpectrum, gains: SecondOrderGains, dim: int = 1) -> np.ndarray:
    """Leader-excised weight matrix (reduced matrix in place of the Laplacian)."""
    gains.require_metric_weights()
    return _metric_blocks(np.asarray(spectrum.reduced_matrix), gains, dim)


def check_pl_definite(graph: GraphModel, gains: SecondOrderGains, dim: int = 1) -> tuple[bool, float]:
    """Numeric positive-definiteness of the metric weight, with witness.

    Returns ``(definite, smallest_eigenvalue)``.  Whenever the sufficient
    condition ``k_n2 < k_n1 / sqrt(lambda_max)`` holds the answer is True;
    the numeric route also classifies weights outside that box.
    """
    mat = metric_matrix_second(graph, gains, dim)
    smallest = float(eigenvalues_symmetric(mat)[0])
    return smallest > 0.0, smallest


def reduced_drift_second(spectrum: GroundedSpectrum, gains: SecondOrderGains, dim: int = 1) -> np.ndarray:
    """Dense drift of the leader-excised second-order error dynamics."""
    g = np.kron(-np.asarray(spectrum.reduced_matrix), np.eye(dim))
    m = g.shape[0]
    eye = np.eye(m)
    zero = np.zeros((m, m))
    return np.block(
        [
            [zero, eye, zero],
            [gains.k_v * g, -gains.b * eye, gains.b * eye],
            [zero, zero, gains.k_u * g],
        ]
    )


def vibration_mode_rates(lambda_il: float, b: float, k_v: float) -> tuple[complex, complex]:
    """Closed-form (position, velocity) mode pair for one grounded eigenvalue."""
    root = cmath.sqrt(b * b - 4.0 * k_v * lambda_il)
    return (-b / 2.0 + root / 2.0, -b / 2.0 - root / 2.0)


def critical_damping(lambdaNl: float, k_v: float) -> float:
    """Damping above which no mode oscillates."""
    return 2.0 * math.sqrt(k_v * lambdaNl)


@dataclass(frozen=True)
class StabilityCertificate:
    """Certificate record for the second-order loop.

    The per-mode part (closed-form vs numeric drift spectrum, damping
    classification) is always present; the rate part (symmetrized-product
    eigenvalues, Gershgorin points, certified rate) requires unit tracking
    gains, metric weights, and box feasibility, and is None otherwise.
    """

    leader: int
    reduced_drift: np.ndarray
    per_mode_rates: np.ndarray
    numeric_drift_spectrum: np.ndarray
    max_mismatch: float
    critically_damped: bool
    rate: float | None
    sym_product_eigs: np.ndarray | None
    gershgorin_points: tuple | None
    metric_matrix: np.ndarray | None


def _multiset_mismatch(a: np.ndarray, b: np.ndarray) -> float:
    """Greatest distance under greedy nearest pairing of two spectra.

    Plain lexicographic sorting cannot pair conjugate eigenvalue clusters:
    all underdamped modes share one real part, so rounding noise there
    scrambles the order.
    """
    remaining = list(b)
    worst = 0.0
    for x in a:
        dists = [abs(x - y) for y in remaining]
        k = int(np.argmin(dists))
        worst = max(worst, dists[k])
        remaining.pop(k)
    return worst


def certificate_second(
    spectrum: GroundedSpectrum,
    gains: SecondOrderGains,
    lambda_max_full: float | None = None,
    dim: int = 1,
) -> StabilityCertificate:
    """Cross-check closed-form mode rates against the numeric drift spectrum.

    Disagreement beyond tolerance raises: it means an implementation bug,
    not an infeasible instance.  When the metric branch applies, also
    verifies that every symmetrized-product eigenvalue sits at or below the
    negated certified rate.
    """
    drift = reduced_drift_second(spectrum, gains, dim)
    numeric = np.sort_complex(np.linalg.eigvals(drift))
    closed = []
    for lam in spectrum.eigenvalues:
        fast, slow = vibration_mode_rates(float(lam), gains.b, gains.k_v)
        closed.extend([fast, slow, complex(-gains.k_u * lam, 0.0)] * dim)
    closed = np.sort_complex(np.array(closed))
    mismatch = _multiset_mismatch(closed, numeric)
    if mismatch > CERT_TOL:
        raise CertificateError(
            f"closed-form and numeric drift spectra differ by {mismatch}"
        )
    damped = gains.b > critical_damping(spectrum.largest_eigenvalue, gains.k_v)
    if damped and float(np.max(np.abs(numeric.imag))) > CERT_TOL:
        raise CertificateError("oscillatory numeric modes above critical damping")

    rate = None
    sym_eigs = None
    points = None
    p_reduced = None
    if (
        gains.has_metric_weights
        and gains.k_v == 1.0
        and gains.k_u == 1.0
        and lambda_max_full is not None
    ):
        bounds = SpectralBounds.from_spectrum(spectrum, lambda_max_full)
        if is_feasible(bounds, gains):
            rate = rate_nu(bounds, gains)
            p_reduced = reduced_metric_matrix(spectrum, gains, dim)
            sym = p_reduced @ drift
            sym = (sym + sym.T) / 2.0
            sym_eigs = eigenvalues_symmetric(sym)
            if sym_eigs[-1] > -rate + 1e-9:
                raise CertificateError(
                    f"symmetrized product eigenvalue {sym_eigs[-1]} exceeds -rate {-rate}"
                )
            points = tuple(
                (float(lam),) + gershgorin_points(float(lam), gains)
                for lam in spectrum.eigenvalues
            )
    return StabilityCertificate(
        leader=spectrum.leader,
        reduced_drift=drift,
        per_mode_rates=closed,
        numeric_drift_spectrum=numeric,
        max_mismatch=mismatch,
        critically_damped=damped,
        rate=rate,
        sym_product_eigs=sym_eigs,
        gershgorin_points=points,
        metric_matrix=p_reduced,
    )
