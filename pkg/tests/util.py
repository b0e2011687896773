"""Shared helpers for the test suite: tiny independent simulators and fits."""

import numpy as np

from leadsel.first_order import SwarmStateFirstOrder
from leadsel.reference import EstimateField, rk4_step
from leadsel.stacked import laplacian_apply


def simulate_first(state, spectrum, gains, dt, n_steps, record=None):
    """Fixed-leader first-order rollout on the stacked (positions, estimates).

    ``record(t, p, u_hat)`` is called after every step when given.  Returns
    the final (positions, estimates) arrays.
    """
    d = state.dimension
    ll = np.asarray(spectrum.grounded_laplacian)
    p = np.array(state.positions, copy=True)
    u = np.array(state.estimates.estimates, copy=True)
    form = state.formation
    y = np.concatenate([p, u])
    half = p.size

    def f(yv):
        pv, uv = yv[:half], yv[half:]
        dp = uv - gains.k_p * laplacian_apply(ll, pv - form, d)
        du = -gains.k_u * laplacian_apply(ll, uv, d)
        return np.concatenate([dp, du])

    for k in range(n_steps):
        y = rk4_step(f, y, dt)
        if record is not None:
            record((k + 1) * dt, y[:half], y[half:])
    return y[:half], y[half:]


def simulate_second(positions, velocities, estimates, formation, spectrum, gains, dt, n_steps, record=None):
    """Fixed-leader double-integrator rollout; returns final (p, v, u_hat)."""
    d = positions.size // spectrum.n_agents
    ll = np.asarray(spectrum.grounded_laplacian)
    y = np.concatenate([positions, velocities, estimates])
    third = positions.size

    def f(yv):
        pv, vv, uv = yv[:third], yv[third : 2 * third], yv[2 * third :]
        dp = vv
        dv = gains.b * (uv - vv) - gains.k_v * laplacian_apply(ll, pv - formation, d)
        du = -gains.k_u * laplacian_apply(ll, uv, d)
        return np.concatenate([dp, dv, du])

    for k in range(n_steps):
        y = rk4_step(f, y, dt)
        if record is not None:
            record((k + 1) * dt, y[:third], y[third : 2 * third], y[2 * third :])
    return y[:third], y[third : 2 * third], y[2 * third :]


def fit_log_slope(times, norms, t_lo, t_hi):
    """Least-squares slope of log(norm) over the window [t_lo, t_hi]."""
    times = np.asarray(times)
    norms = np.asarray(norms)
    mask = (times >= t_lo) & (times <= t_hi) & (norms > 0)
    return np.polyfit(times[mask], np.log(norms[mask]), 1)[0]


def make_first_state(positions, estimates, formation, dim, k_u):
    return SwarmStateFirstOrder(
        positions=np.asarray(positions, dtype=float),
        estimates=EstimateField(np.asarray(estimates, dtype=float), gain=k_u),
        formation=np.asarray(formation, dtype=float),
        dimension=dim,
    )
