import numpy as np
import pytest

from leadsel.errors import CertificateError, InfeasibleGainsError
from leadsel.first_order import (
    ErrorStateFirstOrder,
    FirstOrderGains,
    certificate_first,
    control_rate_first,
    drift_mode_rates,
    formation_coupling,
    metric_first,
    metric_matrix_first,
    rate_mu,
    reduced_drift_first,
    reset_first,
    shared_metric_weight,
    tracking_errors_first,
)
from leadsel.graphs import (
    LINE,
    RANDOM_CONNECTED,
    RING,
    TopologySpec,
    build_topology,
    ground,
)
from util import make_first_state, simulate_first

PAPER_GAINS = dict(k_p=5.0, k_u=2.5)


def path3():
    return build_topology(TopologySpec(LINE, 3))


class TestControlRate:
    def test_formation_achieved_tracks_command(self):
        g = build_topology(TopologySpec(RING, 5))
        gs = ground(g, 2)
        u_r = np.array([0.3, -0.1])
        offsets = np.arange(10, dtype=float)
        state = make_first_state(
            offsets + np.tile([4.0, 2.0], 5), np.tile(u_r, 5), offsets, 2, 1.0
        )
        gains = FirstOrderGains(k_p=3.0, k_u=1.0, k_n=1.0)
        rate = control_rate_first(state, gs, gains)
        assert np.allclose(rate, np.tile(u_r, 5), atol=1e-12)

    def test_line4_row_products(self):
        # Direct row products of the grounded Laplacian with the offset
        # (1,0,0,0): only follower 1 sees the leader, so only its row fires.
        gs = ground(build_topology(TopologySpec(LINE, 4)), 2)
        state = make_first_state([1.0, 0.0, 0.0, 0.0], np.zeros(4), np.zeros(4), 1, 1.0)
        gains = FirstOrderGains(k_p=1.0, k_u=1.0, k_n=1.0)
        assert np.allclose(control_rate_first(state, gs, gains), [-1.0, 0.0, 0.0, 0.0])

    def test_leader_row_equals_estimate(self):
        rng = np.random.default_rng(0)
        g = build_topology(TopologySpec(RANDOM_CONNECTED, 7, 0.5, seed=1))
        for leader in range(1, 8):
            gs = ground(g, leader)
            est = rng.standard_normal(14)
            state = make_first_state(rng.standard_normal(14), est, rng.standard_normal(14), 2, 1.0)
            gains = FirstOrderGains(k_p=2.0, k_u=1.0, k_n=1.0)
            rate = control_rate_first(state, gs, gains)
            s = slice((leader - 1) * 2, leader * 2)
            assert np.array_equal(rate[s], est[s])


class TestResetFirst:
    def test_perfect_state_gives_zero_errors_for_every_leader(self):
        g = build_topology(TopologySpec(RING, 4))
        u_r = np.array([0.5])
        form = np.array([0.0, 1.0, 2.0, 3.0])
        state = make_first_state(form + 7.0, np.tile(u_r, 4), form, 1, 1.0)
        gains = FirstOrderGains(k_p=1.0, k_u=1.0, k_n=1.0)
        for leader in range(1, 5):
            _, err = reset_first(state, g, leader, u_r, gains)
            assert np.allclose(err.formation_error, 0.0, atol=1e-12)
            assert np.allclose(err.velocity_error, 0.0, atol=1e-12)
            assert np.allclose(err.estimation_error, 0.0, atol=1e-12)

    def test_leader_blocks_zeroed(self):
        rng = np.random.default_rng(5)
        g = build_topology(TopologySpec(RANDOM_CONNECTED, 6, 0.5, seed=2))
        state = make_first_state(
            rng.standard_normal(12), rng.standard_normal(12), rng.standard_normal(12), 2, 1.0
        )
        gains = FirstOrderGains(k_p=2.0, k_u=1.0, k_n=1.0)
        for leader in (1, 4, 6):
            _, err = reset_first(state, g, leader, [0.1, 0.2], gains)
            s = slice((leader - 1) * 2, leader * 2)
            assert np.array_equal(err.formation_error[s], [0.0, 0.0])
            assert np.array_equal(err.velocity_error[s], [0.0, 0.0])
            assert np.array_equal(err.estimation_error[s], [0.0, 0.0])

    def test_path3_worked_instance(self):
        # 3-agent path, offsets (0,1,2) beyond formation, zero estimates,
        # unit command, leader 1: evaluated by hand from the reset formulas.
        g = path3()
        gains = FirstOrderGains(k_p=1.0, k_u=1.0, k_n=0.2)
        state = make_first_state([0.0, 1.0, 2.0], [0.0, 0.0, 0.0], np.zeros(3), 1, 1.0)
        new_state, err = reset_first(state, g, 1, [1.0], gains)
        assert np.allclose(err.coupling, [1.0, 0.0, -1.0])
        assert np.allclose(err.formation_error, [0.0, 1.0, 2.0])
        assert np.allclose(err.estimation_error, [0.0, -1.0, -1.0])
        assert np.allclose(err.velocity_error, [0.0, -1.0, -2.0])
        assert np.array_equal(new_state.positions, state.positions)
        assert np.allclose(new_state.estimates.estimates, [1.0, 0.0, 0.0])

    def test_position_continuity(self):
        rng = np.random.default_rng(6)
        g = build_topology(TopologySpec(RING, 5))
        state = make_first_state(
            rng.standard_normal(5), rng.standard_normal(5), rng.standard_normal(5), 1, 1.0
        )
        gains = FirstOrderGains(k_p=1.0, k_u=1.0, k_n=1.0)
        new_state, _ = reset_first(state, g, 3, [0.0], gains)
        assert np.array_equal(new_state.positions, state.positions)


class TestMetricFirst:
    def test_zero_error(self):
        err = ErrorStateFirstOrder(*(np.zeros(3),) * 4)
        assert metric_first(err, FirstOrderGains(1.0, 1.0, 0.2)) == 0.0

    def test_path3_worked_value(self):
        err = ErrorStateFirstOrder(
            formation_error=np.array([0.0, 1.0, 2.0]),
            velocity_error=np.array([0.0, -1.0, -2.0]),
            estimation_error=np.array([0.0, -1.0, -1.0]),
            coupling=np.array([1.0, 0.0, -1.0]),
        )
        gains = FirstOrderGains(k_p=1.0, k_u=1.0, k_n=0.2)
        assert metric_first(err, gains) == pytest.approx(52.0, abs=1e-12)

    def test_matches_quadratic_form(self):
        rng = np.random.default_rng(7)
        gains = FirstOrderGains(k_p=2.0, k_u=1.0, k_n=0.37)
        p_mat = metric_matrix_first(4, 2, gains)
        for _ in range(20):
            e = rng.standard_normal(24)
            err = ErrorStateFirstOrder(e[:8], e[8:16], e[16:], np.zeros(8))
            quad = e @ p_mat @ e
            assert metric_first(err, gains) == pytest.approx(quad, abs=1e-12 * max(1, quad))

    def test_large_weight_limit_keeps_estimate_part(self):
        e = np.array([1.0, 2.0])
        err = ErrorStateFirstOrder(e, e, e, e)
        val = metric_first(err, FirstOrderGains(1.0, 1.0, 1e12))
        assert val == pytest.approx(float(e @ e), rel=1e-9)


class TestRateMu:
    def test_worked_value(self):
        gains = FirstOrderGains(k_n=0.2, **PAPER_GAINS)
        assert gains.k1 == pytest.approx(5.5)
        assert gains.k2 == pytest.approx(26.5)
        mu = rate_mu(1.0, gains)
        assert mu == pytest.approx((5.5 - np.sqrt(27.5)) / 0.4, abs=1e-12)
        assert mu == pytest.approx(0.63990, abs=1e-4)

    def test_feasibility_boundary(self):
        gains = FirstOrderGains(k_n=0.2, **PAPER_GAINS)
        assert gains.feasible_for(1.0)  # 1.0 * 3.75 > 1
        assert not gains.feasible_for(0.1)  # 0.01 * 3.75 < 1
        with pytest.raises(InfeasibleGainsError):
            rate_mu(0.1, gains)

    def test_monotone_in_connectivity(self):
        gains = FirstOrderGains(k_n=0.6, **PAPER_GAINS)
        lams = np.linspace(0.4, 3.0, 40)
        mus = [rate_mu(l, gains) for l in lams]
        assert all(b > a for a, b in zip(mus, mus[1:]))
        assert all(m > 0 for m in mus)

    def test_shared_weight_feasible_at_minimum(self):
        k_n = shared_metric_weight(0.25, **PAPER_GAINS)
        gains = FirstOrderGains(k_n=k_n, **PAPER_GAINS)
        assert gains.feasible_for(0.25)
        # Margin is tight: 5% below the chosen weight must be infeasible.
        assert not FirstOrderGains(k_n=k_n / 1.051, **PAPER_GAINS).feasible_for(0.25)


class TestCertificateFirst:
    def test_line4_leader2_spectrum_count_and_rate(self):
        gs = ground(build_topology(TopologySpec(LINE, 4)), 2)
        gains = FirstOrderGains(k_p=5.0, k_u=2.5, k_n=0.3)
        cert = certificate_first(gs, gains, dim=1)
        assert cert.numeric_eigenvalues.shape == (9,)
        assert cert.max_mismatch <= 1e-8
        assert np.all(cert.closed_form_eigenvalues < 0.0)
        assert cert.closed_form_eigenvalues[-1] == pytest.approx(
            -rate_mu(gs.algebraic_connectivity, gains), abs=1e-8
        )

    def test_dimension_repeats_modes(self):
        gs = ground(build_topology(TopologySpec(RING, 5)), 1)
        gains = FirstOrderGains(k_p=5.0, k_u=2.5, k_n=0.5)
        cert = certificate_first(gs, gains, dim=3)
        assert cert.numeric_eigenvalues.shape == (36,)

    def test_mode_ordering(self):
        gains = FirstOrderGains(k_p=5.0, k_u=2.5, k_n=0.3)
        for lam in (0.5, 1.0, 2.7):
            lo, mid, hi = sorted(drift_mode_rates(lam, gains))
            assert hi > mid  # the +root branch dominates the -root branch

    def test_random_instances_match(self):
        rng = np.random.default_rng(8)
        for _ in range(5):
            n = int(rng.integers(4, 9))
            g = build_topology(TopologySpec(RANDOM_CONNECTED, n, 0.5, seed=int(rng.integers(1000))))
            leader = int(rng.integers(1, n + 1))
            gs = ground(g, leader)
            k_n = shared_metric_weight(gs.algebraic_connectivity, **PAPER_GAINS)
            cert = certificate_first(gs, FirstOrderGains(k_n=k_n, **PAPER_GAINS))
            assert cert.max_mismatch <= 1e-8

    def test_infeasible_gains_rejected(self):
        gs = ground(build_topology(TopologySpec(LINE, 10)), 1)
        with pytest.raises(InfeasibleGainsError):
            certificate_first(gs, FirstOrderGains(k_n=0.2, **PAPER_GAINS))


class TestMonotoneDecay:
    def test_metric_decays_within_bound(self):
        # Fixed leader, constant command, reset-generated initial error:
        # the squared metric must be non-increasing and under the
        # exponential envelope at every recorded step.
        rng = np.random.default_rng(9)
        g = build_topology(TopologySpec(RANDOM_CONNECTED, 6, 0.5, seed=11))
        leader = 4
        gs = ground(g, leader)
        k_n = shared_metric_weight(gs.algebraic_connectivity, **PAPER_GAINS)
        gains = FirstOrderGains(k_n=k_n, **PAPER_GAINS)
        mu = rate_mu(gs.algebraic_connectivity, gains)
        u_r = rng.uniform(-1, 1, 2)
        state = make_first_state(
            rng.uniform(-2.5, 2.5, 12), np.zeros(12), rng.standard_normal(12), 2, gains.k_u
        )
        state, err0 = reset_first(state, g, leader, u_r, gains)
        m0 = metric_first(err0, gains)

        values = [m0]

        def rec(t, p, u):
            st = make_first_state(p, u, state.formation, 2, gains.k_u)
            err = tracking_errors_first(st, g, gs, u_r, gains)
            values.append(metric_first(err, gains))

        simulate_first(state, gs, gains, dt=1e-3, n_steps=2000, record=rec)
        for k, v in enumerate(values):
            assert v <= values[max(k - 1, 0)] + 1e-9
            assert v <= m0 * np.exp(-2 * mu * k * 1e-3) * (1 + 1e-6)


class TestCoupling:
    def test_uses_full_laplacian_not_grounded(self):
        # The coupling of the leader itself is generally nonzero: it comes
        # from the ungrounded Laplacian.
        g = path3()
        gamma = formation_coupling(np.array([0.0, 1.0, 2.0]), np.zeros(3), g, 1.0, 1)
        assert np.allclose(gamma, [1.0, 0.0, -1.0])
        assert gamma[0] != 0.0

    def test_sums_to_zero(self):
        rng = np.random.default_rng(10)
        g = build_topology(TopologySpec(RANDOM_CONNECTED, 8, 0.4, seed=3))
        gamma = formation_coupling(rng.standard_normal(16), rng.standard_normal(16), g, 2.0, 2)
        assert np.allclose(gamma.reshape(8, 2).sum(axis=0), 0.0, atol=1e-12)


class TestReducedDrift:
    def test_matches_lapack_spectrum(self):
        gs = ground(build_topology(TopologySpec(RING, 6)), 2)
        gains = FirstOrderGains(k_p=5.0, k_u=2.5, k_n=0.4)
        drift = reduced_drift_first(gs, gains, dim=1)
        numeric = np.sort(np.linalg.eigvals(drift).real)
        expected = np.sort(
            np.concatenate(
                [[-gains.k_p * l, -gains.k_p * l, -gains.k_u * l] for l in gs.eigenvalues]
            )
        )
        assert np.allclose(numeric, expected, atol=1e-8)
