import math

import numpy as np
import pytest

from cavity_bayes import rng
from cavity_bayes.calibration import load_calibration
from cavity_bayes.forward import (
    BoundaryFlux,
    FieldEstimate,
    ForwardCache,
    ObservationGrid,
    SolverConfig,
    StartInsideCavity,
    bound_cf,
    estimate_u,
    finitize,
    forward,
    reflect_step,
    simulate_path,
    simulate_path_batches,
    simulate_path_trace,
)
from cavity_bayes.geometry import OuterDomain, conductor
from cavity_bayes.radial import radial_oracle

UNIT = OuterDomain()
ANNULUS = conductor(cavities=[((0.0, 0.0), 0.5)])
PSI_ONE = BoundaryFlux()


class TestReflectStep:
    def test_interior_move(self):
        pos, d_local = reflect_step((0.0, 0.0), (0.3, 0.0), UNIT)
        assert pos == (0.3, 0.0) and d_local == 0.0

    def test_radial_projection(self):
        pos, d_local = reflect_step((0.9, 0.0), (0.3, 0.0), UNIT)
        assert pos == pytest.approx((1.0, 0.0))
        assert d_local == pytest.approx(0.2)

    def test_null_move_on_boundary(self):
        pos, d_local = reflect_step((1.0, 0.0), (0.0, 0.0), UNIT)
        assert pos == (1.0, 0.0) and d_local == 0.0

    def test_projection_lands_on_boundary(self):
        gen = np.random.Generator(np.random.Philox(key=2))
        for _ in range(200):
            x = gen.uniform(-0.7, 0.7, 2)
            inc = gen.normal(0, 0.5, 2)
            pos, d_local = reflect_step(tuple(x), tuple(inc), UNIT)
            assert math.hypot(*pos) <= 1.0 + 1e-12
            if d_local > 0:
                assert math.hypot(*pos) == pytest.approx(1.0)


class TestSimulatePath:
    def test_zero_flux_zero_functional(self):
        cfg = SolverConfig(step=5e-3, n_paths=1, base_seed=1)
        for idx in range(5):
            functional, _ = simulate_path((1.0, 0.0), 1.0, ANNULUS, BoundaryFlux(amplitude=0.0), cfg, idx)
            assert functional == 0.0

    def test_no_cavities_tau_is_inf(self):
        cfg = SolverConfig(step=5e-3, n_paths=1, base_seed=1)
        dom = conductor()
        for idx in range(5):
            _, tau = simulate_path((1.0, 0.0), 1.0, dom, PSI_ONE, cfg, idx)
            assert tau == math.inf

    def test_start_inside_cavity_rejected(self):
        cfg = SolverConfig(step=5e-3, n_paths=1, base_seed=1)
        with pytest.raises(StartInsideCavity):
            simulate_path((0.0, 0.0), 1.0, ANNULUS, PSI_ONE, cfg, 0)
        with pytest.raises(StartInsideCavity):
            simulate_path((3.0, 0.0), 1.0, ANNULUS, PSI_ONE, cfg, 0)

    def test_trace_matches_kernel(self):
        cfg = SolverConfig(step=4e-3, n_paths=1, base_seed=12)
        for idx in range(8):
            states, acc = simulate_path_trace((1.0, 0.0), 0.5, ANNULUS, PSI_ONE, cfg, idx)
            functional, tau = simulate_path((1.0, 0.0), 0.5, ANNULUS, PSI_ONE, cfg, idx)
            if not states[-1].stopped:
                assert acc == pytest.approx(functional, abs=1e-12)
            assert (tau < math.inf) == states[-1].stopped

    def test_trace_invariants(self):
        cfg = SolverConfig(step=4e-3, n_paths=1, base_seed=4)
        for idx in range(10):
            states, _ = simulate_path_trace((1.0, 0.0), 0.5, ANNULUS, PSI_ONE, cfg, idx)
            local = 0.0
            for prev, state in zip(states, states[1:]):
                assert math.hypot(*state.position) <= 1.0 + 1e-12
                assert state.local_time >= local
                if math.hypot(*state.position) < 1.0 - 1e-12:
                    assert state.local_time == prev.local_time  # interior step, no local time
                local = state.local_time

    def test_bridge_mode_runs(self):
        cfg = SolverConfig(step=4e-3, n_paths=64, base_seed=4, crossing_check="bridge")
        stopped, unstopped, tau, _ = simulate_path_batches((1.0, 0.0), 1.0, ANNULUS, PSI_ONE, cfg)
        assert np.isfinite(tau).any()
        assert np.all(stopped <= unstopped)


class TestEstimateU:
    def test_zero_time(self):
        cfg = SolverConfig(step=5e-3, n_paths=32, base_seed=1)
        est = estimate_u(0.0, (1.0, 0.0), ANNULUS, PSI_ONE, cfg)
        assert est == FieldEstimate(0.0, 0.0, 32)

    def test_zero_flux(self):
        cfg = SolverConfig(step=5e-3, n_paths=32, base_seed=1)
        est = estimate_u(1.0, (1.0, 0.0), ANNULUS, BoundaryFlux(amplitude=0.0), cfg)
        assert est.mean == 0.0

    def test_deterministic_in_seed(self):
        cfg = SolverConfig(step=2e-3, n_paths=500, base_seed=21)
        a = estimate_u(1.0, (1.0, 0.0), ANNULUS, PSI_ONE, cfg)
        b = estimate_u(1.0, (1.0, 0.0), ANNULUS, PSI_ONE, cfg)
        assert (a.mean, a.std_error) == (b.mean, b.std_error)
        c = estimate_u(1.0, (1.0, 0.0), ANNULUS, PSI_ONE, SolverConfig(step=2e-3, n_paths=500, base_seed=22))
        assert c.mean != a.mean

    def test_agrees_with_radial_reference(self):
        cal = load_calibration()
        h = 2e-3
        cfg = SolverConfig(step=h, n_paths=20000, base_seed=31)
        est = estimate_u(1.0, (1.0, 0.0), ANNULUS, PSI_ONE, cfg)
        budget = 3 * est.std_error + cal["c_bias"] * math.sqrt(h)
        assert abs(est.mean - cal["annulus_golden_u"]) <= budget

    def test_interior_point_agrees_with_radial_reference(self):
        cal = load_calibration()
        h = 2e-3
        cfg = SolverConfig(step=h, n_paths=20000, base_seed=77)
        est = estimate_u(0.5, (0.0, 0.75), ANNULUS, PSI_ONE, cfg)
        ref = radial_oracle(0.5, 0.75, 1.0, 0.5, 1.0, 512, 512)
        assert abs(est.mean - ref) <= 3 * est.std_error + cal["c_bias"] * math.sqrt(h)


class TestFinitize:
    def test_constant_field_midpoint_value(self):
        grid = ObservationGrid(horizon=1.0, m_t=2, m_a=2, arc=(0.0, math.pi / 2))
        vec = finitize(lambda t, x: FieldEstimate(1.0, 0.0, 1), grid, UNIT)
        np.testing.assert_allclose(vec.values, math.pi / 8.0, rtol=1e-15)
        assert vec.m == 4

    def test_zero_field(self):
        grid = ObservationGrid()
        vec = finitize(lambda t, x: FieldEstimate(0.0, 0.0, 1), grid, UNIT)
        assert np.all(vec.values == 0.0)

    def test_component_ordering_time_major(self):
        grid = ObservationGrid(horizon=1.0, m_t=2, m_a=2, arc=(0.0, math.pi / 2))
        vec = finitize(lambda t, x: FieldEstimate(t, 0.0, 1), grid, UNIT)
        # First two components share the first time cell midpoint.
        assert vec.values[0] == vec.values[1] < vec.values[2] == vec.values[3]

    def test_norm_bound_random_smooth_fields(self):
        grid = ObservationGrid()
        arc_len = grid.arc_measure(UNIT)
        bound_const = math.sqrt(grid.m * arc_len)
        gen = np.random.Generator(np.random.Philox(key=8))
        for _ in range(20):
            amp = gen.normal(0, 1, 4)
            w_t = gen.uniform(0.5, 4.0, 2)
            w_a = gen.uniform(0.5, 4.0, 2)
            phase = gen.uniform(0, 2 * math.pi, 2)

            def v(t, theta):
                return (
                    amp[0]
                    + amp[1] * np.cos(w_t[0] * t + phase[0]) * np.cos(w_a[0] * theta)
                    + amp[2] * np.sin(w_t[1] * t) * np.cos(w_a[1] * theta + phase[1])
                    + amp[3] * np.sin(theta) * t
                )

            def sampler(t, point):
                theta = math.atan2(point[1], point[0])
                return FieldEstimate(float(v(t, theta)), 0.0, 1)

            vec = finitize(sampler, grid, UNIT, refine=32)
            ts = (np.arange(512) + 0.5) / 512 * grid.horizon
            thetas = grid.arc[0] + (np.arange(512) + 0.5) / 512 * (grid.arc[1] - grid.arc[0])
            tt, hh = np.meshgrid(ts, thetas, indexing="ij")
            vals = v(tt, hh)
            cell = (grid.horizon / 512) * (arc_len / 512)
            l2 = math.sqrt(float(np.sum(vals**2) * cell))
            assert float(np.linalg.norm(vec.values)) <= bound_const * l2 + 1e-6


class TestForward:
    def test_zero_flux_zero_vector(self):
        cfg = SolverConfig(step=5e-3, n_paths=16, base_seed=3)
        vec = forward(ANNULUS, ObservationGrid(), BoundaryFlux(amplitude=0.0), cfg)
        assert np.all(vec.values == 0.0)

    def test_bit_identical_repeat(self):
        cfg = SolverConfig(step=4e-3, n_paths=128, base_seed=13)
        grid = ObservationGrid()
        a = forward(ANNULUS, grid, PSI_ONE, cfg)
        b = forward(ANNULUS, grid, PSI_ONE, cfg)
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(a.std_errors, b.std_errors)

    def test_step_exceeding_horizon_rejected(self):
        cfg = SolverConfig(step=2.0, n_paths=16, base_seed=3)
        with pytest.raises(ValueError):
            forward(ANNULUS, ObservationGrid(horizon=1.0), PSI_ONE, cfg)

    def test_cache_round_trip(self, tmp_path):
        cfg = SolverConfig(step=4e-3, n_paths=64, base_seed=5)
        grid = ObservationGrid()
        cache = ForwardCache(tmp_path)
        a = forward(ANNULUS, grid, PSI_ONE, cfg, cache=cache)
        assert cache.misses == 1 and cache.hits == 0
        b = forward(ANNULUS, grid, PSI_ONE, cfg, cache=cache)
        assert cache.hits == 1
        np.testing.assert_array_equal(a.values, b.values)
        fresh = ForwardCache(tmp_path)  # reload from disk
        c = forward(ANNULUS, grid, PSI_ONE, cfg, cache=fresh)
        assert fresh.hits == 1 and fresh.misses == 0
        np.testing.assert_array_equal(a.values, c.values)

    def test_continuity_smoke(self):
        cfg = SolverConfig(step=4e-3, n_paths=512, base_seed=9)
        grid = ObservationGrid()
        base = forward(conductor(cavities=[((0.0, 0.0), 0.30)]), grid, PSI_ONE, cfg)
        near = forward(conductor(cavities=[((0.0, 0.0), 0.31)]), grid, PSI_ONE, cfg)
        far = forward(conductor(cavities=[((0.0, 0.0), 0.50)]), grid, PSI_ONE, cfg)
        d_near = np.linalg.norm(base.values - near.values)
        d_far = np.linalg.norm(base.values - far.values)
        assert d_near < 0.35 * d_far


class TestBoundCF:
    def test_zero_flux_zero_bound(self):
        cfg = SolverConfig(step=5e-3, n_paths=16, base_seed=3)
        cf = bound_cf(BoundaryFlux(amplitude=0.0), ObservationGrid(), UNIT, cfg)
        assert cf.value == 0.0

    def test_dominates_family_with_common_random_numbers(self, bench):
        table, cf = bench["table"], bench["cf"]
        norms = np.linalg.norm(table.f_values, axis=1)
        assert float(norms.max()) <= cf.value  # exact with shared streams
        assert cf.std_error > 0

    def test_componentwise_domination(self, bench):
        empty = conductor()
        vec = forward(empty, bench["grid"], bench["psi"], bench["cfg"], cache=bench["cache"], unstopped=True)
        for row in bench["table"].f_values:
            assert np.all(row <= vec.values + 1e-15)
