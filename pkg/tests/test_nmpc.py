import math

import numpy as np
import pytest

from visionmpc.nmpc import NmpcConfig, NmpcError, _Problem, control_step, solve, tracking_cost
from visionmpc.scene import GainSchedule, SceneDynamics, gain_schedule
from visionmpc.vehicle import ControlInput, VehicleState, rollout

LOOSE = NmpcConfig(
    tau_o=4,
    du_min=ControlInput(-100.0, -100.0),
    du_max=ControlInput(100.0, 100.0),
    e_min=-10.0,
    e_max=10.0,
)


def random_problem(rng, cfg, q=0.8):
    current = VehicleState(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-0.8, 0.8))
    u_seq = [
        ControlInput(rng.uniform(0.1, 0.9), rng.uniform(-0.3, 0.3)) for _ in range(cfg.tau_o)
    ]
    z_d = rollout(current, u_seq, p=cfg.model())
    g = gain_schedule(SceneDynamics(0.0, q))
    return current, z_d, g, u_seq


class TestTrackingCost:
    def test_perfect_tracking_zero_controls(self):
        z = [VehicleState(1.0, 2.0, 0.3)] * 3
        u = [ControlInput(0.0, 0.0)] * 3
        assert tracking_cost(z, u, z, GainSchedule(1.0, 0.5)) == 0.0

    def test_hand_evaluated_quadratic(self):
        z = [VehicleState(0.0, 0.0, 0.0)]
        z_d = [VehicleState(3.0, 4.0, 0.0)]
        u = [ControlInput(0.0, 0.0)]
        assert tracking_cost(z, u, z_d, GainSchedule(1.0, 1e-3)) == pytest.approx(25.0)

    def test_quadratic_homogeneity(self):
        g = GainSchedule(1.0, 1e-3)
        u = [ControlInput(0.0, 0.0)] * 2
        z = [VehicleState(0, 0, 0)] * 2
        z_d1 = [VehicleState(0.1, -0.2, 0.05), VehicleState(0.3, 0.1, -0.02)]
        z_d2 = [VehicleState(0.2, -0.4, 0.1), VehicleState(0.6, 0.2, -0.04)]
        assert tracking_cost(z, u, z_d2, g) == pytest.approx(4.0 * tracking_cost(z, u, z_d1, g))

    def test_heading_error_wraps_across_seam(self):
        g = GainSchedule(1.0, 1e-3)
        z = [VehicleState(0.0, 0.0, math.pi - 0.01)]
        z_d = [VehicleState(0.0, 0.0, -math.pi + 0.01)]
        cost = tracking_cost(z, [ControlInput(0, 0)], z_d, g)
        assert cost == pytest.approx(0.02 ** 2, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            tracking_cost([VehicleState(0, 0, 0)], [], [VehicleState(0, 0, 0)], GainSchedule(1, 1))


class TestObjectiveInternals:
    def test_value_matches_public_tracking_cost(self):
        rng = np.random.default_rng(0)
        cfg = LOOSE
        current, z_d, g, _ = random_problem(rng, cfg)
        problem = _Problem(current, tuple(z_d), None, g, cfg, None, penalty=0.0)
        for _ in range(10):
            u = rng.uniform(-0.5, 1.2, size=2 * cfg.tau_o)
            u_seq = [ControlInput(u[2 * k], u[2 * k + 1]) for k in range(cfg.tau_o)]
            z_seq = rollout(current, u_seq, p=cfg.model())
            assert problem.value(u) == pytest.approx(tracking_cost(z_seq, u_seq, z_d, g), rel=1e-12)

    def test_gradient_matches_central_differences(self):
        rng = np.random.default_rng(1)
        cfg = NmpcConfig(tau_o=6, du_min=ControlInput(-100, -100), du_max=ControlInput(100, 100),
                         e_min=-10, e_max=10)
        current, z_d, g, _ = random_problem(rng, cfg)
        problem = _Problem(current, tuple(z_d), [0.001, -0.002, 0.0005], g, cfg, None, penalty=0.0)
        worst = 0.0
        for _ in range(30):
            u = rng.uniform(-0.2, 1.0, size=2 * cfg.tau_o)
            _, grad = problem.value_and_grad(u)
            for i in range(u.size):
                h = 1e-6 * max(1.0, abs(u[i]))
                up, dn = u.copy(), u.copy()
                up[i] += h
                dn[i] -= h
                fd = (problem.value(up) - problem.value(dn)) / (2 * h)
                denom = max(abs(fd), abs(grad[i]), 1e-8)
                worst = max(worst, abs(fd - grad[i]) / denom)
        assert worst <= 1e-5

    def test_penalized_gradient_matches_central_differences(self):
        # hinge penalties are C1; random points almost surely avoid the kinks
        rng = np.random.default_rng(2)
        cfg = NmpcConfig(tau_o=4)
        current, z_d, g, _ = random_problem(rng, cfg)
        problem = _Problem(current, tuple(z_d), None, g, cfg, ControlInput(0.2, 0.0), penalty=100.0)
        for _ in range(10):
            u = rng.uniform(-0.5, 1.5, size=2 * cfg.tau_o)
            _, grad = problem.value_and_grad(u)
            for i in range(u.size):
                h = 1e-6 * max(1.0, abs(u[i]))
                up, dn = u.copy(), u.copy()
                up[i] += h
                dn[i] -= h
                fd = (problem.value(up) - problem.value(dn)) / (2 * h)
                assert abs(fd - grad[i]) / max(abs(fd), abs(grad[i]), 1e-6) <= 1e-4


class TestSolve:
    def test_inverse_crime_recovery(self):
        # a near-zero input weight makes the generating sequence the optimum
        cfg = NmpcConfig(tau_o=6, max_iters=300, du_min=ControlInput(-100, -100),
                         du_max=ControlInput(100, 100), e_min=-10, e_max=10)
        g = GainSchedule(1.0, 1e-6)
        for seed in range(10):
            rng = np.random.default_rng(seed)
            current, z_d, _, u_true = random_problem(rng, cfg)
            sol = solve(current, z_d, None, g, cfg)
            assert sol.cost <= 1e-4
            for got, want in zip(sol.u_opt, u_true):
                assert got.v_cmd == pytest.approx(want.v_cmd, abs=1e-2)
                assert got.omega_cmd == pytest.approx(want.omega_cmd, abs=1e-2)

    def test_brute_force_oracle_on_tiny_instances(self):
        cfg = LOOSE
        for seed in range(3):
            rng = np.random.default_rng(100 + seed)
            current, z_d, g, _ = random_problem(rng, cfg)
            sol = solve(current, z_d, None, g, cfg)
            oracle = brute_force_min(current, z_d, g, cfg)
            assert sol.cost <= 1.05 * oracle + 1e-12

    def test_warm_start_fixed_point(self):
        rng = np.random.default_rng(5)
        cfg = NmpcConfig(tau_o=5, max_iters=300)
        current, z_d, g, _ = random_problem(rng, cfg)
        first = solve(current, z_d, None, g, cfg)
        again = solve(current, z_d, None, g, cfg, warm_start=first)
        assert again.converged
        assert again.iterations <= 2
        for a, b in zip(first.u_opt, again.u_opt):
            assert a.v_cmd == pytest.approx(b.v_cmd, abs=1e-6)
            assert a.omega_cmd == pytest.approx(b.omega_cmd, abs=1e-6)

    def test_solve_deterministic(self):
        rng = np.random.default_rng(9)
        cfg = NmpcConfig(tau_o=8)
        current, z_d, g, _ = random_problem(rng, cfg)
        a = solve(current, z_d, [0.0, 0.01, 0.0], g, cfg, u_prev=ControlInput(0.1, 0.0))
        b = solve(current, z_d, [0.0, 0.01, 0.0], g, cfg, u_prev=ControlInput(0.1, 0.0))
        assert a.u_opt == b.u_opt
        assert a.cost == b.cost
        assert a.iterations == b.iterations

    def test_solution_respects_bounds_and_rates_exactly(self):
        # desired trajectory demands more speed than the actuator allows
        cfg = NmpcConfig(tau_o=6)
        g = GainSchedule(1.0, 1e-3)
        current = VehicleState(0, 0, 0)
        z_d = [VehicleState(0.5 * (i + 1), 0.0, 0.0) for i in range(6)]  # 10 m/s
        u_prev = ControlInput(0.0, 0.0)
        sol = solve(current, z_d, None, g, cfg, u_prev=u_prev)
        prev = u_prev
        for u in sol.u_opt:
            assert cfg.u_min.v_cmd <= u.v_cmd <= cfg.u_max.v_cmd
            assert cfg.u_min.omega_cmd <= u.omega_cmd <= cfg.u_max.omega_cmd
            assert u.v_cmd - prev.v_cmd <= cfg.du_max.v_cmd * cfg.dt + 1e-12
            assert u.v_cmd - prev.v_cmd >= cfg.du_min.v_cmd * cfg.dt - 1e-12
            assert u.omega_cmd - prev.omega_cmd <= cfg.du_max.omega_cmd * cfg.dt + 1e-12
            assert u.omega_cmd - prev.omega_cmd >= cfg.du_min.omega_cmd * cfg.dt - 1e-12
            prev = u
        # z_opt is the rollout of u_opt
        z_check = rollout(current, sol.u_opt, p=cfg.model())
        for a, b in zip(sol.z_opt, z_check):
            assert a == b

    def test_desired_length_mismatch(self):
        cfg = NmpcConfig(tau_o=4)
        with pytest.raises(ValueError):
            solve(VehicleState(0, 0, 0), [VehicleState(0, 0, 0)] * 3, None, GainSchedule(1, 0.5), cfg)

    def test_non_finite_residual_raises_nmpc_error(self):
        cfg = NmpcConfig(tau_o=3)
        z_d = [VehicleState(0.1 * i, 0, 0) for i in range(1, 4)]
        with pytest.raises(ValueError):
            solve(VehicleState(0, 0, 0), z_d, [float("inf"), 0, 0], GainSchedule(1, 0.5), cfg)

    def test_overflowing_objective_raises_with_context(self):
        cfg = NmpcConfig(tau_o=3)
        z_d = [VehicleState(0.1 * i, 0, 0) for i in range(1, 4)]
        with np.errstate(over="ignore"), pytest.raises(NmpcError):
            solve(VehicleState(0, 0, 0), z_d, [1e308, 0, 0], GainSchedule(1, 0.5), cfg)


class TestControlStep:
    def test_stationary_hold_emits_small_control(self):
        cfg = NmpcConfig(tau_o=8)
        g = GainSchedule(1.0, 1e-3)
        current = VehicleState(0.4, -0.2, 0.3)
        z_d = [current] * 8
        u, sol = control_step(current, z_d, None, g, cfg, u_prev=ControlInput(0.0, 0.0))
        assert math.hypot(u.v_cmd, u.omega_cmd) <= 1e-2

    def test_speed_converges_on_straight_line(self):
        cfg = NmpcConfig(tau_o=8)
        g = GainSchedule(1.0, 1e-3)
        v_star = 0.25
        state = VehicleState(0.0, 0.0, 0.0)
        warm = None
        u_prev = ControlInput(0.0, 0.0)
        u = None
        for _ in range(3):
            z_d = [VehicleState(state.x + v_star * cfg.dt * (i + 1), 0.0, 0.0) for i in range(8)]
            u, warm = control_step(state, z_d, None, g, cfg, warm_start=warm, u_prev=u_prev)
            state = rollout(state, [u], p=cfg.model())[0]
            u_prev = u
        assert u.v_cmd == pytest.approx(v_star, rel=0.05)

    def test_solver_failure_surfaces_to_caller(self):
        cfg = NmpcConfig(tau_o=4)
        z_d = [VehicleState(0.05 * i, 0, 0) for i in range(1, 5)]
        with np.errstate(over="ignore"), pytest.raises(NmpcError):
            control_step(VehicleState(0, 0, 0), z_d, [1e308, 0, 0], GainSchedule(1, 0.5), cfg)


def brute_force_min(current, z_d, g, cfg):
    """Exhaustive tracking-cost minimum over a 7-level control grid.

    Independent of the solver: enumerates all 7^(2*tau_o) sequences with a
    step-1 outer loop and a vectorized sweep over the remaining steps.
    """
    assert cfg.tau_o == 4
    v_levels = np.linspace(cfg.u_min.v_cmd, cfg.u_max.v_cmd, 7)
    w_levels = np.linspace(cfg.u_min.omega_cmd, cfg.u_max.omega_cmd, 7)
    vv, ww = np.meshgrid(v_levels, w_levels, indexing="ij")
    pair_v = vv.ravel()  # 49 combos per step
    pair_w = ww.ravel()
    n_pairs = pair_v.size
    idx = np.arange(n_pairs)
    i2, i3, i4 = np.meshgrid(idx, idx, idx, indexing="ij")
    v2, w2 = pair_v[i2.ravel()], pair_w[i2.ravel()]
    v3, w3 = pair_v[i3.ravel()], pair_w[i3.ravel()]
    v4, w4 = pair_v[i4.ravel()], pair_w[i4.ravel()]
    xd = np.array([z.x for z in z_d])
    yd = np.array([z.y for z in z_d])
    rd = np.array([z.rho for z in z_d])
    dt, L = cfg.dt, cfg.wheelbase_L
    q, r = g.q_diag, g.r_diag

    def err(x, y, rho, k):
        er = np.arctan2(np.sin(rho - rd[k]), np.cos(rho - rd[k]))
        return q * ((x - xd[k]) ** 2 + (y - yd[k]) ** 2 + er ** 2)

    best = np.inf
    for j in range(n_pairs):
        v1, w1 = pair_v[j], pair_w[j]
        x1 = current.x + np.cos(current.rho + w1) * v1 * dt
        y1 = current.y + np.sin(current.rho + w1) * v1 * dt
        r1 = current.rho + np.sin(w1) / L * v1 * dt
        cost = err(x1, y1, r1, 0) + r * (v1 ** 2 + w1 ** 2)
        x2 = x1 + np.cos(r1 + w2) * v2 * dt
        y2 = y1 + np.sin(r1 + w2) * v2 * dt
        r2 = r1 + np.sin(w2) / L * v2 * dt
        cost = cost + err(x2, y2, r2, 1) + r * (v2 ** 2 + w2 ** 2)
        x3 = x2 + np.cos(r2 + w3) * v3 * dt
        y3 = y2 + np.sin(r2 + w3) * v3 * dt
        r3 = r2 + np.sin(w3) / L * v3 * dt
        cost = cost + err(x3, y3, r3, 2) + r * (v3 ** 2 + w3 ** 2)
        x4 = x3 + np.cos(r3 + w4) * v4 * dt
        y4 = y3 + np.sin(r3 + w4) * v4 * dt
        r4 = r3 + np.sin(w4) / L * v4 * dt
        cost = cost + err(x4, y4, r4, 3) + r * (v4 ** 2 + w4 ** 2)
        m = float(cost.min())
        if m < best:
            best = m
    return best
