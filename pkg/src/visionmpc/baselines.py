"""Comparison policies: dynamic-window planning and a direct reactive law.

The dynamic-window planner samples (v, omega) pairs reachable within one
control period, rolls each out at constant control, discards rollouts that
come within the inflation radius of a sensed obstacle point, and scores
the survivors on goal heading, clearance, and speed. The winning rollout
becomes the desired trajectory for the tracking controller.

The direct policy maps the scan straight to actuation: steering moves in
exact multiples of a small increment toward the bearing of the most open
direction, and velocity follows a proportional law toward its target.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .memory import Observation
from .scene import DesiredTrajectory
from .vehicle import ControlInput, VehicleState


@dataclass(frozen=True)
class DwaConfig:
    """Dynamic-window sampling, scoring weights, and shared actuator bounds."""

    v_samples: int = 11
    omega_samples: int = 21
    sim_horizon_s: float = 1.5
    weight_heading: float = 0.8
    weight_clearance: float = 0.2
    weight_velocity: float = 0.3
    dt: float = 0.05
    wheelbase_L: float = 0.36
    v_min: float = 0.0
    v_max: float = 1.0
    omega_min: float = -0.35
    omega_max: float = 0.35
    dv_max: float = 2.0
    domega_max: float = 4.0
    vehicle_radius: float = 0.08
    clearance_cap: float = 1.0

    def __post_init__(self):
        if self.v_samples < 2 or self.omega_samples < 2:
            raise ValueError("sample counts must be at least 2")
        weights = (self.weight_heading, self.weight_clearance, self.weight_velocity)
        if any(w < 0.0 for w in weights) or all(w == 0.0 for w in weights):
            raise ValueError("weights must be non-negative and not all zero")
        if self.sim_horizon_s <= 0.0 or self.dt <= 0.0:
            raise ValueError("horizon and dt must be positive")


def _constant_rollouts(vehicle: VehicleState, vs, omegas, cfg: DwaConfig, n_steps: int):
    """Constant-control bicycle rollouts.

    Returns positions (C, H, 2) and pose headings (C, H) after each step.
    """
    v = vs[:, None]
    om = omegas[:, None]
    step_idx = np.arange(n_steps)[None, :]
    dpsi = cfg.dt * v * np.sin(om) / cfg.wheelbase_L
    vel_dirs = vehicle.rho + om + dpsi * step_idx
    dx = np.cos(vel_dirs) * v * cfg.dt
    dy = np.sin(vel_dirs) * v * cfg.dt
    xs = vehicle.x + np.cumsum(dx, axis=1)
    ys = vehicle.y + np.cumsum(dy, axis=1)
    pose_heads = vehicle.rho + dpsi * (step_idx + 1)
    return np.stack([xs, ys], axis=2), pose_heads


def obstacle_points_from_observation(obs: Observation, vehicle: VehicleState, max_range: float) -> np.ndarray:
    """Sensed ray endpoints as world-frame point obstacles.

    Rays at full range carry no hit and are dropped. Bearings are assumed
    to sweep counter-clockwise from the heading at uniform spacing.
    """
    rays = np.asarray(obs.rays)
    n = rays.shape[0]
    bearings = vehicle.rho + np.arange(n) * (2.0 * math.pi / n)
    hit = rays < max_range * (1.0 - 1e-9)
    if not np.any(hit):
        return np.zeros((0, 2))
    d = rays[hit]
    b = bearings[hit]
    return np.stack([vehicle.x + d * np.cos(b), vehicle.y + d * np.sin(b)], axis=1)


def dwa_plan(
    vehicle: VehicleState,
    obstacle_points: np.ndarray,
    ref_slice: Sequence[VehicleState],
    cfg: DwaConfig,
    current_u: ControlInput,
    tau_o: Optional[int] = None,
) -> DesiredTrajectory:
    """Best admissible constant-control rollout as a desired trajectory.

    Falls back to the hold-pose stop trajectory when every sampled rollout
    collides. The returned trajectory has tau_o poses (default: the number
    of rollout steps) spaced cfg.dt apart.
    """
    n_steps = max(1, int(round(cfg.sim_horizon_s / cfg.dt)))
    horizon = tau_o if tau_o is not None else n_steps
    v_lo = max(cfg.v_min, current_u.v_cmd - cfg.dv_max * cfg.dt)
    v_hi = min(cfg.v_max, current_u.v_cmd + cfg.dv_max * cfg.dt)
    om_lo = max(cfg.omega_min, current_u.omega_cmd - cfg.domega_max * cfg.dt)
    om_hi = min(cfg.omega_max, current_u.omega_cmd + cfg.domega_max * cfg.dt)
    if v_lo > v_hi or om_lo > om_hi:
        return _stop_trajectory(vehicle, horizon, cfg.dt)
    v_grid, om_grid = np.meshgrid(
        np.linspace(v_lo, v_hi, cfg.v_samples), np.linspace(om_lo, om_hi, cfg.omega_samples)
    )
    vs = v_grid.ravel()
    omegas = om_grid.ravel()
    n_roll = max(n_steps, horizon)
    positions, pose_heads = _constant_rollouts(vehicle, vs, omegas, cfg, n_roll)
    pts = np.asarray(obstacle_points, dtype=float).reshape(-1, 2)
    if pts.shape[0] > 0:
        reach = v_hi * cfg.dt * n_roll + cfg.vehicle_radius + cfg.clearance_cap
        near = np.hypot(pts[:, 0] - vehicle.x, pts[:, 1] - vehicle.y) <= reach
        pts = pts[near]
    if pts.shape[0] > 0:
        flat = positions.reshape(-1, 2)
        d2 = (
            np.sum(flat ** 2, axis=1)[:, None]
            - 2.0 * (flat @ pts.T)
            + np.sum(pts ** 2, axis=1)[None, :]
        )
        min_clear = np.sqrt(np.maximum(d2.reshape(len(vs), -1).min(axis=1), 0.0))
    else:
        min_clear = np.full(vs.shape[0], cfg.clearance_cap + cfg.vehicle_radius)
    admissible = min_clear > cfg.vehicle_radius
    if not np.any(admissible):
        return _stop_trajectory(vehicle, horizon, cfg.dt)

    goal = ref_slice[-1]
    end = positions[:, n_steps - 1, :]
    to_goal = np.arctan2(goal.y - end[:, 1], goal.x - end[:, 0])
    end_heads = pose_heads[:, n_steps - 1]
    misalign = np.abs(np.arctan2(np.sin(to_goal - end_heads), np.cos(to_goal - end_heads)))
    heading_score = 1.0 - misalign / math.pi
    clearance_score = np.minimum(min_clear - cfg.vehicle_radius, cfg.clearance_cap) / cfg.clearance_cap
    velocity_score = vs / cfg.v_max if cfg.v_max > 0 else np.zeros_like(vs)
    score = (
        cfg.weight_heading * heading_score
        + cfg.weight_clearance * clearance_score
        + cfg.weight_velocity * velocity_score
    )
    score = np.where(admissible, score, -np.inf)
    best = int(np.argmax(score))
    states = [
        VehicleState(float(positions[best, k, 0]), float(positions[best, k, 1]), float(pose_heads[best, k]))
        for k in range(horizon)
    ]
    return DesiredTrajectory(tuple(states), cfg.dt)


def _stop_trajectory(vehicle: VehicleState, horizon: int, dt: float) -> DesiredTrajectory:
    return DesiredTrajectory(tuple(vehicle for _ in range(horizon)), dt)


@dataclass(frozen=True)
class DirectPolicyConfig:
    """Execution law of the direct policy: 0.01 degree steering steps and a
    proportional velocity law with gain 1.6."""

    steer_increment_deg: float = 0.01
    k_v: float = 1.6
    v_target: float = 1.0
    dt: float = 0.05
    v_min: float = 0.0
    v_max: float = 1.0
    omega_min: float = -0.35
    omega_max: float = 0.35
    dv_max: float = 2.0
    domega_max: float = 4.0
    brake_distance_m: float = 0.45
    open_tolerance: float = 0.05

    def __post_init__(self):
        if self.steer_increment_deg <= 0.0:
            raise ValueError("steer_increment_deg must be positive")


def _open_direction_signal(obs: Observation, cfg: DirectPolicyConfig) -> tuple[float, float]:
    """(steering signal rad, min forward distance) from the scan.

    The signal is the mean bearing of the near-maximal rays in the forward
    half-plane; forward distance is the minimum over a narrow front cone.
    """
    rays = np.asarray(obs.rays)
    n = rays.shape[0]
    bearings = np.arange(n) * (2.0 * math.pi / n)
    bearings = np.where(bearings > math.pi, bearings - 2.0 * math.pi, bearings)
    forward = np.abs(bearings) <= math.pi / 2.0
    fb = bearings[forward]
    fd = rays[forward]
    d_max = float(fd.max())
    open_mask = fd >= d_max - cfg.open_tolerance * d_max
    signal = float(np.mean(fb[open_mask]))
    front = np.abs(bearings) <= math.radians(30.0)
    front_min = float(rays[front].min()) if np.any(front) else d_max
    return signal, front_min


def direct_policy_step(
    obs: Observation,
    vehicle: VehicleState,
    ref_slice: Sequence[VehicleState],
    cfg: DirectPolicyConfig,
    prev_u: ControlInput,
) -> ControlInput:
    """One reactive control update.

    Steering changes by an exact integer multiple of the configured
    increment toward the open-direction signal, clipped to the shared
    actuator and rate bounds. Velocity follows
    v' = v + k_v (v_target - v) dt, braking to zero when the forward cone
    is blocked.
    """
    signal, front_min = _open_direction_signal(obs, cfg)
    incr = math.radians(cfg.steer_increment_deg)
    lo = max(cfg.omega_min, prev_u.omega_cmd - cfg.domega_max * cfg.dt) - prev_u.omega_cmd
    hi = min(cfg.omega_max, prev_u.omega_cmd + cfg.domega_max * cfg.dt) - prev_u.omega_cmd
    # integer step count toward the signal, clamped to the admissible
    # multiples inside [lo, hi]
    steps = int(round(abs(signal) / incr)) * (1 if signal >= 0.0 else -1)
    steps = min(max(steps, math.ceil(lo / incr - 1e-9)), math.floor(hi / incr + 1e-9))
    omega = prev_u.omega_cmd + steps * incr

    v_target = 0.0 if front_min < cfg.brake_distance_m else cfg.v_target
    v = prev_u.v_cmd + cfg.k_v * (v_target - prev_u.v_cmd) * cfg.dt
    v = min(max(v, prev_u.v_cmd - cfg.dv_max * cfg.dt), prev_u.v_cmd + cfg.dv_max * cfg.dt)
    v = min(max(v, cfg.v_min), cfg.v_max)
    return ControlInput(v, omega)
