"""Constrained receding-horizon controller.

Single-shooting transcription: the decision variables are the control
sequence, the predicted states come from rolling the nominal model plus a
constant residual increment forward. Actuator and rate bounds and a soft
cross-track corridor enter as quadratic penalties; the penalized objective
is minimized with BFGS and a backtracking line search, and the final
controls are projected exactly onto the actuator and rate bounds.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .geometry import wrap_angle
from .scene import DesiredTrajectory, GainSchedule
from .vehicle import ControlInput, ModelParams, VehicleState, rollout

_WRAP_PI = math.pi
_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class NmpcConfig:
    """Horizon, bounds, and solver settings.

    Rate bounds are per second; both rate intervals must contain zero so a
    held control is always feasible. The cross-track corridor [e_min, e_max]
    is soft (penalty only); actuator and rate bounds are hard.
    """

    tau_o: int = 20
    dt: float = 0.05
    wheelbase_L: float = 0.36
    u_min: ControlInput = ControlInput(0.0, -0.35)
    u_max: ControlInput = ControlInput(1.0, 0.35)
    du_min: ControlInput = ControlInput(-2.0, -4.0)
    du_max: ControlInput = ControlInput(2.0, 4.0)
    e_min: float = -0.5
    e_max: float = 0.5
    max_iters: int = 80
    grad_tol: float = 1e-6
    f_tol: float = 1e-12
    penalty_weight: float = 1e3

    def __post_init__(self):
        if self.tau_o < 1:
            raise ValueError("tau_o must be at least 1")
        if self.dt <= 0.0 or self.wheelbase_L <= 0.0:
            raise ValueError("dt and wheelbase_L must be positive")
        if not (self.u_min.v_cmd < self.u_max.v_cmd and self.u_min.omega_cmd < self.u_max.omega_cmd):
            raise ValueError("u_min must be below u_max componentwise")
        if not (self.du_min.v_cmd < 0.0 < self.du_max.v_cmd):
            raise ValueError("velocity rate bounds must straddle zero")
        if not (self.du_min.omega_cmd < 0.0 < self.du_max.omega_cmd):
            raise ValueError("steering rate bounds must straddle zero")
        if self.e_min >= self.e_max:
            raise ValueError("e_min must be below e_max")
        if self.max_iters < 1 or self.grad_tol <= 0.0 or self.f_tol < 0.0:
            raise ValueError("max_iters, grad_tol, f_tol must be positive")
        if self.penalty_weight <= 0.0:
            raise ValueError("penalty_weight must be positive")

    def model(self) -> ModelParams:
        return ModelParams(wheelbase_L=self.wheelbase_L, dt=self.dt, sigma_f=0.0)


@dataclass(frozen=True)
class NmpcSolution:
    """Optimal control and state sequences with solver diagnostics."""

    u_opt: tuple[ControlInput, ...]
    z_opt: tuple[VehicleState, ...]
    cost: float
    iterations: int
    converged: bool


class NmpcError(RuntimeError):
    """Raised on a non-finite cost or gradient; carries the last feasible iterate."""

    def __init__(self, message: str, last_solution: Optional[NmpcSolution] = None):
        super().__init__(message)
        self.last_solution = last_solution


def _states_of(z_d) -> tuple[VehicleState, ...]:
    if isinstance(z_d, DesiredTrajectory):
        return z_d.states
    return tuple(z_d)


def tracking_cost(
    z_seq: Sequence[VehicleState],
    u_seq: Sequence[ControlInput],
    z_d: Union[DesiredTrajectory, Sequence[VehicleState]],
    g: GainSchedule,
) -> float:
    """Quadratic tracking cost with wrapped heading errors.

    J = sum_k q * ||z_d,k - z_k||^2 + r * ||u_k||^2, all sequences of equal
    length. Heading differences are wrapped to (-pi, pi].
    """
    zd = _states_of(z_d)
    if not (len(z_seq) == len(u_seq) == len(zd)):
        raise ValueError(
            f"sequence lengths differ: states {len(z_seq)}, controls {len(u_seq)}, desired {len(zd)}"
        )
    total = 0.0
    for z, u, d in zip(z_seq, u_seq, zd):
        ex = d.x - z.x
        ey = d.y - z.y
        er = wrap_angle(d.rho - z.rho)
        total += g.q_diag * (ex * ex + ey * ey + er * er)
        total += g.r_diag * (u.v_cmd * u.v_cmd + u.omega_cmd * u.omega_cmd)
    return total


def _wrap_fast(a: float) -> float:
    return _WRAP_PI - (_WRAP_PI - a) % _TWO_PI


class _Problem:
    """Penalized single-shooting objective with analytic gradient."""

    def __init__(self, current, zd_states, residual, g, cfg, u_prev, penalty):
        self.T = cfg.tau_o
        self.dt = cfg.dt
        self.L = cfg.wheelbase_L
        self.q = g.q_diag
        self.r = g.r_diag
        self.pw = penalty
        self.cfg = cfg
        self.x0 = current.x
        self.y0 = current.y
        self.r0 = current.rho
        if residual is None:
            self.res = (0.0, 0.0, 0.0)
        else:
            arr = np.asarray(residual, dtype=float).reshape(-1)
            if arr.shape[0] != 3:
                raise ValueError("residual must be a 3-vector")
            if not np.all(np.isfinite(arr)):
                raise ValueError("residual must be finite")
            self.res = (float(arr[0]), float(arr[1]), float(arr[2]))
        self.xd = [z.x for z in zd_states]
        self.yd = [z.y for z in zd_states]
        self.rd = [z.rho for z in zd_states]
        self.sin_rd = [math.sin(v) for v in self.rd]
        self.cos_rd = [math.cos(v) for v in self.rd]
        self.u_prev = u_prev

    def value(self, u: np.ndarray) -> float:
        return self._eval(u, need_grad=False)[0]

    def value_and_grad(self, u: np.ndarray):
        return self._eval(u, need_grad=True)

    def _eval(self, u: np.ndarray, need_grad: bool):
        T, dt, L = self.T, self.dt, self.L
        q, r, pw = self.q, self.r, self.pw
        rx, ry, rr = self.res
        cfg = self.cfg
        v_lo, v_hi = cfg.u_min.v_cmd, cfg.u_max.v_cmd
        w_lo, w_hi = cfg.u_min.omega_cmd, cfg.u_max.omega_cmd
        dv_lo, dv_hi = cfg.du_min.v_cmd, cfg.du_max.v_cmd
        dw_lo, dw_hi = cfg.du_min.omega_cmd, cfg.du_max.omega_cmd

        xs = [0.0] * (T + 1)
        ys = [0.0] * (T + 1)
        rs = [0.0] * (T + 1)
        heads = [0.0] * T
        xs[0], ys[0], rs[0] = self.x0, self.y0, self.r0

        cost = 0.0
        # forward rollout + stage costs
        for k in range(T):
            vk = u[2 * k]
            wk = u[2 * k + 1]
            head = rs[k] + wk
            heads[k] = head
            xs[k + 1] = xs[k] + math.cos(head) * vk * dt + rx
            ys[k + 1] = ys[k] + math.sin(head) * vk * dt + ry
            rs[k + 1] = _wrap_fast(_wrap_fast(rs[k] + math.sin(wk) / L * vk * dt) + rr)
            i = k + 1
            ex = xs[i] - self.xd[k]
            ey = ys[i] - self.yd[k]
            er = _wrap_fast(rs[i] - self.rd[k])
            cost += q * (ex * ex + ey * ey + er * er) + r * (vk * vk + wk * wk)
            # actuator bound penalties
            hv = max(0.0, vk - v_hi) - max(0.0, v_lo - vk)
            hw = max(0.0, wk - w_hi) - max(0.0, w_lo - wk)
            cost += pw * (hv * hv + hw * hw)
            # soft cross-track corridor in the desired-pose frame
            e_lat = -self.sin_rd[k] * ex + self.cos_rd[k] * ey
            he = max(0.0, e_lat - cfg.e_max) - max(0.0, cfg.e_min - e_lat)
            cost += pw * he * he
        # rate penalties
        prev = self.u_prev
        for k in range(T):
            if k == 0:
                if prev is None:
                    continue
                pv, pw_ = prev.v_cmd, prev.omega_cmd
            else:
                pv, pw_ = u[2 * k - 2], u[2 * k - 1]
            rv = (u[2 * k] - pv) / dt
            rw = (u[2 * k + 1] - pw_) / dt
            hv = max(0.0, rv - dv_hi) - max(0.0, dv_lo - rv)
            hw = max(0.0, rw - dw_hi) - max(0.0, dw_lo - rw)
            cost += pw * (hv * hv + hw * hw)

        if not need_grad:
            return cost, None

        grad = np.zeros(2 * T)
        lam_x = lam_y = lam_r = 0.0
        for k in range(T - 1, -1, -1):
            vk = u[2 * k]
            wk = u[2 * k + 1]
            head = heads[k]
            ch, sh = math.cos(head), math.sin(head)
            i = k + 1
            ex = xs[i] - self.xd[k]
            ey = ys[i] - self.yd[k]
            er = _wrap_fast(rs[i] - self.rd[k])
            e_lat = -self.sin_rd[k] * ex + self.cos_rd[k] * ey
            dhinge = 2.0 * (max(0.0, e_lat - cfg.e_max) - max(0.0, cfg.e_min - e_lat))
            gx = 2.0 * q * ex + pw * dhinge * (-self.sin_rd[k])
            gy = 2.0 * q * ey + pw * dhinge * self.cos_rd[k]
            gr = 2.0 * q * er
            lam_x += gx
            lam_y += gy
            lam_r += gr
            # control gradient through the dynamics
            gv = dt * (ch * lam_x + sh * lam_y) + dt * math.sin(wk) / L * lam_r
            gw = dt * vk * (-sh * lam_x + ch * lam_y) + dt * vk * math.cos(wk) / L * lam_r
            gv += 2.0 * r * vk
            gw += 2.0 * r * wk
            hv = max(0.0, vk - v_hi) - max(0.0, v_lo - vk)
            hw = max(0.0, wk - w_hi) - max(0.0, w_lo - wk)
            gv += pw * 2.0 * hv
            gw += pw * 2.0 * hw
            grad[2 * k] += gv
            grad[2 * k + 1] += gw
            # propagate the adjoint through z_k
            lam_r = lam_r + dt * vk * (-sh * lam_x + ch * lam_y)
            # lam_x, lam_y unchanged by A_k
        # rate penalty gradients
        prev = self.u_prev
        for k in range(T):
            if k == 0:
                if prev is None:
                    continue
                pv, pw_ = prev.v_cmd, prev.omega_cmd
                prev_idx = None
            else:
                pv, pw_ = u[2 * k - 2], u[2 * k - 1]
                prev_idx = 2 * k - 2
            rv = (u[2 * k] - pv) / dt
            rw = (u[2 * k + 1] - pw_) / dt
            dv = 2.0 * (max(0.0, rv - dv_hi) - max(0.0, dv_lo - rv)) * pw / dt
            dw = 2.0 * (max(0.0, rw - dw_hi) - max(0.0, dw_lo - rw)) * pw / dt
            grad[2 * k] += dv
            grad[2 * k + 1] += dw
            if prev_idx is not None:
                grad[prev_idx] -= dv
                grad[prev_idx + 1] -= dw
        return cost, grad


def _clip_chain(u: np.ndarray, cfg: NmpcConfig, u_prev: Optional[ControlInput]) -> np.ndarray:
    """Project a control sequence onto actuator bounds and the rate chain."""
    out = u.copy()
    dt = cfg.dt
    pv = None if u_prev is None else u_prev.v_cmd
    pw = None if u_prev is None else u_prev.omega_cmd
    for k in range(cfg.tau_o):
        v = out[2 * k]
        w = out[2 * k + 1]
        if pv is not None:
            v = pv + min(max(v - pv, cfg.du_min.v_cmd * dt), cfg.du_max.v_cmd * dt)
            w = pw + min(max(w - pw, cfg.du_min.omega_cmd * dt), cfg.du_max.omega_cmd * dt)
        v = min(max(v, cfg.u_min.v_cmd), cfg.u_max.v_cmd)
        w = min(max(w, cfg.u_min.omega_cmd), cfg.u_max.omega_cmd)
        out[2 * k] = v
        out[2 * k + 1] = w
        pv, pw = v, w
    return out


def _violation(u: np.ndarray, cfg: NmpcConfig, u_prev, problem: _Problem) -> float:
    """Worst constraint excess: actuator, rate, and cross-track corridor."""
    worst = 0.0
    dt = cfg.dt
    for k in range(cfg.tau_o):
        v, w = u[2 * k], u[2 * k + 1]
        worst = max(worst, v - cfg.u_max.v_cmd, cfg.u_min.v_cmd - v)
        worst = max(worst, w - cfg.u_max.omega_cmd, cfg.u_min.omega_cmd - w)
        if k == 0:
            if u_prev is None:
                continue
            pv, pw = u_prev.v_cmd, u_prev.omega_cmd
        else:
            pv, pw = u[2 * k - 2], u[2 * k - 1]
        rv = (v - pv) / dt
        rw = (w - pw) / dt
        worst = max(worst, rv - cfg.du_max.v_cmd, cfg.du_min.v_cmd - rv)
        worst = max(worst, rw - cfg.du_max.omega_cmd, cfg.du_min.omega_cmd - rw)
    # cross-track along the rollout
    x, y, r = problem.x0, problem.y0, problem.r0
    rx, ry, rr = problem.res
    for k in range(cfg.tau_o):
        v, w = u[2 * k], u[2 * k + 1]
        head = r + w
        x = x + math.cos(head) * v * dt + rx
        y = y + math.sin(head) * v * dt + ry
        r = _wrap_fast(_wrap_fast(r + math.sin(w) / problem.L * v * dt) + rr)
        e_lat = -problem.sin_rd[k] * (x - problem.xd[k]) + problem.cos_rd[k] * (y - problem.yd[k])
        worst = max(worst, e_lat - cfg.e_max, cfg.e_min - e_lat)
    return worst


def _bfgs(problem: _Problem, x0: np.ndarray, max_iters: int, grad_tol: float, f_tol: float = 0.0):
    """Minimize with BFGS + Armijo backtracking; accepted costs never increase.

    Stops on gradient tolerance, iteration budget, a stalled line search, or
    a relative cost decrease below f_tol (penalty walls make the last digits
    of the optimum expensive and worthless for control).
    """
    x = x0.copy()
    f, g = problem.value_and_grad(x)
    if not (math.isfinite(f) and np.all(np.isfinite(g))):
        err = NmpcError("non-finite cost or gradient at the initial iterate")
        err.iterate = None
        raise err
    n = x.size
    H = np.eye(n)
    iters = 0
    scaled = False
    gnorm = float(np.max(np.abs(g)))
    while gnorm >= grad_tol and iters < max_iters:
        p = -H @ g
        slope = float(g @ p)
        if slope >= 0.0:
            H = np.eye(n)
            scaled = False
            p = -g
            slope = float(g @ p)
        # before any curvature information a unit step along -g can be huge
        # against the penalty walls; damp the very first trial step
        alpha = 1.0 if scaled else min(1.0, 1.0 / max(1.0, float(np.linalg.norm(p))))
        accepted = False
        for _ in range(40):
            x_new = x + alpha * p
            f_new = problem.value(x_new)
            if math.isfinite(f_new) and f_new <= f + 1e-4 * alpha * slope:
                accepted = True
                break
            # quadratic interpolation on the failed trial, clamped so progress
            # stays geometric even when the model is degenerate
            denom = f_new - f - slope * alpha
            if math.isfinite(denom) and denom > 0.0:
                alpha_q = -slope * alpha * alpha / (2.0 * denom)
                alpha = min(max(alpha_q, 0.1 * alpha), 0.5 * alpha)
            else:
                alpha *= 0.5
        if not accepted:
            break
        f_new, g_new = problem.value_and_grad(x_new)
        if not (math.isfinite(f_new) and np.all(np.isfinite(g_new))):
            err = NmpcError("non-finite cost or gradient during optimization")
            err.iterate = x
            raise err
        s = x_new - x
        yv = g_new - g
        sy = float(s @ yv)
        if sy > 1e-12 * float(np.linalg.norm(s)) * float(np.linalg.norm(yv)) and sy > 0.0:
            if not scaled:
                # Shanno-Phua: size the initial inverse Hessian from the first
                # curvature pair so unit steps become well-scaled
                H = (sy / float(yv @ yv)) * np.eye(n)
                scaled = True
            rho_b = 1.0 / sy
            Hy = H @ yv
            sHy = np.outer(s, Hy)
            H = H - rho_b * (sHy + sHy.T) + rho_b * (rho_b * float(yv @ Hy) + 1.0) * np.outer(s, s)
        decrease = f - f_new
        x, f, g = x_new, f_new, g_new
        gnorm = float(np.max(np.abs(g)))
        iters += 1
        if decrease <= f_tol * max(1.0, abs(f)):
            break
    return x, f, g, iters, gnorm < grad_tol


def solve(
    current: VehicleState,
    z_d: Union[DesiredTrajectory, Sequence[VehicleState]],
    residual,
    g: GainSchedule,
    cfg: NmpcConfig,
    warm_start: Union[NmpcSolution, Sequence[ControlInput], None] = None,
    u_prev: Optional[ControlInput] = None,
) -> NmpcSolution:
    """Minimize the penalized tracking objective over the control sequence.

    warm_start (a previous solution or a raw control sequence) is used
    verbatim as the initial iterate. u_prev anchors the first rate
    constraint; without it the first control is rate-unconstrained. The
    returned controls satisfy actuator and rate bounds exactly; the
    returned cost never exceeds the cost of the (projected) initial iterate.
    """
    zd_states = _states_of(z_d)
    if len(zd_states) != cfg.tau_o:
        raise ValueError(f"desired trajectory length {len(zd_states)} differs from tau_o {cfg.tau_o}")
    if warm_start is None:
        x0 = np.zeros(2 * cfg.tau_o)
    else:
        seq = warm_start.u_opt if isinstance(warm_start, NmpcSolution) else tuple(warm_start)
        if len(seq) != cfg.tau_o:
            raise ValueError("warm start length differs from tau_o")
        x0 = np.empty(2 * cfg.tau_o)
        for k, u in enumerate(seq):
            x0[2 * k] = u.v_cmd
            x0[2 * k + 1] = u.omega_cmd
    x0 = _clip_chain(x0, cfg, u_prev)

    penalty = cfg.penalty_weight
    x = x0
    total_iters = 0
    converged = False
    problem = _Problem(current, zd_states, residual, g, cfg, u_prev, penalty)
    try:
        for round_idx in range(3):
            problem.pw = penalty
            x, _, _, iters, converged = _bfgs(problem, x, cfg.max_iters, cfg.grad_tol, cfg.f_tol)
            total_iters += iters
            # excesses below this are absorbed exactly by the final projection,
            # so escalating the penalty for them only burns iterations
            if _violation(x, cfg, u_prev, problem) <= 1e-3 or round_idx == 2:
                break
            penalty *= 2.0
    except NmpcError as err:
        last = getattr(err, "iterate", None)
        if last is None and np.all(np.isfinite(x)):
            last = x
        if last is not None and err.last_solution is None:
            try:
                feasible = _clip_chain(np.asarray(last, dtype=float), cfg, u_prev)
                err.last_solution = _build_solution(
                    current, feasible, residual, cfg, float("nan"), total_iters, False
                )
            except (ValueError, OverflowError):
                pass
        raise

    final = _clip_chain(x, cfg, u_prev)
    problem.pw = penalty
    f_final = problem.value(final)
    f_initial = problem.value(x0)
    if f_initial < f_final:
        final = x0
        f_final = f_initial
    if not math.isfinite(f_final):
        raise NmpcError(
            "non-finite cost at the projected iterate",
            last_solution=_build_solution(current, x0, residual, cfg, float("inf"), total_iters, False),
        )
    return _build_solution(current, final, residual, cfg, f_final, total_iters, converged)


def _build_solution(current, u_flat, residual, cfg, cost, iterations, converged) -> NmpcSolution:
    u_opt = tuple(ControlInput(float(u_flat[2 * k]), float(u_flat[2 * k + 1])) for k in range(cfg.tau_o))
    res_seq = None
    if residual is not None:
        res_seq = [np.asarray(residual, dtype=float)] * cfg.tau_o
    z_opt = tuple(rollout(current, u_opt, res_seq, cfg.model()))
    return NmpcSolution(u_opt=u_opt, z_opt=z_opt, cost=float(cost), iterations=iterations, converged=converged)


def control_step(
    current: VehicleState,
    z_d: Union[DesiredTrajectory, Sequence[VehicleState]],
    residual,
    g: GainSchedule,
    cfg: NmpcConfig,
    warm_start: Optional[NmpcSolution] = None,
    u_prev: Optional[ControlInput] = None,
) -> tuple[ControlInput, NmpcSolution]:
    """One receding-horizon step: solve, apply the first optimal control.

    The previous solution, shifted by one step with its last element
    repeated, seeds the solver. The full unshifted solution is returned for
    the next call.
    """
    init = None
    if warm_start is not None:
        init = warm_start.u_opt[1:] + (warm_start.u_opt[-1],)
    sol = solve(current, z_d, residual, g, cfg, warm_start=init, u_prev=u_prev)
    return sol.u_opt[0], sol
