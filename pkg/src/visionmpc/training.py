"""Deep Q-learning episode loop over the simulator.

Each step runs the full decision pipeline (featurize, epsilon-greedy
candidate selection, desired-trajectory construction, receding-horizon
control, simulator step), rewards progress along the route, and performs
one Bellman update against a periodically synced target network. Solver
failures abort the episode and are recorded; training continues. Given the
same configuration the run is bit-deterministic.

An optional demonstration phase (TrainConfig.demo_episodes) seeds the
replay buffer with episodes driven by a scripted scan-reactive chooser,
so the value function sees successful avoidance maneuvers before
epsilon-greedy exploration takes over.
"""

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .controllers import LvdNmpcController, PipelineConfig
from .memory import Observation
from .nmpc import NmpcError
from .policy import (
    CandidateSet,
    QNetwork,
    ReplayBuffer,
    RewardConfig,
    TrainConfig,
    epsilon_at,
    reward,
    train_step,
)
from .sim import Scenario, in_goal, make_world, sense, sim_step
from .vehicle import ModelParams


@dataclass(frozen=True)
class EpisodeRecord:
    episode: int
    scenario: str
    steps: int
    ret: float
    epsilon: float
    status: str  # goal | crash | timeout | error
    mean_loss: float


def initialize_network(
    suite: Sequence[tuple[Scenario, ModelParams]],
    pipeline: PipelineConfig,
    candidates: CandidateSet,
    rng: np.random.Generator,
) -> QNetwork:
    scenario = suite[0][0]
    fc = pipeline.feature_config(scenario.sensor.n_rays, scenario.sensor.max_range_m)
    sizes = (fc.dim, *pipeline.hidden_layers, len(candidates))
    return QNetwork.initialize(sizes, candidates, rng)


def demonstration_action(
    obs: Observation,
    candidates: CandidateSet,
    block_dist: float = 1.2,
    front_half_deg: float = 14.0,
    side_lo_deg: float = 6.0,
    side_hi_deg: float = 50.0,
) -> int:
    """Scripted scan-reactive candidate choice for demonstration episodes.

    Straight at full width while the front cone is clear; once something
    sits closer than block_dist, bend with the strongest curvature
    candidate toward the side whose rays average farther.
    """
    rays = np.asarray(obs.rays)
    n = rays.shape[0]
    bear = np.arange(n) * (2.0 * math.pi / n)
    bear = np.where(bear > math.pi, bear - 2.0 * math.pi, bear)
    front_min = float(rays[np.abs(bear) <= math.radians(front_half_deg)].min())
    if front_min >= block_dist:
        c_target = 0.0
    else:
        left = (bear > math.radians(side_lo_deg)) & (bear <= math.radians(side_hi_deg))
        right = (bear < -math.radians(side_lo_deg)) & (bear >= -math.radians(side_hi_deg))
        c_strong = max(abs(c) for c in candidates.c_values)
        c_target = c_strong if float(rays[left].mean()) >= float(rays[right].mean()) else -c_strong
    ic = int(np.argmin([abs(c - c_target) for c in candidates.c_values]))
    iw = int(np.argmin([abs(w - 1.0) for w in candidates.w_values]))
    return ic * len(candidates.w_values) + iw


def train(
    suite: Sequence[tuple[Scenario, ModelParams]],
    cfg: TrainConfig,
    pipeline: PipelineConfig = PipelineConfig(),
    candidates: Optional[CandidateSet] = None,
    reward_cfg: RewardConfig = RewardConfig(),
) -> tuple[QNetwork, list[EpisodeRecord]]:
    """Train the scene-dynamics estimator; returns (network, episode log).

    Scenarios are visited round-robin. All sensors in the suite must share
    one ray layout so the feature space is fixed.
    """
    if not suite:
        raise ValueError("scenario suite must be non-empty")
    first_sensor = suite[0][0].sensor
    for scenario, _ in suite:
        if (
            scenario.sensor.n_rays != first_sensor.n_rays
            or scenario.sensor.max_range_m != first_sensor.max_range_m
        ):
            raise ValueError("all scenarios in a training suite must share a sensor layout")
    if candidates is None:
        candidates = CandidateSet.grid()
    rng = np.random.default_rng(cfg.seed)
    net = initialize_network(suite, pipeline, candidates, rng)
    if cfg.episodes == 0:
        return net, []
    target = net.copy()
    buffer = ReplayBuffer(cfg.replay_capacity)
    log: list[EpisodeRecord] = []
    global_step = 0

    for ep in range(cfg.episodes):
        scenario, params = suite[ep % len(suite)]
        eps = epsilon_at(ep, cfg)
        world_rng = np.random.default_rng([cfg.seed, 101, ep])
        world = make_world(scenario, params, world_rng)
        demo = ep < cfg.demo_episodes
        if demo:
            source = lambda obs, feats: demonstration_action(obs, candidates)  # noqa: E731
            controller = LvdNmpcController(net, pipeline, action_source=source)
        else:
            controller = LvdNmpcController(net, pipeline, epsilon=eps, rng=rng)
        controller.reset(scenario, params)
        pending = None  # (features, action, reward) awaiting the next features
        ep_return = 0.0
        losses: list[float] = []
        steps = 0
        status = "timeout"
        while world.t + 1e-12 < scenario.time_limit_s and steps < cfg.max_steps_per_episode:
            obs = sense(world)
            try:
                cmd = controller.step(obs, world.vehicle, world.t)
            except NmpcError:
                status = "error"
                break
            features = controller.last_features
            action = controller.last_action
            if pending is not None:
                buffer.push(pending[0], pending[1], pending[2], features, False)
            prev_state = world.vehicle
            sim_step(world, cmd.u)
            r = reward(prev_state, world.vehicle, world.route, world.crashed, world.reached, reward_cfg)
            ep_return += r
            steps += 1
            global_step += 1
            if world.crashed or world.reached:
                # true terminal: the Bellman target is the reward alone
                buffer.push(features, action, r, features, True)
                pending = None
            elif world.t + 1e-12 >= scenario.time_limit_s or steps >= cfg.max_steps_per_episode:
                # truncation, not termination: the successor state is never
                # observed, so the half-transition is dropped rather than
                # biased into a fake terminal
                pending = None
            else:
                pending = (features, action, r)
            if len(buffer) >= cfg.batch_size:
                batch = buffer.sample(cfg.batch_size, rng)
                losses.append(train_step(net, target, batch, cfg))
            if global_step % cfg.target_sync_every == 0:
                target = net.copy()
            if world.crashed:
                status = "crash"
                break
            if world.reached:
                status = "goal"
                break
        mean_loss = float(np.mean(losses)) if losses else 0.0
        log.append(
            EpisodeRecord(
                episode=ep,
                scenario=scenario.name,
                steps=steps,
                ret=ep_return,
                epsilon=eps,
                status=status,
                mean_loss=mean_loss,
            )
        )
    return net, log


def write_training_log(path, log: Sequence[EpisodeRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "scenario", "steps", "return", "epsilon", "status", "mean_loss"])
        for rec in log:
            writer.writerow(
                [rec.episode, rec.scenario, rec.steps, repr(rec.ret), repr(rec.epsilon), rec.status, repr(rec.mean_loss)]
            )
