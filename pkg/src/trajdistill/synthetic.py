"""Synthetic multimodal driving scenarios from a kinematic unicycle model.

Each scene holds one to three agents. An agent gets a random pose, a random
cruise speed, and a latent maneuver drawn from the configured priors; its
future is a noisy unicycle rollout of that maneuver, stored in the agent's
own frame (history ends at the origin heading +x). Histories are exact
constant-velocity prefixes, so they depend only on speed, never on the
sampled maneuver: the future is genuinely multimodal given the features.
Other agents' futures are stored in the same frame for the overlap metric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .gmm import TrajectorySample, _frozen_array

BUCKETS = ("straight", "left", "right", "u-turn", "stationary")

DT = 0.5
SPEED_RANGE = (2.0, 10.0)
POSITION_RANGE = 25.0
AGENT_COUNT_PROBS = (0.5, 0.3, 0.2)

# maneuver shape: total heading change spread over the horizon
TURN_ANGLES = {
    "straight": 0.0,
    "left": math.pi / 2.0,
    "right": -math.pi / 2.0,
    "u-turn": math.pi,
    "stationary": 0.0,
}
STATIONARY_DECAY = 0.45

# dynamics noise, all scaled by ScenarioGenConfig.noise_sigma
TURN_JITTER = 0.15  # rad on the total heading change
HEADING_NOISE = 0.02  # rad per step
SPEED_NOISE = 0.25  # m/s per step


@dataclass(frozen=True)
class ScenarioGenConfig:
    example_count: int
    horizon: int = 16
    history_steps: int = 4
    maneuver_priors: tuple = (0.4, 0.2, 0.2, 0.1, 0.1)
    noise_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.example_count < 0:
            raise ValidationError(f"example_count must be >= 0, got {self.example_count}")
        if self.horizon < 1 or self.history_steps < 1:
            raise ValidationError("horizon and history_steps must be >= 1")
        priors = tuple(float(p) for p in self.maneuver_priors)
        if len(priors) != len(BUCKETS):
            raise ValidationError(
                f"expected {len(BUCKETS)} maneuver priors, got {len(priors)}"
            )
        if any(p < 0.0 or not np.isfinite(p) for p in priors):
            raise ValidationError("maneuver priors must be finite and nonnegative")
        if abs(sum(priors) - 1.0) > 1e-9:
            raise ValidationError(f"maneuver priors must sum to 1, got {sum(priors)!r}")
        if not np.isfinite(self.noise_sigma) or self.noise_sigma < 0.0:
            raise ValidationError(f"noise_sigma must be nonnegative, got {self.noise_sigma}")
        object.__setattr__(self, "maneuver_priors", priors)

    @property
    def feature_dim(self) -> int:
        return feature_dim(self.history_steps)


def feature_dim(history_steps: int) -> int:
    """Length of the feature vector: history positions, velocity, heading, speed."""
    return 2 * history_steps + 5


@dataclass(frozen=True, eq=False)
class AgentExample:
    """One agent's prediction problem, in its own frame."""

    example_id: str
    scene_id: str
    bucket: str
    features: np.ndarray
    history: TrajectorySample
    gt_future: TrajectorySample
    other_agents_gt: tuple = ()

    def __post_init__(self):
        if self.bucket not in BUCKETS:
            raise ValidationError(f"unknown bucket {self.bucket!r}")
        feats = _frozen_array(self.features)
        if feats.ndim != 1 or not np.isfinite(feats).all():
            raise ValidationError("features must be a finite vector")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "other_agents_gt", tuple(self.other_agents_gt))


def _features(history: np.ndarray, speed: float) -> np.ndarray:
    # agent frame: velocity along +x, heading zero
    return np.concatenate([history.ravel(), [speed, 0.0, 1.0, 0.0, speed]])


def _roll_agent(rng: np.random.Generator, cfg: ScenarioGenConfig):
    """One agent: global pose plus agent-frame history and future."""
    position = rng.uniform(-POSITION_RANGE, POSITION_RANGE, 2)
    heading = rng.uniform(0.0, 2.0 * math.pi)
    speed = rng.uniform(*SPEED_RANGE)
    cum = np.cumsum(cfg.maneuver_priors)
    bucket = BUCKETS[min(int(np.searchsorted(cum, rng.random(), side="right")), len(BUCKETS) - 1)]

    sig = cfg.noise_sigma
    t_count = cfg.horizon
    turn_total = TURN_ANGLES[bucket] + sig * TURN_JITTER * rng.standard_normal()
    dtheta = turn_total / t_count + sig * HEADING_NOISE * rng.standard_normal(t_count)
    theta = np.cumsum(dtheta)
    if bucket == "stationary":
        base_speed = speed * STATIONARY_DECAY ** np.arange(1, t_count + 1)
    else:
        base_speed = np.full(t_count, speed)
    speeds = np.clip(base_speed + sig * SPEED_NOISE * rng.standard_normal(t_count), 0.0, None)
    steps = (speeds * DT)[:, None] * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    future = np.cumsum(steps, axis=0)

    hist_x = -DT * speed * np.arange(cfg.history_steps - 1, -1, -1, dtype=np.float64)
    history = np.stack([hist_x, np.zeros_like(hist_x)], axis=1)
    return {
        "position": position,
        "heading": heading,
        "speed": speed,
        "bucket": bucket,
        "history": history,
        "future": future,
    }


def _to_global(points: np.ndarray, position: np.ndarray, heading: float) -> np.ndarray:
    c, s = math.cos(heading), math.sin(heading)
    rot = np.array([[c, -s], [s, c]])
    return points @ rot.T + position


def _to_frame(points: np.ndarray, position: np.ndarray, heading: float) -> np.ndarray:
    c, s = math.cos(heading), math.sin(heading)
    rot = np.array([[c, s], [-s, c]])
    return (points - position) @ rot.T


def generate(cfg: ScenarioGenConfig) -> list:
    """Deterministically generate cfg.example_count agent examples.

    Scenes draw from independently spawned child seeds, so the stream is
    stable under changes to per-scene draw counts elsewhere.
    """
    root = np.random.SeedSequence(cfg.seed)
    examples: list = []
    scene_idx = 0
    while len(examples) < cfg.example_count:
        rng = np.random.default_rng(root.spawn(1)[0])
        n_agents = 1 + int(rng.choice(len(AGENT_COUNT_PROBS), p=AGENT_COUNT_PROBS))
        agents = [_roll_agent(rng, cfg) for _ in range(n_agents)]
        futures_global = [
            _to_global(a["future"], a["position"], a["heading"]) for a in agents
        ]
        scene_id = f"s{scene_idx:06d}"
        for a_idx, agent in enumerate(agents):
            if len(examples) >= cfg.example_count:
                break
            others = tuple(
                TrajectorySample(
                    _to_frame(futures_global[j], agent["position"], agent["heading"])
                )
                for j in range(n_agents)
                if j != a_idx
            )
            examples.append(
                AgentExample(
                    example_id=f"{scene_id}-a{a_idx}",
                    scene_id=scene_id,
                    bucket=agent["bucket"],
                    features=_features(agent["history"], agent["speed"]),
                    history=TrajectorySample(agent["history"]),
                    gt_future=TrajectorySample(agent["future"]),
                    other_agents_gt=others,
                )
            )
        scene_idx += 1
    return examples
