"""Synthetic dataset generation for surrogate training and benchmarking.

Episodes are independent simulations under the rule controller with clipped
uniform exploration noise on the controls, split chronologically 70/15/15 by
episode.  Initial levels and the rule's trigger levels are randomized per
episode: a surrogate trained only on trajectories near one operating band is
blind exactly where a trained scheduler will drive the system, so the
referee needs coverage of drained, flooded, and mixed states under open and
closed gates alike.  The manifest records episode boundaries and seeds so
the benchmark can re-simulate the test episodes under any other controller
with identical forcing.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta

import numpy as np

from ..baselines import NoisyController, RuleController, RulePolicy, StationRule
from ..series import SeriesFrame, ValidationError, concat_frames
from .engine import initial_state, simulate
from .forcing import ForcingConfig
from .topology import NetworkTopology, default_topology

TRAIN_FRACTION = 0.7
VAL_FRACTION = 0.15


@dataclass(frozen=True)
class GenerationConfig:
    topology: NetworkTopology = field(default_factory=default_topology)
    forcing: ForcingConfig = field(default_factory=ForcingConfig)
    policy: RulePolicy = field(default_factory=RulePolicy)
    episode_hours: int = 720
    noise_amplitude: float = 0.3
    trigger_jitter_ft: float = 0.8
    initial_level_range: tuple[float, float] = (0.2, 4.5)

    def __post_init__(self):
        if self.episode_hours < 1:
            raise ValidationError("episode_hours must be positive")
        if self.noise_amplitude < 0:
            raise ValidationError("noise amplitude must be nonnegative")
        if self.trigger_jitter_ft < 0:
            raise ValidationError("trigger jitter must be nonnegative")


def jitter_policy(policy: RulePolicy, jitter_ft: float, stations,
                  rng: np.random.Generator) -> RulePolicy:
    """Per-episode rule variant: every station's triggers shifted independently.

    The close trigger is drawn far below the open trigger on some episodes so
    the data contains deep pre-release trajectories (low levels while gates
    stay open), the regime a trained scheduler visits most.
    """
    if jitter_ft == 0:
        return policy
    per_station = {}
    for station in stations:
        base = policy.rule_for(station)
        open_t = base.open_trigger_ft + rng.uniform(-jitter_ft, jitter_ft)
        close_t = open_t - rng.uniform(0.3, 1.2 + jitter_ft)
        pump_t = base.pump_trigger_ft + rng.uniform(-jitter_ft, jitter_ft)
        per_station[station] = StationRule(open_t, close_t, pump_t)
    return replace(policy, per_station=per_station)


@dataclass(frozen=True)
class EpisodeInfo:
    index: int
    seed: int
    split: str
    hours: int


@dataclass
class DatasetBundle:
    train: SeriesFrame
    val: SeriesFrame
    test: SeriesFrame
    episodes: list[EpisodeInfo]

    def split_counts(self) -> tuple[int, int, int]:
        counts = {"train": 0, "val": 0, "test": 0}
        for e in self.episodes:
            counts[e.split] += 1
        return counts["train"], counts["val"], counts["test"]


def episode_seed(base_seed: int, index: int) -> int:
    return base_seed * 100_003 + index


def split_sizes(n_episodes: int) -> tuple[int, int, int]:
    n_train = int(n_episodes * TRAIN_FRACTION)
    n_val = int(n_episodes * VAL_FRACTION)
    n_val = max(n_val, 1)
    n_train = max(n_train, 1)
    n_test = n_episodes - n_train - n_val
    if n_test < 1:
        n_test = 1
        n_train = n_episodes - n_val - n_test
    return n_train, n_val, n_test


def generate_dataset(config: GenerationConfig, n_episodes: int,
                     seed: int) -> DatasetBundle:
    if n_episodes < 3:
        raise ValidationError("need at least 3 episodes for a train/val/test split")
    n_train, n_val, n_test = split_sizes(n_episodes)
    frames: list[SeriesFrame] = []
    episodes: list[EpisodeInfo] = []
    start = datetime(2021, 1, 1)
    stations = sorted({s.upstream for s in config.topology.structures})
    for i in range(n_episodes):
        ep_seed = episode_seed(seed, i)
        rng = np.random.default_rng(ep_seed + 7)
        policy = jitter_policy(config.policy, config.trigger_jitter_ft,
                               stations, rng)
        controller = NoisyController(
            RuleController(policy, config.topology),
            config.noise_amplitude, rng)
        lo, hi = config.initial_level_range
        init = initial_state(config.topology,
                             rng.uniform(lo, hi, config.topology.n_cells))
        frame = simulate(config.topology, config.forcing, controller,
                         config.episode_hours, ep_seed, start_time=start,
                         init=init)
        frames.append(frame)
        split = ("train" if i < n_train else
                 "val" if i < n_train + n_val else "test")
        episodes.append(EpisodeInfo(i, ep_seed, split, config.episode_hours))
        start = start + timedelta(hours=config.episode_hours)

    return DatasetBundle(
        train=concat_frames(frames[:n_train]),
        val=concat_frames(frames[n_train:n_train + n_val]),
        test=concat_frames(frames[n_train + n_val:]),
        episodes=episodes,
    )
