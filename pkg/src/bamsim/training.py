"""Episodic training and evaluation of the Q-learning manager.

An episode is one simulator run of a generator scenario with a fresh
workload drawn from the master seed's schedule. Constraints reset to the
scenario's configuration at the start of every episode; only the Q-table
persists across episodes.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from .manager import Hyperparams, QLearningManager, QTable
from .scenario import Scenario
from .simulator import run


@dataclass
class TrainResult:
    qtable: QTable
    blocking_curve: list[float] = field(default_factory=list)
    episode_seeds: list[int] = field(default_factory=list)
    visited_states: int = 0


def episode_seeds(seed: int, episodes: int) -> list[int]:
    master = random.Random(seed)
    return [master.randrange(2**32) for _ in range(episodes)]


def train(
    scenario: Scenario,
    episodes: int,
    hyper: Hyperparams | None = None,
    seed: int = 0,
) -> TrainResult:
    """Train the learning manager over seeded episodes of one scenario.

    Returns the learned table plus the per-episode blocking ratio curve.
    Deterministic for a fixed (scenario, hyperparameters, seed).
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    if scenario.workload is None:
        raise ValueError("training needs a generator scenario with a [workload] section")

    hyper = hyper if hyper is not None else scenario.manager_params
    seeds = episode_seeds(seed, episodes)
    table_seed = hyper.seed if hyper.seed is not None else random.Random(seed ^ 0x5EED).randrange(2**32)
    qtable = QTable(alpha=hyper.alpha, gamma=hyper.gamma, epsilon=hyper.epsilon, seed=table_seed)
    agent = QLearningManager(qtable, hyper, learn=True)

    curve: list[float] = []
    for episode, ep_seed in enumerate(seeds):
        qtable.epsilon = max(hyper.epsilon_min, hyper.epsilon * hyper.epsilon_decay**episode)
        _trace, metrics = run(scenario, manager=agent, seed=ep_seed)
        curve.append(metrics.blocking_ratio)

    return TrainResult(
        qtable=qtable,
        blocking_curve=curve,
        episode_seeds=seeds,
        visited_states=len(agent.visited),
    )


def replay_blocking(scenario: Scenario, manager_factory, seeds: list[int]) -> list[float]:
    """Blocking ratio per episode for a manager built once per sweep.

    ``manager_factory`` is called once; the same manager instance handles
    every episode, mirroring how the learning manager persists across
    episodes during training.
    """
    manager = manager_factory()
    out = []
    for ep_seed in seeds:
        _trace, metrics = run(scenario, manager=manager, seed=ep_seed)
        out.append(metrics.blocking_ratio)
    return out


def learning_curve_csv(curve: list[float]) -> str:
    lines = ["episode,blocking_ratio"]
    lines.extend(f"{i},{b:.6f}" for i, b in enumerate(curve, start=1))
    return "\n".join(lines) + "\n"
