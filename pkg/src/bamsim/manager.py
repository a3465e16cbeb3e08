"""Exhaustion-triggered configuration managers.

The allocation engine handles every ordinary admission on its own; a
manager is consulted only when a request finds no admission path. It may
then rebalance the per-class constraints by moving a fixed step of
capacity units from one class to another, keeping the link total constant.

Three managers are provided: a static no-op baseline, a seeded random
baseline, and a tabular Q-learning agent whose state is a coarse
discretization of the exhaustion snapshot.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

from .engine import ClassUsage, ExhaustionEvent, ResourceClass

NOOP = "noop"
TRANSFER = "transfer"


@dataclass(frozen=True)
class ManagerAction:
    """Either a no-op or a transfer of ``delta`` constraint units."""

    kind: str = NOOP
    from_class: int = -1
    to_class: int = -1
    delta: int = 0

    def sort_key(self) -> tuple:
        # no-op sorts first; transfers by (donor, receiver)
        return (0,) if self.kind == NOOP else (1, self.from_class, self.to_class)

    def encode(self) -> str:
        if self.kind == NOOP:
            return "noop"
        return f"t:{self.from_class}>{self.to_class}:{self.delta}"

    @classmethod
    def decode(cls, text: str) -> "ManagerAction":
        if text == "noop":
            return cls()
        body = text.removeprefix("t:")
        pair, delta = body.rsplit(":", 1)
        src, dst = pair.split(">")
        return cls(kind=TRANSFER, from_class=int(src), to_class=int(dst), delta=int(delta))


NOOP_ACTION = ManagerAction()


@dataclass(frozen=True)
class ManagerState:
    """Coarse view of the link at an exhaustion: per-class utilization
    bucket, per-class recent-denial flag, and the denied class."""

    buckets: tuple[int, ...]
    denied_flags: tuple[int, ...]
    denied_class: int

    def encode(self) -> str:
        b = ",".join(str(x) for x in self.buckets)
        d = ",".join(str(x) for x in self.denied_flags)
        return f"{b}|{d}|{self.denied_class}"

    @classmethod
    def decode(cls, text: str) -> "ManagerState":
        b, d, k = text.split("|")
        return cls(
            buckets=tuple(int(x) for x in b.split(",")),
            denied_flags=tuple(int(x) for x in d.split(",")),
            denied_class=int(k),
        )


def state_space_size(n_classes: int, buckets: int) -> int:
    """Total enumerable manager states for ``n_classes`` classes."""
    return buckets**n_classes * 2**n_classes * n_classes


def observe(event: ExhaustionEvent, classes: Sequence[ResourceClass], buckets: int = 5) -> ManagerState:
    """Discretize an exhaustion snapshot into a manager state.

    Utilization buckets use floor(used * B / constraint) capped at B-1;
    a zero-constraint class counts as saturated.
    """
    by_index = {u.index: u for u in event.snapshot}
    levels = []
    for cfg in sorted(classes, key=lambda c: c.index):
        usage = by_index[cfg.index]
        if usage.constraint <= 0:
            levels.append(buckets - 1)
        else:
            levels.append(min(buckets - 1, usage.attributed_used * buckets // usage.constraint))
    flags = event.recent_denials or tuple(0 for _ in levels)
    return ManagerState(buckets=tuple(levels), denied_flags=tuple(flags), denied_class=event.request.class_index)


def legal_actions(
    classes: Sequence[ResourceClass],
    used: Mapping[int, int],
    nrc: int,
    delta: int = 10,
) -> list[ManagerAction]:
    """Actions applicable right now, canonically ordered, no-op first.

    A transfer is legal when the donor keeps at least its current
    attributed usage and its private reservation after giving up ``delta``
    units. The link total is preserved by construction, so the capacity
    bound ``nrc`` can never be violated by a legal action.
    """
    actions = [NOOP_ACTION]
    ordered = sorted(classes, key=lambda c: c.index)
    for donor in ordered:
        floor = max(used.get(donor.index, 0), donor.private)
        if donor.constraint - delta < floor:
            continue
        for receiver in ordered:
            if receiver.index == donor.index:
                continue
            actions.append(
                ManagerAction(kind=TRANSFER, from_class=donor.index, to_class=receiver.index, delta=delta)
            )
    actions.sort(key=lambda a: a.sort_key())
    return actions


def apply_action(action: ManagerAction, classes: Sequence[ResourceClass]) -> None:
    """Mutate the class configs in place according to ``action``."""
    if action.kind == NOOP:
        return
    donor = next(c for c in classes if c.index == action.from_class)
    receiver = next(c for c in classes if c.index == action.to_class)
    donor.constraint -= action.delta
    receiver.constraint += action.delta


@dataclass
class QTable:
    """State-action values with the learning hyperparameters that drive them.

    Missing entries read as zero. ``epsilon`` may be adjusted between
    episodes by the training loop.
    """

    alpha: float = 0.2
    gamma: float = 0.9
    epsilon: float = 0.3
    seed: int = 0
    values: dict[tuple[ManagerState, ManagerAction], float] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        self._rng = random.Random(self.seed)

    @property
    def rng(self) -> random.Random:
        return self._rng

    def get(self, state: ManagerState, action: ManagerAction) -> float:
        return self.values.get((state, action), 0.0)

    def to_text(self) -> str:
        """One line per nonzero entry, canonically sorted, 9-decimal values."""
        rows = []
        for (state, action), value in self.values.items():
            if value == 0.0:
                continue
            rows.append((state.buckets, state.denied_flags, state.denied_class, action.sort_key(), state, action, value))
        rows.sort(key=lambda r: r[:4])
        return "".join(f"{s.encode()} {a.encode()} {v:.9f}\n" for *_, s, a, v in rows)

    @classmethod
    def from_text(cls, text: str, **kwargs) -> "QTable":
        table = cls(**kwargs)
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            state_s, action_s, value_s = line.split(" ")
            table.values[(ManagerState.decode(state_s), ManagerAction.decode(action_s))] = float(value_s)
        return table

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path, **kwargs) -> "QTable":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read(), **kwargs)


def select_action(
    qtable: QTable,
    state: ManagerState,
    legal: Sequence[ManagerAction],
    rng: random.Random | None = None,
) -> ManagerAction:
    """Epsilon-greedy selection over the legal set.

    With probability epsilon, uniform over the legal actions; otherwise the
    highest-valued action, ties resolved toward the canonically first one.
    """
    if not legal:
        raise ValueError("legal action set must not be empty")
    rng = rng if rng is not None else qtable.rng
    ordered = sorted(legal, key=lambda a: a.sort_key())
    if rng.random() < qtable.epsilon:
        return ordered[rng.randrange(len(ordered))]
    best = ordered[0]
    best_value = qtable.get(state, best)
    for action in ordered[1:]:
        value = qtable.get(state, action)
        if value > best_value:
            best, best_value = action, value
    return best


def update(
    qtable: QTable,
    state: ManagerState,
    action: ManagerAction,
    reward: float,
    next_state: ManagerState | None,
    legal_next: Sequence[ManagerAction] = (),
) -> None:
    """One-step temporal-difference update of a single entry.

    ``next_state`` of None marks a terminal transition (no bootstrap).
    """
    if next_state is None or not legal_next:
        best_next = 0.0
    else:
        best_next = max(qtable.get(next_state, a) for a in legal_next)
    old = qtable.get(state, action)
    qtable.values[(state, action)] = old + qtable.alpha * (reward + qtable.gamma * best_next - old)


@dataclass
class Hyperparams:
    """Knobs for the learning manager and the training loop."""

    alpha: float = 0.2
    gamma: float = 0.9
    epsilon: float = 0.3
    delta: int = 10
    buckets: int = 5
    seed: int | None = None
    epsilon_min: float = 0.01
    epsilon_decay: float = 0.99
    reward_clip: float | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.delta < 1:
            raise ValueError("delta must be >= 1")
        if self.buckets < 1:
            raise ValueError("buckets must be >= 1")
        if not 0.0 <= self.epsilon_min <= 1.0:
            raise ValueError("epsilon_min must lie in [0, 1]")
        if not 0.0 < self.epsilon_decay <= 1.0:
            raise ValueError("epsilon_decay must lie in (0, 1]")


@dataclass(frozen=True)
class RunCounts:
    """Cumulative admission outcomes a manager sees at invocation time."""

    grants: int = 0
    denials: int = 0

    @property
    def score(self) -> int:
        return self.grants - self.denials


class StaticManager:
    """Never reconfigures anything."""

    def on_exhaustion(self, event, classes, nrc, counts) -> ManagerAction:
        return NOOP_ACTION

    def on_run_end(self, counts) -> None:
        pass


class RandomManager:
    """Picks uniformly among the legal actions, no-op included."""

    def __init__(self, seed: int = 0, delta: int = 10):
        self.rng = random.Random(seed)
        self.delta = delta

    def on_exhaustion(self, event, classes, nrc, counts) -> ManagerAction:
        used = {u.index: u.attributed_used for u in event.snapshot}
        legal = legal_actions(classes, used, nrc, self.delta)
        return legal[self.rng.randrange(len(legal))]

    def on_run_end(self, counts) -> None:
        pass


class QLearningManager:
    """Tabular agent invoked only on exhaustion.

    The reward for an action is the net admission score (grants minus
    denials) accumulated between that invocation and the next one, or the
    end of the run. With ``learn`` off and epsilon 0 the manager is a pure
    function of state.
    """

    def __init__(self, qtable: QTable, hyper: Hyperparams | None = None, learn: bool = True):
        self.qtable = qtable
        self.hyper = hyper or Hyperparams()
        self.learn = learn
        self.visited: set[ManagerState] = set()
        self._pending: tuple[ManagerState, ManagerAction, int] | None = None

    def _reward(self, counts: RunCounts, score_then: int) -> float:
        r = float(counts.score - score_then)
        clip = self.hyper.reward_clip
        if clip is not None:
            r = max(-clip, min(clip, r))
        return r

    def on_exhaustion(self, event, classes, nrc, counts: RunCounts) -> ManagerAction:
        state = observe(event, classes, self.hyper.buckets)
        used = {u.index: u.attributed_used for u in event.snapshot}
        legal = legal_actions(classes, used, nrc, self.hyper.delta)
        self.visited.add(state)
        if self.learn and self._pending is not None:
            prev_state, prev_action, score_then = self._pending
            update(self.qtable, prev_state, prev_action, self._reward(counts, score_then), state, legal)
        action = select_action(self.qtable, state, legal)
        self._pending = (state, action, counts.score)
        return action

    def on_run_end(self, counts: RunCounts) -> None:
        if self.learn and self._pending is not None:
            prev_state, prev_action, score_then = self._pending
            update(self.qtable, prev_state, prev_action, self._reward(counts, score_then), None)
        self._pending = None
