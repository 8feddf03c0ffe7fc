"""Tabular short-term-memory Q-learning shared by the admission and scaling agents.

The table keeps, besides the action values, how often each (state, action)
pair and each state has been acted on. Those counts drive the 1/n mean-style
update, the per-state exploration probability and the weighted-fair
exploration distribution.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Any, Callable, Hashable, Sequence

import numpy as np

QTABLE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ExplorationParams:
    M: int = 100
    eps_min: float = 0.01

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if not 0 <= self.eps_min < 1:
            raise ValueError("eps_min must be in [0, 1)")


@dataclass(frozen=True)
class LearningParams:
    gamma: float = 0.9

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must be in [0, 1)")


class QTable:
    """Action values plus pair and state visit counters.

    Missing entries read as 0. Only the agent that owns a table writes to it.
    """

    def __init__(self):
        self.q: dict[tuple[Hashable, Hashable], float] = {}
        self.pair_visits: dict[tuple[Hashable, Hashable], int] = defaultdict(int)
        self.state_visits: dict[Hashable, int] = defaultdict(int)

    def value(self, s, a) -> float:
        return self.q.get((s, a), 0.0)

    def values(self, s, actions: Sequence) -> list[float]:
        return [self.q.get((s, a), 0.0) for a in actions]

    def visits(self, s, a) -> int:
        return self.pair_visits.get((s, a), 0)

    def state_count(self, s) -> int:
        return self.state_visits.get(s, 0)

    def set_value(self, s, a, value: float) -> None:
        self.q[(s, a)] = float(value)

    def states(self) -> set:
        return {s for s, _ in self.q} | set(self.state_visits)

    def visited_states(self) -> list:
        return [s for s, i in self.state_visits.items() if i > 0]

    def copy(self) -> "QTable":
        other = QTable()
        other.q = dict(self.q)
        other.pair_visits = defaultdict(int, self.pair_visits)
        other.state_visits = defaultdict(int, self.state_visits)
        return other

    # -- persistence -------------------------------------------------------

    def to_json(self, state_encoding: str, encode: Callable[[Any], Any] = list) -> dict:
        keys = set(self.q) | set(self.pair_visits)
        entries = [
            [encode(s), a, self.q.get((s, a), 0.0), self.pair_visits.get((s, a), 0)]
            for s, a in sorted(keys, key=repr)
        ]
        visits = [[encode(s), n] for s, n in sorted(self.state_visits.items(), key=repr)]
        return {
            "version": QTABLE_FORMAT_VERSION,
            "state_encoding": state_encoding,
            "entries": entries,
            "state_visits": visits,
        }

    @classmethod
    def from_json(
        cls,
        doc: dict,
        state_encoding: str | None = None,
        decode: Callable[[Any], Hashable] = tuple,
    ) -> "QTable":
        version = doc.get("version")
        if version != QTABLE_FORMAT_VERSION:
            raise ValueError(
                f"unsupported Q-table version {version!r} (expected {QTABLE_FORMAT_VERSION})"
            )
        if state_encoding is not None and doc.get("state_encoding") != state_encoding:
            raise ValueError(
                f"state encoding {doc.get('state_encoding')!r} != {state_encoding!r}"
            )
        table = cls()
        for s, a, q, n in doc["entries"]:
            key = (decode(s), a)
            table.q[key] = float(q)
            if n:
                table.pair_visits[key] = int(n)
        for s, n in doc["state_visits"]:
            table.state_visits[decode(s)] = int(n)
        return table

    def save(self, path, state_encoding: str, encode: Callable[[Any], Any] = list) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(state_encoding, encode), fh, indent=1)

    @classmethod
    def load(cls, path, state_encoding: str | None = None, decode=tuple) -> "QTable":
        with open(path) as fh:
            return cls.from_json(json.load(fh), state_encoding, decode)


def epsilon(i: int, params: ExplorationParams) -> float:
    """Per-state exploration probability: 1 - i/M, floored at eps_min once i >= M."""
    if i < 0:
        raise ValueError("visit count must be non-negative")
    if i < params.M:
        return 1.0 - i / params.M
    return params.eps_min


def is_converged(i: int, params: ExplorationParams) -> bool:
    return i >= params.M


def discounted_target(r_next: float, gamma: float, max_next_q: float) -> float:
    return r_next + gamma * max_next_q


def fixed_rate_update(q_old: float, target: float, alpha: float) -> float:
    """Classic constant step-size update, kept as a reference point for tests."""
    return alpha * target + (1 - alpha) * q_old


def update_q(table: QTable, s, a, target: float) -> float:
    """Mean-style update Q <- (1/n) [Delta + (n - 1) Q] with Delta = target - Q.

    ``n`` counts the current episode, so the first visit uses n = 1.
    """
    key = (s, a)
    q_old = table.q.get(key, 0.0)
    n = table.pair_visits[key] + 1
    delta = target - q_old
    q_new = (delta + (n - 1) * q_old) / n
    table.q[key] = q_new
    table.pair_visits[key] = n
    table.state_visits[s] += 1
    return q_new


def selection_distribution(
    q_values: Sequence[float], pair_visits: Sequence[int], i: int
) -> np.ndarray:
    """Weighted-fair exploration probabilities over the L permissible actions.

    psi_a = Q_a + sum_j |Q_j| is never negative; frequently tried actions are
    down-weighted by 1 - tanh(n_a / i).
    """
    q = np.asarray(q_values, dtype=float)
    L = len(q)
    if L == 0:
        raise ValueError("need at least one action")
    psi = q + np.abs(q).sum()
    psi = np.maximum(psi, 0.0)  # clears -0.0 / rounding dust
    if i <= 0 or not np.any(psi > 0):
        return np.full(L, 1.0 / L)
    phi = np.asarray(pair_visits, dtype=float) / i
    w = psi * (1.0 - np.tanh(phi))
    total = w.sum()
    if total <= 0:
        return np.full(L, 1.0 / L)
    return w / total


def greedy_action(table: QTable, s, actions: Sequence):
    """argmax Q over ``actions``; ties go to the smallest action key."""
    best = None
    best_q = -math.inf
    for a in sorted(actions):
        q = table.value(s, a)
        if q > best_q:
            best, best_q = a, q
    return best


def choose_action(
    table: QTable,
    s,
    actions: Sequence,
    params: ExplorationParams,
    rng: np.random.Generator,
):
    """epsilon-greedy where the exploratory draw follows the weighted-fair distribution."""
    if not actions:
        raise ValueError(f"no permissible action in state {s!r}")
    actions = sorted(actions)
    if len(actions) == 1:
        return actions[0]
    i = table.state_count(s)
    eps = epsilon(i, params)
    if rng.random() >= eps:
        return greedy_action(table, s, actions)
    probs = selection_distribution(
        table.values(s, actions), [table.visits(s, a) for a in actions], i
    )
    return actions[int(rng.choice(len(actions), p=probs))]


def action_probabilities(
    table: QTable, s, actions: Sequence, params: ExplorationParams
) -> dict:
    """Exact probability that :func:`choose_action` returns each action."""
    actions = sorted(actions)
    i = table.state_count(s)
    eps = epsilon(i, params) if len(actions) > 1 else 0.0
    probs = selection_distribution(
        table.values(s, actions), [table.visits(s, a) for a in actions], i
    )
    greedy = greedy_action(table, s, actions)
    return {
        a: eps * p + (1 - eps) * (a == greedy) for a, p in zip(actions, probs)
    }


def convergence_fraction(table: QTable, params: ExplorationParams) -> float:
    """Share of visited states whose epsilon has reached eps_min."""
    visited = table.visited_states()
    if not visited:
        return 0.0
    done = sum(1 for s in visited if is_converged(table.state_visits[s], params))
    return done / len(visited)
