"""SQLR horizontal scaler.

The Q-table is laid out as bubbles and cards: a state is
``(K, prev_level, cur_level)`` and an action is a VM-count change ``delta``.
For a fixed bubble K, the card for ``delta`` is the grid of cells
``(K, p, c) x delta`` over all level pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rl_core
from .qcurve import ScalerLevels, quantize_scaler

STATE_ENCODING = "scaler-K-prev-cur"


@dataclass(frozen=True)
class ScalerState:
    K: int
    prev_level: int
    cur_level: int

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.K, self.prev_level, self.cur_level)


@dataclass(frozen=True)
class ScalerRewardParams:
    theta: float = 1.0
    beta: float = 0.01
    r_min: float = 0.01
    p_blk: float = 0.001

    def __post_init__(self):
        if self.theta < 0 or self.beta < 0:
            raise ValueError("theta and beta must be non-negative")
        if self.r_min <= 0:
            raise ValueError("r_min must be positive")
        if not 0 <= self.p_blk <= 1:
            raise ValueError("p_blk must be a probability")


CASE_1 = ScalerRewardParams(theta=1.0, beta=0.01)
CASE_2 = ScalerRewardParams(theta=10.0, beta=0.001)


def sqlr_reward(P: float, K: int, params: ScalerRewardParams) -> float:
    """Blocking term (bonus within target, linear penalty above) plus VM cost term."""
    if P <= params.p_blk:
        r_blk = params.r_min
    else:
        r_blk = params.theta * (params.p_blk - P)
    return r_blk + params.beta * (1 - K)


def p0_estimate(x: float, x_lim: float, x_bnd: float) -> float:
    """Blocking probability guess used to seed the card-0 diagonals."""
    if not x_lim < x_bnd:
        raise ValueError("need x_lim < x_bnd")
    if x < x_lim:
        return 0.0
    if x > x_bnd:
        return 1.0
    eta = (x - x_lim) / (x_bnd - x_lim)
    return 0.5 * (1.0 + math.erf(eta * math.e / math.sqrt(2.0)))


def init_diagonals(
    table: rl_core.QTable,
    levels: ScalerLevels,
    params: ScalerRewardParams,
    x_bnd: float,
    v_max: int,
) -> rl_core.QTable:
    """Seed cell (l, l) of card 0 in every bubble from the estimated blocking at l's midpoint."""
    for K in range(1, v_max + 1):
        for lv in range(levels.count):
            p0 = p0_estimate(levels.midpoint(lv), levels.x_lim, x_bnd)
            table.set_value((K, lv, lv), 0, sqlr_reward(p0, K, params))
    return table


def permissible_deltas(K: int, N: int, v_max: int) -> list[int]:
    return [d for d in range(-N, N + 1) if 1 <= K + d <= v_max]


def select_scale_action(
    state: ScalerState,
    table: rl_core.QTable,
    exploration: rl_core.ExplorationParams,
    rng: np.random.Generator,
    N: int = 2,
    v_max: int = 10,
) -> int:
    return rl_core.choose_action(
        table, state.key, permissible_deltas(state.K, N, v_max), exploration, rng
    )


@dataclass
class DampingState:
    """Set by a lone scale-in in a converged state; the next decision consumes it."""

    pending_scale_in: bool = False


def apply_damping(delta: int, converged: bool, damping: DampingState) -> int:
    if not converged:
        damping.pending_scale_in = False
        return delta
    if delta < 0:
        if damping.pending_scale_in:
            damping.pending_scale_in = False
            return delta
        damping.pending_scale_in = True
        return 0
    damping.pending_scale_in = False
    return delta


def scaler_observe(
    prev_state: ScalerState,
    delta: int,
    P: float,
    new_K: int,
    new_cur_level: int,
    table: rl_core.QTable,
    params: ScalerRewardParams,
    gamma: float,
) -> float:
    """Update the R-cell of card ``delta`` after the post-action epoch."""
    r = sqlr_reward(P, new_K, params)
    reference = table.value((new_K, new_cur_level, new_cur_level), 0)
    target = rl_core.discounted_target(r, gamma, reference)
    return rl_core.update_q(table, prev_state.key, delta, target)


def save_table(table: rl_core.QTable, path) -> None:
    table.save(path, STATE_ENCODING, encode=list)


def load_table(path) -> rl_core.QTable:
    return rl_core.QTable.load(path, STATE_ENCODING, decode=tuple)


@dataclass
class ScalerAgent:
    levels: ScalerLevels
    params: ScalerRewardParams
    rng: np.random.Generator
    exploration: rl_core.ExplorationParams = field(default_factory=rl_core.ExplorationParams)
    learning: rl_core.LearningParams = field(default_factory=rl_core.LearningParams)
    x_bnd: float = 62
    N: int = 2
    v_max: int = 10
    table: rl_core.QTable | None = None
    learn: bool = True
    damping: DampingState = field(default_factory=DampingState)

    def __post_init__(self):
        if self.table is None:
            self.table = init_diagonals(
                rl_core.QTable(), self.levels, self.params, self.x_bnd, self.v_max
            )
        self._last_level: int | None = None
        self._pending: tuple[ScalerState, int] | None = None

    def reset_episode(self) -> None:
        """Forget the in-progress transition, e.g. between separate runs."""
        self._last_level = None
        self._pending = None
        self.damping = DampingState()

    def on_epoch(self, avg_utilization: float, P: float, K: int) -> tuple[ScalerState, int, int]:
        """Close the previous episode and pick the next action.

        Returns (state, chosen delta, applied delta).
        """
        cur = quantize_scaler(self.levels, min(max(avg_utilization, 0.0), 100.0))
        if self._pending is not None and self.learn:
            prev_state, applied = self._pending
            scaler_observe(
                prev_state, applied, P, K, cur, self.table, self.params, self.learning.gamma
            )
        prev = cur if self._last_level is None else self._last_level
        state = ScalerState(K, prev, cur)
        chosen = select_scale_action(
            state, self.table, self.exploration, self.rng, self.N, self.v_max
        )
        converged = rl_core.is_converged(self.table.state_count(state.key), self.exploration)
        applied = apply_damping(chosen, converged, self.damping)
        self._pending = (state, applied)
        self._last_level = cur
        return state, chosen, applied

    def convergence(self) -> float:
        return rl_core.convergence_fraction(self.table, self.exploration)
