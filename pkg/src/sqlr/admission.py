"""Admission-control agent: ADMIT or DROP depending on the selected VM's utilization level."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rl_core
from .cloudsim import (
    Cluster,
    ClusterConfig,
    Request,
    Slot,
    VirtualMachine,
    WorkloadProfile,
    generate_arrivals,
)
from .qcurve import (
    GeometricLevels,
    beyond_boundary,
    geometric_levels,
    level_index,
    quantize_down,
    quantize_up,
)

ADMIT = "ADMIT"
DROP = "DROP"
ACTIONS = (ADMIT, DROP)
BEYOND = "beyond"
STATE_ENCODING = "ac-level"  # state = geometric level index, or "beyond"


class DegeneratePolicyError(RuntimeError):
    """No utilization level prefers ADMIT, so there is no admission limit."""


@dataclass(frozen=True)
class ACConfig:
    x_tgt: int = 60
    x_bnd: int = 62
    exploration: rl_core.ExplorationParams = field(default_factory=rl_core.ExplorationParams)
    learning: rl_core.LearningParams = field(default_factory=rl_core.LearningParams)

    @property
    def levels(self) -> GeometricLevels:
        return geometric_levels(self.x_tgt, self.x_bnd)

    def states(self) -> list:
        return list(range(len(self.levels.levels))) + [BEYOND]


def ac_state(vm_utilization: float, config: ACConfig):
    levels = config.levels
    if beyond_boundary(levels, vm_utilization):
        return BEYOND
    return level_index(levels, vm_utilization)


def ac_reward(resulting_utilization: float, action: str, config: ACConfig) -> float:
    """Quantized resulting utilization as a fraction; ADMIT past x_bnd is penalized."""
    levels = config.levels
    x = resulting_utilization
    bnd = config.x_bnd / 100
    if beyond_boundary(levels, x):
        return bnd if action == DROP else (bnd - 1) / 2
    if action == DROP:
        return quantize_down(levels, x) / 100
    return quantize_up(levels, x) / 100


def ac_decide(vm_utilization: float, table: rl_core.QTable, config: ACConfig, rng) -> str:
    s = ac_state(vm_utilization, config)
    return rl_core.choose_action(table, s, ACTIONS, config.exploration, rng)


def ac_learn(prev_state, action: str, resulting_utilization: float, table, config: ACConfig) -> float:
    r = ac_reward(resulting_utilization, action, config)
    nxt = ac_state(resulting_utilization, config)
    max_next = max(table.values(nxt, ACTIONS))
    target = rl_core.discounted_target(r, config.learning.gamma, max_next)
    return rl_core.update_q(table, prev_state, action, target)


def prefers_admit(table: rl_core.QTable, state) -> bool:
    return table.value(state, ADMIT) > table.value(state, DROP)


def extract_admission_limit(table: rl_core.QTable, config: ACConfig) -> int:
    """Upper boundary of the highest level at which ADMIT beats DROP."""
    levels = config.levels.levels
    for k in range(len(levels) - 1, -1, -1):
        if prefers_admit(table, k):
            return levels[k + 1] if k + 1 < len(levels) else config.x_bnd
    raise DegeneratePolicyError("no utilization level prefers ADMIT")


def admit_probabilities(table: rl_core.QTable, config: ACConfig) -> dict:
    """Probability of ADMIT per state under the current exploration schedule."""
    return {
        s: rl_core.action_probabilities(table, s, ACTIONS, config.exploration)[ADMIT]
        for s in config.states()
    }


def policy_summary(table: rl_core.QTable, config: ACConfig) -> dict:
    try:
        x_lim = extract_admission_limit(table, config)
    except DegeneratePolicyError:
        x_lim = None
    probs = admit_probabilities(table, config)
    return {
        "x_lim": x_lim,
        "levels": list(config.levels.levels),
        "x_bnd": config.x_bnd,
        "admit_probability": {str(k): v for k, v in probs.items()},
        "state_visits": {str(s): table.state_count(s) for s in config.states()},
    }


def save_table(table: rl_core.QTable, path) -> None:
    table.save(path, STATE_ENCODING, encode=lambda s: s)


def load_table(path) -> rl_core.QTable:
    return rl_core.QTable.load(path, STATE_ENCODING, decode=lambda s: s)


class AdmissionAgent:
    """Learning admission controller plugged into a :class:`Cluster`.

    Every decision is one episode. Its reward is computed from the selected
    VM's utilization sample logged at the end of the tick.
    """

    def __init__(self, config: ACConfig, rng: np.random.Generator, table: rl_core.QTable | None = None):
        self.config = config
        self.rng = rng
        self.table = table if table is not None else rl_core.QTable()
        self.pending: list[tuple[VirtualMachine, object, str]] = []
        self.episodes = 0

    def decide(self, vm: VirtualMachine, cluster: Cluster) -> bool:
        s = ac_state(vm.last_utilization, self.config)
        a = rl_core.choose_action(self.table, s, ACTIONS, self.config.exploration, self.rng)
        self.pending.append((vm, s, a))
        return a == ADMIT

    def end_tick(self, cluster: Cluster) -> None:
        for vm, s, a in self.pending:
            ac_learn(s, a, vm.last_utilization, self.table, self.config)
            self.episodes += 1
        self.pending.clear()


# One VM fed by four bursty streams (~1.6 req/s): offered concurrency sits near
# the knee, so both sides of the admission boundary get visited.
TRAINING_STREAM = (Slot(duration_s=3600, omega_max_s=5, multiplier=4),)


def train_admission(
    config: ACConfig,
    episodes: int,
    rng: np.random.Generator,
    vm: ClusterConfig | None = None,
    stream: tuple[Slot, ...] = TRAINING_STREAM,
    table: rl_core.QTable | None = None,
) -> AdmissionAgent:
    """Train on a single VM until ``episodes`` admission decisions have been learned."""
    vm = vm or ClusterConfig()
    agent = AdmissionAgent(config, rng, table)
    cluster = Cluster(
        ClusterConfig(vm.cores, vm.core_capacity, 0, 1, check_invariants=False),
        initial_vms=1,
        admission=agent,
        keep_ledger=False,
    )
    profile = WorkloadProfile(tuple(stream))
    while agent.episodes < episodes:
        offset = cluster.t
        for req in generate_arrivals(profile, rng):
            while cluster.t < offset + req.arrival_time:
                cluster.step()
            cluster.dispatch(Request(req.id, offset + req.arrival_time, req.iterations))
            if agent.episodes + len(agent.pending) >= episodes:
                break
        cluster.step()
        if agent.episodes >= episodes:
            break
    return agent
