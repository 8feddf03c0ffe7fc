"""Time-stepped simulation of a pool of multi-core processor-sharing VMs.

Time advances in 1 s ticks. During tick ``t`` (the interval [t, t+1)):

1. the provisioner may scale the pool,
2. requests arriving at ``t`` are load-balanced and passed through admission,
3. every VM processes its jobs for one second and logs a utilization sample.

A request completing during tick ``t`` records a service time of
``t + 1 - arrival_time``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol

import numpy as np

ITERATION_CHOICES = tuple(range(300_000, 1_200_001, 100_000))

BOOTING, ACTIVE, DRAINING, DESTROYED = "booting", "active", "draining", "destroyed"

_EPS_OPS = 1e-6


class InvariantViolation(RuntimeError):
    """A conservation or structural invariant failed during a run."""


@dataclass(frozen=True)
class Request:
    id: int
    arrival_time: int
    iterations: int


@dataclass(frozen=True)
class Slot:
    duration_s: int
    omega_max_s: int
    multiplier: int = 1

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError("slot duration must be positive")
        if self.omega_max_s < 0 or self.multiplier < 0:
            raise ValueError("omega_max_s and multiplier must be non-negative")


@dataclass(frozen=True)
class WorkloadProfile:
    slots: tuple[Slot, ...]

    @property
    def duration_s(self) -> int:
        return sum(s.duration_s for s in self.slots)

    def slot_bounds(self) -> list[tuple[int, int, Slot]]:
        out, t = [], 0
        for s in self.slots:
            out.append((t, t + s.duration_s, s))
            t += s.duration_s
        return out

    def to_json(self) -> list[dict]:
        return [
            {"duration_s": s.duration_s, "omega_max_s": s.omega_max_s, "multiplier": s.multiplier}
            for s in self.slots
        ]

    @classmethod
    def from_json(cls, doc: list[dict]) -> "WorkloadProfile":
        if not isinstance(doc, list) or not doc:
            raise ValueError("workload profile must be a non-empty list of slots")
        return cls(
            tuple(
                Slot(int(d["duration_s"]), int(d["omega_max_s"]), int(d.get("multiplier", 1)))
                for d in doc
            )
        )

    @classmethod
    def load(cls, path) -> "WorkloadProfile":
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def repeated(self, times: int) -> "WorkloadProfile":
        return WorkloadProfile(self.slots * times)


def generate_arrivals(profile: WorkloadProfile, rng: np.random.Generator | int) -> list[Request]:
    """Merge ``multiplier`` independent streams per slot into one ordered request list.

    Each stream waits a gap drawn uniformly from {0, ..., omega_max} seconds
    between requests; a zero gap puts the next request in the same second.
    A stream with omega_max = 0 sends one request per second.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    raw: list[tuple[int, int, int, int]] = []  # (time, stream, seq, iterations)
    choices = np.asarray(ITERATION_CHOICES)
    stream_id = 0
    for start, end, slot in profile.slot_bounds():
        span = end - start
        for _ in range(slot.multiplier):
            if slot.omega_max_s == 0:
                times = np.arange(start, end)
            else:
                # draw gaps in chunks until the stream runs past the slot end
                gaps: list[np.ndarray] = []
                total, chunk = 0, 2 * span // slot.omega_max_s + 16
                while total < span:
                    g = rng.integers(0, slot.omega_max_s + 1, size=chunk)
                    gaps.append(g)
                    total += int(g.sum())
                times = start + np.cumsum(np.concatenate(gaps))
                times = times[times < end]
            its = rng.choice(choices, size=len(times))
            raw.extend(
                (int(t), stream_id, seq, int(it)) for seq, (t, it) in enumerate(zip(times, its))
            )
            stream_id += 1
    raw.sort()
    return [Request(i, t, it) for i, (t, _, _, it) in enumerate(raw)]


class VirtualMachine:
    def __init__(self, vm_id: int, cores: int, core_capacity: float, boot_s: int, now: int):
        self.id = vm_id
        self.cores = cores
        self.core_capacity = core_capacity
        self.phase = BOOTING if boot_s > 0 else ACTIVE
        self.boot_remaining = boot_s
        self.jobs: list[list] = []  # [Request, remaining_ops]
        self.utilization_log: list[float] = []
        self.spawn_s = now
        self.drain_s: int | None = None
        self.destroy_s: int | None = None

    @property
    def last_utilization(self) -> float:
        return self.utilization_log[-1] if self.utilization_log else 0.0

    def accepts_jobs(self) -> bool:
        return self.phase == ACTIVE

    def process(self) -> tuple[float, list[Request]]:
        """Run one second of processor sharing; return (sample, finished requests)."""
        n = len(self.jobs)
        sample = min(100.0, 100.0 * n / self.cores)
        if n == 0:
            return sample, []
        rate = min(self.core_capacity, self.cores * self.core_capacity / n)
        done = []
        for job in self.jobs:
            job[1] -= rate
            if job[1] <= _EPS_OPS:
                done.append(job[0])
        if done:
            self.jobs = [job for job in self.jobs if job[1] > _EPS_OPS]
        return sample, done


class Admission(Protocol):
    def decide(self, vm: VirtualMachine, cluster: "Cluster") -> bool: ...

    def end_tick(self, cluster: "Cluster") -> None: ...


class ThresholdAdmission:
    """Deployed admission rule: drop when the selected VM's last sample exceeds x_lim."""

    def __init__(self, x_lim: float):
        self.x_lim = x_lim

    def decide(self, vm: VirtualMachine, cluster: "Cluster") -> bool:
        return vm.last_utilization <= self.x_lim

    def end_tick(self, cluster: "Cluster") -> None:
        pass


class AdmitAll:
    def decide(self, vm, cluster) -> bool:
        return True

    def end_tick(self, cluster) -> None:
        pass


@dataclass
class ClusterConfig:
    cores: int = 4
    core_capacity: float = 200_000.0
    boot_s: int = 30
    v_max: int = 10
    count_draining: bool = False
    check_invariants: bool = True


@dataclass
class LedgerRow:
    id: int
    arrival_s: int
    iterations: int
    outcome: str = "inflight"
    vm_id: int | None = None
    service_time_s: int | None = None


@dataclass
class TickRecord:
    t: int
    K: int
    active: int
    util_sum: float
    arrived: int = 0
    blocked: int = 0
    offered_ops: int = 0  # iterations carried by this tick's arrivals, admitted or not


@dataclass
class EpochRecord:
    epoch: int
    start_s: int
    end_s: int
    avg_utilization: float
    P: float
    K: int
    arrived: int
    blocked: int


def lb_select(vms: Iterable[VirtualMachine]) -> VirtualMachine | None:
    """Active VM with the lowest most recent utilization sample; ties to the lowest id."""
    best = None
    for vm in vms:
        if not vm.accepts_jobs():
            continue
        if best is None or (vm.last_utilization, vm.id) < (best.last_utilization, best.id):
            best = vm
    return best


class Cluster:
    def __init__(
        self,
        config: ClusterConfig | None = None,
        initial_vms: int = 1,
        admission: Admission | None = None,
        keep_ledger: bool = True,
    ):
        self.config = config or ClusterConfig()
        self.admission = admission or AdmitAll()
        self.keep_ledger = keep_ledger
        self.t = 0
        self.vms: list[VirtualMachine] = []
        self.retired: list[VirtualMachine] = []
        self._next_vm_id = 0
        self.arrived = self.admitted = self.blocked = self.completed = 0
        self.ledger: dict[int, LedgerRow] = {}
        self.ticks: list[TickRecord] = []
        self.completions: list[tuple[int, Request, int]] = []  # (finish tick, request, service s)
        self._pending_arrived = 0
        self._pending_blocked = 0
        self._pending_ops = 0
        for _ in range(initial_vms):
            self._spawn(boot_s=0)

    # -- pool management ---------------------------------------------------

    def _spawn(self, boot_s: int) -> VirtualMachine:
        cfg = self.config
        vm = VirtualMachine(self._next_vm_id, cfg.cores, cfg.core_capacity, boot_s, self.t)
        self._next_vm_id += 1
        self.vms.append(vm)
        return vm

    def counted(self, vm: VirtualMachine) -> bool:
        if vm.phase in (BOOTING, ACTIVE):
            return True
        return self.config.count_draining and vm.phase == DRAINING

    @property
    def K(self) -> int:
        phases = (BOOTING, ACTIVE, DRAINING) if self.config.count_draining else (BOOTING, ACTIVE)
        return sum(1 for vm in self.vms if vm.phase in phases)

    def active_vms(self) -> list[VirtualMachine]:
        return [vm for vm in self.vms if vm.phase == ACTIVE]

    def scale(self, delta: int) -> None:
        """Spawn ``delta`` booting VMs, or drain ``-delta`` of them.

        Booting VMs are withdrawn before active ones; active VMs are drained
        lowest-utilization first.
        """
        if delta == 0:
            return
        serving = [vm for vm in self.vms if vm.phase in (BOOTING, ACTIVE)]
        k_after = len(serving) + delta
        if not 1 <= k_after <= self.config.v_max:
            raise ValueError(f"scaling by {delta} from {len(serving)} leaves [1, {self.config.v_max}]")
        if delta > 0:
            for _ in range(delta):
                self._spawn(self.config.boot_s)
            return
        order = sorted(
            serving, key=lambda vm: (vm.phase != BOOTING, vm.last_utilization, vm.id)
        )
        for vm in order[:-delta]:
            vm.phase = DRAINING
            vm.drain_s = self.t

    # -- request path ------------------------------------------------------

    def dispatch(self, request: Request) -> bool:
        """Load-balance, apply admission and enqueue. Returns True when admitted."""
        self.arrived += 1
        self._pending_arrived += 1
        self._pending_ops += request.iterations
        row = LedgerRow(request.id, request.arrival_time, request.iterations)
        if self.keep_ledger:
            self.ledger[request.id] = row
        vm = lb_select(self.vms)
        if vm is None or not self.admission.decide(vm, self):
            self.blocked += 1
            self._pending_blocked += 1
            row.outcome = "blocked"
            return False
        self.admitted += 1
        vm.jobs.append([request, float(request.iterations)])
        row.vm_id = vm.id
        return True

    def step(self) -> list[tuple[Request, int]]:
        """Advance one second. Returns (request, service time) for completions."""
        t = self.t
        K = self.K
        util_sum, n_active = 0.0, 0
        finished: list[tuple[Request, int]] = []
        survivors = []
        for vm in self.vms:
            if vm.phase == BOOTING:
                vm.utilization_log.append(0.0)
                vm.boot_remaining -= 1
                if vm.boot_remaining <= 0:
                    vm.phase = ACTIVE
                survivors.append(vm)
                continue
            was_active = vm.phase == ACTIVE
            sample, done = vm.process()
            vm.utilization_log.append(sample)
            if was_active:
                util_sum += sample
                n_active += 1
            for req in done:
                service = t + 1 - req.arrival_time
                finished.append((req, service))
                if self.keep_ledger:
                    row = self.ledger[req.id]
                    row.outcome = "completed"
                    row.service_time_s = service
            if vm.phase == DRAINING and not vm.jobs:
                vm.phase = DESTROYED
                vm.destroy_s = t + 1
                self.retired.append(vm)
            else:
                survivors.append(vm)
        self.vms = survivors
        self.completed += len(finished)
        self.completions.extend((t, req, s) for req, s in finished)
        self.ticks.append(
            TickRecord(
                t, K, n_active, util_sum,
                self._pending_arrived, self._pending_blocked, self._pending_ops,
            )
        )
        self._pending_arrived = self._pending_blocked = self._pending_ops = 0
        self.admission.end_tick(self)
        self.t += 1
        if self.config.check_invariants:
            self.check_conservation()
        return finished

    def in_flight(self) -> int:
        return sum(len(vm.jobs) for vm in self.vms)

    def check_conservation(self) -> None:
        if self.arrived != self.admitted + self.blocked:
            raise InvariantViolation(
                f"t={self.t}: arrived {self.arrived} != admitted {self.admitted} + blocked {self.blocked}"
            )
        inflight = self.in_flight()
        if self.admitted != self.completed + inflight:
            raise InvariantViolation(
                f"t={self.t}: admitted {self.admitted} != completed {self.completed} + in-flight {inflight}"
            )

    # -- metrics -----------------------------------------------------------

    def epoch_metrics(self, start: int, end: int, epoch: int = 0) -> EpochRecord:
        """Aggregate ticks in [start, end)."""
        window = [r for r in self.ticks[start:end]]
        samples = sum(r.active for r in window)
        util = sum(r.util_sum for r in window) / samples if samples else 0.0
        arrived = sum(r.arrived for r in window)
        blocked = sum(r.blocked for r in window)
        P = blocked / arrived if arrived else 0.0
        return EpochRecord(epoch, start, end, util, P, self.K, arrived, blocked)

    def all_vms(self) -> list[VirtualMachine]:
        return sorted(self.retired + self.vms, key=lambda vm: vm.id)

    def vm_lifetimes(self, end_s: int | None = None) -> list[tuple[int, int, int]]:
        """(vm id, start, end) of the span during which each VM counted toward K."""
        end_s = self.t if end_s is None else end_s
        out = []
        for vm in self.all_vms():
            stop = vm.destroy_s if self.config.count_draining else vm.drain_s
            if stop is None:
                stop = vm.destroy_s if vm.destroy_s is not None else end_s
            out.append((vm.id, vm.spawn_s, stop))
        return out


def simulate(
    cluster: Cluster,
    arrivals: list[Request],
    duration_s: int,
    on_tick=None,
) -> Cluster:
    """Drive ``cluster`` for ``duration_s`` ticks; ``on_tick(cluster)`` runs before dispatch."""
    idx, n = 0, len(arrivals)
    end = cluster.t + duration_s
    while cluster.t < end:
        if on_tick is not None:
            on_tick(cluster)
        t = cluster.t
        while idx < n and arrivals[idx].arrival_time < t:
            idx += 1  # requests before the start of this run segment are ignored
        while idx < n and arrivals[idx].arrival_time == t:
            cluster.dispatch(arrivals[idx])
            idx += 1
        cluster.step()
    return cluster


# -- file outputs -----------------------------------------------------------

LEDGER_FIELDS = ("id", "arrival_s", "iterations", "outcome", "vm_id", "service_time_s")


def write_ledger(cluster: Cluster, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LEDGER_FIELDS)
        for rid in sorted(cluster.ledger):
            r = cluster.ledger[rid]
            w.writerow(
                [
                    r.id,
                    r.arrival_s,
                    r.iterations,
                    r.outcome,
                    "" if r.vm_id is None else r.vm_id,
                    "" if r.service_time_s is None else r.service_time_s,
                ]
            )


def read_ledger(path: Path) -> list[LedgerRow]:
    rows = []
    with open(path, newline="") as fh:
        for d in csv.DictReader(fh):
            rows.append(
                LedgerRow(
                    int(d["id"]),
                    int(d["arrival_s"]),
                    int(d["iterations"]),
                    d["outcome"],
                    int(d["vm_id"]) if d["vm_id"] else None,
                    int(d["service_time_s"]) if d["service_time_s"] else None,
                )
            )
    return rows
