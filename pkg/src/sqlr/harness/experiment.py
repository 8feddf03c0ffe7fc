"""Wire workload, cluster, admission and a provisioner into one reproducible run."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .. import admission as ac
from .. import rl_core
from ..baselines import EKFModel, EKFScaler, StaticConfig, static_provision
from ..cloudsim import (
    Cluster,
    ClusterConfig,
    ThresholdAdmission,
    WorkloadProfile,
    generate_arrivals,
    simulate,
    write_ledger,
)
from ..qcurve import scaler_levels
from ..scaler import ScalerAgent, ScalerRewardParams
from ..scaler import load_table as load_scaler_table
from ..scaler import save_table as save_scaler_table
from . import report
from .config import (
    ExperimentConfig,
    default_test_profile,
    default_training_profile,
    load_profile,
)

log = logging.getLogger(__name__)

# Fixed ids for the named random sub-streams derived from the run seed.
STREAMS = {"arrivals": 1, "arrivals-train": 2, "ac": 3, "scaler": 4, "arrivals-warmup": 5}


def substream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng([seed, STREAMS[name]])


def cluster_config(cfg: ExperimentConfig) -> ClusterConfig:
    return ClusterConfig(
        cores=cfg.cores,
        core_capacity=cfg.core_capacity,
        boot_s=cfg.boot_s,
        v_max=cfg.v_max,
        count_draining=cfg.count_draining,
    )


# -- provisioners ------------------------------------------------------------


class SQLRProvisioner:
    def __init__(self, agent: ScalerAgent, epoch_s: int):
        self.agent = agent
        self.epoch_s = epoch_s
        self.rows: list[dict[str, Any]] = []

    def __call__(self, cluster: Cluster) -> None:
        t = cluster.t
        if t == 0 or t % self.epoch_s:
            return
        rec = cluster.epoch_metrics(t - self.epoch_s, t, epoch=len(self.rows))
        K = cluster.K
        state, chosen, applied = self.agent.on_epoch(rec.avg_utilization, rec.P, K)
        cluster.scale(applied)
        self.rows.append(
            {
                "epoch": rec.epoch,
                "t": t,
                "avg_utilization": rec.avg_utilization,
                "P": rec.P,
                "K": K,
                "prev_level": state.prev_level,
                "cur_level": state.cur_level,
                "chosen": chosen,
                "applied": applied,
                "convergence": self.agent.convergence(),
            }
        )


class EKFProvisioner:
    """Feeds window averages to the EKF every ``interval_s`` ticks.

    With ``utilization="offered"`` the utilization input is the work that
    arrived in the window over the pool's capacity, so demand refused by
    admission control stays visible to the filter. ``"measured"`` uses the
    VMs' own samples instead.
    """

    def __init__(self, ekf: EKFScaler, interval_s: int, cores: int, utilization: str = "offered"):
        if utilization not in ("offered", "measured"):
            raise ValueError(f"unknown utilization input {utilization!r}")
        self.ekf = ekf
        self.interval_s = interval_s
        self.cores = cores
        self.utilization = utilization
        self.rows: list[dict[str, Any]] = []
        self._done_idx = 0

    def window_response(self, cluster: Cluster, start: int, end: int) -> float:
        """Mean per-op response over completions in [start, end), scaled to a whole VM."""
        comps = cluster.completions
        per_op = []
        while self._done_idx < len(comps) and comps[self._done_idx][0] < end:
            finish, req, service = comps[self._done_idx]
            if finish >= start:
                per_op.append(service / req.iterations)
            self._done_idx += 1
        if not per_op:
            return math.nan
        # the queue model treats a VM as one server of capacity cores*core_capacity
        return float(np.mean(per_op)) / self.cores

    def __call__(self, cluster: Cluster) -> None:
        t = cluster.t
        if t == 0 or t % self.interval_s:
            return
        K = cluster.K
        if self.utilization == "offered":
            ops = sum(r.offered_ops for r in cluster.ticks[t - self.interval_s : t])
            u = ops / (self.interval_s * K * self.ekf.model.c_vm)
        else:
            u = cluster.epoch_metrics(t - self.interval_s, t).avg_utilization / 100.0
        r = self.window_response(cluster, t - self.interval_s, t)
        k_target = self.ekf.cycle(u, r, K)
        cluster.scale(k_target - K)
        x = self.ekf.state.estimate
        innov = self.ekf.last_innovation
        self.rows.append(
            {
                "cycle": len(self.rows),
                "t": t,
                "demand": float(x[0]),
                "service_demand": float(x[1]),
                "u_meas": u,
                "r_meas": r,
                "K": K,
                "K_target": k_target,
                "innov_util": float(innov[0]),
                "innov_resp": float(innov[1]),
            }
        )


# -- SQLR preparation ------------------------------------------------------------


def ac_config(cfg: ExperimentConfig) -> ac.ACConfig:
    return ac.ACConfig(
        x_tgt=cfg.x_tgt,
        x_bnd=cfg.x_bnd,
        exploration=rl_core.ExplorationParams(cfg.ac_M, cfg.eps_min),
        learning=rl_core.LearningParams(cfg.gamma),
    )


def train_ac(cfg: ExperimentConfig, episodes: int | None = None) -> ac.AdmissionAgent:
    vm = ClusterConfig(cores=cfg.ac_train_cores, core_capacity=cfg.core_capacity)
    return ac.train_admission(
        ac_config(cfg), episodes or cfg.ac_episodes, substream(cfg.seed, "ac"), vm
    )


def admission_limit(cfg: ExperimentConfig, out: Path | None = None) -> float:
    if cfg.x_lim is not None:
        return cfg.x_lim
    acfg = ac_config(cfg)
    if cfg.ac_table:
        table = ac.load_table(cfg.ac_table)
    else:
        table = train_ac(cfg).table
    if out is not None:
        ac.save_table(table, out / "ac_table.json")
        write_json(out / "ac_policy.json", ac.policy_summary(table, acfg))
    return ac.extract_admission_limit(table, acfg)


def make_scaler(cfg: ExperimentConfig, x_lim: float) -> ScalerAgent:
    table = load_scaler_table(cfg.scaler_table) if cfg.scaler_table else None
    return ScalerAgent(
        levels=scaler_levels(x_lim),
        params=ScalerRewardParams(cfg.theta, cfg.beta, cfg.r_min, cfg.p_blk),
        rng=substream(cfg.seed, "scaler"),
        exploration=rl_core.ExplorationParams(cfg.scaler_M, cfg.eps_min),
        learning=rl_core.LearningParams(cfg.gamma),
        x_bnd=cfg.x_bnd,
        N=cfg.max_step,
        v_max=cfg.v_max,
        table=table,
    )


def _train_passes(cfg, agent, x_lim, profile: WorkloadProfile, rng, passes: int) -> list[float]:
    history = []
    for _ in range(passes):
        agent.reset_episode()
        cluster = Cluster(
            cluster_config(cfg),
            initial_vms=cfg.initial_vms,
            admission=ThresholdAdmission(x_lim),
            keep_ledger=False,
        )
        simulate(cluster, generate_arrivals(profile, rng), profile.duration_s,
                 SQLRProvisioner(agent, cfg.epoch_s))
        history.append(agent.convergence())
    return history


def pretrain_scaler(
    cfg: ExperimentConfig, agent: ScalerAgent, x_lim: float, passes: int | None = None
) -> list[float]:
    """Pre-train on the training profile, then warm up on fresh draws of the test profile.

    Warm-up days use their own arrival sub-stream, so the scored run's
    arrivals are never seen during training. Returns convergence after each pass.
    """
    history = _train_passes(
        cfg, agent, x_lim,
        load_profile(cfg.training_workload, default_training_profile),
        substream(cfg.seed, "arrivals-train"),
        cfg.pretrain_passes if passes is None else passes,
    )
    history += _train_passes(
        cfg, agent, x_lim,
        load_profile(cfg.workload, default_test_profile),
        substream(cfg.seed, "arrivals-warmup"),
        cfg.warmup_passes,
    )
    return history


# -- main entry ------------------------------------------------------------------


@dataclass
class RunResult:
    config: ExperimentConfig
    cluster: Cluster
    profile: WorkloadProfile
    bundle: dict
    extras: dict = field(default_factory=dict)


def run_experiment(cfg: ExperimentConfig, out: str | Path | None = None) -> RunResult:
    """Execute one scheme on the test workload and write its raw outputs and bundle."""
    cfg.validate()
    out = Path(out or cfg.out or f"runs/{cfg.label}")
    out.mkdir(parents=True, exist_ok=True)
    profile = load_profile(cfg.workload, default_test_profile)
    arrivals = generate_arrivals(profile, substream(cfg.seed, "arrivals"))
    extras: dict[str, Any] = {}

    if cfg.scheme == "sqlr":
        x_lim = admission_limit(cfg, out)
        agent = make_scaler(cfg, x_lim)
        if cfg.scaler_table is None:
            extras["pretrain_convergence"] = pretrain_scaler(cfg, agent, x_lim)
        agent.reset_episode()
        provisioner = SQLRProvisioner(agent, cfg.epoch_s)
        initial = cfg.initial_vms
    elif cfg.scheme == "ekf":
        x_lim = admission_limit(cfg, out)
        model = EKFModel(cfg.cores * cfg.core_capacity, cfg.r_sla, cfg.v_max)
        provisioner = EKFProvisioner(
            EKFScaler(model), cfg.ekf_interval_s, cfg.cores, cfg.ekf_utilization
        )
        initial = cfg.initial_vms
    else:
        x_lim = admission_limit(cfg, out)
        provisioner = None
        initial = static_provision(StaticConfig(cfg.k_fixed, cfg.v_max))
    extras["x_lim"] = x_lim

    cluster = Cluster(cluster_config(cfg), initial_vms=initial, admission=ThresholdAdmission(x_lim))
    simulate(cluster, arrivals, profile.duration_s, provisioner)

    write_json(out / "config.json", cfg.to_dict())
    write_json(out / "profile.json", profile.to_json())
    write_ledger(cluster, out / "ledger.csv")
    write_ticks(cluster, out / "ticks.csv")
    write_vms(cluster, out / "vms.csv")
    if cfg.scheme == "sqlr":
        write_rows(out / "epochs.csv", provisioner.rows)
        save_scaler_table(provisioner.agent.table, out / "scaler_table.json")
        extras["final_convergence"] = provisioner.agent.convergence()
    elif cfg.scheme == "ekf":
        write_rows(out / "ekf_trace.csv", provisioner.rows)
        extras["ekf_recoveries"] = provisioner.ekf.recoveries
    write_json(out / "extras.json", extras)

    bundle = report.bundle_from_dir(out)
    write_json(out / "bundle.json", bundle)
    return RunResult(cfg, cluster, profile, bundle, extras)


# -- writers -------------------------------------------------------------------


def write_json(path: Path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def write_rows(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        if not rows:
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


TICK_FIELDS = ("t", "K", "active", "util_sum", "arrived", "blocked")


def write_ticks(cluster: Cluster, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TICK_FIELDS)
        for r in cluster.ticks:
            w.writerow([r.t, r.K, r.active, repr(r.util_sum), r.arrived, r.blocked])


def write_vms(cluster: Cluster, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("vm_id", "start_s", "end_s"))
        for row in cluster.vm_lifetimes():
            w.writerow(row)
