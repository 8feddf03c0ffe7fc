"""Experiment configuration (JSON) and the named scheme presets used by ``compare``."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from ..cloudsim import WorkloadProfile

SCHEMES = ("sqlr", "ekf", "static")


class ConfigError(ValueError):
    """Invalid or unreadable configuration."""


@dataclass
class ExperimentConfig:
    scheme: str = "sqlr"
    seed: int | None = None
    name: str | None = None
    out: str | None = None

    # workload
    workload: str | None = None  # path; None -> bundled test profile
    training_workload: str | None = None  # path; None -> bundled pre-training profile

    # cluster
    cores: int = 4
    core_capacity: float = 200_000.0
    boot_s: int = 30
    v_max: int = 10
    initial_vms: int = 1
    count_draining: bool = False
    r_sla: float = 5e-6

    # admission control
    x_tgt: int = 60
    x_bnd: int = 62
    ac_M: int = 100
    ac_episodes: int = 5000
    ac_train_cores: int = 8
    x_lim: float | None = None  # skip AC training and use this limit
    ac_table: str | None = None

    # SQLR scaler
    theta: float = 1.0
    beta: float = 0.01
    r_min: float = 0.01
    p_blk: float = 0.001
    scaler_M: int = 10
    eps_min: float = 0.01
    gamma: float = 0.9
    max_step: int = 2
    epoch_s: int = 120
    pretrain_passes: int = 30  # days of the pre-training profile
    warmup_passes: int = 10  # extra days on fresh draws of the test profile
    scaler_table: str | None = None

    # baselines
    k_fixed: int = 10
    ekf_interval_s: int = 90
    ekf_utilization: str = "offered"  # or "measured"

    def validate(self) -> "ExperimentConfig":
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.seed is None:
            raise ConfigError("a seed is required (config 'seed' or --seed)")
        if not 1 <= self.k_fixed <= self.v_max:
            raise ConfigError("k_fixed must be in [1, v_max]")
        if not 1 <= self.initial_vms <= self.v_max:
            raise ConfigError("initial_vms must be in [1, v_max]")
        if self.epoch_s <= 0 or self.ekf_interval_s <= 0:
            raise ConfigError("epoch_s and ekf_interval_s must be positive")
        for key in ("workload", "training_workload", "ac_table", "scaler_table"):
            path = getattr(self, key)
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"{key}: file not found: {path}")
        return self

    @property
    def label(self) -> str:
        return self.name or (
            f"static-{self.k_fixed}" if self.scheme == "static" else self.scheme
        )

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        base = Path(path).parent
        for key in ("workload", "training_workload", "ac_table", "scaler_table"):
            if doc.get(key) and not Path(doc[key]).is_absolute():
                doc[key] = str(base / doc[key])
        return cls.from_dict(doc)


def _bundled(name: str) -> WorkloadProfile:
    text = resources.files("sqlr.data").joinpath(name).read_text()
    return WorkloadProfile.from_json(json.loads(text))


def default_test_profile() -> WorkloadProfile:
    return _bundled("test_profile.json")


def default_training_profile() -> WorkloadProfile:
    return _bundled("training_profile.json")


def load_profile(path: str | None, fallback) -> WorkloadProfile:
    if path is None:
        return fallback()
    try:
        return WorkloadProfile.load(path)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad workload profile {path}: {exc}") from exc


PRESETS: dict[str, dict[str, Any]] = {
    "sqlr-case1": {"scheme": "sqlr", "theta": 1.0, "beta": 0.01},
    "sqlr-case2": {"scheme": "sqlr", "theta": 10.0, "beta": 0.001},
    "ekf": {"scheme": "ekf"},
    "static-2": {"scheme": "static", "k_fixed": 2},
    "static-10": {"scheme": "static", "k_fixed": 10},
}


def preset(base: ExperimentConfig, name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}")
    return base.replace(name=name, **PRESETS[name])
