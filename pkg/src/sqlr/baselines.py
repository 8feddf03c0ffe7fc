"""Comparison provisioners: an EKF queue-model scaler and static provisioning."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class EKFModel:
    c_vm: float = 800_000.0  # ops/s per VM (cores * core_capacity)
    r_sla: float = 5e-6  # s per op
    v_max: int = 10
    max_utilization: float = 0.95  # keeps d/(1-u) finite when the estimate saturates


def default_noise(r_sla: float = 5e-6) -> tuple[np.ndarray, np.ndarray]:
    Qn = np.diag([1e4**2, 1e-8**2])
    Rn = np.diag([0.02**2, (0.2 * r_sla) ** 2])
    return Qn, Rn


@dataclass
class EKFState:
    estimate: np.ndarray  # [demand ops/s, per-op service demand s/op]
    covariance: np.ndarray
    process_noise: np.ndarray
    measurement_noise: np.ndarray


def _utilization(x: np.ndarray, K: int, model: EKFModel) -> tuple[float, bool]:
    u = x[0] / (K * model.c_vm)
    if u > model.max_utilization:
        return model.max_utilization, True
    return u, False


def measurement(x: np.ndarray, K: int, model: EKFModel) -> np.ndarray:
    """h(x) = [utilization, per-op response time d / (1 - u)]."""
    u, _ = _utilization(x, K, model)
    return np.array([x[0] / (K * model.c_vm), x[1] / (1.0 - u)])


def jacobian(x: np.ndarray, K: int, model: EKFModel) -> np.ndarray:
    u, clipped = _utilization(x, K, model)
    kc = K * model.c_vm
    d_resp_d_demand = 0.0 if clipped else x[1] / ((1.0 - u) ** 2 * kc)
    return np.array([[1.0 / kc, 0.0], [d_resp_d_demand, 1.0 / (1.0 - u)]])


def target_vms(x: np.ndarray, model: EKFModel) -> int:
    """Smallest K whose predicted per-op response stays within the SLA."""
    demand, d = float(x[0]), float(x[1])
    if demand <= 0:
        return 1
    headroom = 1.0 - d / model.r_sla
    if headroom <= 0:
        return model.v_max
    k = math.ceil(demand / (model.c_vm * headroom))
    return int(min(max(k, 1), model.v_max))


class EKFScaler:
    """Identity-dynamics EKF over [demand, service demand] feeding a queue-law sizing rule."""

    def __init__(
        self,
        model: EKFModel | None = None,
        x0=None,
        P0=None,
        Qn=None,
        Rn=None,
    ):
        self.model = model or EKFModel()
        dQ, dR = default_noise(self.model.r_sla)
        x0 = np.array([0.25 * self.model.c_vm, 1.0 / self.model.c_vm]) if x0 is None else x0
        P0 = np.diag([(2e5) ** 2, (0.5e-6) ** 2]) if P0 is None else P0
        self._x0 = np.asarray(x0, dtype=float)
        self._P0 = np.asarray(P0, dtype=float)
        self.state = EKFState(
            self._x0.copy(),
            self._P0.copy(),
            np.asarray(dQ if Qn is None else Qn, dtype=float),
            np.asarray(dR if Rn is None else Rn, dtype=float),
        )
        self.last_innovation = np.zeros(2)
        self.recoveries = 0

    def predict(self) -> None:
        self.state.covariance = self.state.covariance + self.state.process_noise

    def update(self, z, K: int) -> None:
        """Linearized update; a NaN entry in ``z`` drops that measurement row."""
        st = self.state
        z = np.asarray(z, dtype=float)
        rows = ~np.isnan(z)
        if not rows.any():
            self.last_innovation = np.full(2, np.nan)
            return
        H = jacobian(st.estimate, K, self.model)[rows]
        y = z[rows] - measurement(st.estimate, K, self.model)[rows]
        R = st.measurement_noise[np.ix_(rows, rows)]
        P = st.covariance
        S = H @ P @ H.T + R
        G = P @ H.T @ np.linalg.inv(S)
        x_new = st.estimate + G @ y
        I_GH = np.eye(2) - G @ H
        P_new = I_GH @ P @ I_GH.T + G @ R @ G.T  # Joseph form
        P_new = 0.5 * (P_new + P_new.T)
        innovation = np.full(2, np.nan)
        innovation[rows] = y
        if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(P_new))):
            raise FloatingPointError("non-finite EKF update")
        x_new[0] = max(x_new[0], 0.0)
        x_new[1] = max(x_new[1], 0.0)
        st.estimate, st.covariance = x_new, P_new
        self.last_innovation = innovation

    def cycle(self, avg_utilization: float, avg_response: float, K: int, K_prev: int | None = None) -> int:
        """One predict/update round on window-averaged measurements; returns K_target.

        ``avg_utilization`` is a fraction; ``avg_response`` is seconds per op
        (NaN when nothing completed in the window).
        """
        K_prev = K if K_prev is None else K_prev
        self.predict()
        try:
            with np.errstate(all="raise"):
                self.update([avg_utilization, avg_response], K)
        except (FloatingPointError, np.linalg.LinAlgError):
            self.state.covariance = self._P0.copy()
            self.recoveries += 1
            return K_prev
        return target_vms(self.state.estimate, self.model)


@dataclass(frozen=True)
class StaticConfig:
    K_fixed: int
    v_max: int = 10

    def __post_init__(self):
        if not 1 <= self.K_fixed <= self.v_max:
            raise ValueError(f"K_fixed must be in [1, {self.v_max}]")


def static_provision(config: StaticConfig) -> int:
    return config.K_fixed
