"""Processor-sharing response-time curve, knee location and utilization quantizers.

Utilization is handled in integer percent here (0..100); callers that need
fractions divide by 100 themselves.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field


class SaturationError(ValueError):
    """Occupancy at or above processor capacity (the queue never drains)."""


class NoKneeError(ValueError):
    """Target gradient too shallow for the two tangents to intersect."""


@dataclass(frozen=True)
class PSCurve:
    """T(rho) = ell / (capacity - rho) for a request of ``ell`` operations."""

    ell: float
    capacity: float

    def __post_init__(self):
        if self.ell <= 0 or self.capacity <= 0:
            raise ValueError("ell and capacity must be positive")


def response_time(curve: PSCurve, rho: float) -> float:
    if rho < 0:
        raise ValueError(f"occupancy must be non-negative, got {rho}")
    if rho >= curve.capacity:
        raise SaturationError(f"occupancy {rho} >= capacity {curve.capacity}")
    return curve.ell / (curve.capacity - rho)


def response_slope(curve: PSCurve, rho: float) -> float:
    """dT/drho = ell / (capacity - rho)**2."""
    if rho >= curve.capacity:
        raise SaturationError(f"occupancy {rho} >= capacity {curve.capacity}")
    return curve.ell / (curve.capacity - rho) ** 2


def find_knee(curve: PSCurve, target_gradient: float = 0.5) -> float:
    """Occupancy where the tangent at slope ``target_gradient`` meets the tangent at 0.

    The steep tangent touches the curve at rho* = C - sqrt(ell/g). Both tangent
    lines are intersected analytically.
    """
    ell, cap = curve.ell, curve.capacity
    slope0 = ell / cap**2
    if not target_gradient > slope0:
        raise NoKneeError(
            f"target gradient {target_gradient} must exceed the initial slope {slope0}"
        )
    rho_star = cap - math.sqrt(ell / target_gradient)
    t_star = response_time(curve, rho_star)
    t0 = ell / cap
    # t0 + slope0*rho == t_star + g*(rho - rho_star)
    return (t_star - target_gradient * rho_star - t0) / (slope0 - target_gradient)


# --------------------------------------------------------------------------
# Geometric quantizer (admission control state space)


@dataclass(frozen=True)
class GeometricLevels:
    x_tgt: int
    levels: tuple[int, ...]
    x_bnd: int

    def __post_init__(self):
        lv = self.levels
        if not lv or lv[0] != 0:
            raise ValueError("levels must start at 0")
        if any(b <= a for a, b in zip(lv, lv[1:])):
            raise ValueError("levels must be strictly ascending")
        if not (lv[-1] < self.x_tgt < self.x_bnd <= 100):
            raise ValueError("need levels[-1] < x_tgt < x_bnd <= 100")

    @property
    def n(self) -> int:
        return len(self.levels) - 1


def level_values(x_tgt: int) -> tuple[int, ...]:
    """floor((1 - 2**-j) * x_tgt) for j = 0, 1, ..., stopping at the first repeat."""
    if not 0 < x_tgt <= 100:
        raise ValueError(f"need 0 < x_tgt <= 100, got {x_tgt}")
    levels = [0]
    j = 1
    while True:
        # exact rational arithmetic: (2**j - 1) * x_tgt // 2**j
        value = ((2**j - 1) * x_tgt) // (2**j)
        if value == levels[-1]:
            break
        levels.append(value)
        j += 1
    return tuple(levels)


def geometric_levels(x_tgt: int, x_bnd: int) -> GeometricLevels:
    if not (0 < x_tgt < x_bnd <= 100):
        raise ValueError(f"need 0 < x_tgt < x_bnd <= 100, got {x_tgt}, {x_bnd}")
    return GeometricLevels(x_tgt=x_tgt, levels=level_values(x_tgt), x_bnd=x_bnd)


def beyond_boundary(levels: GeometricLevels, x: float) -> bool:
    return x > levels.x_bnd


def quantize_down(levels: GeometricLevels, x: float) -> int:
    """Largest level <= x, or x_bnd once x passes the boundary."""
    if x > levels.x_bnd:
        return levels.x_bnd
    k = bisect.bisect_right(levels.levels, x) - 1
    return levels.levels[max(k, 0)]


def quantize_up(levels: GeometricLevels, x: float) -> int:
    """Smallest level > x; x_bnd for x in (x_n, x_bnd].

    Beyond the boundary the return value is also x_bnd; use
    :func:`beyond_boundary` to tell the cases apart.
    """
    k = bisect.bisect_right(levels.levels, x)
    if k < len(levels.levels):
        return levels.levels[k]
    return levels.x_bnd


def level_index(levels: GeometricLevels, x: float) -> int:
    """Index k of the level [x_k, x_{k+1}) containing x (x <= x_bnd)."""
    return max(bisect.bisect_right(levels.levels, x) - 1, 0)


# --------------------------------------------------------------------------
# Uniform-ish quantizer (scaler state space)


@dataclass(frozen=True)
class ScalerLevels:
    x_lim: float
    boundaries: tuple[float, ...] = field(repr=False)

    @property
    def count(self) -> int:
        return len(self.boundaries)

    def interval(self, index: int) -> tuple[float, float]:
        lo = self.boundaries[index]
        hi = self.boundaries[index + 1] if index + 1 < self.count else 100.0
        return lo, hi

    def midpoint(self, index: int) -> float:
        lo, hi = self.interval(index)
        return (lo + hi) / 2


def scaler_levels(x_lim: float) -> ScalerLevels:
    """2-point levels on [0, 20), 5-point levels on [20, x_lim), one level [x_lim, 100]."""
    if not (20 < x_lim < 100):
        raise ValueError(f"need 20 < x_lim < 100, got {x_lim}")
    bounds: list[float] = list(range(0, 20, 2))
    b = 20
    while b < x_lim:
        bounds.append(b)
        b += 5
    bounds.append(x_lim)
    return ScalerLevels(x_lim=x_lim, boundaries=tuple(float(v) for v in bounds))


def quantize_scaler(levels: ScalerLevels, x: float) -> int:
    if not 0 <= x <= 100:
        raise ValueError(f"utilization out of range: {x}")
    return bisect.bisect_right(levels.boundaries, x) - 1
