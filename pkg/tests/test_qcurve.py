import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import geometric_oracle, knee_fd
from sqlr.qcurve import (
    NoKneeError,
    PSCurve,
    SaturationError,
    find_knee,
    geometric_levels,
    level_index,
    level_values,
    quantize_down,
    quantize_scaler,
    quantize_up,
    response_slope,
    response_time,
    scaler_levels,
)


def test_response_time_examples():
    c = PSCurve(1, 2)
    assert response_time(c, 0) == 0.5
    assert response_time(c, 1) == 1.0
    with pytest.raises(SaturationError):
        response_time(c, 2)


def test_curve_rejects_nonpositive():
    with pytest.raises(ValueError):
        PSCurve(0, 1)
    with pytest.raises(ValueError):
        PSCurve(1, -1)


def test_knee_reference_value():
    assert find_knee(PSCurve(1, 100), 0.5) == pytest.approx(97.2113, abs=1e-3)
    assert find_knee(PSCurve(1, 100), 0.5) == pytest.approx(knee_fd(1, 100, 0.5), rel=1e-4)


def test_knee_parallel_tangents():
    with pytest.raises(NoKneeError):
        find_knee(PSCurve(1, 2), 1 / 4)


@settings(max_examples=40, deadline=None)
@given(
    ell=st.floats(0.1, 10),
    cap=st.floats(1, 200),
    factor=st.floats(1.5, 1e4),
)
def test_knee_lies_before_touch_point(ell, cap, factor):
    g = factor * ell / cap**2
    knee = find_knee(PSCurve(ell, cap), g)
    rho_star = cap - math.sqrt(ell / g)
    assert 0 < knee < rho_star


@settings(max_examples=50, deadline=None)
@given(rho_frac=st.floats(0.01, 0.95), ell=st.floats(0.1, 5), cap=st.floats(1, 100))
def test_response_increasing_and_convex(rho_frac, ell, cap):
    c = PSCurve(ell, cap)
    r = rho_frac * cap
    h = 1e-3 * cap
    a, b, d = response_time(c, r - h), response_time(c, r), response_time(c, r + h)
    assert a < b < d
    assert a + d - 2 * b > 0
    assert response_slope(c, r) == pytest.approx((d - a) / (2 * h), rel=1e-3)


def test_geometric_levels_examples():
    assert geometric_levels(60, 62).levels == (0, 30, 45, 52, 56, 58, 59)
    assert geometric_levels(99, 100).levels == (0, 49, 74, 86, 92, 95, 97, 98)


def test_level_values_at_100():
    # x_tgt=100 leaves no room for a boundary above it, so only the values exist
    assert level_values(100) == (0, 50, 75, 87, 93, 96, 98, 99)
    with pytest.raises(ValueError):
        geometric_levels(100, 100)


@given(st.integers(2, 98))
def test_geometric_levels_shape(x_tgt):
    lv = geometric_levels(x_tgt, x_tgt + 1).levels
    assert lv[0] == 0
    assert all(a < b for a, b in zip(lv, lv[1:]))
    assert all(v < x_tgt for v in lv)
    assert list(lv) == geometric_oracle(x_tgt)


def test_quantize_examples():
    lv = geometric_levels(60, 62)
    assert quantize_down(lv, 33) == 30
    assert quantize_up(lv, 33) == 45
    assert quantize_down(lv, 0) == 0
    assert quantize_up(lv, 59.5) == 62
    assert quantize_down(lv, 70) == 62
    assert level_index(lv, 33) == 1


@given(st.floats(0, 100))
def test_quantize_properties(x):
    lv = geometric_levels(60, 62)
    d = quantize_down(lv, x)
    if x > lv.x_bnd:
        # beyond the boundary both quantizers report the x_bnd sentinel
        assert d == quantize_up(lv, x) == lv.x_bnd
        return
    assert d <= x
    assert quantize_down(lv, d) == d
    if x < lv.x_bnd:
        assert quantize_up(lv, x) > x
    else:
        assert quantize_up(lv, x) == lv.x_bnd


def test_scaler_levels_for_45():
    sl = scaler_levels(45)
    assert sl.count == 16
    assert sl.boundaries[:10] == tuple(float(v) for v in range(0, 20, 2))
    assert sl.boundaries[10:] == (20.0, 25.0, 30.0, 35.0, 40.0, 45.0)
    assert quantize_scaler(sl, 0) == 0
    assert quantize_scaler(sl, 44.9) == 14
    assert quantize_scaler(sl, 45) == 15
    assert quantize_scaler(sl, 100) == 15
    assert sl.interval(15) == (45.0, 100.0)


@given(st.integers(21, 99))
def test_scaler_levels_partition(x_lim):
    sl = scaler_levels(x_lim)
    spans = [sl.interval(i) for i in range(sl.count)]
    assert spans[0][0] == 0 and spans[-1][1] == 100
    assert all(a[1] == b[0] for a, b in zip(spans, spans[1:]))
    for x in range(101):
        scan = max(i for i, (lo, _) in enumerate(spans) if lo <= x)
        assert quantize_scaler(sl, x) == scan


def test_scaler_quantizer_range():
    with pytest.raises(ValueError):
        quantize_scaler(scaler_levels(45), 101)
    with pytest.raises(ValueError):
        scaler_levels(20)
