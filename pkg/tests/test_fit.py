import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gvo.fit import (
    FitError,
    GompertzParams,
    RatioObservation,
    calibrate,
    derive_observations,
    evaluate,
)


def test_limit_is_amplitude():
    p = GompertzParams(0.85, 5.0, 2.0)
    assert evaluate(p, 1e6) == pytest.approx(0.85, abs=1e-12)


def test_value_at_zero():
    p = GompertzParams(0.85, 5.0, 2.0)
    assert evaluate(p, 0.0) == pytest.approx(0.85 * math.exp(-5.0), rel=1e-12)


def test_scalar_arithmetic_example():
    p = GompertzParams(0.9, 5.0, 2.0)
    expected = 0.9 * math.exp(-5.0 * math.exp(-2.0))
    assert expected == pytest.approx(0.457473, abs=1e-6)
    assert evaluate(p, 1.0) == pytest.approx(expected, rel=1e-12)


def test_clamped_to_unit_interval():
    p = GompertzParams(1.0, 0.0, 2.0)
    assert evaluate(p, -50.0) <= 1.0
    assert evaluate(p, 1e9) == 1.0


@settings(max_examples=200, deadline=None)
@given(
    a=st.floats(0.0, 1.0),
    b=st.floats(0.0, 20.0),
    c=st.floats(0.01, 10.0),
    x1=st.floats(-5.0, 20.0),
    dx=st.floats(0.0, 10.0),
)
def test_monotone_in_x_for_positive_c(a, b, c, x1, dx):
    p = GompertzParams(a, b, c)
    assert evaluate(p, x1 + dx) >= evaluate(p, x1) - 1e-15


def test_invalid_params_rejected():
    with pytest.raises(FitError):
        GompertzParams(1.5, 1.0, 1.0)
    with pytest.raises(FitError):
        GompertzParams(0.5, -1.0, 1.0)


def test_calibrate_round_trip_noise_free():
    truth = GompertzParams(0.8, 4.0, 1.5)
    xs = np.linspace(0.0, 8.0, 20)
    obs = [RatioObservation(float(x), evaluate(truth, float(x))) for x in xs]
    result = calibrate(obs)
    assert result.params.a == pytest.approx(truth.a, rel=0.05)
    assert result.params.b == pytest.approx(truth.b, rel=0.05)
    assert result.params.c == pytest.approx(truth.c, rel=0.05)
    assert result.residual < 1e-6


def test_calibrate_all_zero_ratios():
    obs = [RatioObservation(float(x), 0.0) for x in np.linspace(0, 5, 10)]
    result = calibrate(obs)
    assert evaluate(result.params, 5.0) == pytest.approx(0.0, abs=1e-3)


def test_calibrate_beats_constant_on_step_data():
    xs = np.linspace(0.0, 4.0, 16)
    ys = np.where(xs < 2.0, 0.05, 0.95)
    obs = [RatioObservation(float(x), float(y)) for x, y in zip(xs, ys)]
    result = calibrate(obs)
    best_constant = float(np.sqrt(np.sum((ys - ys.mean()) ** 2)))
    assert result.residual < best_constant


def test_calibrate_requires_spread_and_enough_points():
    obs = [RatioObservation(1.0, 0.5) for _ in range(6)]
    with pytest.raises(FitError):
        calibrate(obs)
    with pytest.raises(FitError):
        calibrate(obs[:3])


def test_calibrate_deterministic():
    truth = GompertzParams(0.6, 2.0, 0.8)
    obs = [RatioObservation(float(x), evaluate(truth, float(x))) for x in np.linspace(0, 10, 15)]
    r1 = calibrate(obs)
    r2 = calibrate(obs)
    assert r1 == r2


def _estimate_row(**overrides):
    row = {
        "l2l1LoadComp": 100.0,
        "l2l1LoadRed": 50.0,
        "l2l1LoadOversub": 2.0,
        "dramLoadUnique": 40.0,
        "dramLoadOverlap": 10.0,
        "dramLoadOvermiss": 2.0,
        "dramLoadCoverage": 0.5,
        "dramLoadRedL2": 20.0,
        "dramLoadOversub": 3.0,
        "dramStoreUnique": 8.0,
        "dramStoreUp": 12.0,
    }
    row.update(overrides)
    return row


def test_derive_observation_edges():
    estimates = {"cfg": _estimate_row()}
    # measured equals compulsory -> ratio 0 for the l1 role
    measurements = [
        {"configKey": "cfg", "level": "L2toL1", "kind": "load", "measuredBytesPerLup": 100.0}
    ]
    derived = derive_observations(measurements, estimates)
    assert derived.by_role["l1"][0].ratio == 0.0
    assert derived.by_role["l1"][0].x == 2.0
    # measured equals full up traffic -> ratio 1
    measurements[0]["measuredBytesPerLup"] = 150.0
    derived = derive_observations(measurements, estimates)
    assert derived.by_role["l1"][0].ratio == 1.0


def test_derive_dram_roles_and_skips():
    estimates = {"cfg": _estimate_row()}
    measurements = [
        {"configKey": "cfg", "level": "DRAMtoL2", "kind": "load", "measuredBytesPerLup": 35.0},
        {"configKey": "cfg", "level": "DRAMtoL2", "kind": "store", "measuredBytesPerLup": 10.0},
    ]
    derived = derive_observations(measurements, estimates)
    om = derived.by_role["overmiss"][0]
    assert om.x == -0.5  # negated coverage feeds the increasing form
    assert om.ratio == pytest.approx((35.0 - 30.0) / 10.0)
    l2 = derived.by_role["l2_load"][0]
    assert l2.x == 3.0
    assert l2.ratio == pytest.approx((35.0 - 30.0 - 2.0) / 20.0)
    store = derived.by_role["l2_store"][0]
    assert store.ratio == pytest.approx((10.0 - 8.0) / (12.0 - 8.0))
    # zero denominators are skipped, not errors
    estimates_zero = {"cfg": _estimate_row(dramLoadOverlap=0.0, dramLoadRedL2=0.0)}
    derived = derive_observations(measurements, estimates_zero)
    assert not derived.by_role["overmiss"]
    assert not derived.by_role["l2_load"]
    assert len(derived.skipped) >= 2


def test_derive_unknown_key_raises():
    with pytest.raises(FitError):
        derive_observations(
            [{"configKey": "nope", "level": "L2toL1", "kind": "load", "measuredBytesPerLup": 1.0}],
            {"cfg": _estimate_row()},
        )
