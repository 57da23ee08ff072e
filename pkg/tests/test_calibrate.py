from __future__ import annotations

import numpy as np
import pytest

from rydpulse.calibrate import (
    DEFAULT_BOXES,
    OBJECTIVE_ORDER,
    CalibrationError,
    calibrate,
    calibrate_all,
    default_objectives,
    gate3_pulse1_objective,
    gate3_pulse2_objective,
    restart_points,
    triangle_pair_fidelities,
    verify_gate3,
    verify_preparation,
)

OBJECTIVES = default_objectives()


@pytest.mark.parametrize("name", OBJECTIVE_ORDER)
def test_penalty_is_small_at_reference(name):
    obj = OBJECTIVES[name]
    x = [obj.reference[k] for k in obj.free_params]
    # reference values carry four digits, so the penalty there is small but not zero
    assert 0.0 <= obj(x) < max(obj.penalty_tol, 1e-6)


@pytest.mark.parametrize("name", OBJECTIVE_ORDER)
def test_default_box_contains_reference(name):
    obj = OBJECTIVES[name]
    for k in obj.free_params:
        lo, hi = DEFAULT_BOXES[name][k]
        assert lo < obj.reference[k] < hi


@pytest.mark.slow
@pytest.mark.parametrize("perturb", [0.1, -0.1], ids=["plus10", "minus10"])
@pytest.mark.parametrize("name", OBJECTIVE_ORDER)
def test_recovers_reference_from_perturbed_start(name, perturb):
    obj = OBJECTIVES[name]
    start = {k: v * (1 + perturb) for k, v in obj.reference.items()}
    result = calibrate(obj, obj.box_around(start, 0.3), start=start)
    assert result.converged
    for k, d in result.distances().items():
        assert d <= obj.param_tol, (k, result.values[k], obj.reference[k])


def test_search_is_deterministic():
    obj = gate3_pulse1_objective()
    a = calibrate(obj, {"omega1_over_delta": (1.2, 2.0)}, restarts=4)
    b = calibrate(obj, {"omega1_over_delta": (1.2, 2.0)}, restarts=4)
    assert a == b


def test_failure_carries_best_point():
    obj = gate3_pulse1_objective()
    with pytest.raises(CalibrationError) as info:
        calibrate(obj, {"omega1_over_delta": (0.5, 0.8)}, restarts=3)
    best = info.value.best
    assert not best.converged
    assert 0.5 <= best.values["omega1_over_delta"] <= 0.8
    assert best.starts_tried == 3


def test_box_must_cover_parameters():
    obj = OBJECTIVES["sbs_pair"]
    with pytest.raises(ValueError, match="lacks"):
        calibrate(obj, {"omega_over_delta": (1.0, 2.0)})
    with pytest.raises(ValueError, match="lower < upper"):
        calibrate(obj, {"omega_over_delta": (2.0, 1.0), "eta": (-1.0, 0.0)})


def test_restart_points_are_reproducible_and_inside_box():
    lo, hi = np.array([0.0, -1.0]), np.array([1.0, 2.0])
    a = restart_points(lo, hi, 9)
    np.testing.assert_array_equal(a, restart_points(lo, hi, 9))
    np.testing.assert_allclose(a[0], [0.5, 0.5])
    assert np.all(a >= lo) and np.all(a <= hi)
    assert len({tuple(p) for p in a}) == 9


def test_box_around_handles_negative_values():
    obj = OBJECTIVES["sbs_pair"]
    box = obj.box_around({"omega_over_delta": 1.0, "eta": -0.5}, 0.3)
    assert box["eta"] == pytest.approx((-0.65, -0.35))
    assert box["omega_over_delta"] == pytest.approx((0.7, 1.3))


def test_unknown_objective_is_rejected():
    with pytest.raises(ValueError, match="unknown"):
        calibrate_all(names=["gate9"])


def test_chained_gate_calibration_closes_the_loop():
    results = calibrate_all(names=["gate3_pulse1", "gate3_pulse2"])
    assert set(results) == {"gate3_pulse1", "gate3_pulse2"}
    leak = verify_gate3(
        results["gate3_pulse1"].values["omega1_over_delta"],
        results["gate3_pulse2"].values["omega2_over_delta"],
    )
    assert max(leak.values()) < 1e-6


def test_second_pulse_objective_depends_on_first():
    # a wrong first pulse moves the optimum of the second
    good = gate3_pulse2_objective()
    bad = gate3_pulse2_objective(omega1=1.5)
    x = [good.reference["omega2_over_delta"]]
    assert bad(x) > 1e3 * good(x)


def test_verification_of_reference_preparations():
    sbs = dict(OBJECTIVES["sbs_pair"].reference)
    sbs.update(OBJECTIVES["sbs_third"].reference)
    assert min(verify_preparation("sbs", sbs).values()) > 0.999
    tri = dict(OBJECTIVES["triangle_pair"].reference)
    tri.update(OBJECTIVES["triangle_third"].reference)
    assert min(verify_preparation("triangle", tri).values()) > 0.995


def test_triangle_pair_keeps_mixed_blocks():
    fid = triangle_pair_fidelities(OBJECTIVES["triangle_pair"].reference)
    assert all(v > 0.99 for v in fid.values())


def test_result_dict_reports_distances():
    obj = gate3_pulse1_objective()
    r = calibrate(obj, DEFAULT_BOXES["gate3_pulse1"])
    d = r.to_dict()
    assert d["distance_from_reference"]["omega1_over_delta"] == pytest.approx(
        abs(d["values"]["omega1_over_delta"] - d["reference"]["omega1_over_delta"])
    )
    assert d["converged"] is True
