import math

import numpy as np
import pytest

from mmwloc.errors import DegenerateGeometry, DimensionMismatch, EmptyParamSet
from mmwloc.geometry import (ChannelParamSet, PathParams, Scenario, location_vector,
                             olos_param_subset, params_from_scenario, scenario_from_location,
                             transformation_matrix, wrap_angle, wrap_pi)
from mmwloc.pose import solve_los

import oracles

C = 0.299792e9


def test_direct_path_on_axis_has_zero_departure():
    cp = params_from_scenario(Scenario((0, 0), (4, 0), 0.1), [1.0])
    assert cp.paths[0].aod == 0.0


def test_direct_delay_value():
    cp = params_from_scenario(Scenario((0, 0), (4, 0), 0.1), [1.0], C)
    assert cp.paths[0].delay * 1e9 == pytest.approx(13.3426, abs=5e-5)


def test_scattered_path_values():
    s = Scenario((0, 0), (4, 0), 0.1, ((1.5, 0.4),))
    cp = params_from_scenario(s, [1.0, 1.0], C)
    p = cp.paths[1]
    assert p.delay * 1e9 == pytest.approx(13.6235, abs=5e-5)
    assert p.aod == pytest.approx(0.26060, abs=5e-6)
    assert p.aoa == pytest.approx(2.88292, abs=5e-5)   # quoted value is rounded
    # independent scalar recomputation
    tau, aod, aoa = oracles.scalar_params((0, 0), (4, 0), 0.1, [(1.5, 0.4)], False, C)[0]
    assert (p.delay, p.aod, p.aoa) == pytest.approx((tau, aod, aoa), rel=1e-14)


def test_transformation_matches_numeric_jacobian():
    s = Scenario((0, 0), (4, 0), 0.1, ((1.5, 0.4), (2.0, -0.7)))
    g = [1 + 1j, 0.3 - 0.2j, -0.5j]
    T = transformation_matrix(s, C)
    Tn = oracles.numeric_transformation((0, 0), (4, 0), 0.1, [(1.5, 0.4), (2.0, -0.7)],
                                        g, True, C)
    scale = np.abs(Tn).max(axis=0, keepdims=True)
    assert np.max(np.abs(T - Tn) / scale) < 1e-6


def test_rotation_derivative_of_direct_arrival_is_minus_one():
    T = transformation_matrix(Scenario((0, 0), (3, 1), 0.4), C)
    assert T[2, 2] == -1.0


def test_delays_do_not_depend_on_rotation():
    T = transformation_matrix(Scenario((0, 0), (4, 0), 0.1, ((1.5, 0.4),)), C)
    assert np.all(T[2, 0::5] == 0.0)


def test_transformation_shapes():
    assert transformation_matrix(Scenario((0, 0), (4, 0), 0.1), C).shape == (5, 5)
    s = Scenario((0, 0), (4, 0), 0.1, ((1.5, 0.4), (1.5, 0.9), (1.5, 1.4)), los_blocked=True)
    assert transformation_matrix(s, C).shape == (15, 15)


def test_olos_subset():
    s = Scenario((0, 0), (4, 0), 0.1, ((1.5, 0.4), (1.5, 0.9)))
    cp = params_from_scenario(s.canonical(), [1, 1, 1])
    sub = olos_param_subset(cp)
    assert len(sub) == 2 and sub.olos
    assert olos_param_subset(sub) is sub
    with pytest.raises(EmptyParamSet):
        olos_param_subset(params_from_scenario(Scenario((0, 0), (4, 0), 0.1), [1]))


def test_los_round_trip():
    s = Scenario((1.0, -2.0), (4.5, 1.3), 5.9)
    pose = solve_los(params_from_scenario(s, [1.0]).paths[0], s.bs_pos)
    assert pose.position.x == pytest.approx(4.5, abs=1e-12)
    assert pose.position.y == pytest.approx(1.3, abs=1e-12)
    assert abs(wrap_pi(pose.rotation - 5.9)) < 1e-12


def test_scattered_paths_are_longer():
    s = Scenario((0, 0), (4, 0), 0.1, ((1.5, 0.4), (3.0, -1.0)))
    d = params_from_scenario(s, [1, 1, 1]).delays
    assert np.all(d[1:] > d[0])


def test_coincident_points_rejected():
    with pytest.raises(DegenerateGeometry):
        Scenario((0, 0), (0, 5e-10), 0.0)
    with pytest.raises(DegenerateGeometry):
        Scenario((0, 0), (4, 0), 0.0, ((4.0, 0.0),))


def test_canonical_sorts_by_delay():
    s = Scenario((0, 0), (4, 0), 0.1, ((1.5, 1.4), (1.5, 0.4), (1.5, 0.9)))
    d = params_from_scenario(s.canonical(), [1, 1, 1, 1]).delays
    assert np.all(np.diff(d) > 0)


def test_location_vector_round_trip():
    s = Scenario((0, 0), (4, 0), 0.1, ((1.5, 0.4), (1.5, 0.9)))
    g = np.array([1 + 2j, 3 - 1j, 0.5j])
    s2, g2 = scenario_from_location(location_vector(s, g), s.bs_pos, False, 2)
    assert s2 == s and np.array_equal(g2, g)
    with pytest.raises(DimensionMismatch):
        scenario_from_location(np.zeros(7), (0, 0), False, 2)


def test_gain_count_checked():
    with pytest.raises(DimensionMismatch):
        params_from_scenario(Scenario((0, 0), (4, 0), 0.1), [1, 1])


def test_direct_path_must_be_earliest():
    with pytest.raises(ValueError):
        ChannelParamSet((PathParams(2e-9, 0, 0), PathParams(1e-9, 0, 0)))
    ChannelParamSet((PathParams(2e-9, 0, 0), PathParams(1e-9, 0, 0)), olos=True)


def test_vector_round_trip():
    cp = ChannelParamSet((PathParams(1e-9, 0.1, 0.2, 1 + 1j), PathParams(2e-9, -0.3, 2.0, -2j)))
    assert ChannelParamSet.from_vector(cp.to_vector()) == cp


def test_angle_wrapping():
    assert wrap_angle(-0.1) == pytest.approx(2 * math.pi - 0.1)
    assert wrap_pi(math.pi) == pytest.approx(math.pi)
    assert wrap_pi(-math.pi) == pytest.approx(math.pi)
    assert wrap_pi(3 * math.pi / 2) == pytest.approx(-math.pi / 2)


def test_scenario_dict_round_trip():
    s = Scenario((0, 0), (4, 0), 0.1, ((1.5, 0.4),), False)
    assert Scenario.from_dict(s.to_dict()) == s
