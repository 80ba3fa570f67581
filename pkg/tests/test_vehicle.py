import math
from pathlib import Path as FsPath

import numpy as np
import pytest

from pdmnav.io import load_scenario
from pdmnav.pdm import REFERENCE_MODEL
from pdmnav.socialnav import select_params
from pdmnav.vehicle import (
    Decision, DominanceSign, Mode, Path, PedestrianView, ProximityConfig,
    VehicleConfig, VehicleState, _segment_distance, candidate_score, conflict_region,
    crossing_scenario, enters_conflict, ped_coefficient, proximity_cost, run_vehicle,
    vehicle_step, yield_decision,
)

SCENARIOS = FsPath(__file__).resolve().parents[1] / "scenarios"
DT = 0.1
STRAIGHT = Path(((-20.0, 0.0), (20.0, 0.0)))


def start(speed=0.0):
    return VehicleState.at_start(STRAIGHT, speed)


# -- path geometry -----------------------------------------------------------------

def test_path_lookup_and_projection():
    p = Path(((0, 0), (3, 0), (3, 4)))
    assert p.length == 7.0
    pos, heading = p.point_at(5.0)
    assert pos == (3.0, 2.0) and heading == pytest.approx(math.pi / 2)
    assert p.point_at(-1)[0] == (0.0, 0.0) and p.point_at(99)[0] == (3.0, 4.0)
    s, d = p.project((4.0, 1.0))
    assert s == pytest.approx(4.0) and d == pytest.approx(1.0)
    np.testing.assert_allclose(p.sub_polyline(1.0, 5.0), [[1, 0], [3, 0], [3, 2]])
    with pytest.raises(ValueError):
        Path(((0, 0),))
    with pytest.raises(ValueError):
        Path(((0, 0), (0, 0)))


def test_segment_distance():
    a = np.array
    assert _segment_distance(a([0., 0]), a([2., 0]), a([1., -1]), a([1., 1])) == 0.0
    assert _segment_distance(a([0., 0]), a([2., 0]), a([0., 1.5]), a([2., 1.5])) == pytest.approx(1.5)
    assert _segment_distance(a([0., 0]), a([1., 0]), a([3., 4]), a([3., 4])) == pytest.approx(math.hypot(2, 4))


# -- state -----------------------------------------------------------------------------

def test_vehicle_state_invariants():
    v = start()
    assert v.position == (-20.0, 0.0) and v.progress == 0.0 and v.remaining == 40.0
    with pytest.raises(ValueError):
        VehicleState((0.0, 0.0), 0.0, -1.0, STRAIGHT)
    with pytest.raises(ValueError):
        VehicleState((0.0, 0.6), 0.0, 1.0, STRAIGHT)
    assert VehicleState((0.0, 0.4), 0.0, 1.0, STRAIGHT).progress == pytest.approx(20.0)
    assert VehicleState((0.0, 0.0), math.pi / 2, 2.0, STRAIGHT).velocity == pytest.approx((0.0, 2.0))


def test_config_validation():
    with pytest.raises(ValueError):
        VehicleConfig(v_max=0.0)
    with pytest.raises(ValueError):
        VehicleConfig(tau_d=1.5)
    with pytest.raises(ValueError):
        ProximityConfig(s=2.0)
    with pytest.raises(ValueError):
        ProximityConfig(c_ped=-1.0)
    assert VehicleConfig(v_max=4.0).candidates == (0.0, 2.0, 4.0)


# -- proximity cost ------------------------------------------------------------------------

def test_ped_coefficient_examples():
    assert ped_coefficient(ProximityConfig(1.0, 0.0), 0.7) == 1.0
    assert ped_coefficient(ProximityConfig(1.0, 1.0), 1.0) == pytest.approx(math.exp(-1))
    assert ped_coefficient(ProximityConfig(2.0, 0.5), 0.0) == 2.0
    assert ped_coefficient(ProximityConfig(1.0, 1.0, DominanceSign.INVERTED), 1.0) == pytest.approx(math.e)
    with pytest.raises(ValueError):
        ped_coefficient(ProximityConfig(), 1.1)


def test_proximity_cost_examples():
    assert proximity_cost((2, 0), (0, 0), ProximityConfig(1.0, 0.0), 0.5) == pytest.approx(math.exp(-2))
    assert proximity_cost((0, 0), (0, 0), ProximityConfig(1.0, 1.0), 1.0) == pytest.approx(math.exp(-1))
    assert proximity_cost((14, 0), (0, 0), ProximityConfig(), 0.0) < 1e-6
    with pytest.raises(ValueError):
        proximity_cost((math.nan, 0), (0, 0), ProximityConfig(), 0.0)


def test_proximity_cost_monotone():
    grid = np.linspace(0, 1, 50)
    written = [proximity_cost((1, 1), (0, 0), ProximityConfig(1.0, 0.8), d) for d in grid]
    inverted = [proximity_cost((1, 1), (0, 0), ProximityConfig(1.0, 0.8, "Inverted"), d) for d in grid]
    assert np.all(np.diff(written) < 0) and np.all(np.diff(inverted) > 0)
    by_distance = [proximity_cost((r, 0), (0, 0), ProximityConfig(), 0.3) for r in np.linspace(0, 10, 50)]
    assert np.all(np.diff(by_distance) < 0)


# -- yield rule ------------------------------------------------------------------------------

def crosser(d, x=-15.0):
    return PedestrianView((x, -3.0), (0.0, 1.4), d)


def test_conflict_region_and_entry():
    region = conflict_region(start(), 8.0, 1.0)
    np.testing.assert_allclose(region.polyline, [[-20, 0], [-12, 0]])
    assert enters_conflict(crosser(0.5), region)
    assert not enters_conflict(crosser(0.5, x=-5.0), region)  # beyond the lookahead
    assert not enters_conflict(PedestrianView((-15.0, -3.0), (0.0, 0.0), 0.5), region)
    # tube half-width is vehicle radius plus pedestrian radius, 1.8 m
    assert enters_conflict(PedestrianView((-15.0, -1.7), (0.0, 0.0), 0.5), region)
    assert not enters_conflict(PedestrianView((-15.0, -1.9), (0.0, 0.0), 0.5), region)


def test_yield_decision_monotone_in_dominance():
    cfg = ProximityConfig(1.0, 1.0)
    decisions = [yield_decision(start(), [crosser(d)], cfg, 0.5) for d in np.linspace(0, 1, 21)]
    flips = [a is not b for a, b in zip(decisions, decisions[1:])]
    assert decisions[0] is Decision.PROCEED and decisions[-1] is Decision.YIELD and sum(flips) == 1
    assert yield_decision(start(), [crosser(0.5)], cfg, 0.5) is Decision.YIELD
    assert yield_decision(start(), [crosser(0.49)], cfg, 0.5) is Decision.PROCEED
    assert yield_decision(start(), [], cfg) is Decision.PROCEED


def test_zero_safety_variable_yields_to_everyone():
    cfg = ProximityConfig(1.0, 0.0)
    assert yield_decision(start(), [crosser(0.0)], cfg, 0.5) is Decision.YIELD


# -- speed selection ----------------------------------------------------------------------------

def test_empty_world_goes_full_speed():
    cfg = VehicleConfig()
    nxt = vehicle_step(start(), [], cfg, DT)
    assert nxt.speed == cfg.v_max and nxt.mode is Mode.PROCEED
    assert nxt.position == pytest.approx((-19.5, 0.0))


def test_yielding_stops():
    cfg = VehicleConfig(proximity=ProximityConfig(1.0, 1.0))
    nxt = vehicle_step(start(5.0), [crosser(0.9)], cfg, DT)
    assert nxt.speed == 0.0 and nxt.mode is Mode.YIELDING and nxt.position == (-20.0, 0.0)


def test_submissive_pedestrian_beside_the_path():
    cfg = VehicleConfig(proximity=ProximityConfig(1.0, 1.0))
    lateral = cfg.radius + 1.5
    ped = PedestrianView((-19.5, lateral), (0.0, 0.0), 0.0)
    # hand scores: advance - exp(-distance to the pedestrian) for advances 0, 0.25, 0.5
    hand = [a - math.exp(-math.hypot(0.5 - a, lateral)) for a in (0.0, 0.25, 0.5)]
    got = [candidate_score(start(), v, [ped], cfg, DT) for v in cfg.candidates]
    assert got == pytest.approx(hand, abs=1e-12)
    nxt = vehicle_step(start(), [ped], cfg, DT)
    assert nxt.speed == cfg.v_max


def test_unsafe_candidates_are_excluded():
    cfg = VehicleConfig(proximity=ProximityConfig(1.0, 1.0))
    ped = PedestrianView((-19.0, 1.0), (0.0, 0.0), 0.0)  # beside the path, inside 2.1 m
    scores = [candidate_score(start(), v, [ped], cfg, DT) for v in cfg.candidates]
    assert math.isfinite(scores[0]) and scores[1] == scores[2] == -math.inf
    assert vehicle_step(start(), [ped], cfg, DT).speed == 0.0


def test_speed_never_exceeds_remaining_path():
    v = VehicleState((19.9, 0.0), 0.0, 5.0, STRAIGHT)
    nxt = vehicle_step(v, [], VehicleConfig(), DT)
    assert nxt.position == pytest.approx((20.0, 0.0)) and nxt.remaining == 0.0
    assert nxt.speed == pytest.approx(1.0)


# -- closed loop -----------------------------------------------------------------------------

def test_crossing_dominant_vs_submissive():
    dom = run_vehicle(crossing_scenario(0.9, s=1.0, ped_params=select_params(REFERENCE_MODEL, 0.9).params))
    sub = run_vehicle(crossing_scenario(0.1, s=1.0, ped_params=select_params(REFERENCE_MODEL, 0.1).params))
    assert any(r.mode is Mode.YIELDING for r in dom.decisions)
    assert all(r.mode is Mode.PROCEED for r in sub.decisions)
    assert dom.completed and sub.completed
    assert all(r.max_ped_dominance == pytest.approx(0.9) for r in dom.decisions)


def test_zero_safety_variable_is_dominance_neutral():
    sc = crossing_scenario(0.9, s=0.0)
    a, b = run_vehicle(sc), run_vehicle(sc, dominance_blind=True)
    np.testing.assert_array_equal(a.trajectories.positions, b.trajectories.positions)
    np.testing.assert_array_equal(a.trajectories.velocities, b.trajectories.velocities)
    assert [(r.time, r.mode, r.chosen_speed, r.min_ped_distance) for r in a.decisions] == \
        [(r.time, r.mode, r.chosen_speed, r.min_ped_distance) for r in b.decisions]


def test_zero_safety_variable_costs_are_bitwise_blind():
    cfg = VehicleConfig(proximity=ProximityConfig(1.3, 0.0))
    for d in np.linspace(0, 1, 11):
        peds = [PedestrianView((-18.0, 3.0), (0.2, -0.1), float(d))]
        blind = [PedestrianView((-18.0, 3.0), (0.2, -0.1), 0.0)]
        for v in cfg.candidates:
            assert candidate_score(start(), v, peds, cfg, DT) == candidate_score(start(), v, blind, cfg, DT)


def test_run_is_deterministic():
    sc = crossing_scenario(0.6, s=1.0, seed=3)
    a, b = run_vehicle(sc), run_vehicle(sc)
    np.testing.assert_array_equal(a.trajectories.positions, b.trajectories.positions)
    assert a.decisions == b.decisions


@pytest.mark.parametrize("name", sorted(p.name for p in SCENARIOS.glob("vehicle_*.yaml")))
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_shipped_vehicle_scenarios_are_safe(name, seed):
    sf = load_scenario(SCENARIOS / name)
    from dataclasses import replace
    run = run_vehicle(replace(sf.vehicle, seed=seed))
    assert run.min_clearance >= -1e-9
    speeds = np.array([r.chosen_speed for r in run.decisions])
    assert np.all(speeds <= sf.vehicle.config.v_max + 1e-12)
