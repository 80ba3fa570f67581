import numpy as np
import pytest
from sklearn.base import clone

from pdmnav.inference import (
    MotionParamFilter, ObservationFrame, ParticleSet, PosteriorCollapse, InferenceConfig,
    SceneModel, estimate, frames_from_trajectory, infer_trajectory, init_posterior, predict,
    systematic_resample, update,
)
from pdmnav.params import LOWER, UPPER, MotionParams
from pdmnav.pdm import REFERENCE_MODEL, evaluate
from pdmnav.sim import AgentState, build_scenario, run_scenario, Termination

DT = 0.1


def lone_walker(params=MotionParams(), ticks=30):
    a = AgentState(0, (0.0, 0.0), (0.0, 0.0), (40.0, 0.0), params)
    sc = build_scenario("Custom", agents=[a], termination=Termination("max_ticks", ticks))
    return run_scenario(sc)


def test_init_posterior_examples():
    ps = init_posterior(100, seed=1)
    assert len(ps) == 100 and np.all(ps.weights == 0.01)
    assert np.all((ps.hypotheses >= LOWER) & (ps.hypotheses <= UPPER))
    np.testing.assert_array_equal(init_posterior(100, seed=1).hypotheses, ps.hypotheses)
    assert not np.array_equal(init_posterior(100, seed=2).hypotheses, ps.hypotheses)
    with pytest.raises(ValueError):
        init_posterior(1)
    with pytest.raises(ValueError):
        init_posterior(10, sigma_obs=0.0)


def test_particle_set_invariants():
    H = np.tile(MotionParams().as_array(), (3, 1))
    with pytest.raises(ValueError):
        ParticleSet(H, [0.5, 0.5, 0.5])
    with pytest.raises(ValueError):
        ParticleSet(H, [1.2, -0.2, 0.0])
    ps = ParticleSet(H, [0.5, 0.25, 0.25])
    assert 1.0 <= ps.ess <= 3.0


def test_frame_requires_target():
    with pytest.raises(KeyError):
        ObservationFrame(0.0, {1: (0, 0)}, target=2)


def test_equal_likelihoods_leave_weights_unchanged():
    # Standing neighbours of every hypothesis: with the goal at the target's
    # position every hypothesis predicts "stay put", and it does stay put.
    ps = init_posterior(50, seed=3)
    f0 = ObservationFrame(0.0, {0: (0.0, 0.0), 1: (5.0, 0.0)}, 0)
    f1 = ObservationFrame(0.1, {0: (0.0, 0.0), 1: (5.0, 0.0)}, 0, tick=1)
    nxt = update(ps, f0, f1, DT, SceneModel(goal=(0.0, 0.0)))
    np.testing.assert_allclose(nxt.weights, ps.weights, atol=1e-15)
    np.testing.assert_array_equal(nxt.hypotheses, ps.hypotheses)


def test_likelihood_prefers_the_true_speed():
    truth = MotionParams(pref_speed=1.8)
    traj = lone_walker(truth, 5)
    frames = frames_from_trajectory(traj, 0)
    H = np.array([truth.as_array(), MotionParams(pref_speed=1.2).as_array()])
    ps = ParticleSet(H, [0.5, 0.5], sigma_obs=0.1)
    nxt = update(ps, frames[1], frames[2], DT, SceneModel(goal=(40.0, 0.0)))
    assert nxt.weights[0] > nxt.weights[1]
    pred = predict(ps, frames[1], DT, SceneModel(goal=(40.0, 0.0)))
    np.testing.assert_allclose(pred[0], frames[2].positions[0], atol=1e-9)


def test_update_rejects_mismatched_frames():
    ps = init_posterior(10)
    f0 = ObservationFrame(0.0, {0: (0, 0)}, 0)
    with pytest.raises(ValueError):
        update(ps, f0, ObservationFrame(0.3, {0: (0, 0)}, 0), DT)
    with pytest.raises(ValueError):
        update(ps, f0, ObservationFrame(0.1, {0: (0, 0), 1: (1, 1)}, 1), DT)
    with pytest.raises(ValueError):
        update(ps, f0, ObservationFrame(0.1, {0: (0, 0)}, 0), 0.0)


def test_collapse_resets_to_prior_with_warning():
    ps = init_posterior(40, seed=2, sigma_obs=0.01)
    f0 = ObservationFrame(0.0, {0: (0.0, 0.0)}, 0)
    f1 = ObservationFrame(0.1, {0: (80.0, 0.0)}, 0, tick=1)
    with pytest.warns(PosteriorCollapse):
        nxt = update(ps, f0, f1, DT, SceneModel(goal=(10.0, 0.0)))
    assert np.all(nxt.weights == 1 / 40)
    assert np.all((nxt.hypotheses >= LOWER) & (nxt.hypotheses <= UPPER))


def test_systematic_resampling_is_unbiased():
    w = np.array([0.5, 0.3, 0.15, 0.05])
    K = len(w)
    rng = np.random.default_rng(0)
    counts = np.zeros(K)
    for _ in range(200):
        idx = systematic_resample(w, rng)
        c = np.bincount(idx, minlength=K)
        # systematic draws never stray more than one copy from K w
        assert np.all(np.abs(c - K * w) < 1.0 + 1e-12)
        counts += c
    np.testing.assert_allclose(counts / 200, K * w, atol=0.1)


def test_estimate_examples():
    a = MotionParams(pref_speed=1.2).as_array()
    b = MotionParams(pref_speed=2.2).as_array()
    params, std = estimate(ParticleSet(np.array([a, b]), [0.5, 0.5]))
    assert params.pref_speed == pytest.approx(1.7) and std[4] == pytest.approx(0.5)
    one = MotionParams(20, 7, 3.5, 1.1, 1.9)
    params, std = estimate(ParticleSet(np.array([one.as_array(), a]), [1.0, 0.0]))
    assert params == one and np.all(std == 0)
    params, _ = estimate(ParticleSet(np.array([[15, 6.4, 24, 0.8, 1.4], [15, 7.0, 24, 0.8, 1.4]]), [0.5, 0.5]))
    assert params.max_neighbors == 7


def test_infer_trajectory_shape_and_determinism():
    traj = lone_walker(ticks=12)
    cfg = InferenceConfig(n_particles=60, seed=4, scene=SceneModel(goal=(40.0, 0.0)))
    t1, ps1 = infer_trajectory(traj, 0, cfg)
    t2, ps2 = infer_trajectory(traj, 0, cfg)
    assert len(t1) == len(traj.ticks) and t1 == t2
    np.testing.assert_array_equal(ps1.hypotheses, ps2.hypotheses)
    assert [e.time for e in t1] == pytest.approx(list(traj.times))
    for e in t1:
        assert e.score == evaluate(REFERENCE_MODEL, e.params)


def test_infer_trajectory_errors():
    traj = lone_walker(ticks=1)
    with pytest.raises(ValueError):
        infer_trajectory(traj, 0)
    with pytest.raises(KeyError):
        infer_trajectory(lone_walker(ticks=5), 3)


def test_free_flight_speed_recovered():
    truth = MotionParams(pref_speed=1.9)
    traj = lone_walker(truth, 50)
    rng = np.random.default_rng(0)
    noisy = traj.positions + rng.normal(0, 0.05, traj.positions.shape)
    from pdmnav.sim import TrajectorySet
    obs = TrajectorySet(traj.dt, traj.ids, traj.ticks, noisy, traj.velocities)
    timeline, _ = infer_trajectory(obs, 0, InferenceConfig(sigma_obs=0.05, scene=SceneModel(goal=(40.0, 0.0))))
    assert abs(timeline[-1].params.pref_speed - 1.9) <= 0.19


@pytest.mark.xfail(strict=True, reason="50 frames of a crowded scene do not pin the parameters; see ledger")
def test_fifty_frame_recovery_in_a_crowd():
    hits = 0
    for seed in range(1, 11):
        rng = np.random.default_rng(seed)
        truth = MotionParams.clipped(LOWER + (UPPER - LOWER) * rng.random(5))
        sc = build_scenario("PassThrough", truth, seed=seed, tick_cap=49)
        traj = run_scenario(sc)
        hl = sc.initial_world().agent(sc.highlighted)
        scene = SceneModel(goal=hl.goal, obstacles=sc.obstacles, sim_seed=sc.seed)
        est = infer_trajectory(traj, sc.highlighted, InferenceConfig(seed=seed, sigma_obs=0.05, scene=scene))[0][-1]
        hits += (abs(est.params.pref_speed - truth.pref_speed) <= 0.1 * truth.pref_speed
                 and abs(est.score.clamped - evaluate(REFERENCE_MODEL, truth).clamped) <= 0.1)
    assert hits == 10


def test_motion_param_filter_estimator():
    traj = lone_walker(MotionParams(pref_speed=1.6), 15)
    f = MotionParamFilter(n_particles=80, goal=(40.0, 0.0))
    assert clone(f).get_params() == f.get_params()
    f.fit(traj, 0)
    assert isinstance(f.params_, MotionParams) and f.std_.shape == (5,)
    assert len(f.timeline_) == 16 and f.dominance_ == f.timeline_[-1].score
