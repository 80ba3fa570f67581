import numpy as np
import pytest
from sklearn.base import clone

from pdmnav.params import DEFAULTS, LOWER, UPPER, MotionParams, ParamsOutOfBounds
from pdmnav.pdm import (
    HALF_RANGES, REFERENCE_COEFFS, REFERENCE_MODEL, DominanceModel, DominanceRegressor,
    DominanceScore, LabeledSample, ParamNormalizer, RankDeficientError, SurveyResponse,
    aggregate_survey, denormalize, evaluate, evaluate_many, fit, loocv, normalize,
    synthetic_samples,
)

# Hand arithmetic: (p - default) / half_range with half ranges (13.5, 19.5, 11.5, 0.85, 0.5).
NORM_CORNER = (-12 / 13.5, 30 / 19.5, 0.0, -0.5 / 0.85, -0.2 / 0.5)


def test_half_ranges_are_half_the_box():
    np.testing.assert_allclose(HALF_RANGES, [13.5, 19.5, 11.5, 0.85, 0.5])
    np.testing.assert_array_equal(DEFAULTS, [15, 10, 24, 0.8, 1.4])


@pytest.mark.parametrize("params, expected", [
    ((15, 10, 24, 0.8, 1.4), (0, 0, 0, 0, 0)),
    ((15, 10, 1, 0.8, 2.2), (0, 0, -2.0, 0, 1.6)),
    ((3, 40, 24, 0.3, 1.2), NORM_CORNER),
])
def test_normalize_examples(params, expected):
    np.testing.assert_allclose(normalize(MotionParams(*params)), expected, atol=1e-12)


def test_normalize_corner_four_decimals():
    np.testing.assert_allclose(NORM_CORNER, (-0.8889, 1.5385, 0, -0.5882, -0.4), atol=1e-4)


def test_denormalize_examples():
    assert denormalize(np.zeros(5)) == MotionParams()
    assert denormalize([0, 0, -2.0, 0, 1.6]) == MotionParams(15, 10, 1, 0.8, 2.2)
    assert denormalize([0, -0.6, 0, 0, 0], clamp=True).max_neighbors == 1
    with pytest.raises(ParamsOutOfBounds):
        denormalize([0, -0.6, 0, 0, 0])


def test_normalize_denormalize_roundtrip():
    rng = np.random.default_rng(3)
    for _ in range(50):
        x = rng.uniform(LOWER, UPPER)
        x[1] = np.round(x[1])
        p = MotionParams.from_array(x)
        np.testing.assert_allclose(denormalize(normalize(p)).as_array(), x, atol=1e-12)


@pytest.mark.parametrize("params, raw, clamped", [
    ((15, 10, 24, 0.8, 1.4), 0.0, 0.0),
    ((15, 10, 1, 0.8, 2.2), 1.044, 1.0),     # 0.41 * 2 + 0.14 * 1.6
    ((3, 40, 24, 0.3, 1.2), -0.2020, 0.0),
])
def test_evaluate_examples(params, raw, clamped):
    s = evaluate(REFERENCE_MODEL, MotionParams(*params))
    assert s.raw == pytest.approx(raw, abs=1e-4)
    assert s.clamped == clamped


def test_evaluate_defaults_exactly_zero_and_dominant_exact():
    assert evaluate(REFERENCE_MODEL, MotionParams()).raw == 0.0
    assert abs(evaluate(REFERENCE_MODEL, MotionParams(15, 10, 1, 0.8, 2.2)).raw - 1.044) <= 1e-9


def test_score_clamp_invariant():
    for raw in (-3.0, -0.2, 0.0, 0.3, 1.0, 1.7):
        s = DominanceScore.from_raw(raw)
        assert s.clamped == min(1.0, max(0.0, raw)) and s.raw == raw


def test_reference_model_coefficients():
    np.testing.assert_array_equal(REFERENCE_MODEL.coeffs, [0.01, -0.07, -0.41, 0.05, 0.14])
    assert REFERENCE_COEFFS @ REFERENCE_COEFFS == pytest.approx(0.1952, abs=1e-12)


def test_raw_score_is_linear():
    rng = np.random.default_rng(0)
    for _ in range(20):
        x, y = rng.uniform(-1, 1, 5), rng.uniform(-1, 1, 5)
        a = rng.uniform()
        mix = a * x + (1 - a) * y
        assert REFERENCE_COEFFS @ mix == pytest.approx(a * (REFERENCE_COEFFS @ x) + (1 - a) * (REFERENCE_COEFFS @ y), abs=1e-12)


@pytest.mark.parametrize("name, sign", [
    ("pref_speed", 1), ("radius", 1), ("neighbor_dist", 1),
    ("planning_horizon", -1), ("max_neighbors", -1),
])
def test_monotone_in_each_parameter(name, sign):
    grid = {
        "pref_speed": np.linspace(1.2, 2.2, 11), "radius": np.linspace(0.3, 2.0, 11),
        "neighbor_dist": np.linspace(3, 30, 11), "planning_horizon": np.linspace(1, 24, 11),
        "max_neighbors": np.arange(1, 41, 4),
    }[name]
    raws = [evaluate(REFERENCE_MODEL, MotionParams().replace(**{name: v})).raw for v in grid]
    assert np.all(sign * np.diff(raws) >= 0)


def test_evaluate_many_matches_scalar():
    X, _ = synthetic_samples(10, seed=4)
    np.testing.assert_allclose(
        evaluate_many(REFERENCE_MODEL, X),
        [evaluate(REFERENCE_MODEL, MotionParams.from_array(x)).raw for x in X], atol=1e-15,
    )


@pytest.mark.parametrize("votes, d", [
    ((1, 1, 5, 5), 1.0),   # (5 + 5 + 5 + 5 - 4) / 16
    ((3, 3, 3, 3), 0.5),
    ((5, 5, 1, 1), 0.0),
])
def test_aggregate_survey_examples(votes, d):
    assert aggregate_survey(SurveyResponse(*votes)) == pytest.approx(d, abs=1e-15)


def test_aggregate_survey_monotone_and_range():
    base = SurveyResponse(3, 3, 3, 3)
    for field, sign in (("V_dom", 1), ("V_conf", 1), ("V_sub", -1), ("V_with", -1)):
        up = SurveyResponse(**{**base.__dict__, field: 4.0})
        assert sign * (aggregate_survey(up) - aggregate_survey(base)) > 0
    with pytest.raises(ValueError):
        SurveyResponse(0.5, 3, 3, 3)


def test_labeled_sample_range():
    with pytest.raises(ValueError):
        LabeledSample(MotionParams(), 1.2)


def test_fit_recovers_exact_coefficients():
    X, y = synthetic_samples(48, seed=11)
    np.testing.assert_allclose(fit((X, y)).coeffs, REFERENCE_COEFFS, atol=1e-9)


def test_fit_accepts_labeled_samples():
    X, y = synthetic_samples(20, seed=2)
    keep = (y >= 0) & (y <= 1)
    samples = [LabeledSample(MotionParams.from_array(x), d) for x, d in zip(X[keep], y[keep])]
    np.testing.assert_allclose(fit(samples).coeffs, REFERENCE_COEFFS, atol=1e-9)


def test_fit_residuals_orthogonal_and_scale_consistent():
    X, y = synthetic_samples(48, sigma=0.15, seed=5)
    m = fit((X, y))
    Z = normalize(X)
    np.testing.assert_allclose(Z.T @ (y - Z @ m.coeffs), 0, atol=1e-8)
    np.testing.assert_allclose(fit((X, 3.0 * y)).coeffs, 3.0 * m.coeffs, atol=1e-12)


def test_fit_noisy_within_standard_error_bands():
    sigma = 0.15
    X, y = synthetic_samples(48, sigma=sigma, seed=6)
    Z = normalize(X)
    se = sigma * np.sqrt(np.diag(np.linalg.inv(Z.T @ Z)))
    assert np.all(np.abs(fit((X, y)).coeffs - REFERENCE_COEFFS) <= 3 * se)


def test_fit_underdetermined_and_rank_deficient():
    X, y = synthetic_samples(4, seed=1)
    with pytest.raises(RankDeficientError):
        fit((X, y))
    X, y = synthetic_samples(10, seed=1)
    X[:, 4] = DEFAULTS[4]  # pref_speed column normalizes to zero
    with pytest.raises(RankDeficientError) as info:
        fit((X, y))
    assert info.value.columns == (4,)


def test_loocv_noiseless_zero_and_noisy_band():
    assert loocv(synthetic_samples(48, seed=1)) == pytest.approx(0.0, abs=1e-12)
    assert 0.075 <= loocv(synthetic_samples(48, sigma=0.15, seed=1)) <= 0.30
    with pytest.raises(ValueError):
        loocv(synthetic_samples(5, seed=1))


def test_sklearn_estimators():
    X, y = synthetic_samples(30, seed=8)
    reg = DominanceRegressor().fit(X, y)
    np.testing.assert_allclose(reg.coef_, REFERENCE_COEFFS, atol=1e-9)
    assert reg.score(X, y) == pytest.approx(1.0)
    clipped = clone(reg).set_params(clip_output=True).fit(X, y).predict(X)
    assert clipped.min() >= 0 and clipped.max() <= 1
    est = DominanceRegressor.from_model(REFERENCE_MODEL)
    np.testing.assert_allclose(est.predict(X), evaluate_many(REFERENCE_MODEL, X))
    norm = ParamNormalizer().fit(X)
    np.testing.assert_allclose(norm.inverse_transform(norm.transform(X)), X, atol=1e-12)


def test_model_equality():
    assert DominanceModel() == REFERENCE_MODEL
    assert DominanceModel(REFERENCE_COEFFS * 2) != REFERENCE_MODEL


def test_params_bounds_and_clip():
    with pytest.raises(ParamsOutOfBounds):
        MotionParams(pref_speed=3.0)
    with pytest.raises(ParamsOutOfBounds):
        MotionParams(max_neighbors=2.5)
    p = MotionParams.clipped([100, 0.4, -5, 0.1, 9])
    assert p.as_array().tolist() == [30, 1, 1, 0.3, 2.2]
    assert MotionParams(pref_speed=2.0).max_speed == pytest.approx(2.5)
    with pytest.raises(KeyError):
        MotionParams.from_mapping({"speed": 1})
