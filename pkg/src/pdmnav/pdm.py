"""Pedestrian Dominance Model.

Dominance is a linear function of the normalized motion parameters,
``raw = D . (P - defaults) / half_ranges``. The regression uses no
intercept because the inputs are offsets from the reference parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .params import DEFAULTS, LOWER, UPPER, MotionParams, ParamsOutOfBounds
from .validation import check_params_matrix, check_vector

REFERENCE_COEFFS = np.array([0.01, -0.07, -0.41, 0.05, 0.14])
HALF_RANGES = (UPPER - LOWER) / 2.0


class RankDeficientError(ValueError):
    """The normalized design matrix does not have full column rank."""

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(int(c) for c in columns)


@dataclass(frozen=True)
class NormalizationSpec:
    defaults: np.ndarray = field(default_factory=lambda: DEFAULTS.copy())
    half_ranges: np.ndarray = field(default_factory=lambda: HALF_RANGES.copy())

    def __post_init__(self):
        defaults = check_vector(self.defaults, 5, "defaults")
        half_ranges = check_vector(self.half_ranges, 5, "half_ranges")
        if np.any(half_ranges <= 0):
            raise ValueError("half_ranges must be strictly positive")
        if np.any(defaults < LOWER) or np.any(defaults > UPPER):
            raise ValueError("defaults must lie inside the parameter bounds")
        defaults.setflags(write=False)
        half_ranges.setflags(write=False)
        object.__setattr__(self, "defaults", defaults)
        object.__setattr__(self, "half_ranges", half_ranges)

    def __eq__(self, other):
        if not isinstance(other, NormalizationSpec):
            return NotImplemented
        return np.array_equal(self.defaults, other.defaults) and np.array_equal(
            self.half_ranges, other.half_ranges
        )

    __hash__ = None


DEFAULT_NORM = NormalizationSpec()


@dataclass(frozen=True)
class DominanceScore:
    raw: float
    clamped: float

    @classmethod
    def from_raw(cls, raw: float) -> "DominanceScore":
        raw = float(raw)
        return cls(raw, min(1.0, max(0.0, raw)))


@dataclass(frozen=True)
class DominanceModel:
    coeffs: np.ndarray = field(default_factory=lambda: REFERENCE_COEFFS.copy())
    norm: NormalizationSpec = DEFAULT_NORM

    def __post_init__(self):
        coeffs = check_vector(self.coeffs, 5, "coeffs")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    def __eq__(self, other):
        if not isinstance(other, DominanceModel):
            return NotImplemented
        return np.array_equal(self.coeffs, other.coeffs) and self.norm == other.norm

    __hash__ = None

    def evaluate(self, params) -> DominanceScore:
        return evaluate(self, params)


REFERENCE_MODEL = DominanceModel()


@dataclass(frozen=True)
class SurveyResponse:
    """Mean Likert ratings (1..5) of one video for the four adjectives."""

    V_sub: float
    V_with: float
    V_dom: float
    V_conf: float

    def __post_init__(self):
        for name in ("V_sub", "V_with", "V_dom", "V_conf"):
            value = float(getattr(self, name))
            if not (1.0 <= value <= 5.0):
                raise ValueError(f"{name}={value} outside the Likert range [1, 5]")


@dataclass(frozen=True)
class LabeledSample:
    params: MotionParams
    dominance: float

    def __post_init__(self):
        if not (0.0 <= self.dominance <= 1.0):
            raise ValueError(f"dominance label {self.dominance} outside [0, 1]")


def _as_array(params) -> np.ndarray:
    if isinstance(params, MotionParams):
        return params.as_array()
    return np.asarray(params, dtype=float)


def normalize(params, norm: NormalizationSpec = DEFAULT_NORM) -> np.ndarray:
    """Map parameters (one MotionParams or an (n, 5) array) to normalized offsets."""
    return (_as_array(params) - norm.defaults) / norm.half_ranges


def denormalize(vec, norm: NormalizationSpec = DEFAULT_NORM, clamp: bool = False):
    vec = check_vector(vec, 5, "normalized vector")
    values = norm.defaults + norm.half_ranges * vec
    if clamp:
        return MotionParams.clipped(values)
    # Exact round trip on in-range inputs can leave max_neighbors a hair
    # off an integer.
    nearest = np.round(values[1])
    if abs(values[1] - nearest) <= 1e-9:
        values[1] = nearest
    try:
        return MotionParams.from_array(values)
    except ParamsOutOfBounds as exc:
        raise ParamsOutOfBounds(f"denormalized parameters out of bounds: {exc}") from None


def evaluate(model: DominanceModel, params) -> DominanceScore:
    return DominanceScore.from_raw(float(model.coeffs @ normalize(params, model.norm)))


def evaluate_many(model: DominanceModel, params) -> np.ndarray:
    """Raw dominance for an (n, 5) array of parameter rows."""
    return normalize(np.atleast_2d(params), model.norm) @ model.coeffs


def aggregate_survey(r: SurveyResponse) -> float:
    """Scalar dominance label in [0, 1] from the four adjective means."""
    return ((r.V_dom + r.V_conf + 6.0 - r.V_sub + 6.0 - r.V_with) - 4.0) / 16.0


def synthetic_samples(n: int = 48, sigma: float = 0.0, seed: int = 0,
                      model: DominanceModel | None = None):
    """Parameters drawn uniformly from the box with labels ``raw + N(0, sigma^2)``.

    Returns ``(X, y)``; labels are left unclipped so noiseless sets are
    exactly linear in the normalized parameters.
    """
    if n < 1:
        raise ValueError(f"need at least one sample, got {n}")
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    model = REFERENCE_MODEL if model is None else model
    rng = np.random.default_rng(seed)
    X = rng.uniform(LOWER, UPPER, size=(n, 5))
    X[:, 1] = rng.integers(int(LOWER[1]), int(UPPER[1]) + 1, size=n)
    y = evaluate_many(model, X) + (rng.normal(0.0, sigma, size=n) if sigma > 0 else 0.0)
    return X, y


def _samples_to_arrays(samples):
    if isinstance(samples, tuple) and len(samples) == 2:
        X, y = samples
        return check_params_matrix(X), np.asarray(y, dtype=float).reshape(-1)
    samples = list(samples)
    X = np.array([s.params.as_array() for s in samples]).reshape(-1, 5)
    y = np.array([s.dominance for s in samples], dtype=float)
    return X, y


def solve_no_intercept(Z: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least-squares coefficients of y ~ Z without intercept via normal equations."""
    n, p = Z.shape
    if n < p:
        raise RankDeficientError(
            f"underdetermined: {n} samples for {p} coefficients", columns=range(n, p)
        )
    _, r, piv = scipy.linalg.qr(Z, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(n, p) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    if rank < p:
        deficient = sorted(piv[rank:])
        raise RankDeficientError(
            f"design matrix rank {rank} < {p}; deficient columns {deficient}",
            columns=deficient,
        )
    gram = Z.T @ Z
    return scipy.linalg.solve(gram, Z.T @ y, assume_a="pos")


def fit(samples, norm: NormalizationSpec = DEFAULT_NORM) -> DominanceModel:
    """Fit D by multiple linear regression on normalized parameters.

    ``samples`` is a list of LabeledSample or an ``(X, y)`` tuple of raw
    parameter rows and labels.
    """
    X, y = _samples_to_arrays(samples)
    if X.shape[0] < 5:
        raise RankDeficientError(
            f"underdetermined: need at least 5 samples, got {X.shape[0]}",
            columns=range(X.shape[0], 5),
        )
    return DominanceModel(solve_no_intercept(normalize(X, norm), y), norm)


def loocv(samples, norm: NormalizationSpec = DEFAULT_NORM) -> float:
    """Mean absolute held-out error of leave-one-out refits."""
    X, y = _samples_to_arrays(samples)
    n = X.shape[0]
    if n < 6:
        raise ValueError(f"leave-one-out needs at least 6 samples, got {n}")
    Z = normalize(X, norm)
    errors = np.empty(n)
    for i in range(n):
        keep = np.arange(n) != i
        try:
            coeffs = solve_no_intercept(Z[keep], y[keep])
        except RankDeficientError as exc:
            raise RankDeficientError(f"fold {i}: {exc}", exc.columns) from None
        errors[i] = abs(y[i] - Z[i] @ coeffs)
    return float(errors.mean())


class ParamNormalizer(TransformerMixin, BaseEstimator):
    """Stateless transformer mapping raw parameter rows to normalized offsets."""

    def __init__(self, defaults=None, half_ranges=None):
        self.defaults = defaults
        self.half_ranges = half_ranges

    def _norm(self):
        return NormalizationSpec(
            DEFAULTS if self.defaults is None else self.defaults,
            HALF_RANGES if self.half_ranges is None else self.half_ranges,
        )

    def fit(self, X, y=None):
        check_params_matrix(X)
        self.norm_ = self._norm()
        self.n_features_in_ = 5
        return self

    def transform(self, X):
        check_is_fitted(self, "norm_")
        return normalize(check_params_matrix(X), self.norm_)

    def inverse_transform(self, Z):
        check_is_fitted(self, "norm_")
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        return self.norm_.defaults + self.norm_.half_ranges * Z


class DominanceRegressor(RegressorMixin, BaseEstimator):
    """sklearn estimator form of the dominance model.

    ``X`` holds raw motion parameters (n, 5); ``predict`` returns raw
    dominance, or the [0, 1]-clamped score when ``clip_output`` is set.
    """

    def __init__(self, defaults=None, half_ranges=None, clip_output=False):
        self.defaults = defaults
        self.half_ranges = half_ranges
        self.clip_output = clip_output

    @classmethod
    def from_model(cls, model: DominanceModel, clip_output=False):
        est = cls(model.norm.defaults.copy(), model.norm.half_ranges.copy(), clip_output)
        est.model_ = model
        est.coef_ = model.coeffs.copy()
        est.n_features_in_ = 5
        return est

    def fit(self, X, y):
        X = check_params_matrix(X)
        y = np.asarray(y, dtype=float).reshape(-1)
        if y.shape[0] != X.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        norm = ParamNormalizer(self.defaults, self.half_ranges)._norm()
        self.model_ = fit((X, y), norm)
        self.coef_ = self.model_.coeffs.copy()
        self.n_features_in_ = 5
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        raw = evaluate_many(self.model_, check_params_matrix(X))
        return np.clip(raw, 0.0, 1.0) if self.clip_output else raw
