"""Motion-model parameter vector shared by every module."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

PARAM_NAMES = (
    "neighbor_dist",
    "max_neighbors",
    "planning_horizon",
    "radius",
    "pref_speed",
)

LOWER = np.array([3.0, 1.0, 1.0, 0.3, 1.2])
UPPER = np.array([30.0, 40.0, 24.0, 2.0, 2.2])
DEFAULTS = np.array([15.0, 10.0, 24.0, 0.8, 1.4])

# ORCA needs a bounded velocity disc; pedestrians may briefly exceed their
# preferred speed while avoiding.
MAX_SPEED_FACTOR = 1.25


class ParamsOutOfBounds(ValueError):
    pass


@dataclass(frozen=True)
class MotionParams:
    """RVO behaviour parameters of one agent.

    Construction validates against the table bounds. Use :meth:`clipped`
    to project arbitrary values into the box instead.
    """

    neighbor_dist: float = 15.0
    max_neighbors: int = 10
    planning_horizon: float = 24.0
    radius: float = 0.8
    pref_speed: float = 1.4

    def __post_init__(self):
        values = self.as_array()
        if not np.all(np.isfinite(values)):
            raise ParamsOutOfBounds(f"non-finite motion parameters: {values}")
        if float(self.max_neighbors) != int(self.max_neighbors):
            raise ParamsOutOfBounds(
                f"max_neighbors must be an integer, got {self.max_neighbors}"
            )
        object.__setattr__(self, "max_neighbors", int(self.max_neighbors))
        bad = [
            f"{name}={value:g} not in [{lo:g}, {hi:g}]"
            for name, value, lo, hi in zip(PARAM_NAMES, values, LOWER, UPPER)
            if value < lo or value > hi
        ]
        if bad:
            raise ParamsOutOfBounds("; ".join(bad))

    @classmethod
    def from_array(cls, values, clamp: bool = False) -> "MotionParams":
        values = np.asarray(values, dtype=float).reshape(-1)
        if values.shape != (5,):
            raise ValueError(f"expected 5 motion parameters, got {values.shape[0]}")
        if clamp:
            return cls.clipped(values)
        return cls(
            float(values[0]),
            values[1],
            float(values[2]),
            float(values[3]),
            float(values[4]),
        )

    @classmethod
    def clipped(cls, values) -> "MotionParams":
        """Clip into the table box and round max_neighbors."""
        values = np.asarray(values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(values)):
            raise ParamsOutOfBounds(f"non-finite motion parameters: {values}")
        values = np.clip(values, LOWER, UPPER)
        return cls(
            float(values[0]),
            int(np.clip(np.round(values[1]), LOWER[1], UPPER[1])),
            float(values[2]),
            float(values[3]),
            float(values[4]),
        )

    @classmethod
    def from_mapping(cls, mapping, clamp: bool = False) -> "MotionParams":
        unknown = set(mapping) - set(PARAM_NAMES)
        if unknown:
            raise KeyError(f"unknown motion parameters: {sorted(unknown)}")
        values = DEFAULTS.copy()
        for k, name in enumerate(PARAM_NAMES):
            if name in mapping:
                values[k] = float(mapping[name])
        return cls.from_array(values, clamp=clamp)

    def as_array(self) -> np.ndarray:
        return np.array([float(getattr(self, f.name)) for f in fields(self)])

    def as_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> "MotionParams":
        return self.from_mapping({**self.as_dict(), **changes})

    @property
    def max_speed(self) -> float:
        return MAX_SPEED_FACTOR * self.pref_speed


DEFAULT_PARAMS = MotionParams()
