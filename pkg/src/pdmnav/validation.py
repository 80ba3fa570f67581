"""Input validation helpers in the spirit of sklearn.utils.validation."""

import numpy as np
from sklearn.utils.validation import check_array


def check_params_matrix(X) -> np.ndarray:
    """Validate an (n, 5) array of raw motion-parameter rows."""
    X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_all_finite=True)
    if X.shape[1] != 5:
        raise ValueError(f"expected 5 motion-parameter columns, got {X.shape[1]}")
    return X


def check_vector(v, size: int, name: str = "vector") -> np.ndarray:
    v = np.array(v, dtype=float).reshape(-1)
    if v.shape != (size,):
        raise ValueError(f"{name} must have {size} entries, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite")
    return v


def check_point(p, name: str = "point") -> np.ndarray:
    return check_vector(p, 2, name)
