"""Small input-checking helpers shared by the public functions."""

import numpy as np


def as_points(points, dim=None, name="points"):
    """Return a float (n, dim) array, accepting a single vector or a list of rows."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1) if dim == 1 else arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D (n, dim), got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise ValueError(f"{name} must be nonempty")
    if dim is not None and arr.shape[1] != dim:
        raise ValueError(f"{name} has dimension {arr.shape[1]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def as_vector(x, dim=None, name="x"):
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a vector, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"{name} has length {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def check_positive(value, name, allow_zero=False):
    value = float(value)
    if not np.isfinite(value):
        raise ValueError(f"{name} must be finite")
    if allow_zero:
        if value < 0:
            raise ValueError(f"{name} must be >= 0, got {value}")
    elif value <= 0:
        raise ValueError(f"{name} must be > 0, got {value}")
    return value


def check_box(domain, dim):
    """Validate a (lo, hi) axis-aligned box; None means all of R^n."""
    if domain is None:
        return None
    lo, hi = domain
    lo = as_vector(lo, dim, "domain lower bound")
    hi = as_vector(hi, dim, "domain upper bound")
    if np.any(hi < lo):
        raise ValueError("domain upper bound below lower bound")
    return lo, hi
