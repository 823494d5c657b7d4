"""Small input validation helpers shared by the modules."""

import math

import numpy as np

from .exceptions import ValidationError


def check_finite(value, name):
    value = float(value)
    if not math.isfinite(value):
        raise ValidationError(f"{name} must be finite, got {value!r}")
    return value


def check_positive(value, name):
    value = check_finite(value, name)
    if value <= 0:
        raise ValidationError(f"{name} must be > 0, got {value!r}")
    return value


def check_unit_open(u, name="u"):
    """Return ``u`` as a float array, requiring every entry in (0, 1)."""
    arr = np.asarray(u, dtype=float)
    if np.any(~(arr > 0.0)) or np.any(~(arr < 1.0)):
        raise ValidationError(f"{name} must lie in the open interval (0, 1)")
    return arr


def check_interval(window, name="window"):
    if len(window) != 2:
        raise ValidationError(f"{name} must be a pair (start, end)")
    lo, hi = check_finite(window[0], name), check_finite(window[1], name)
    if hi < lo:
        raise ValidationError(f"{name} end {hi} precedes start {lo}")
    return lo, hi


def check_not_below(x, floor, name):
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < floor):
        raise ValidationError(f"{name} must be >= {floor}")
    return arr


def as_1d(x, name, dtype=float):
    arr = np.asarray(x, dtype=dtype)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


def scalar_or_array(arr, like):
    """Undo the 1-d promotion when the caller passed a scalar."""
    if np.ndim(like) == 0:
        return float(arr.reshape(-1)[0]) if arr.dtype.kind == "f" else arr.reshape(-1)[0]
    return arr
