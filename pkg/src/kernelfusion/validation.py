"""Input validation helpers used by constructors and estimators."""

from __future__ import annotations

import numpy as np


def as_float_array(x, name="value"):
    """Coerce to a float64 array and reject NaN/inf entries."""
    arr = np.asarray(x, dtype=float)
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must contain only finite values")
    return arr


def as_point_matrix(x, input_dim, name="points"):
    """Normalize points to shape (n, input_dim).

    Accepts a scalar (input_dim 1), a 1-D array (a list of points when
    input_dim is 1, a single point otherwise), or an (n, input_dim) array.
    Returns the matrix together with a flag telling whether the input was
    a single point.
    """
    arr = as_float_array(x, name)
    if arr.ndim == 0:
        if input_dim != 1:
            raise ValueError(f"{name}: scalar given but input dimension is {input_dim}")
        return arr.reshape(1, 1), True
    if arr.ndim == 1:
        if input_dim == 1:
            return arr.reshape(-1, 1), False
        if arr.shape[0] != input_dim:
            raise ValueError(
                f"{name}: expected a point of dimension {input_dim}, got shape {arr.shape}"
            )
        return arr.reshape(1, -1), True
    if arr.ndim == 2:
        if arr.shape[1] != input_dim:
            raise ValueError(
                f"{name}: expected shape (n, {input_dim}), got {arr.shape}"
            )
        return arr, False
    raise ValueError(f"{name}: expected at most 2 dimensions, got {arr.ndim}")


def as_output_vector(y, m=None, name="outputs"):
    """Normalize regression targets to a finite 1-D float array."""
    arr = as_float_array(y, name)
    arr = arr.reshape(-1)
    if m is not None and arr.shape[0] != m:
        raise ValueError(f"{name}: expected length {m}, got {arr.shape[0]}")
    return arr


def check_positive(value, name="value"):
    """Require a finite, strictly positive scalar."""
    v = float(value)
    if not np.isfinite(v) or v <= 0:
        raise ValueError(f"{name} must be a finite positive number, got {value!r}")
    return v


def check_nonnegative(value, name="value"):
    """Require a finite scalar >= 0."""
    v = float(value)
    if not np.isfinite(v) or v < 0:
        raise ValueError(f"{name} must be a finite nonnegative number, got {value!r}")
    return v
