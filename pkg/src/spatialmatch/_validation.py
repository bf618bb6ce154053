"""Input validation helpers shared by the functional API and the estimators."""

import numbers

import numpy as np
from sklearn.utils import check_array, check_scalar


class PreconditionError(ValueError):
    """An operation was called outside its documented domain."""


def check_positions(x, *, ell=None, name="positions"):
    """Validate a 1-D array of coordinates and return it as float64.

    Accepts lists, 1-D arrays, or single-column 2-D arrays (the shape
    scikit-learn estimators receive).
    """
    arr = check_array(
        x, ensure_2d=False, ensure_min_samples=0, dtype=np.float64, input_name=name
    )
    if arr.ndim == 2:
        if arr.shape[1] != 1:
            raise ValueError(f"{name} must be 1-D or a single column, got shape {arr.shape}")
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if ell is not None and arr.size and (arr.min() < 0.0 or arr.max() > ell):
        raise ValueError(f"{name} must lie in [0, {ell}]")
    return np.ascontiguousarray(arr)


def check_ell(ell):
    return check_scalar(
        ell, "ell", numbers.Real, min_val=0.0, include_boundaries="neither"
    )


def check_count(value, name):
    return check_scalar(value, name, numbers.Integral, min_val=0)


def check_nu(nu, *, allow_none=True):
    if nu is None:
        if allow_none:
            return None
        raise ValueError("nu is required")
    if not isinstance(nu, numbers.Real) or isinstance(nu, bool):
        raise TypeError(f"nu must be a real number, got {type(nu).__name__}")
    if not np.isfinite(nu) or nu < 0:
        raise ValueError(f"nu must be a finite value >= 0, got {nu}")
    return float(nu)


def check_permutation(perm, n):
    arr = np.asarray(perm)
    if arr.ndim != 1 or arr.size != n:
        raise ValueError(f"permutation must have length {n}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        raise ValueError("permutation entries must be integers")
    arr = arr.astype(np.int64, copy=False)
    if not np.array_equal(np.sort(arr), np.arange(n)):
        raise ValueError("permutation is not a bijection on 0..n-1")
    return arr
