"""Input validation helpers shared by the functional API and the estimators."""

import numpy as np


def _as_float(a, name):
    arr = np.asarray(a)
    if arr.dtype.kind not in "f":
        arr = arr.astype(np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_image(img, name="image"):
    """Return `img` as a finite float array of shape (H, W, 3)."""
    arr = _as_float(img, name)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{name} must have shape (H, W, 3), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} is empty")
    return arr


def check_map(m, name="map", min_size=1):
    """Return `m` as a finite 2-D float array with both sides >= `min_size`."""
    arr = _as_float(m, name)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < min_size or arr.shape[1] < min_size:
        raise ValueError(
            f"{name} must be at least {min_size}x{min_size}, got {arr.shape}"
        )
    return arr


def check_mask(s, name="mask", min_size=1):
    """Like :func:`check_map` but also enforces 0 <= s <= 1."""
    arr = check_map(s, name, min_size=min_size)
    if arr.size and (arr.min() < 0 or arr.max() > 1):
        raise ValueError(f"{name} values must lie in [0, 1]")
    return arr


def check_region(region, shape, name="region"):
    """Return a boolean region map matching `shape` (H, W); None means all."""
    if region is None:
        return np.ones(shape, dtype=bool)
    r = np.asarray(region).astype(bool)
    if r.shape != tuple(shape):
        raise ValueError(f"{name} shape {r.shape} does not match {tuple(shape)}")
    if not r.any():
        raise ValueError(f"{name} is empty")
    return r


def check_same_shape(a, b, names=("a", "b")):
    if a.shape[:2] != b.shape[:2]:
        raise ValueError(
            f"dimension mismatch: {names[0]} {a.shape[:2]} vs {names[1]} {b.shape[:2]}"
        )


def check_thresholds(t1, t2):
    if not (0 <= t1 < t2 <= 1):
        raise ValueError(f"thresholds must satisfy 0 <= t1 < t2 <= 1, got {t1}, {t2}")
