"""Soft shadow mask construction and manipulation.

A soft mask is an (H, W) float array with 0 = lit, 1 = umbra and values in
between marking penumbra.
"""

from dataclasses import dataclass
import json
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from ._validation import (
    check_image,
    check_map,
    check_mask,
    check_same_shape,
    check_thresholds,
)
from .imagecore import gaussian_blur, to_luma

RATIO_EPS = 1e-4
DEFAULT_T = 0.76
DEFAULT_SIGMA = 1.5
DEFAULT_T_LIT = 0.98
DEFAULT_T1 = 0.1
DEFAULT_T2 = 0.9


@dataclass(frozen=True)
class PenumbraSet:
    """Pixels with ``t1 <= s <= t2`` and the mean of their coordinates.

    ``rows``/``cols`` are integer index arrays; ``centroid`` is ``(row, col)``
    or None for an empty set.
    """

    rows: np.ndarray
    cols: np.ndarray
    t1: float
    t2: float
    shape: tuple
    centroid: tuple | None

    @property
    def empty(self):
        return self.rows.size == 0

    def __len__(self):
        return int(self.rows.size)

    def to_dict(self, include_coords=False):
        d = {
            "t1": self.t1,
            "t2": self.t2,
            "member_count": len(self),
            "empty": self.empty,
            "centroid": None if self.centroid is None else [float(c) for c in self.centroid],
        }
        if include_coords:
            d["coords"] = [[int(i), int(j)] for i, j in zip(self.rows, self.cols)]
        return d

    def to_json(self, include_coords=False):
        return json.dumps(self.to_dict(include_coords), indent=2)


@dataclass(frozen=True)
class RegionPartition:
    """Disjoint lit / penumbra / umbra boolean maps."""

    lit: np.ndarray
    penumbra: np.ndarray
    umbra: np.ndarray
    t1: float
    t2: float

    @property
    def shadow(self):
        return self.penumbra | self.umbra

    @property
    def non_shadow(self):
        return self.lit


class ExtractionResult(NamedTuple):
    mask: np.ndarray
    illumination: float
    no_shadow: bool
    params: dict


def ratio_map(x_luma, y_luma, t=DEFAULT_T, sigma=DEFAULT_SIGMA, eps=RATIO_EPS):
    """Floored, low-pass filtered luma ratio ``max(t, blur(x_Y / y_Y))``.

    This is the raw ratio form: values start at `t` and are unbounded above,
    1 in lit areas and ``1 / a`` in umbra. Use :func:`extract_soft_mask` for
    a [0, 1] mask.
    """
    x_luma = check_map(x_luma, "x_luma")
    y_luma = check_map(y_luma, "y_luma")
    check_same_shape(x_luma, y_luma, ("x_luma", "y_luma"))
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    rho = x_luma / np.maximum(y_luma, eps)
    return np.maximum(t, gaussian_blur(rho, sigma))


def extract_soft_mask(
    x,
    y,
    sigma=DEFAULT_SIGMA,
    t_lit=DEFAULT_T_LIT,
    percentile=1.0,
    delta=0.05,
    eps=RATIO_EPS,
):
    """Estimate a soft mask and illumination weight from a shadow-free /
    shadow image pair.

    The attenuation ratio ``r = blur(y_Y / x_Y)`` equals ``1 - s (1 - a)``
    under the degradation model, so with ``a`` estimated as a low percentile
    of ``r`` over shadowed pixels the mask is ``(1 - r) / (1 - a)``.

    Parameters
    ----------
    x, y : array_like, shape (H, W, 3)
        Shadow-free and shadow images.
    sigma : float
        Low-pass filter width.
    t_lit : float
        Ratios at or above this count as lit (mask forced to 0).
    percentile : float
        Percentile of shadowed ratios used as the illumination estimate.

    Returns
    -------
    ExtractionResult
        ``no_shadow`` is set (and the mask is all zero) when no pixel falls
        below `t_lit`.
    """
    x = check_image(x, "x")
    y = check_image(y, "y")
    check_same_shape(x, y, ("x", "y"))
    params = {"sigma": sigma, "t_lit": t_lit, "percentile": percentile, "delta": delta}
    ratio = to_luma(y) / np.maximum(to_luma(x), eps)
    r = gaussian_blur(np.clip(ratio, eps, 1 + delta), sigma)
    shadowed = r < t_lit
    if not shadowed.any():
        return ExtractionResult(np.zeros(r.shape), 1.0, True, params)
    a_hat = float(np.percentile(r[shadowed], percentile))
    a_hat = min(max(a_hat, 0.0), 1.0)
    denom = max(1.0 - a_hat, eps)
    s = np.clip((1.0 - r) / denom, 0.0, 1.0)
    s[~shadowed] = 0.0
    return ExtractionResult(s, a_hat, False, params)


def binarize(s, threshold=0.5):
    """1 where ``s >= threshold`` else 0 (float array)."""
    if not 0 < threshold < 1:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    s = check_mask(s)
    return (s >= threshold).astype(np.float64)


def _centroid_of(rows, cols):
    return (float(np.mean(rows)), float(np.mean(cols)))


def penumbra_set(s, t1=DEFAULT_T1, t2=DEFAULT_T2):
    """Collect pixels with ``t1 <= s <= t2`` (both bounds inclusive)."""
    check_thresholds(t1, t2)
    s = check_map(s)
    rows, cols = np.nonzero((s >= t1) & (s <= t2))
    c = _centroid_of(rows, cols) if rows.size else None
    return PenumbraSet(rows, cols, float(t1), float(t2), s.shape, c)


def region_partition(s, t1=DEFAULT_T1, t2=DEFAULT_T2):
    check_thresholds(t1, t2)
    s = check_map(s)
    lit = s < t1
    umbra = s > t2
    return RegionPartition(lit, ~lit & ~umbra, umbra, float(t1), float(t2))


PERTURB_MODES = ("dilate", "erode", "blur", "binarize", "hard-swap")


def _disk(radius):
    r = int(radius)
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return (xx**2 + yy**2) <= r * r


def perturb_mask(s, mode, magnitude):
    """Deterministic mask degradation for sensitivity studies.

    ``dilate``/``erode`` apply a max/min filter of radius ``round(magnitude)``
    over a square footprint, ``blur`` a Gaussian with sigma = `magnitude`,
    ``binarize`` thresholds at `magnitude`, and ``hard-swap`` replaces the
    mask by its binarization at 0.5 when `magnitude` > 0.
    """
    if mode not in PERTURB_MODES:
        raise ValueError(f"unknown perturbation mode {mode!r}; expected one of {PERTURB_MODES}")
    if magnitude < 0:
        raise ValueError("magnitude must be >= 0")
    s = check_mask(s)
    if mode == "binarize":
        return binarize(s, magnitude)
    if magnitude == 0:
        return s.copy()
    if mode == "dilate":
        size = 2 * int(round(magnitude)) + 1
        out = ndimage.maximum_filter(s, size=size, mode="nearest")
    elif mode == "erode":
        size = 2 * int(round(magnitude)) + 1
        out = ndimage.minimum_filter(s, size=size, mode="nearest")
    elif mode == "blur":
        out = gaussian_blur(s, magnitude)
    else:
        out = binarize(s, 0.5)
    return np.clip(out, 0.0, 1.0)


def centroid(ps, mode="global"):
    """Centroid(s) of a penumbra set.

    ``global`` returns the single mean over all members. ``per-component``
    splits members into 8-connected components and returns one centroid per
    component, ordered by label. Each entry is ``(point, (rows, cols))``.
    """
    if ps.empty:
        raise ValueError("centroid of an empty penumbra set is undefined")
    if mode == "global":
        return [(ps.centroid, (ps.rows, ps.cols))]
    if mode != "per-component":
        raise ValueError(f"unknown centroid mode {mode!r}")
    member = np.zeros(ps.shape, dtype=bool)
    member[ps.rows, ps.cols] = True
    labels, n = ndimage.label(member, structure=np.ones((3, 3), dtype=bool))
    lab = labels[ps.rows, ps.cols]
    out = []
    for k in range(1, n + 1):
        sel = lab == k
        r, c = ps.rows[sel], ps.cols[sel]
        out.append((_centroid_of(r, c), (r, c)))
    return out


def penumbra_border_band(s, width=3):
    """Pixels within `width` px of the lit/penumbra or penumbra/umbra interface.

    Used to exclude the transition zones where blur bias concentrates when
    comparing an extracted mask against a reference.
    """
    s = check_mask(s)
    struct = _disk(width)
    band = np.zeros(s.shape, dtype=bool)
    for region in (s <= 0.0, s >= 1.0):
        if region.any() and not region.all():
            inner = ndimage.binary_dilation(region, struct)
            outer = ndimage.binary_dilation(~region, struct)
            band |= inner & outer
    return band
