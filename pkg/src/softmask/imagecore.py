"""Image representations, luma conversion, filtering and difference operators.

Images are float arrays of shape (H, W, 3) with nominal range [0, 1]; scalar
maps (luma, masks) are float arrays of shape (H, W). All functions are pure
and never modify their inputs. Floating dtypes other than float64 (e.g.
``np.longdouble``) are preserved so finite-difference checks can run in
extended precision.
"""

import math
from pathlib import Path

import cv2
import numpy as np
from scipy import ndimage

from ._validation import check_image, check_map

# BT.601 full-range luma weights
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def to_luma(img):
    """Return the Y channel of an RGB image, Y = 0.299 R + 0.587 G + 0.114 B."""
    img = check_image(img)
    w = LUMA_WEIGHTS.astype(img.dtype)
    return img[..., 0] * w[0] + img[..., 1] * w[1] + img[..., 2] * w[2]


def gaussian_kernel(sigma):
    """Normalized 1-D Gaussian kernel with radius ``ceil(3 * sigma)``."""
    if not (np.isfinite(sigma) and sigma > 0):
        raise ValueError(f"sigma must be positive and finite, got {sigma}")
    radius = int(math.ceil(3 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(m, sigma):
    """Separable Gaussian blur of a scalar map with edge replication.

    Parameters
    ----------
    m : array_like, shape (H, W)
    sigma : float
        Standard deviation in pixels; must be > 0.
    """
    k = gaussian_kernel(sigma)
    m = check_map(m)
    out = ndimage.correlate1d(m, k, axis=0, mode="nearest")
    return ndimage.correlate1d(out, k, axis=1, mode="nearest")


def gradient(m):
    """Discrete gradient ``(dx, dy)`` of a scalar map.

    ``dx`` runs along columns (rightward), ``dy`` along rows (downward).
    Interior pixels use central differences, border pixels one-sided ones.
    """
    m = check_map(m, min_size=2)
    return _diff(m, axis=1), _diff(m, axis=0)


def _diff(m, axis):
    m = np.moveaxis(m, axis, -1)
    d = np.empty_like(m)
    d[..., 1:-1] = (m[..., 2:] - m[..., :-2]) / 2
    d[..., 0] = m[..., 1] - m[..., 0]
    d[..., -1] = m[..., -1] - m[..., -2]
    return np.moveaxis(d, -1, axis)


def _diff_adjoint(c, axis):
    # transpose of _diff: sum_p c[p] * _diff(m)[p] == sum_q out[q] * m[q]
    c = np.moveaxis(c, axis, -1)
    out = np.zeros_like(c)
    out[..., 2:] += c[..., 1:-1] / 2
    out[..., :-2] -= c[..., 1:-1] / 2
    out[..., 1] += c[..., 0]
    out[..., 0] -= c[..., 0]
    out[..., -1] += c[..., -1]
    out[..., -2] -= c[..., -1]
    return np.moveaxis(out, -1, axis)


def gradient_adjoint(cx, cy):
    """Adjoint of :func:`gradient`.

    Returns the map ``g`` with ``g[q] = d/dm[q] sum_p (cx[p] dx[p] + cy[p] dy[p])``,
    i.e. the pullback of per-pixel coefficients through the same stencils.
    """
    cx = np.asarray(cx)
    cy = np.asarray(cy)
    if cx.ndim != 2 or cx.shape != cy.shape or min(cx.shape) < 2:
        raise ValueError("coefficient maps must be equal-shape 2-D arrays, at least 2x2")
    return _diff_adjoint(cx, axis=1) + _diff_adjoint(cy, axis=0)


# --- PNG I/O ---------------------------------------------------------------

def _read(path):
    data = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if data is None:
        raise FileNotFoundError(f"cannot read image: {path}")
    if data.dtype == np.uint8:
        scale = 255.0
    elif data.dtype == np.uint16:
        scale = 65535.0
    else:
        raise ValueError(f"unsupported pixel type {data.dtype} in {path}")
    data = data.astype(np.float64) / scale
    if data.ndim == 3:
        if data.shape[2] == 4:
            data = data[..., :3]
        data = data[..., ::-1]  # BGR -> RGB
    return data


def _quantize(data, bits):
    maxval = 65535 if bits == 16 else 255
    q = np.floor(np.clip(data, 0.0, 1.0) * maxval + 0.5)
    return q.astype(np.uint16 if bits == 16 else np.uint8)


def _write(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), data):
        raise OSError(f"cannot write image: {path}")


def load_image(path):
    """Load an 8- or 16-bit PNG as an (H, W, 3) float image in [0, 1].

    Grayscale files are replicated across the three channels; alpha is dropped.
    """
    data = _read(path)
    if data.ndim == 2:
        data = np.repeat(data[..., None], 3, axis=2)
    return np.ascontiguousarray(data)


def save_image(path, img, bits=16):
    """Clamp to [0, 1], quantize with round-half-up and write a PNG."""
    img = check_image(img)
    _write(path, np.ascontiguousarray(_quantize(img, bits)[..., ::-1]))


def load_map(path):
    """Load a single-channel PNG as an (H, W) float map in [0, 1].

    Colour files are reduced to luma.
    """
    data = _read(path)
    if data.ndim == 3:
        data = to_luma(data)
    return np.ascontiguousarray(data)


def save_map(path, m, bits=16):
    m = check_map(m)
    _write(path, _quantize(m, bits))
