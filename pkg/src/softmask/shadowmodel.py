"""Shadow formation model and an analytic area-light penumbra renderer.

The degradation model is ``y = a * s * x + (1 - s) * x`` with a soft mask
``s`` and an illumination weight ``a`` (a scalar, or one value per channel).
"""

from dataclasses import dataclass, field, asdict
import json
from pathlib import Path

import numpy as np

from ._validation import check_image, check_mask, check_same_shape

REMOVE_EPS = 1e-3
UMBRA_THRESHOLD = 0.95


class DegenerateInversionError(ValueError):
    """Raised when ``1 - s (1 - a)`` is too small to divide by."""

    def __init__(self, count, eps):
        self.count = int(count)
        super().__init__(
            f"{self.count} pixel(s) have 1 - s*(1 - a) < {eps}; "
            "raise the illumination weight or soften the mask"
        )


def _check_weight(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim > 1 or (a.ndim == 1 and a.shape[0] != 3):
        raise ValueError("illumination weight must be a scalar or a length-3 vector")
    if np.any(a < 0) or np.any(a > 1) or not np.all(np.isfinite(a)):
        raise ValueError(f"illumination weight must lie in [0, 1], got {a}")
    return a


def _attenuation(s, a, dtype):
    # 1 - s (1 - a), broadcast to (H, W, 3)
    return 1 - s[..., None] * (1 - a.astype(dtype))


def synthesize_shadow(x, s, a):
    """Apply the degradation model: ``y = x * (1 - s * (1 - a))``.

    No clamping is done here; clamping happens only when an image is saved.
    """
    x = check_image(x, "x")
    s = check_mask(s, "s")
    check_same_shape(x, s, ("x", "s"))
    a = _check_weight(a)
    return x * _attenuation(s, a, x.dtype)


def remove_shadow(y, s, a, eps=REMOVE_EPS):
    """Invert the degradation model, ``x_hat = y / (1 - s * (1 - a))``.

    Raises
    ------
    DegenerateInversionError
        If the denominator falls below `eps` anywhere.
    """
    y = check_image(y, "y")
    s = check_mask(s, "s")
    check_same_shape(y, s, ("y", "s"))
    a = _check_weight(a)
    denom = _attenuation(s, a, y.dtype)
    bad = np.any(denom < eps, axis=-1)
    if bad.any():
        raise DegenerateInversionError(bad.sum(), eps)
    return y / denom


def estimate_illumination(x, y, s, per_channel=False, umbra_threshold=UMBRA_THRESHOLD):
    """Least-squares illumination weight over the umbra ``{s > umbra_threshold}``.

    Minimizes ``sum (y - x (1 - s (1 - a)))^2`` which has the closed form
    ``a = 1 - sum(s x (x - y)) / sum(s^2 x^2)``. With ``per_channel=True``
    one weight per colour channel is returned. Results are clipped to [0, 1].
    """
    x = check_image(x, "x")
    y = check_image(y, "y")
    s = check_mask(s, "s")
    check_same_shape(x, y, ("x", "y"))
    check_same_shape(x, s, ("x", "s"))
    umbra = s > umbra_threshold
    if not umbra.any():
        raise ValueError(f"empty umbra: no pixel with s > {umbra_threshold}")
    su = s[umbra][:, None]
    xu, yu = x[umbra], y[umbra]
    axis = 0 if per_channel else None
    num = np.sum(su * xu * (xu - yu), axis=axis)
    den = np.sum(su**2 * xu**2, axis=axis)
    if np.any(den <= 0):
        raise ValueError("shadow-free image is zero throughout the umbra")
    a = np.clip(1 - num / den, 0.0, 1.0)
    return a if per_channel else float(a)


def coverage_fraction(d, R):
    """Fraction of a disc of radius `R` hidden by a half-plane.

    `d` is the signed distance from the disc centre to the half-plane edge,
    positive when the centre lies on the occluded side. Vectorized over `d`.
    """
    if not (np.isfinite(R) and R > 0):
        raise ValueError(f"R must be positive, got {R}")
    u = np.clip(np.asarray(d, dtype=np.float64) / R, -1.0, 1.0)
    out = (np.arccos(-u) + u * np.sqrt(1.0 - u * u)) / np.pi
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


# --- receiver textures -----------------------------------------------------

def make_texture(name, height, width):
    """Shadow-free receiver image: ``flat``, ``gradient``, ``checkerboard``
    or a path to a PNG (resized by cropping/tiling to the requested size)."""
    if name == "flat":
        img = np.empty((height, width, 3))
        img[:] = (0.8, 0.75, 0.7)
        return img
    if name == "gradient":
        ramp = np.linspace(0.3, 0.9, width)
        img = np.empty((height, width, 3))
        img[..., 0] = ramp
        img[..., 1] = 0.9 * ramp + 0.05
        img[..., 2] = np.linspace(0.9, 0.4, height)[:, None]
        return img
    if name == "checkerboard":
        ii, jj = np.mgrid[0:height, 0:width]
        cell = ((ii // 8) + (jj // 8)) % 2 == 0
        img = np.where(cell[..., None], np.array([0.85, 0.8, 0.75]), np.array([0.25, 0.3, 0.35]))
        return img.astype(np.float64)
    path = Path(name)
    if not path.exists():
        raise ValueError(f"unknown texture {name!r}: not a preset name or an existing file")
    from .imagecore import load_image

    src = load_image(path)
    reps = (-(-height // src.shape[0]), -(-width // src.shape[1]), 1)
    return np.tile(src, reps)[:height, :width].copy()


# --- scene geometry --------------------------------------------------------

@dataclass
class SceneSpec:
    """Disc area light, an occluder at normalized height ``h`` and a receiver.

    Occluder geometry is given in receiver pixel coordinates (x = column,
    y = row) as the outline of its shadow cast from the light centre:

    * ``{"type": "half_plane", "point": [x, y], "normal": [nx, ny]}`` with the
      normal pointing into the shadow,
    * ``{"type": "polygon", "vertices": [[x, y], ...]}``,
    * ``{"type": "disc", "center": [x, y], "radius": r}``.
    """

    width: int
    height: int
    light_radius: float
    occluder_height: float
    occluder: dict
    illumination_a: float | list = 0.4
    texture: str = "flat"

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("scene width and height must be >= 1")
        if not self.light_radius > 0:
            raise ValueError("light_radius must be > 0")
        if not 0 < self.occluder_height < 1:
            raise ValueError("occluder_height must lie in (0, 1)")
        _check_weight(self.illumination_a)
        kind = self.occluder.get("type")
        if kind == "half_plane":
            n = np.asarray(self.occluder["normal"], dtype=float)
            if n.shape != (2,) or not np.hypot(*n) > 0:
                raise ValueError("half-plane normal must be a non-zero 2-vector")
        elif kind == "polygon":
            v = np.asarray(self.occluder["vertices"], dtype=float)
            if v.ndim != 2 or v.shape[0] < 3 or v.shape[1] != 2 or _polygon_area(v) == 0:
                raise ValueError("polygon occluder needs >= 3 non-collinear vertices")
        elif kind == "disc":
            if not float(self.occluder["radius"]) > 0:
                raise ValueError("disc occluder radius must be > 0")
        else:
            raise ValueError(f"unknown occluder type {kind!r}")

    @property
    def effective_radius(self):
        """Penumbra half-width on the receiver, ``R * h / (1 - h)``."""
        h = self.occluder_height
        return self.light_radius * h / (1 - h)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "occluder_edge" in d and "occluder" not in d:
            edge = d.pop("occluder_edge")
            d["occluder"] = {"type": "half_plane", **edge}
        known = {"width", "height", "light_radius", "occluder_height", "occluder",
                 "illumination_a", "texture"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown scene fields: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


def _polygon_area(v):
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _polygon_signed_distance(px, py, v):
    dist = np.full(px.shape, np.inf)
    inside = np.zeros(px.shape, dtype=bool)
    n = len(v)
    for k in range(n):
        ax, ay = v[k]
        bx, by = v[(k + 1) % n]
        ex, ey = bx - ax, by - ay
        t = np.clip(((px - ax) * ex + (py - ay) * ey) / (ex * ex + ey * ey), 0, 1)
        dist = np.minimum(dist, np.hypot(px - ax - t * ex, py - ay - t * ey))
        crosses = (ay > py) != (by > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = ax + (py - ay) * ex / (by - ay)
        inside ^= crosses & (px < xint)
    return np.where(inside, dist, -dist)


def signed_distance(spec, rows, cols):
    """Signed distance of receiver points to the hard shadow outline
    (positive inside the shadow)."""
    occ = spec.occluder
    px = np.asarray(cols, dtype=np.float64)
    py = np.asarray(rows, dtype=np.float64)
    if occ["type"] == "half_plane":
        x0, y0 = map(float, occ["point"])
        nx, ny = map(float, occ["normal"])
        norm = np.hypot(nx, ny)
        return ((px - x0) * nx + (py - y0) * ny) / norm
    if occ["type"] == "disc":
        cx, cy = map(float, occ["center"])
        return float(occ["radius"]) - np.hypot(px - cx, py - cy)
    return _polygon_signed_distance(px, py, np.asarray(occ["vertices"], dtype=np.float64))


def render_mask(spec):
    """Soft mask of a scene: ``coverage_fraction(d(p), R * h / (1 - h))``."""
    rows, cols = np.mgrid[0 : spec.height, 0 : spec.width]
    d = signed_distance(spec, rows, cols)
    return coverage_fraction(d, spec.effective_radius)


def render_geometric_pair(spec):
    """Render ``(x, y, s_true, a)`` for a scene; ``y`` is noiseless."""
    s = render_mask(spec)
    x = make_texture(spec.texture, spec.height, spec.width)
    a = _check_weight(spec.illumination_a)
    a = float(a) if a.ndim == 0 else a
    return x, synthesize_shadow(x, s, a), s, a


def _preset(occluder, R, h=0.5, a=0.4, texture="flat", size=128):
    return SceneSpec(size, size, R, h, occluder, a, texture)


PRESETS = {
    "disc_soft": _preset({"type": "disc", "center": [64, 64], "radius": 36}, 8.0),
    "disc_hard": _preset({"type": "disc", "center": [64, 64], "radius": 36}, 2.0, a=0.3),
    "rect_checker": _preset(
        {"type": "polygon", "vertices": [[28, 36], [100, 36], [100, 92], [28, 92]]},
        6.0, a=0.5, texture="checkerboard"),
    "rect_gradient": _preset(
        {"type": "polygon", "vertices": [[24, 24], [104, 24], [104, 104], [24, 104]]},
        10.0, h=0.6, a=0.7, texture="gradient"),
    "halfplane_flat": _preset(
        {"type": "half_plane", "point": [64, 64], "normal": [1, 0]}, 10.0, a=0.4),
    "triangle_checker": _preset(
        {"type": "polygon", "vertices": [[20, 108], [64, 20], [108, 108]]},
        4.0, a=0.35, texture="checkerboard"),
}
