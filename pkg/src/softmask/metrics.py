"""Full-reference quality metrics with region restriction.

PSNR and SSIM operate on [0, 1] data. MAE defaults to CIELAB (D65, sRGB
transfer curve), which is the usual convention for shadow removal results;
:func:`mae_rgb` gives the 0-255 RGB variant.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import csv
import io
import json
import math

import numpy as np
from scipy import ndimage

from ._validation import check_image, check_mask, check_region, check_same_shape, check_thresholds
from .maskops import DEFAULT_T1, DEFAULT_T2, _disk, perturb_mask, region_partition
from .shadowmodel import DegenerateInversionError, estimate_illumination, remove_shadow

SCHEMA_VERSION = 1

SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
PENUMBRA_DILATION = 5


def _pair(a, b):
    a = check_image(a, "a")
    b = check_image(b, "b")
    check_same_shape(a, b)
    return a, b


def psnr(a, b, region=None):
    """Peak signal-to-noise ratio in dB for data range 1.

    Returns ``inf`` when the images agree on the region.
    """
    a, b = _pair(a, b)
    r = check_region(region, a.shape[:2])
    mse = np.mean((a[r] - b[r]) ** 2)
    if mse == 0:
        return math.inf
    return float(10 * np.log10(1.0 / mse))


def _ssim_window():
    x = np.arange(SSIM_WIN) - SSIM_WIN // 2
    w = np.exp(-(x**2) / (2 * SSIM_SIGMA**2))
    return w / w.sum()


def ssim_map(a, b):
    """Channel-averaged SSIM map for windows lying fully inside the image.

    The returned map has shape ``(H - 10, W - 10)``; entry ``[i, j]`` belongs
    to the window centred on pixel ``(i + 5, j + 5)``.
    """
    a, b = _pair(a, b)
    H, W = a.shape[:2]
    if H < SSIM_WIN or W < SSIM_WIN:
        raise ValueError(f"SSIM needs images of at least {SSIM_WIN}x{SSIM_WIN}, got {H}x{W}")
    w = _ssim_window()
    h = SSIM_WIN // 2
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2

    def filt(m):
        out = ndimage.correlate1d(m, w, axis=0, mode="nearest")
        out = ndimage.correlate1d(out, w, axis=1, mode="nearest")
        return out[h : H - h, h : W - h]

    total = np.zeros((H - 2 * h, W - 2 * h))
    for ch in range(3):
        x, y = a[..., ch], b[..., ch]
        mx, my = filt(x), filt(y)
        sxx = filt(x * x) - mx * mx
        syy = filt(y * y) - my * my
        sxy = filt(x * y) - mx * my
        num = (2 * mx * my + c1) * (2 * sxy + c2)
        den = (mx * mx + my * my + c1) * (sxx + syy + c2)
        total += num / den
    return total / 3


def ssim(a, b, region=None):
    """Mean SSIM (11x11 Gaussian window, sigma 1.5, K1 0.01, K2 0.03).

    With `region`, the SSIM map is averaged over region pixels that are
    valid window centres.
    """
    a, b = _pair(a, b)
    r = check_region(region, a.shape[:2])
    m = ssim_map(a, b)
    h = SSIM_WIN // 2
    rc = r[h : r.shape[0] - h, h : r.shape[1] - h]
    if not rc.any():
        raise ValueError("region has no pixel at least 5 px from the image border")
    return float(np.mean(m[rc]))


# sRGB (D65) -> XYZ
_RGB2XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_WHITE = _RGB2XYZ.sum(axis=1)


def rgb_to_lab(img):
    """Convert gamma-encoded sRGB in [0, 1] to CIELAB (D65 white)."""
    img = np.clip(check_image(img).astype(np.float64), 0.0, 1.0)
    lin = np.where(img <= 0.04045, img / 12.92, ((img + 0.055) / 1.055) ** 2.4)
    xyz = lin @ _RGB2XYZ.T / _WHITE
    eps = (6 / 29) ** 3
    f = np.where(xyz > eps, np.cbrt(xyz), xyz / (3 * (6 / 29) ** 2) + 4 / 29)
    L = 116 * f[..., 1] - 16
    a = 500 * (f[..., 0] - f[..., 1])
    b = 200 * (f[..., 1] - f[..., 2])
    return np.stack([L, a, b], axis=-1)


def mae_lab(a, b, region=None):
    """Mean absolute CIELAB difference, averaged over L, a, b and region pixels."""
    a, b = _pair(a, b)
    r = check_region(region, a.shape[:2])
    diff = np.abs(rgb_to_lab(a) - rgb_to_lab(b))
    return float(np.mean(diff[r]))


def mae_rgb(a, b, region=None):
    """Mean absolute RGB difference on the 0-255 scale."""
    a, b = _pair(a, b)
    r = check_region(region, a.shape[:2])
    return float(np.mean(np.abs(a[r] - b[r])) * 255)


# --- reports ---------------------------------------------------------------

def _num(v):
    if v is None:
        return None
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _unnum(v):
    if v == "inf":
        return math.inf
    if v == "-inf":
        return -math.inf
    return v


@dataclass
class RegionMetrics:
    psnr: float
    ssim: float | None
    mae: float
    pixel_count: int

    def to_dict(self):
        return {"psnr": _num(self.psnr), "ssim": _num(self.ssim),
                "mae": self.mae, "pixel_count": self.pixel_count}

    @classmethod
    def from_dict(cls, d):
        return cls(_unnum(d["psnr"]), _unnum(d["ssim"]), d["mae"], d["pixel_count"])


REGIONS = ("shadow", "non_shadow", "all", "penumbra")


@dataclass
class MetricsReport:
    """Per-region metrics; a region that is empty maps to None (absent)."""

    regions: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.regions.get(name)

    def to_dict(self):
        return {
            name: (None if self.regions.get(name) is None else self.regions[name].to_dict())
            for name in REGIONS
            if name in self.regions
        }

    @classmethod
    def from_dict(cls, d):
        return cls({k: (None if v is None else RegionMetrics.from_dict(v)) for k, v in d.items()})


def _region_metrics(x_hat, x, region, with_ssim=True):
    ss = None
    if with_ssim:
        try:
            ss = ssim(x_hat, x, region)
        except ValueError:
            ss = None
    return RegionMetrics(psnr(x_hat, x, region), ss, mae_lab(x_hat, x, region), int(region.sum()))


def evaluate_pair(x_hat, x, partition):
    """PSNR / SSIM / MAE over the shadow (penumbra + umbra), non-shadow and
    whole-image regions of `partition`."""
    x_hat, x = _pair(x_hat, x)
    if partition.lit.shape != x.shape[:2]:
        raise ValueError("partition does not match image dimensions")
    regions = {}
    for name, r in (("shadow", partition.shadow), ("non_shadow", partition.non_shadow),
                    ("all", np.ones(x.shape[:2], dtype=bool))):
        regions[name] = _region_metrics(x_hat, x, r) if r.any() else None
    return MetricsReport(regions)


def penumbra_band(s, t1=DEFAULT_T1, t2=DEFAULT_T2, radius=PENUMBRA_DILATION):
    """``{t1 <= s <= t2}`` dilated by a disc of `radius` pixels."""
    check_thresholds(t1, t2)
    s = check_mask(s)
    band = (s >= t1) & (s <= t2)
    if radius > 0 and band.any():
        band = ndimage.binary_dilation(band, _disk(radius))
    return band


def penumbra_metrics(x_hat, x, s, t1=DEFAULT_T1, t2=DEFAULT_T2, radius=PENUMBRA_DILATION):
    """PSNR and MAE restricted to the dilated penumbra band, or None if the
    band is empty."""
    x_hat, x = _pair(x_hat, x)
    band = penumbra_band(s, t1, t2, radius)
    if band.shape != x.shape[:2]:
        raise ValueError("mask does not match image dimensions")
    if not band.any():
        return None
    return _region_metrics(x_hat, x, band, with_ssim=False)


def report_csv(rows):
    """Aligned CSV table: one line per (image, region) with metric columns.

    `rows` maps an image name to a report dict as produced by
    :meth:`MetricsReport.to_dict`.
    """
    header = ["image", "region", "psnr", "ssim", "mae", "pixel_count"]
    table = [header]
    for name in sorted(rows):
        for region in REGIONS:
            if region not in rows[name]:
                continue
            r = rows[name][region]
            if r is None:
                table.append([name, region, "absent", "", "", "0"])
                continue
            fmt = lambda v: "" if v is None else (v if isinstance(v, str) else f"{v:.4f}")
            table.append([name, region, fmt(r["psnr"]), fmt(r["ssim"]), fmt(r["mae"]),
                          str(r["pixel_count"])])
    widths = [max(len(row[k]) for row in table) for k in range(len(header))]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in table:
        w.writerow([c.rjust(widths[k]) for k, c in enumerate(row)])
    return buf.getvalue()


# --- mask sensitivity ------------------------------------------------------

def parse_variant(spec):
    """``"identity"`` or ``"<mode>@<magnitude>"`` -> (name, mode, magnitude)."""
    spec = spec.strip()
    if spec == "identity":
        return ("identity", "identity", 0.0)
    mode, sep, mag = spec.partition("@")
    if not sep:
        raise ValueError(f"variant {spec!r} must be 'identity' or 'mode@magnitude'")
    try:
        magnitude = float(mag)
    except ValueError:
        raise ValueError(f"variant {spec!r} has a non-numeric magnitude") from None
    if mode not in ("dilate", "erode", "blur", "binarize", "hard-swap"):
        raise ValueError(f"variant {spec!r}: unknown mode {mode!r}")
    return (spec, mode, magnitude)


def default_removal(x, y, s):
    """Analytic removal with the illumination weight fitted on `s`'s umbra."""
    a = estimate_illumination(x, y, s)
    return remove_shadow(y, s, a)


@dataclass
class SensitivityReport:
    """One dataset-mean PSNR row per mask variant plus their mean and
    population standard deviation.

    Per-image infinite PSNRs are left out of a row's mean and counted in
    ``infinite``; rows whose mean is undefined are left out of the summary.
    """

    rows: list
    mean: float | None
    std_dev: float | None

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "rows": [{**r, "psnr": _num(r["psnr"])} for r in self.rows],
            "mean": self.mean,
            "std_dev": self.std_dev,
            "std_convention": "population",
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _variant_psnr(pair, variant, removal):
    _, mode, mag = variant
    x, y, s = pair
    sv = s if mode == "identity" else perturb_mask(s, mode, mag)
    try:
        x_hat = removal(x, y, sv)
    except (DegenerateInversionError, ValueError):
        return None
    return psnr(np.clip(x_hat, 0, 1), x)


def sensitivity_sweep(pairs, variants, removal=None, jobs=1):
    """Dataset-mean PSNR of a removal procedure under perturbed masks.

    Parameters
    ----------
    pairs : list of (x, y, s)
        Shadow-free image, shadow image and the mask handed to removal.
    variants : list of str or (name, mode, magnitude)
        Mask perturbations; see :func:`parse_variant`.
    removal : callable, optional
        ``removal(x, y, s) -> x_hat``; defaults to :func:`default_removal`.
    jobs : int
        Worker threads. Results do not depend on it.
    """
    if not pairs:
        raise ValueError("sensitivity sweep needs at least one image pair")
    if not variants:
        raise ValueError("sensitivity sweep needs at least one mask variant")
    variants = [parse_variant(v) if isinstance(v, str) else tuple(v) for v in variants]
    removal = removal or default_removal
    tasks = [(vi, pi) for vi in range(len(variants)) for pi in range(len(pairs))]
    run = lambda t: _variant_psnr(pairs[t[1]], variants[t[0]], removal)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(run, tasks))
    else:
        results = [run(t) for t in tasks]

    rows = []
    for vi, v in enumerate(variants):
        vals = results[vi * len(pairs) : (vi + 1) * len(pairs)]
        skipped = sum(r is None for r in vals)
        infinite = sum(r is not None and math.isinf(r) for r in vals)
        finite = [r for r in vals if r is not None and not math.isinf(r)]
        if finite:
            value = float(np.mean(finite))
        elif infinite:
            value = math.inf
        else:
            value = None
        rows.append({"variant": v[0], "psnr": value, "images": len(finite),
                     "skipped": skipped, "infinite": infinite})
    usable = [r["psnr"] for r in rows if r["psnr"] is not None and not math.isinf(r["psnr"])]
    mean = float(np.mean(usable)) if usable else None
    std = float(np.std(usable)) if usable else None
    return SensitivityReport(rows, mean, std)
