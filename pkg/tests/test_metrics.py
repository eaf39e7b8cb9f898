import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from softmask import metrics
from softmask.maskops import region_partition
from softmask.metrics import (
    evaluate_pair,
    mae_lab,
    mae_rgb,
    penumbra_metrics,
    psnr,
    sensitivity_sweep,
    ssim,
)
from softmask.shadowmodel import make_texture

from oracles import ssim_brute_force
from scenes import radial_mask, sensitivity_set


class TestPSNR:
    def test_identical(self):
        x = np.random.default_rng(0).random((8, 8, 3))
        assert psnr(x, x) == math.inf

    def test_uniform_error(self):
        x = np.full((8, 8, 3), 0.5)
        assert psnr(x + 0.1, x) == pytest.approx(20.0, abs=1e-9)

    def test_half_region(self):
        x = np.full((8, 8, 3), 0.5)
        y = x.copy()
        y[:, :4] += 0.1
        left = np.zeros((8, 8), bool)
        left[:, :4] = True
        assert psnr(y, x, left) - psnr(y, x) == pytest.approx(-10 * math.log10(2), abs=1e-12)

    def test_full_region_bit_identical(self):
        rng = np.random.default_rng(1)
        a, b = rng.random((2, 16, 16, 3))
        full = np.ones((16, 16), bool)
        assert psnr(a, b, full) == psnr(a, b)
        assert ssim(a, b, full) == ssim(a, b)
        assert mae_lab(a, b, full) == mae_lab(a, b)

    def test_empty_region(self):
        x = np.zeros((4, 4, 3))
        with pytest.raises(ValueError):
            psnr(x, x, np.zeros((4, 4), bool))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31))
    def test_symmetric(self, seed):
        a, b = np.random.default_rng(seed).random((2, 12, 12, 3))
        assert psnr(a, b) == psnr(b, a)
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-15)
        assert mae_lab(a, b) == pytest.approx(mae_lab(b, a), abs=1e-12)


class TestSSIM:
    def test_identical(self):
        x = np.random.default_rng(2).random((20, 24, 3))
        assert ssim(x, x) == pytest.approx(1.0, abs=1e-9)

    def test_constant(self):
        x = np.full((12, 12, 3), 0.5)
        assert ssim(x, x) == pytest.approx(1.0, abs=1e-9)

    def test_negative_checkerboard(self):
        x = make_texture("checkerboard", 64, 64)
        val = ssim(x, 1 - x)
        assert val < 0.1
        assert val == pytest.approx(-0.815362670202905, abs=1e-9)

    @pytest.mark.parametrize("seed", range(3))
    def test_brute_force_crops(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.random((16, 16, 3))
        b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
        assert ssim(a, b) == pytest.approx(ssim_brute_force(a, b), abs=1e-9)

    def test_small_image(self):
        with pytest.raises(ValueError):
            ssim(np.zeros((10, 20, 3)), np.zeros((10, 20, 3)))

    def test_region_inside_border_band_only(self):
        r = np.zeros((16, 16), bool)
        r[0, 0] = True
        with pytest.raises(ValueError):
            ssim(np.zeros((16, 16, 3)), np.zeros((16, 16, 3)), r)


class TestMAE:
    def test_identical(self):
        x = np.random.default_rng(3).random((5, 5, 3))
        assert mae_lab(x, x) == 0

    def test_black_white(self):
        assert mae_lab(np.zeros((2, 2, 3)), np.ones((2, 2, 3))) == pytest.approx(100 / 3, abs=0.01)

    def test_lab_matches_skimage(self, monkeypatch):
        from skimage.color import colorconv, rgb2lab

        x = np.random.default_rng(4).random((6, 7, 3))
        # skimage uses an older rounding of the sRGB matrix; within 0.01 as is
        np.testing.assert_allclose(metrics.rgb_to_lab(x), rgb2lab(x), atol=1e-2)
        monkeypatch.setattr(metrics, "_RGB2XYZ", colorconv.xyz_from_rgb)
        monkeypatch.setattr(metrics, "_WHITE", np.array(colorconv._illuminants["D65"]["2"]))
        np.testing.assert_allclose(metrics.rgb_to_lab(x), rgb2lab(x), atol=1e-9)

    def test_locality(self):
        x = np.full((6, 6, 3), 0.4)
        y = x.copy()
        y[:, 3:] = 0.9
        left = np.zeros((6, 6), bool)
        left[:, :3] = True
        assert mae_lab(y, x, left) == 0
        assert mae_rgb(y, x, left) == 0
        assert mae_rgb(y, x) == pytest.approx(0.25 * 255)


def split_scene(size=32):
    s = np.zeros((size, size))
    s[8:24, 8:24] = 1.0
    s[6:26, 6:8] = 0.5
    x = np.full((size, size, 3), 0.6)
    return x, s


class TestEvaluatePair:
    def test_perfect(self):
        x, s = split_scene()
        rep = evaluate_pair(x, x, region_partition(s))
        for name in ("shadow", "non_shadow", "all"):
            r = rep[name]
            assert r.psnr == math.inf and r.ssim == pytest.approx(1.0) and r.mae == 0

    def test_error_in_umbra_only(self):
        x, s = split_scene()
        y = x.copy()
        y[s == 1] += 0.05
        rep = evaluate_pair(y, x, region_partition(s))
        assert rep["non_shadow"].psnr == math.inf
        assert rep["shadow"].psnr < math.inf

    def test_uniform_shadow_error(self):
        x, s = split_scene()
        y = x.copy()
        y[s > 0] += 0.05
        rep = evaluate_pair(y, x, region_partition(s))
        assert rep["shadow"].psnr == pytest.approx(26.0206, abs=1e-4)

    def test_counts(self):
        x, s = split_scene()
        rep = evaluate_pair(x, x, region_partition(s))
        assert rep["shadow"].pixel_count + rep["non_shadow"].pixel_count == rep["all"].pixel_count

    def test_absent_region(self):
        x = np.full((16, 16, 3), 0.5)
        rep = evaluate_pair(x, x, region_partition(np.zeros((16, 16))))
        assert rep["shadow"] is None and rep["non_shadow"] is not None

    def test_json_inf_sentinel(self):
        x, s = split_scene()
        d = evaluate_pair(x, x, region_partition(s)).to_dict()
        assert d["all"]["psnr"] == "inf"
        json.dumps(d)
        back = metrics.MetricsReport.from_dict(d)
        assert back["all"].psnr == math.inf

    @pytest.mark.parametrize("seed", range(50))
    def test_psnr_ordering_bound(self, seed):
        rng = np.random.default_rng(seed)
        x, y = rng.random((2, 16, 16, 3))
        s = (rng.random((16, 16)) > rng.uniform(0.2, 0.8)).astype(float)
        rep = evaluate_pair(y, x, region_partition(s))
        lo, hi = sorted((rep["shadow"].psnr, rep["non_shadow"].psnr))
        assert lo - 1e-12 <= rep["all"].psnr <= hi + 1e-12


class TestPenumbraMetrics:
    def test_perfect(self):
        s = radial_mask(33, 12)
        x = np.full((33, 33, 3), 0.5)
        r = penumbra_metrics(x, x, s)
        assert r.psnr == math.inf and r.mae == 0

    def test_binary_absent(self):
        s = np.zeros((20, 20))
        s[5:15, 5:15] = 1
        x = np.full((20, 20, 3), 0.5)
        assert penumbra_metrics(x, x, s) is None

    def test_error_outside_band(self):
        s = np.zeros((40, 40))
        s[10:14, 10:14] = 0.5
        x = np.full((40, 40, 3), 0.5)
        y = x.copy()
        y[30:, 30:] = 0.9
        band = metrics.penumbra_band(s)
        assert not band[30:, 30:].any()
        assert band.sum() > 16
        assert penumbra_metrics(y, x, s).psnr == math.inf


class TestSensitivity:
    def test_identity_only(self):
        rep = sensitivity_sweep(sensitivity_set(3), ["identity"])
        assert rep.std_dev == 0 and rep.mean == rep.rows[0]["psnr"]

    def test_identity_twice(self):
        pairs = sensitivity_set(3)
        single = sensitivity_sweep(pairs, ["identity"])
        rep = sensitivity_sweep(pairs, ["identity", "identity"])
        assert rep.mean == single.mean and rep.std_dev == 0

    def test_binarize_lower(self):
        rep = sensitivity_sweep(sensitivity_set(), ["identity", "binarize@0.5"])
        ident, binar = (r["psnr"] for r in rep.rows)
        assert binar < ident
        assert ident == pytest.approx(43.41699715811816, rel=1e-9)
        assert binar == pytest.approx(25.090173765074862, rel=1e-9)

    def test_jobs_independent(self):
        pairs = sensitivity_set(4)
        variants = ["identity", "blur@3", "dilate@3"]
        assert (sensitivity_sweep(pairs, variants, jobs=1).to_json()
                == sensitivity_sweep(pairs, variants, jobs=4).to_json())

    def test_skips_failures(self):
        pairs = sensitivity_set(2)

        def flaky(x, y, s):
            raise ValueError("boom")

        rep = sensitivity_sweep(pairs, ["identity"], removal=flaky)
        assert rep.rows[0]["skipped"] == 2 and rep.rows[0]["psnr"] is None
        assert rep.mean is None

    def test_infinite_rows_excluded(self):
        x = np.full((16, 16, 3), 0.5)
        s = np.zeros((16, 16))
        s[4:12, 4:12] = 1
        rep = sensitivity_sweep([(x, x * (1 - 0.6 * s[..., None]), s)], ["identity"],
                                removal=lambda x, y, s: x)
        assert rep.rows[0]["infinite"] == 1 and rep.mean is None
        assert rep.to_dict()["rows"][0]["psnr"] == "inf"

    @pytest.mark.parametrize("bad", ["shear@1", "blur", "blur@x"])
    def test_bad_variant(self, bad):
        with pytest.raises(ValueError):
            metrics.parse_variant(bad)

    def test_empty_inputs(self):
        with pytest.raises(ValueError):
            sensitivity_sweep([], ["identity"])
        with pytest.raises(ValueError):
            sensitivity_sweep(sensitivity_set(1), [])
