"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error, 3 verification failure.
Every run that writes files also writes one JSON manifest recording the
command, the full parameter set, input checksums and output paths.
"""

import argparse
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
import hashlib
import json
import math
from pathlib import Path
import sys

import numpy as np

from . import __version__
from . import imagecore, losses, maskops, metrics, refiner, shadowmodel

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VERIFY = 3

IMAGE_SUFFIXES = (".png",)


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def usage_error(msg):
    return CliError(msg, EXIT_USAGE)


def data_error(msg):
    return CliError(msg, EXIT_DATA)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise usage_error(f"{self.prog}: {message}")


# --- run bookkeeping -------------------------------------------------------

def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Tracks inputs and outputs of one invocation; removes outputs on failure."""

    def __init__(self, command, params):
        self.command = command
        self.params = params
        self.inputs = {}
        self.outputs = []
        self.info = {}

    def add_input(self, path):
        self.inputs[str(path)] = sha256(path)

    def output(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.outputs.append(path)
        return path

    def write_text(self, path, text):
        self.output(path).write_text(text)

    def write_json(self, path, obj):
        self.write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def cleanup(self):
        for p in reversed(self.outputs):
            if p.is_file():
                p.unlink()

    def manifest(self, path):
        path = Path(path)
        m = {
            "command": self.command,
            "parameters": self.params,
            "input_checksums": dict(sorted(self.inputs.items())),
            "tool_version": __version__,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "outputs": sorted(str(p) for p in self.outputs),
            **self.info,
        }
        self.outputs.append(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(m, indent=2, sort_keys=True) + "\n")


def _require_file(path, what):
    p = Path(path)
    if not p.is_file():
        raise data_error(f"{what} not found: {p}")
    return p


def _require_dir(path, what):
    p = Path(path)
    if not p.is_dir():
        raise data_error(f"{what} directory not found: {p}")
    return p


def _load_image(path, run):
    path = _require_file(path, "image")
    run.add_input(path)
    try:
        return imagecore.load_image(path)
    except (OSError, ValueError) as e:
        raise data_error(f"cannot decode {path}: {e}") from None


def _load_map(path, run):
    path = _require_file(path, "mask")
    run.add_input(path)
    try:
        return imagecore.load_map(path)
    except (OSError, ValueError) as e:
        raise data_error(f"cannot decode {path}: {e}") from None


def _stems(directory):
    return {p.stem: p for p in sorted(Path(directory).iterdir())
            if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES}


def _map_jobs(fn, items, jobs):
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def discover_pairs(root, run):
    """Pair ``shadow/`` and ``shadow_free/`` files by stem.

    Returns ``(pairs, skipped)`` where pairs is a sorted list of
    ``(stem, shadow_path, free_path, mask_path_or_None)`` and skipped a list of
    ``{"stem", "reason"}`` records.
    """
    root = _require_dir(root, "dataset")
    sh_dir = _require_dir(root / "shadow", "dataset shadow/")
    fr_dir = _require_dir(root / "shadow_free", "dataset shadow_free/")
    mk_dir = root / "mask"
    shadow = _stems(sh_dir)
    free = _stems(fr_dir)
    mask = _stems(mk_dir) if mk_dir.is_dir() else {}
    pairs, skipped = [], []
    for stem in sorted(set(shadow) | set(free)):
        if stem not in shadow:
            skipped.append({"stem": stem, "reason": "no shadow image"})
        elif stem not in free:
            skipped.append({"stem": stem, "reason": "no shadow_free image"})
        else:
            pairs.append((stem, shadow[stem], free[stem], mask.get(stem)))
    return pairs, skipped


def _load_pair(item, run):
    stem, sp, fp, mp = item
    y = _load_image(sp, run)
    x = _load_image(fp, run)
    if x.shape != y.shape:
        return stem, None, f"dimension mismatch {y.shape[:2]} vs {x.shape[:2]}"
    s = None
    if mp is not None:
        s = _load_map(mp, run)
        if s.shape != x.shape[:2]:
            return stem, None, f"mask dimension mismatch {s.shape} vs {x.shape[:2]}"
    return stem, (x, y, s), None


# --- subcommands -----------------------------------------------------------

def cmd_extract(args, run):
    out = Path(args.out)
    pairs, skipped = discover_pairs(args.dataset, run)
    loaded = _map_jobs(lambda it: _load_pair(it, run), pairs, args.jobs)

    def work(entry):
        stem, data, err = entry
        if data is None:
            return stem, None, err
        x, y, _ = data
        res = maskops.extract_soft_mask(x, y, sigma=args.sigma, t_lit=args.t_lit)
        rho = maskops.ratio_map(imagecore.to_luma(x), imagecore.to_luma(y), t=args.t,
                                sigma=args.sigma)
        return stem, (res, rho), None

    results = _map_jobs(work, loaded, args.jobs)
    per_image = {}
    for stem, res, err in results:
        if res is None:
            skipped.append({"stem": stem, "reason": err})
            continue
        ext, rho = res
        mask_path = run.output(out / "masks" / f"{stem}.png")
        imagecore.save_map(mask_path, ext.mask, bits=16)
        ratio_path = run.output(out / "ratio" / f"{stem}.npy")
        np.save(ratio_path, rho)
        per_image[stem] = {
            "illumination": ext.illumination,
            "no_shadow": ext.no_shadow,
            "mask": str(mask_path),
            "ratio": str(ratio_path),
        }
    skipped.sort(key=lambda r: r["stem"])
    run.info["skip_count"] = len(skipped)
    run.info["skipped"] = skipped
    run.write_json(out / "extract.json", {
        "schema_version": metrics.SCHEMA_VERSION,
        "images": per_image,
        "skipped": skipped,
        "skip_count": len(skipped),
    })
    print(f"extracted {len(per_image)} mask(s), skipped {len(skipped)}")
    run.manifest(out / "manifest.json")


def cmd_synth(args, run):
    path = _require_file(args.scene, "scene file")
    run.add_input(path)
    try:
        spec = shadowmodel.SceneSpec.from_json(path)
    except json.JSONDecodeError as e:
        raise data_error(f"malformed scene JSON {path}: {e}") from None
    except (KeyError, TypeError, ValueError) as e:
        raise data_error(f"invalid scene {path}: {e}") from None
    x, y, s, a = shadowmodel.render_geometric_pair(spec)
    if args.noise > 0:
        rng = np.random.default_rng(args.seed)
        y = y + rng.normal(0.0, args.noise, y.shape)
    out = Path(args.out)
    imagecore.save_image(run.output(out / "x.png"), x, bits=16)
    imagecore.save_image(run.output(out / "y.png"), y, bits=16)
    imagecore.save_map(run.output(out / "s_true.png"), s, bits=16)
    run.write_json(out / "scene.json", spec.to_dict())
    print(f"rendered {spec.width}x{spec.height} scene, effective radius {spec.effective_radius:g} px")
    run.manifest(out / "manifest.json")


def _parse_weight(text):
    try:
        parts = [float(v) for v in text.split(",")]
    except ValueError:
        raise usage_error(f"--a must be a number or three comma-separated numbers, got {text!r}") from None
    if len(parts) not in (1, 3):
        raise usage_error("--a takes one value or three comma-separated values")
    return parts[0] if len(parts) == 1 else parts


def cmd_remove(args, run):
    y = _load_image(args.image, run)
    s = _load_map(args.mask, run)
    if s.shape != y.shape[:2]:
        raise data_error(f"mask {s.shape} does not match image {y.shape[:2]}")
    a = _parse_weight(args.a)
    try:
        x_hat = shadowmodel.remove_shadow(y, s, a)
    except ValueError as e:
        raise data_error(str(e)) from None
    out = Path(args.out)
    imagecore.save_image(run.output(out), x_hat, bits=16)
    run.manifest(out.with_suffix(".manifest.json"))


def cmd_refine(args, run):
    s0 = _load_map(args.init, run)
    so = _load_map(args.obs, run)
    if s0.shape != so.shape:
        raise data_error(f"init mask {s0.shape} does not match observed mask {so.shape}")
    try:
        cfg = refiner.RefineConfig(args.lambda1, args.steps, args.step_size, args.t1, args.t2,
                                   None if args.refresh == 0 else args.refresh)
    except ValueError as e:
        raise usage_error(str(e)) from None
    s, trace = refiner.refine_mask(s0, so, cfg)
    out = Path(args.out)
    for p in refiner.save_refine_outputs(out, s, trace, cfg):
        run.outputs.append(p)
    print(f"objective {trace.objective[0]:.6g} -> {trace.objective[-1]:.6g}")
    run.manifest(out / "manifest.json")


def _resize(arr, size):
    import cv2

    if size is None:
        return arr
    return cv2.resize(arr, (size, size), interpolation=cv2.INTER_AREA)


def _summary(per_image):
    out = {}
    for region in metrics.REGIONS:
        rows = [r[region] for r in per_image.values() if r.get(region)]
        psnrs = [r["psnr"] for r in rows]
        finite = [p for p in psnrs if p != "inf"]
        ssims = [r["ssim"] for r in rows if r["ssim"] is not None]
        out[region] = {
            "images": len(rows),
            "psnr_mean": float(np.mean(finite)) if finite else ("inf" if psnrs else None),
            "psnr_infinite_excluded": len(psnrs) - len(finite),
            "ssim_mean": float(np.mean(ssims)) if ssims else None,
            "mae_mean": float(np.mean([r["mae"] for r in rows])) if rows else None,
        }
    return out


def cmd_eval(args, run):
    pred = _stems(_require_dir(args.pred, "prediction"))
    gt = _stems(_require_dir(args.gt, "ground-truth"))
    masks = _stems(_require_dir(args.masks, "mask"))
    stems = sorted(set(pred) & set(gt) & set(masks))
    skipped = [{"stem": s, "reason": "missing prediction, ground truth or mask"}
               for s in sorted((set(pred) | set(gt) | set(masks)) - set(stems))]
    if not stems:
        raise data_error("no image has a prediction, a ground truth and a mask with the same stem")

    def work(stem):
        x_hat = _resize(_load_image(pred[stem], run), args.resize)
        x = _resize(_load_image(gt[stem], run), args.resize)
        s = np.clip(_resize(_load_map(masks[stem], run), args.resize), 0, 1)
        if x_hat.shape != x.shape or s.shape != x.shape[:2]:
            return stem, None
        part = maskops.region_partition(s, args.t1, args.t2)
        rep = metrics.evaluate_pair(x_hat, x, part)
        rep.regions["penumbra"] = metrics.penumbra_metrics(x_hat, x, s, args.t1, args.t2)
        return stem, rep.to_dict()

    per_image = {}
    for stem, rep in _map_jobs(work, stems, args.jobs):
        if rep is None:
            skipped.append({"stem": stem, "reason": "dimension mismatch"})
        else:
            per_image[stem] = rep
    skipped.sort(key=lambda r: r["stem"])
    report = Path(args.report)
    run.write_json(report, {
        "schema_version": metrics.SCHEMA_VERSION,
        "parameters": {"t1": args.t1, "t2": args.t2, "resize": args.resize,
                       "penumbra_dilation": metrics.PENUMBRA_DILATION, "mae_space": "lab"},
        "images": per_image,
        "summary": _summary(per_image),
        "skipped": skipped,
    })
    run.write_text(report.with_suffix(".csv"), metrics.report_csv(per_image))
    run.info["skip_count"] = len(skipped)
    for region, v in _summary(per_image).items():
        print(f"{region:>10}: psnr {v['psnr_mean']}  ssim {v['ssim_mean']}  mae {v['mae_mean']}")
    run.manifest(report.with_suffix(".manifest.json"))


def cmd_sensitivity(args, run):
    try:
        variants = [metrics.parse_variant(v) for v in args.variants.split(",") if v.strip()]
    except ValueError as e:
        raise usage_error(str(e)) from None
    if not variants:
        raise usage_error("--variants is empty")
    items, skipped = discover_pairs(args.dataset, run)
    stems, pairs = [], []
    for stem, data, err in _map_jobs(lambda it: _load_pair(it, run), items, args.jobs):
        if data is None:
            skipped.append({"stem": stem, "reason": err})
            continue
        x, y, s = data
        if s is None:
            res = maskops.extract_soft_mask(x, y, sigma=args.sigma)
            if res.no_shadow:
                skipped.append({"stem": stem, "reason": "no shadow detected"})
                continue
            s = res.mask
        stems.append(stem)
        pairs.append((x, y, np.clip(s, 0, 1)))
    if not pairs:
        raise data_error("no usable image pair in dataset")
    rep = metrics.sensitivity_sweep(pairs, variants, jobs=args.jobs)
    skipped.sort(key=lambda r: r["stem"])
    out = rep.to_dict()
    out["images"] = stems
    out["skipped"] = skipped
    report = Path(args.report)
    run.write_json(report, out)
    run.info["skip_count"] = len(skipped)
    for row in rep.rows:
        print(f"{row['variant']:>16}: {row['psnr']}")
    print(f"{'mean':>16}: {rep.mean}\n{'std dev':>16}: {rep.std_dev}")
    run.manifest(report.with_suffix(".manifest.json"))


def gradcheck(trials=200, h=1e-6, n_masks=20, size=32, seed=0):
    """Finite-difference check of the mask and penumbra loss gradients on
    random masks. Returns ``{loss: max relative error}``."""
    rng = np.random.default_rng(seed)
    worst = {"mask": 0.0, "penumbra": 0.0}
    for _ in range(n_masks):
        s = rng.random((size, size))
        ref = rng.random((size, size))
        r = losses.finite_diff_check("mask", s, h, trials, s_ref=ref, rng=rng)
        worst["mask"] = max(worst["mask"], r.max_rel_error)
        r = losses.finite_diff_check("penumbra", s, h, trials, rng=rng)
        worst["penumbra"] = max(worst["penumbra"], r.max_rel_error)
    return worst


def cmd_gradcheck(args, run):
    if not args.h > 0:
        raise usage_error("--h must be positive")
    worst = gradcheck(args.trials, args.h, args.masks, args.size, args.seed)
    ok = all(v <= args.tol for v in worst.values())
    for name, v in worst.items():
        print(f"{name}_loss max relative error: {v:.3e} ({'ok' if v <= args.tol else 'FAIL'})")
    if args.report:
        report = Path(args.report)
        run.write_json(report, {"schema_version": metrics.SCHEMA_VERSION,
                                "max_relative_error": worst, "tolerance": args.tol, "passed": ok})
        run.manifest(report.with_suffix(".manifest.json"))
    if not ok:
        raise CliError("gradient check failed", EXIT_VERIFY)


# --- parser ----------------------------------------------------------------

def build_parser():
    p = _Parser(prog="softmask", description="Soft shadow mask toolkit")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    e = sub.add_parser("extract", help="soft masks and illumination weights for a paired dataset")
    e.add_argument("--dataset", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--t", type=float, default=maskops.DEFAULT_T, help="ratio floor")
    e.add_argument("--sigma", type=float, default=maskops.DEFAULT_SIGMA)
    e.add_argument("--t-lit", type=float, default=maskops.DEFAULT_T_LIT)
    e.add_argument("--jobs", type=int, default=1)
    e.set_defaults(func=cmd_extract)

    s = sub.add_parser("synth", help="render a geometric scene bundle")
    s.add_argument("--scene", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--noise", type=float, default=0.0, help="additive Gaussian noise on y")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    r = sub.add_parser("remove", help="invert the degradation model")
    r.add_argument("--image", required=True)
    r.add_argument("--mask", required=True)
    r.add_argument("--a", required=True, help="illumination weight, scalar or r,g,b")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_remove)

    f = sub.add_parser("refine", help="penumbra-constrained mask refinement")
    f.add_argument("--init", required=True)
    f.add_argument("--obs", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--lambda1", type=float, default=losses.LAMBDA1)
    f.add_argument("--steps", type=int, default=300)
    f.add_argument("--step-size", type=float, default=0.5)
    f.add_argument("--t1", type=float, default=maskops.DEFAULT_T1)
    f.add_argument("--t2", type=float, default=maskops.DEFAULT_T2)
    f.add_argument("--refresh", type=int, default=10, help="steps between membership updates; 0 = never")
    f.set_defaults(func=cmd_refine)

    v = sub.add_parser("eval", help="region-wise PSNR / SSIM / MAE reports")
    v.add_argument("--pred", required=True)
    v.add_argument("--gt", required=True)
    v.add_argument("--masks", required=True)
    v.add_argument("--report", required=True)
    v.add_argument("--t1", type=float, default=maskops.DEFAULT_T1)
    v.add_argument("--t2", type=float, default=maskops.DEFAULT_T2)
    v.add_argument("--resize", type=int, default=None, help="resize everything to NxN first")
    v.add_argument("--jobs", type=int, default=1)
    v.set_defaults(func=cmd_eval)

    n = sub.add_parser("sensitivity", help="PSNR under perturbed masks")
    n.add_argument("--dataset", required=True)
    n.add_argument("--variants", required=True,
                   help="comma list, e.g. identity,binarize@0.5,blur@3,dilate@3")
    n.add_argument("--report", required=True)
    n.add_argument("--sigma", type=float, default=maskops.DEFAULT_SIGMA)
    n.add_argument("--jobs", type=int, default=1)
    n.set_defaults(func=cmd_sensitivity)

    g = sub.add_parser("gradcheck", help="finite-difference check of analytic gradients")
    g.add_argument("--trials", type=int, default=200)
    g.add_argument("--h", type=float, default=1e-6)
    g.add_argument("--masks", type=int, default=20)
    g.add_argument("--size", type=int, default=32)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--tol", type=float, default=1e-5)
    g.add_argument("--report", default=None)
    g.set_defaults(func=cmd_gradcheck)
    return p


def run(argv=None):
    """Run the CLI and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    params = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command")}
    r = Run(args.command, params)
    try:
        args.func(args, r)
    except CliError as e:
        if e.code != EXIT_VERIFY:
            r.cleanup()
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except Exception as e:
        r.cleanup()
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main():
    sys.exit(run())
