"""Projected gradient descent on a soft mask.

Minimizes ``mask_loss(s, s_obs) + lambda1 * penumbra_loss(s)`` over masks in
[0, 1]. Penumbra membership is recomputed every ``membership_refresh`` steps
and frozen in between, so each window is a fixed piecewise-linear-plus-
quadratic objective that backtracking can decrease monotonically.
"""

from dataclasses import dataclass, field, asdict
import csv
import io
import json

import numpy as np

from ._validation import check_mask, check_same_shape, check_thresholds
from .losses import LAMBDA1, mask_loss, mask_loss_grad, penumbra_loss, penumbra_loss_grad
from .maskops import DEFAULT_T1, DEFAULT_T2, penumbra_set

MAX_HALVINGS = 20


@dataclass
class RefineConfig:
    lambda1: float = LAMBDA1
    steps: int = 300
    step_size: float = 0.5
    t1: float = DEFAULT_T1
    t2: float = DEFAULT_T2
    # None: compute membership once and never refresh
    membership_refresh: int | None = 10

    def __post_init__(self):
        if not self.lambda1 >= 0:
            raise ValueError("lambda1 must be >= 0")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError("steps must be an integer >= 1")
        if not self.step_size > 0:
            raise ValueError("step_size must be > 0")
        check_thresholds(self.t1, self.t2)
        if self.membership_refresh is not None and (
            int(self.membership_refresh) != self.membership_refresh or self.membership_refresh < 1
        ):
            raise ValueError("membership_refresh must be an integer >= 1 or None")

    def to_dict(self):
        return asdict(self)


@dataclass
class RefineTrace:
    step: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    l_mask: list = field(default_factory=list)
    l_pen: list = field(default_factory=list)
    # step index at which each frozen-membership window starts
    refresh_steps: list = field(default_factory=list)

    def record(self, step, l_mask, l_pen, lambda1):
        self.step.append(int(step))
        self.l_mask.append(float(l_mask))
        self.l_pen.append(float(l_pen))
        self.objective.append(float(l_mask) + lambda1 * float(l_pen))

    def windows(self):
        """Yield lists of objective values recorded under one membership."""
        bounds = self.refresh_steps + [self.step[-1] + 1]
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            yield [o for k, o in zip(self.step, self.objective) if lo <= k < hi]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "objective", "l_mask", "l_pen"])
        for row in zip(self.step, self.objective, self.l_mask, self.l_pen):
            w.writerow([row[0]] + [repr(v) for v in row[1:]])
        return buf.getvalue()


def _objective(s, s_obs, ps, lambda1):
    lm = mask_loss(s, s_obs)
    lp = penumbra_loss(s, frozen=ps)[0] if lambda1 > 0 else 0.0
    return float(lm), float(lp), float(lm) + lambda1 * float(lp)


def refine_mask(s_init, s_obs, cfg=None):
    """Refine `s_init` towards `s_obs` under the penumbra direction penalty.

    Parameters
    ----------
    s_init, s_obs : array_like, shape (H, W)
        Starting mask and observed (data) mask, both in [0, 1].
    cfg : RefineConfig, optional

    Returns
    -------
    s : ndarray
        Refined mask, always in [0, 1].
    trace : RefineTrace
        Step 0 is the starting point; later entries are evaluated with the
        membership of the window they belong to.
    """
    cfg = cfg or RefineConfig()
    s = check_mask(s_init, "s_init", min_size=2).astype(np.float64, copy=True)
    s_obs = check_mask(s_obs, "s_obs", min_size=2).astype(np.float64)
    check_same_shape(s, s_obs, ("s_init", "s_obs"))
    lam = float(cfg.lambda1)

    trace = RefineTrace()
    ps = penumbra_set(s, cfg.t1, cfg.t2)
    trace.refresh_steps.append(0)
    lm, lp, cur = _objective(s, s_obs, ps, lam)
    trace.record(0, lm, lp, lam)

    for k in range(1, cfg.steps + 1):
        if cfg.membership_refresh is not None and k > 1 and (k - 1) % cfg.membership_refresh == 0:
            ps = penumbra_set(s, cfg.t1, cfg.t2)
            trace.refresh_steps.append(k)
            lm, lp, cur = _objective(s, s_obs, ps, lam)
        g = mask_loss_grad(s, s_obs)
        if lam > 0:
            g = g + lam * penumbra_loss_grad(s, frozen=ps)
        if np.any(g):
            eta = cfg.step_size
            for _ in range(MAX_HALVINGS + 1):
                cand = np.clip(s - eta * g, 0.0, 1.0)
                c_lm, c_lp, c_obj = _objective(cand, s_obs, ps, lam)
                if not np.isfinite(c_obj):
                    raise FloatingPointError(f"non-finite objective at step {k}")
                if c_obj <= cur:
                    s, lm, lp, cur = cand, c_lm, c_lp, c_obj
                    break
                eta /= 2
        trace.record(k, lm, lp, lam)
    return s, trace


def save_refine_outputs(out_dir, s, trace, cfg):
    """Write ``refined.png`` (16-bit), ``trace.csv`` and ``config.json``."""
    from pathlib import Path
    from .imagecore import save_map

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_map(out / "refined.png", s, bits=16)
    (out / "trace.csv").write_text(trace.to_csv())
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    return [out / "refined.png", out / "trace.csv", out / "config.json"]
