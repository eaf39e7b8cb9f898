"""Mask, removal and penumbra-direction losses with analytic mask gradients.

Losses are per-element means so their scale does not depend on resolution.
The penumbra loss depends on ``s`` through a set (the penumbra members) and
their centroid; gradients treat both as constants of the evaluation point.
That frozen state is carried by :class:`PenumbraSet` and can be passed back
in to evaluate the loss at nearby masks with the same membership.
"""

from dataclasses import dataclass, asdict
import json

import numpy as np

from ._validation import check_image, check_map, check_same_shape, check_thresholds
from .imagecore import gradient, gradient_adjoint
from .maskops import DEFAULT_T1, DEFAULT_T2, penumbra_set

LAMBDA1 = 0.1
LAMBDA2 = 1.0


def mask_loss(s_hat, s_gt):
    """Mean squared error between two masks."""
    s_hat = check_map(s_hat, "s_hat")
    s_gt = check_map(s_gt, "s_gt")
    check_same_shape(s_hat, s_gt, ("s_hat", "s_gt"))
    return np.mean((s_hat - s_gt) ** 2)


def mask_loss_grad(s_hat, s_gt):
    s_hat = check_map(s_hat, "s_hat")
    s_gt = check_map(s_gt, "s_gt")
    check_same_shape(s_hat, s_gt, ("s_hat", "s_gt"))
    return 2 * (s_hat - s_gt) / s_hat.size


def removal_loss(x_hat, x):
    """Mean squared error over all pixels and channels."""
    x_hat = check_image(x_hat, "x_hat")
    x = check_image(x, "x")
    check_same_shape(x_hat, x, ("x_hat", "x"))
    return float(np.mean((x_hat - x) ** 2))


def direction_field(ps):
    """Unit vectors from the centroid to each member, as ``(dx, dy)`` arrays.

    ``dx`` is the column component and ``dy`` the row component, matching
    :func:`softmask.imagecore.gradient`. A member that coincides with the
    centroid gets the zero vector so it never contributes to the loss.
    """
    if ps.empty:
        raise ValueError("direction field of an empty penumbra set is undefined")
    cr, cc = ps.centroid
    vx = ps.cols - cc
    vy = ps.rows - cr
    norm = np.hypot(vx, vy)
    safe = np.where(norm > 0, norm, 1.0)
    return np.where(norm > 0, vx / safe, 0.0), np.where(norm > 0, vy / safe, 0.0)


def _alignment(s, ps):
    # d(w) . grad s(w) for every member
    gx, gy = gradient(s)
    dx, dy = direction_field(ps)
    dx = dx.astype(s.dtype)
    dy = dy.astype(s.dtype)
    return dx * gx[ps.rows, ps.cols] + dy * gy[ps.rows, ps.cols], dx, dy


def _frozen(s, t1, t2, frozen):
    s = check_map(s, "s", min_size=2)
    if frozen is None:
        check_thresholds(t1, t2)
        return s, penumbra_set(s, t1, t2)
    if frozen.shape != s.shape:
        raise ValueError("frozen penumbra set does not match mask shape")
    return s, frozen


def penumbra_loss(s, t1=DEFAULT_T1, t2=DEFAULT_T2, frozen=None):
    """Mean over penumbra members of ``relu(d(w) . grad s(w))``.

    A positive term means the mask increases away from the shadow centre
    at that pixel; masks that fall off monotonically outward score 0.

    Parameters
    ----------
    s : array_like, shape (H, W)
    t1, t2 : float
        Membership thresholds, ``t1 <= s <= t2``.
    frozen : PenumbraSet, optional
        Reuse this membership and centroid instead of recomputing them.

    Returns
    -------
    loss : float
    ps : PenumbraSet
        The membership used (empty set gives loss 0).
    """
    s, ps = _frozen(s, t1, t2, frozen)
    if ps.empty:
        return s.dtype.type(0), ps
    dots, _, _ = _alignment(s, ps)
    return np.sum(np.maximum(dots, 0)) / len(ps), ps


def penumbra_loss_grad(s, t1=DEFAULT_T1, t2=DEFAULT_T2, frozen=None):
    """Gradient of :func:`penumbra_loss` w.r.t. every mask pixel.

    Membership and centroid are held fixed; the ReLU derivative at 0 is 0.
    Each active term pushes ``d / |w|`` back through the difference stencils.
    """
    s, ps = _frozen(s, t1, t2, frozen)
    if ps.empty:
        return np.zeros_like(s)
    dots, dx, dy = _alignment(s, ps)
    active = dots > 0
    cx = np.zeros_like(s)
    cy = np.zeros_like(s)
    n = len(ps)
    cx[ps.rows[active], ps.cols[active]] = dx[active] / n
    cy[ps.rows[active], ps.cols[active]] = dy[active] / n
    return gradient_adjoint(cx, cy)


@dataclass
class LossReport:
    l_mask: float
    l_pen: float
    l_rem: float
    lambda1: float
    lambda2: float
    total: float
    penumbra_pixel_count: int
    t1: float = DEFAULT_T1
    t2: float = DEFAULT_T2

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def total_loss(s_hat, s_gt, x_hat, x, t1=DEFAULT_T1, t2=DEFAULT_T2,
               lambda1=LAMBDA1, lambda2=LAMBDA2):
    """Weighted objective ``l_mask + lambda1 * l_pen + lambda2 * l_rem``."""
    l_mask = float(mask_loss(s_hat, s_gt))
    l_pen, ps = penumbra_loss(s_hat, t1, t2)
    l_pen = float(l_pen)
    l_rem = removal_loss(x_hat, x)
    total = l_mask + lambda1 * l_pen + lambda2 * l_rem
    return LossReport(l_mask, l_pen, l_rem, float(lambda1), float(lambda2),
                      total, len(ps), float(t1), float(t2))


# --- finite-difference verification ----------------------------------------

def _work_dtype():
    # extended precision when the platform has it; the finite-difference
    # quotient loses ~1e-11 absolute accuracy in float64 at h = 1e-6
    ld = np.longdouble
    return ld if np.finfo(ld).eps < np.finfo(np.float64).eps else np.float64


@dataclass
class GradCheckResult:
    max_rel_error: float
    probes: int
    excluded: int

    def ok(self, tol):
        return self.max_rel_error <= tol


def _penumbra_kink_mask(s, ps, margin):
    # pixels touched by a member term whose ReLU argument is within margin of 0
    dots, _, _ = _alignment(s, ps)
    near = np.abs(dots) <= margin
    r, c = ps.rows[near], ps.cols[near]
    H, W = s.shape
    touched = np.zeros(s.shape, dtype=bool)
    touched[r, c] = True
    for dr, dc in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        rr = np.clip(r + dr, 0, H - 1)
        cc = np.clip(c + dc, 0, W - 1)
        touched[rr, cc] = True
    return touched


def finite_diff_check(loss, s, h=1e-6, trials=200, s_ref=None, t1=DEFAULT_T1,
                      t2=DEFAULT_T2, rng=None):
    """Compare analytic mask gradients with central differences.

    Parameters
    ----------
    loss : {"mask", "penumbra"}
        ``"mask"`` needs `s_ref`, the target mask.
    s : array_like, shape (H, W)
        Evaluation point.
    h : float
        Finite-difference step.
    trials : int
        Number of probe pixels drawn (without replacement when possible).
    rng : numpy.random.Generator or int, optional

    Returns
    -------
    GradCheckResult
        Relative error uses ``max(|analytic|, |numeric|, 1e-12)`` as the
        denominator. For the penumbra loss, membership is frozen at `s` and
        probes next to a ReLU kink (argument within ``10 h`` of 0) are skipped.
    """
    if not h > 0:
        raise ValueError(f"h must be positive, got {h}")
    rng = np.random.default_rng(rng)
    dt = _work_dtype()
    s = check_map(s, "s", min_size=2).astype(dt)
    excluded_mask = np.zeros(s.shape, dtype=bool)
    if loss == "mask":
        if s_ref is None:
            raise ValueError("mask loss check needs s_ref")
        ref = check_map(s_ref, "s_ref").astype(dt)
        f = lambda m: mask_loss(m, ref)
        analytic = mask_loss_grad(s, ref)
    elif loss == "penumbra":
        ps = penumbra_set(s, t1, t2)
        f = lambda m: penumbra_loss(m, frozen=ps)[0]
        analytic = penumbra_loss_grad(s, frozen=ps)
        if not ps.empty:
            excluded_mask = _penumbra_kink_mask(s, ps, 10 * h)
    else:
        raise ValueError(f"unknown loss {loss!r}")

    n = s.size
    idx = rng.choice(n, size=min(trials, n), replace=False) if trials <= n else \
        rng.integers(0, n, size=trials)
    hh = dt(h)
    worst = 0.0
    skipped = 0
    for flat in idx:
        i, j = divmod(int(flat), s.shape[1])
        if excluded_mask[i, j]:
            skipped += 1
            continue
        sp = s.copy()
        sp[i, j] += hh
        sm = s.copy()
        sm[i, j] -= hh
        numeric = (f(sp) - f(sm)) / (2 * hh)
        a = analytic[i, j]
        denom = max(abs(a), abs(numeric), dt(1e-12))
        worst = max(worst, float(abs(numeric - a) / denom))
    return GradCheckResult(worst, len(idx) - skipped, skipped)
