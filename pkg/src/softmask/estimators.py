"""scikit-learn style wrappers around the functional API.

Each estimator accepts a single image (or mask) or a sequence of them and
returns the same structure, so they compose with ``get_params``/``set_params``,
``clone`` and grid searches over their hyperparameters.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import maskops, refiner, shadowmodel


def _as_batch(X, ndim):
    if isinstance(X, np.ndarray) and X.ndim == ndim:
        return [X], True
    batch = list(X)
    if not batch:
        raise ValueError("empty input")
    return [np.asarray(b) for b in batch], False


def _unbatch(out, single):
    return out[0] if single else out


class SoftMaskExtractor(TransformerMixin, BaseEstimator):
    """Soft masks from shadow / shadow-free pairs.

    Parameters
    ----------
    sigma : float
        Low-pass filter width applied to the luma ratio.
    t_lit : float
        Ratio at or above which a pixel is treated as lit.
    percentile : float
        Percentile of shadowed ratios taken as the illumination weight.

    Attributes
    ----------
    illumination_ : float or list of float
        Weight estimated on each pair seen by ``fit``.
    no_shadow_ : bool or list of bool
    """

    def __init__(self, sigma=maskops.DEFAULT_SIGMA, t_lit=maskops.DEFAULT_T_LIT, percentile=1.0):
        self.sigma = sigma
        self.t_lit = t_lit
        self.percentile = percentile

    def _extract(self, X, y):
        if y is None:
            raise ValueError("SoftMaskExtractor needs the shadow-free image(s) as y")
        shadow, single = _as_batch(X, 3)
        free, _ = _as_batch(y, 3)
        if len(shadow) != len(free):
            raise ValueError("X and y hold different numbers of images")
        res = [maskops.extract_soft_mask(x, s, sigma=self.sigma, t_lit=self.t_lit,
                                         percentile=self.percentile)
               for s, x in zip(shadow, free)]
        return res, single

    def fit(self, X, y=None):
        res, single = self._extract(X, y)
        self.illumination_ = _unbatch([r.illumination for r in res], single)
        self.no_shadow_ = _unbatch([r.no_shadow for r in res], single)
        return self

    def transform(self, X, y=None):
        res, single = self._extract(X, y)
        return _unbatch([r.mask for r in res], single)

    def fit_transform(self, X, y=None, **fit_params):
        res, single = self._extract(X, y)
        self.illumination_ = _unbatch([r.illumination for r in res], single)
        self.no_shadow_ = _unbatch([r.no_shadow for r in res], single)
        return _unbatch([r.mask for r in res], single)


class ShadowRemover(TransformerMixin, BaseEstimator):
    """Analytic shadow removal by inverting the degradation model.

    Parameters
    ----------
    illumination : float, array of shape (3,), or None
        Fixed weight. When None, ``fit`` estimates it by least squares over
        the umbra of the training pairs.
    per_channel : bool
        Estimate one weight per colour channel.
    eps : float
        Smallest admissible denominator ``1 - s (1 - a)``.
    """

    def __init__(self, illumination=None, per_channel=False, eps=shadowmodel.REMOVE_EPS):
        self.illumination = illumination
        self.per_channel = per_channel
        self.eps = eps

    def fit(self, X, y=None, masks=None):
        """Estimate ``illumination_`` from shadow images `X`, shadow-free
        images `y` and their `masks`."""
        if self.illumination is not None:
            self.illumination_ = self.illumination
            return self
        if y is None or masks is None:
            raise ValueError("fit needs shadow-free images (y) and masks to estimate illumination")
        shadow, _ = _as_batch(X, 3)
        free, _ = _as_batch(y, 3)
        ms, _ = _as_batch(masks, 2)
        if not (len(shadow) == len(free) == len(ms)):
            raise ValueError("X, y and masks hold different numbers of items")
        # pool every pair into one (N, 1) strip for a single least-squares fit
        strip = lambda arrs, tail: np.concatenate([a.reshape(-1, 1, *tail) for a in arrs])
        self.illumination_ = shadowmodel.estimate_illumination(
            strip(free, (3,)), strip(shadow, (3,)), strip(ms, ()), per_channel=self.per_channel
        )
        return self

    def transform(self, X, masks=None):
        check_is_fitted(self, "illumination_")
        if masks is None:
            raise ValueError("transform needs the shadow masks")
        shadow, single = _as_batch(X, 3)
        ms, _ = _as_batch(masks, 2)
        if len(shadow) != len(ms):
            raise ValueError("X and masks hold different numbers of items")
        out = [shadowmodel.remove_shadow(y, s, self.illumination_, eps=self.eps)
               for y, s in zip(shadow, ms)]
        return _unbatch(out, single)


class MaskRefiner(TransformerMixin, BaseEstimator):
    """Penumbra-constrained projected gradient refinement of soft masks.

    ``transform(X)`` refines each observed mask in `X`, starting from `init`
    when given and from the observed mask otherwise.

    Attributes
    ----------
    traces_ : list of RefineTrace
        Traces of the most recent ``fit``/``transform`` call.
    """

    def __init__(self, lambda1=0.1, steps=300, step_size=0.5, t1=maskops.DEFAULT_T1,
                 t2=maskops.DEFAULT_T2, membership_refresh=10):
        self.lambda1 = lambda1
        self.steps = steps
        self.step_size = step_size
        self.t1 = t1
        self.t2 = t2
        self.membership_refresh = membership_refresh

    def _config(self):
        return refiner.RefineConfig(self.lambda1, self.steps, self.step_size, self.t1,
                                    self.t2, self.membership_refresh)

    def fit(self, X, y=None):
        self.config_ = self._config()
        return self

    def transform(self, X, init=None):
        cfg = getattr(self, "config_", None) or self._config()
        obs, single = _as_batch(X, 2)
        starts = obs if init is None else _as_batch(init, 2)[0]
        if len(starts) != len(obs):
            raise ValueError("init and X hold different numbers of masks")
        out, traces = [], []
        for s0, so in zip(starts, obs):
            s, tr = refiner.refine_mask(s0, so, cfg)
            out.append(s)
            traces.append(tr)
        self.traces_ = traces
        return _unbatch(out, single)
