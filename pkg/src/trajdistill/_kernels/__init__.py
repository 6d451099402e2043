"""Numerical kernel backend selection.

The compiled extension (``_core``, built from Cython) is used when it
imported successfully; otherwise the NumPy implementations in ``_pure``
take over. Set ``TRAJDISTILL_KERNELS=python`` or ``=cython`` to force a
backend (forcing ``cython`` raises if the extension is unavailable).

All public wrappers coerce array arguments to contiguous float64 so both
backends accept lists, float32 arrays, or strided views.
"""

import os

import numpy as np

from . import _pure
from ._pure import LOG_TWO_PI

_requested = os.environ.get("TRAJDISTILL_KERNELS", "").strip().lower()

if _requested == "python":
    _impl = _pure
    backend_name = "python"
elif _requested == "cython":
    from . import _core as _impl  # noqa: F401

    backend_name = "cython"
elif _requested == "":
    try:
        from . import _core as _impl  # noqa: F811
        backend_name = "cython"
    except ImportError:
        _impl = _pure
        backend_name = "python"
else:
    raise RuntimeError(
        f"TRAJDISTILL_KERNELS must be 'python' or 'cython', got {_requested!r}"
    )


def _arr(x, ndim):
    a = np.ascontiguousarray(x, dtype=np.float64)
    if a.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {a.shape}")
    return a


def mixture_log_prob(weights, means, stds, trajs, var_scale=1.0):
    return _impl.mixture_log_prob(
        _arr(weights, 1), _arr(means, 3), _arr(stds, 3), _arr(trajs, 3),
        float(var_scale),
    )


def batch_weighted_nll_grad(logits, means, log_stds, targets, tweights, var_scale=1.0):
    return _impl.batch_weighted_nll_grad(
        _arr(logits, 2), _arr(means, 4), _arr(log_stds, 4), _arr(targets, 4),
        _arr(tweights, 2), float(var_scale),
    )


def batch_gt_nll_grad(logits, means, log_stds, gt, var_scale=1.0):
    return _impl.batch_gt_nll_grad(
        _arr(logits, 2), _arr(means, 4), _arr(log_stds, 4), _arr(gt, 3),
        float(var_scale),
    )


def batch_bijective_nll_grad(logits, means, log_stds, t_weights, t_means, var_scale=1.0):
    return _impl.batch_bijective_nll_grad(
        _arr(logits, 2), _arr(means, 4), _arr(log_stds, 4), _arr(t_weights, 2),
        _arr(t_means, 4), float(var_scale),
    )


def pairwise_sq_dist(a, b, kind="mean"):
    kinds = {"mean": 0, "final": 1}
    if kind not in kinds:
        raise ValueError(f"kind must be 'mean' or 'final', got {kind!r}")
    return _impl.pairwise_sq_dist(_arr(a, 3), _arr(b, 3), kinds[kind])
