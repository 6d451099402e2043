"""Backend parity and correctness of the numerical kernels.

The compiled extension and the NumPy fallback must agree to near machine
precision on every kernel, for every argument pattern the library uses,
including read-only (frozen) input arrays.
"""

import numpy as np
import pytest

from trajdistill import _kernels
from trajdistill._kernels import _pure

try:
    from trajdistill._kernels import _core
except ImportError:
    _core = None

needs_core = pytest.mark.skipif(_core is None, reason="compiled backend not built")


def _mixture_inputs(rng, n=5, t=8, j=7):
    w = rng.random(n) + 0.05
    w /= w.sum()
    means = rng.normal(0.0, 4.0, (n, t, 2))
    stds = rng.uniform(0.4, 2.5, (n, t, 2))
    trajs = rng.normal(0.0, 4.0, (j, t, 2))
    return w, means, stds, trajs


def _batch_inputs(rng, b=6, n=4, t=5, d=3):
    logits = rng.normal(0.0, 1.5, (b, n))
    means = rng.normal(0.0, 4.0, (b, n, t, 2))
    log_stds = rng.normal(0.0, 0.4, (b, n, t, 2))
    targets = rng.normal(0.0, 4.0, (b, d, t, 2))
    tweights = rng.random((b, d)) + 0.05
    return logits, means, log_stds, targets, tweights


@needs_core
@pytest.mark.parametrize("var_scale", [1.0, 0.5, 2.0])
def test_mixture_log_prob_backends_agree(rng, var_scale):
    args = _mixture_inputs(rng)
    got_pure = _pure.mixture_log_prob(*args, var_scale)
    got_core = _core.mixture_log_prob(*args, var_scale)
    np.testing.assert_allclose(got_core, got_pure, rtol=1e-12, atol=1e-12)


@needs_core
def test_weighted_nll_grad_backends_agree(rng):
    logits, means, log_stds, targets, tweights = _batch_inputs(rng)
    outs_p = _pure.batch_weighted_nll_grad(logits, means, log_stds, targets, tweights, 1.0)
    outs_c = _core.batch_weighted_nll_grad(logits, means, log_stds, targets, tweights, 1.0)
    for a, b in zip(outs_c, outs_p):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


@needs_core
def test_gt_nll_grad_backends_agree(rng):
    logits, means, log_stds, _, _ = _batch_inputs(rng)
    gt = rng.normal(0.0, 4.0, (logits.shape[0], means.shape[2], 2))
    outs_p = _pure.batch_gt_nll_grad(logits, means, log_stds, gt, 1.0)
    outs_c = _core.batch_gt_nll_grad(logits, means, log_stds, gt, 1.0)
    for a, b in zip(outs_c, outs_p):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


@needs_core
def test_bijective_nll_grad_backends_agree(rng):
    logits, means, log_stds, _, _ = _batch_inputs(rng)
    b, n, t, _ = means.shape
    t_means = rng.normal(0.0, 4.0, (b, n, t, 2))
    t_weights = rng.random((b, n)) + 0.05
    t_weights /= t_weights.sum(axis=1, keepdims=True)
    outs_p = _pure.batch_bijective_nll_grad(logits, means, log_stds, t_weights, t_means, 1.0)
    outs_c = _core.batch_bijective_nll_grad(logits, means, log_stds, t_weights, t_means, 1.0)
    for a, b_ in zip(outs_c, outs_p):
        np.testing.assert_allclose(a, b_, rtol=1e-12, atol=1e-12)


@needs_core
@pytest.mark.parametrize("kind", [0, 1])
def test_pairwise_sq_dist_backends_agree(rng, kind):
    a = rng.normal(0.0, 5.0, (9, 6, 2))
    b = rng.normal(0.0, 5.0, (4, 6, 2))
    np.testing.assert_allclose(
        _core.pairwise_sq_dist(a, b, kind),
        _pure.pairwise_sq_dist(a, b, kind),
        rtol=1e-12,
        atol=1e-12,
    )


def test_wrappers_accept_readonly_arrays(rng):
    """Frozen (non-writeable) arrays must pass through every wrapper."""
    w, means, stds, trajs = _mixture_inputs(rng)
    for a in (w, means, stds, trajs):
        a.flags.writeable = False
    out = _kernels.mixture_log_prob(w, means, stds, trajs, 1.0)
    assert np.isfinite(out).all()

    logits, m, ls, targets, tw = _batch_inputs(rng)
    for a in (logits, m, ls, targets, tw):
        a.flags.writeable = False
    loss, dz, dm, dl = _kernels.batch_weighted_nll_grad(logits, m, ls, targets, tw, 1.0)
    assert np.isfinite(loss).all()

    d2 = _kernels.pairwise_sq_dist(means, means, "mean")
    assert d2.shape == (means.shape[0], means.shape[0])


def test_wrappers_coerce_lists_and_float32(rng):
    w, means, stds, trajs = _mixture_inputs(rng, n=2, t=2, j=3)
    out_arr = _kernels.mixture_log_prob(w, means, stds, trajs, 1.0)
    out_list = _kernels.mixture_log_prob(
        w.tolist(), means.tolist(), stds.tolist(), trajs.tolist(), 1.0
    )
    np.testing.assert_allclose(out_list, out_arr, rtol=1e-15)
    out_f32 = _kernels.mixture_log_prob(
        w.astype(np.float32), means, stds, trajs, 1.0
    )
    assert np.abs(out_f32 - out_arr).max() < 1e-5


def test_mixture_log_prob_single_standard_normal():
    """One mode, T=1, standard bivariate normal: closed forms at 0 and (3,4)."""
    w = np.array([1.0])
    means = np.zeros((1, 1, 2))
    stds = np.ones((1, 1, 2))
    at_mean = _kernels.mixture_log_prob(w, means, stds, np.zeros((1, 1, 2)), 1.0)[0]
    assert abs(at_mean + np.log(2.0 * np.pi)) < 1e-12
    off = _kernels.mixture_log_prob(w, means, stds, np.array([[[3.0, 4.0]]]), 1.0)[0]
    assert abs(off + np.log(2.0 * np.pi) + 12.5) < 1e-12


def test_mixture_log_prob_matches_direct_sum(rng):
    """Brute-force linear-space mixture evaluation as an oracle."""
    w, means, stds, trajs = _mixture_inputs(rng, n=3, t=4, j=5)
    got = _kernels.mixture_log_prob(w, means, stds, trajs, 1.0)
    for j in range(trajs.shape[0]):
        dens = 0.0
        for n in range(w.shape[0]):
            z = (trajs[j] - means[n]) / stds[n]
            # per-step normalizer: 2pi sigma_x sigma_y
            comp = np.exp(-0.5 * (z**2).sum()) / np.prod(
                2.0 * np.pi * stds[n, :, 0] * stds[n, :, 1]
            )
            dens += w[n] * comp
        np.testing.assert_allclose(got[j], np.log(dens), rtol=1e-10)


def test_gt_grad_zeros_off_selected_mode(rng):
    logits, means, log_stds, _, _ = _batch_inputs(rng, b=3)
    gt = means[:, 0] + 0.01
    loss, dz, dm, dl = _kernels.batch_gt_nll_grad(logits, means, log_stds, gt, 1.0)
    d2 = ((means - gt[:, None]) ** 2).sum(axis=3).mean(axis=2)
    nstar = d2.argmin(axis=1)
    for b in range(3):
        others = [n for n in range(means.shape[1]) if n != nstar[b]]
        assert np.all(dm[b, others] == 0.0)
        assert np.all(dl[b, others] == 0.0)


def test_pairwise_sq_dist_hand_example():
    a = np.array([[[0.0, 0.0], [2.0, 0.0]]])
    b = np.array([[[0.0, 1.0], [2.0, 3.0]]])
    # mean over time: (1 + 9) / 2; final point: 9
    assert _kernels.pairwise_sq_dist(a, b, "mean")[0, 0] == pytest.approx(5.0)
    assert _kernels.pairwise_sq_dist(a, b, "final")[0, 0] == pytest.approx(9.0)
    with pytest.raises(ValueError):
        _kernels.pairwise_sq_dist(a, b, "nope")
