"""Vectorized NumPy implementations of the hot numerical kernels.

Shared conventions (all arrays float64):
  - a trajectory is a (T, 2) array of x/y positions,
  - a mixture over trajectories is (weights (N,), means (N, T, 2),
    stds (N, T, 2)) with diagonal per-step covariance,
  - unconstrained mixture parameters are (logits (N,), means, log_stds);
    weights = softmax(logits), stds = exp(log_stds),
  - ``var_scale`` multiplies every per-step variance before evaluation.

The compiled backend in ``_core.pyx`` implements the same signatures.
"""

import numpy as np

LOG_TWO_PI = float(np.log(2.0 * np.pi))


def _log_softmax(logits, axis):
    m = logits.max(axis=axis, keepdims=True)
    z = logits - m
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def mixture_log_prob(weights, means, stds, trajs, var_scale):
    """Log-density of each trajectory under a Gaussian mixture.

    weights (N,), means/stds (N, T, 2), trajs (J, T, 2) -> (J,).
    Evaluated in log space with a max-shifted log-sum-exp over modes.
    """
    var = var_scale * stds**2
    diff = trajs[:, None, :, :] - means[None, :, :, :]  # (J, N, T, 2)
    quad = diff**2 / var[None]
    comp = -0.5 * (quad + np.log(var)[None] + LOG_TWO_PI).sum(axis=(2, 3))
    with np.errstate(divide="ignore"):
        a = np.log(weights)[None, :] + comp  # (J, N)
    m = a.max(axis=1)
    return m + np.log(np.exp(a - m[:, None]).sum(axis=1))


def batch_weighted_nll_grad(logits, means, log_stds, targets, tweights, var_scale):
    """Weighted mixture negative log-likelihood and its parameter gradients.

    Per batch row b the loss is -sum_d tweights[b,d] * log q_b(targets[b,d])
    where q_b is the mixture defined by (logits[b], means[b], log_stds[b]).

    logits (B, N), means/log_stds (B, N, T, 2), targets (B, D, T, 2),
    tweights (B, D) -> (loss (B,), dlogits, dmeans, dlog_stds).
    """
    logpi = _log_softmax(logits, axis=1)  # (B, N)
    pi = np.exp(logpi)
    var = var_scale * np.exp(2.0 * log_stds)  # (B, N, T, 2)
    diff = targets[:, :, None, :, :] - means[:, None, :, :, :]  # (B, D, N, T, 2)
    quad = diff**2 / var[:, None]
    g = -0.5 * (
        (quad + 2.0 * log_stds[:, None]).sum(axis=(3, 4))
        + means.shape[2] * 2 * (np.log(var_scale) + LOG_TWO_PI)
    )  # (B, D, N)
    a = logpi[:, None, :] + g
    m = a.max(axis=2)
    lse = m + np.log(np.exp(a - m[..., None]).sum(axis=2))  # (B, D)
    loss = -(tweights * lse).sum(axis=1)

    resp = np.exp(a - lse[..., None])  # (B, D, N)
    cresp = tweights[..., None] * resp
    csum = tweights.sum(axis=1)
    dlogits = csum[:, None] * pi - cresp.sum(axis=1)
    dmeans = -(cresp[..., None, None] * (diff / var[:, None])).sum(axis=1)
    dlog_stds = (cresp[..., None, None] * (1.0 - quad)).sum(axis=1)
    return loss, dlogits, dmeans, dlog_stds


def batch_gt_nll_grad(logits, means, log_stds, gt, var_scale):
    """Hard-assignment negative log-likelihood of one target trajectory.

    The mode whose mean trajectory is nearest to ``gt`` (time-averaged
    squared displacement) is selected; the loss is its negative log weight
    plus the negative Gaussian log-density of ``gt`` under it.

    logits (B, N), means/log_stds (B, N, T, 2), gt (B, T, 2).
    """
    B, N, T, _ = means.shape
    logpi = _log_softmax(logits, axis=1)
    pi = np.exp(logpi)
    d2 = ((means - gt[:, None]) ** 2).sum(axis=3).mean(axis=2)  # (B, N)
    nstar = d2.argmin(axis=1)

    rows = np.arange(B)
    mu = means[rows, nstar]  # (B, T, 2)
    ls = log_stds[rows, nstar]
    var = var_scale * np.exp(2.0 * ls)
    diff = gt - mu
    quad = diff**2 / var
    nll = 0.5 * ((quad + 2.0 * ls).sum(axis=(1, 2)) + 2 * T * (np.log(var_scale) + LOG_TWO_PI))
    loss = -logpi[rows, nstar] + nll

    dlogits = pi.copy()
    dlogits[rows, nstar] -= 1.0
    dmeans = np.zeros_like(means)
    dmeans[rows, nstar] = -diff / var
    dlog_stds = np.zeros_like(log_stds)
    dlog_stds[rows, nstar] = 1.0 - quad
    return loss, dlogits, dmeans, dlog_stds


def batch_bijective_nll_grad(logits, means, log_stds, t_weights, t_means, var_scale):
    """Index-paired distillation loss against a same-size teacher mixture.

    Cross entropy between teacher and student weights plus, per mode, the
    teacher-weighted Gaussian negative log-density of the teacher mean
    trajectory under the matching student mode.

    logits (B, N), means/log_stds (B, N, T, 2), t_weights (B, N),
    t_means (B, N, T, 2).
    """
    T = means.shape[2]
    logpi = _log_softmax(logits, axis=1)
    pi = np.exp(logpi)
    ce = -np.where(t_weights > 0.0, t_weights * logpi, 0.0).sum(axis=1)

    var = var_scale * np.exp(2.0 * log_stds)
    diff = t_means - means
    quad = diff**2 / var
    nll = 0.5 * (
        (quad + 2.0 * log_stds).sum(axis=(2, 3)) + 2 * T * (np.log(var_scale) + LOG_TWO_PI)
    )  # (B, N)
    loss = ce + (t_weights * nll).sum(axis=1)

    qsum = t_weights.sum(axis=1)
    dlogits = qsum[:, None] * pi - t_weights
    dmeans = t_weights[..., None, None] * (-diff / var)
    dlog_stds = t_weights[..., None, None] * (1.0 - quad)
    return loss, dlogits, dmeans, dlog_stds


def pairwise_sq_dist(a, b, kind):
    """Squared trajectory distances between two stacks of trajectories.

    kind 0: squared displacement averaged over timesteps.
    kind 1: squared displacement at the final timestep.
    a (A, T, 2), b (B, T, 2) -> (A, B).
    """
    if kind == 1:
        diff = a[:, None, -1, :] - b[None, :, -1, :]
        return (diff**2).sum(axis=2)
    diff = a[:, None, :, :] - b[None, :, :, :]
    return (diff**2).sum(axis=3).mean(axis=2)
