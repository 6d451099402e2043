"""Ensemble combination identity and NMS reduction behavior."""

import itertools

import numpy as np
import pytest

from trajdistill.ensemble import (
    EnsembleSpec,
    NmsConfig,
    combine,
    nms_reduce,
    nms_reduce_with_trace,
)
from trajdistill.errors import ValidationError
from trajdistill.gmm import GmmPrediction, log_prob_batch

from conftest import make_gmm


def test_spec_rejects_bad_weights(rng):
    t = make_gmm(rng, 2, 3)
    with pytest.raises(ValidationError):
        EnsembleSpec((t, t), np.array([0.7, 0.4]))
    with pytest.raises(ValidationError):
        EnsembleSpec((), np.array([]))


def test_spec_rejects_mixed_horizons(rng):
    with pytest.raises(ValidationError, match="horizon"):
        EnsembleSpec.uniform([make_gmm(rng, 2, 3), make_gmm(rng, 2, 4)])


def test_combine_single_teacher_identity(rng):
    t = make_gmm(rng, 4, 5)
    out = combine(EnsembleSpec.uniform([t]), temperature=1.0)
    np.testing.assert_allclose(out.weights, t.weights, atol=1e-15)
    np.testing.assert_array_equal(out.means, t.means)


def test_combine_two_single_mode_teachers(rng):
    a = make_gmm(rng, 1, 2)
    b = make_gmm(rng, 1, 2)
    out = combine(EnsembleSpec.uniform([a, b]))
    assert out.n_modes == 2
    np.testing.assert_allclose(out.weights, [0.5, 0.5], atol=1e-15)


def test_combine_mixture_identity(rng):
    """Density of the combined mixture equals the weighted sum of teacher
    densities at random trajectories, to 1e-9 relative in log space."""
    teachers = [make_gmm(rng, rng.integers(1, 5), 6) for _ in range(3)]
    w = np.array([0.2, 0.3, 0.5])
    mixed = combine(EnsembleSpec(tuple(teachers), w), temperature=1.0)
    trajs = rng.normal(0.0, 5.0, (100, 6, 2))
    got = log_prob_batch(mixed, trajs)
    per_teacher = np.stack([log_prob_batch(t, trajs) for t in teachers])
    m = per_teacher.max(axis=0)
    want = m + np.log((w[:, None] * np.exp(per_teacher - m)).sum(axis=0))
    np.testing.assert_allclose(got, want, rtol=1e-9)


def test_combine_applies_temperature_per_teacher(rng):
    t = GmmPrediction(
        weights=np.array([0.8, 0.2]),
        means=rng.normal(0.0, 3.0, (2, 2, 2)),
        stds=np.ones((2, 2, 2)),
    )
    out = combine(EnsembleSpec.uniform([t]), temperature=2.0)
    np.testing.assert_allclose(out.weights, [2.0 / 3.0, 1.0 / 3.0], atol=1e-12)


def cluster_mixture(rng, centers, sizes, horizon=4, spread=0.3):
    """Modes scattered tightly around well-separated cluster centers."""
    means, weights = [], []
    for c, n in zip(centers, sizes):
        for _ in range(n):
            means.append(np.full((horizon, 2), c) + rng.normal(0.0, spread, (horizon, 2)))
            weights.append(rng.random() + 0.2)
    w = np.asarray(weights)
    return GmmPrediction(w / w.sum(), np.stack(means), np.full((len(w), horizon, 2), 0.8))


def oracle_reduce(mixture, m):
    """Exhaustive-assignment clustering oracle for small inputs.

    Enumerates every assignment of modes to m clusters, keeps the one with
    the lowest total weighted squared distance (mean over time) to the
    weighted cluster centroids, and returns moment-matched stats.
    """
    n = mixture.n_modes
    w = mixture.weights
    means = mixture.means
    best = None
    for assign in itertools.product(range(m), repeat=n):
        assign = np.asarray(assign)
        if len(set(assign.tolist())) < m:
            continue
        cents = np.zeros((m,) + means.shape[1:])
        cw = np.zeros(m)
        for c in range(m):
            mask = assign == c
            cw[c] = w[mask].sum()
            cents[c] = (w[mask, None, None] * means[mask]).sum(axis=0) / cw[c]
        cost = 0.0
        for i in range(n):
            cost += w[i] * ((means[i] - cents[assign[i]]) ** 2).sum(axis=1).mean()
        if best is None or cost < best[0]:
            best = (cost, assign, cents, cw)
    _, assign, cents, cw = best
    stds = np.zeros_like(cents)
    for c in range(m):
        mask = assign == c
        second = (
            w[mask, None, None]
            * (mixture.stds[mask] ** 2 + (means[mask] - cents[c]) ** 2)
        ).sum(axis=0)
        stds[c] = np.sqrt(second / cw[c])
    return cw / cw.sum(), cents, stds


def match_order(got_means, want_means):
    """Pair output modes to oracle modes by nearest centroid."""
    order = []
    for wm in want_means:
        d = ((got_means - wm) ** 2).sum(axis=(1, 2))
        order.append(int(d.argmin()))
    return order


@pytest.mark.parametrize("seed", range(8))
def test_nms_matches_exhaustive_oracle(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(2, 4))
    sizes = rng.integers(1, 3, size=m)
    while sizes.sum() > 6:
        sizes = rng.integers(1, 3, size=m)
    centers = rng.permutation(np.array([[0.0, 0.0], [30.0, 0.0], [0.0, 30.0]]))[:m]
    mixture = cluster_mixture(rng, centers, sizes)
    reduced = nms_reduce(mixture, NmsConfig(target_modes=m))
    want_w, want_means, want_stds = oracle_reduce(mixture, m)
    order = match_order(reduced.means, want_means)
    assert sorted(order) == list(range(m))
    np.testing.assert_allclose(reduced.weights[order], want_w, atol=1e-6)
    np.testing.assert_allclose(reduced.means[order], want_means, atol=1e-6)
    np.testing.assert_allclose(reduced.stds[order], want_stds, atol=1e-6)


def test_nms_coincident_modes_merge():
    means = np.zeros((2, 3, 2))
    mixture = GmmPrediction(np.array([0.3, 0.7]), means, np.ones((2, 3, 2)))
    out = nms_reduce(mixture, NmsConfig(target_modes=1))
    assert out.n_modes == 1
    assert out.weights[0] == pytest.approx(1.0)
    np.testing.assert_allclose(out.means[0], means[0], atol=1e-12)


def test_nms_separated_modes_preserved():
    means = np.stack([np.zeros((2, 2)), np.full((2, 2), 100.0)])
    mixture = GmmPrediction(np.array([0.4, 0.6]), means, np.ones((2, 2, 2)))
    out = nms_reduce(mixture, NmsConfig(target_modes=2, coverage_radius=2.0))
    order = match_order(out.means, means)
    np.testing.assert_allclose(out.weights[order], [0.4, 0.6], atol=1e-9)
    np.testing.assert_allclose(out.means[order], means, atol=1e-9)


def test_nms_idempotent_on_separated_input(rng):
    centers = np.array([[0.0, 0.0], [50.0, 0.0], [0.0, 50.0], [50.0, 50.0]])
    means = np.stack([np.full((3, 2), c) for c in centers])
    w = np.array([0.1, 0.2, 0.3, 0.4])
    mixture = GmmPrediction(w, means, np.full((4, 3, 2), 1.3))
    out = nms_reduce(mixture, NmsConfig(target_modes=4))
    order = match_order(out.means, means)
    np.testing.assert_allclose(out.weights[order], w, atol=1e-9)
    np.testing.assert_allclose(out.means[order], means, atol=1e-9)
    np.testing.assert_allclose(out.stds[order], mixture.stds, atol=1e-9)


def test_nms_output_postconditions(rng):
    mixture = make_gmm(rng, 24, 5, spread=10.0)
    for m in (1, 3, 6, 24):
        out = nms_reduce(mixture, NmsConfig(target_modes=m))
        assert out.n_modes == m
        assert out.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_nms_target_exceeding_input_rejected(rng):
    with pytest.raises(ValidationError, match="target_modes"):
        nms_reduce(make_gmm(rng, 3, 4), NmsConfig(target_modes=5))


def test_nms_mass_conserved_every_iteration(rng):
    mixture = make_gmm(rng, 30, 4, spread=8.0)
    _, trace = nms_reduce_with_trace(mixture, NmsConfig(target_modes=5, refine_iters=10))
    assert trace.iterations >= 1
    np.testing.assert_allclose(trace.weight_sums, 1.0, atol=1e-12)


def test_nms_objective_never_increases(rng):
    for seed in range(5):
        r = np.random.default_rng(seed)
        mixture = make_gmm(r, 40, 4, spread=12.0)
        _, trace = nms_reduce_with_trace(mixture, NmsConfig(target_modes=6, refine_iters=15))
        diffs = np.diff(trace.objectives)
        assert (diffs <= 1e-12).all()


def test_nms_greedy_covers_heaviest_cluster_first():
    # cluster at origin holds 0.6 total weight, far mode holds 0.4
    means = np.stack(
        [np.zeros((2, 2)), np.full((2, 2), 0.5), np.full((2, 2), 80.0)]
    )
    mixture = GmmPrediction(np.array([0.3, 0.3, 0.4]), means, np.ones((3, 2, 2)))
    _, trace = nms_reduce_with_trace(mixture, NmsConfig(target_modes=2, refine_iters=0))
    assert trace.picked[0] in (0, 1)
    assert trace.picked[1] == 2


def test_nms_refine_iters_zero_keeps_greedy_picks(rng):
    mixture = make_gmm(rng, 10, 3, spread=6.0)
    out, trace = nms_reduce_with_trace(mixture, NmsConfig(target_modes=3, refine_iters=0))
    assert trace.iterations == 0
    np.testing.assert_allclose(
        out.means, mixture.means[list(trace.picked)], atol=1e-12
    )


def test_nms_final_point_distance_kind():
    # identical endpoints, different paths: final_point treats them as one
    a = np.array([[0.0, 0.0], [10.0, 0.0]])
    b = np.array([[0.0, 10.0], [10.0, 0.0]])
    mixture = GmmPrediction(
        np.array([0.5, 0.5]), np.stack([a, b]), np.ones((2, 2, 2))
    )
    merged = nms_reduce(
        mixture, NmsConfig(target_modes=1, distance_kind="final_point")
    )
    assert merged.weights[0] == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        NmsConfig(target_modes=1, distance_kind="endpoint")


def test_nms_config_validation():
    with pytest.raises(ValidationError):
        NmsConfig(target_modes=0)
    with pytest.raises(ValidationError):
        NmsConfig(target_modes=1, coverage_radius=0.0)
    with pytest.raises(ValidationError):
        NmsConfig(target_modes=1, refine_iters=-1)
