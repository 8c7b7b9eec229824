import math

import numpy as np
import pytest

from rbmm.core import ParticleEnsemble, RngStream
from rbmm.diagnostics import (
    EstimatorSample,
    batch_variance_factor,
    enumerate_partitions,
    estimator_stats,
    exact_x_moments,
    frozen_x_sampler,
    frozen_y_sampler,
    full_mean,
    kernel_row,
    l2_error,
    lambda_i,
    momentum_weights,
    variance_contraction,
    x_deviation,
    y_deviation,
)
from rbmm.kernels import KernelSpec
from rbmm.solvers import BatchPartition, partition

from conftest import random_state

BS = KernelSpec("BiotSavart", delta=0.1)
STEEP = KernelSpec("Steepness", {"alpha": 0.1})


def _part(*blocks):
    return BatchPartition(tuple(np.array(b) for b in blocks), len(blocks[0]))


def test_l2_error_examples():
    a = random_state(5, seed=1)
    assert l2_error(a, a) == 0.0
    assert l2_error(ParticleEnsemble(np.array([[1.0, 0.0]])), ParticleEnsemble(np.zeros((1, 2)))) == 1.0
    b = ParticleEnsemble(a.positions[:2] + np.array([3.0, 4.0]))
    assert l2_error(ParticleEnsemble(a.positions[:2]), b) == pytest.approx(math.sqrt(50), rel=1e-15)
    assert l2_error(ParticleEnsemble(a.positions[:2]), b) == pytest.approx(7.0711, abs=1e-4)


def test_l2_error_uses_positions_only():
    x = np.zeros((2, 2))
    assert l2_error(ParticleEnsemble(x, np.ones((2, 2))), ParticleEnsemble(x, np.zeros((2, 2)))) == 0.0


def test_l2_error_rejects_mismatch():
    with pytest.raises(ValueError):
        l2_error(random_state(3), random_state(4))
    with pytest.raises(ValueError):
        l2_error(ParticleEnsemble(np.zeros((2, 2)), np.zeros((2, 2))), ParticleEnsemble(np.zeros((2, 2))))


def test_lambda_hand_example():
    # kernel values for particle 0 are f(2 - 1) ... chosen so they come out as 1 and 3
    st_ = ParticleEnsemble(np.array([[2.0], [0.0], [2.0 / 3.0]]))
    row = kernel_row(st_, STEEP, 0)
    np.testing.assert_allclose(sorted(row[1:, 0]), [1.0, 3.0])
    assert lambda_i(st_, STEEP, 0) == pytest.approx(2.0, rel=1e-14)


def test_lambda_zero_when_all_values_equal():
    st_ = ParticleEnsemble(np.array([[0.0], [1.0], [-3.0]]))
    np.testing.assert_allclose(kernel_row(st_, STEEP, 0)[1:, 0], [0.5, 0.5])
    assert lambda_i(st_, STEEP, 0) == 0.0


def test_lambda_needs_three_particles():
    with pytest.raises(ValueError):
        lambda_i(random_state(2), BS, 0)


def test_x_deviation_vanishes_for_single_batch(frozen_state):
    part = _part(range(8))
    for i in range(8):
        np.testing.assert_array_equal(x_deviation(frozen_state, part, BS, i), [0.0, 0.0])


def test_enumerate_partitions_counts():
    assert len(list(enumerate_partitions(4, 2))) == 3
    assert len(list(enumerate_partitions(6, 2))) == 15
    assert len(list(enumerate_partitions(6, 3))) == 10
    assert len(list(enumerate_partitions(8, 4))) == 35
    with pytest.raises(ValueError):
        list(enumerate_partitions(5, 2))


@pytest.mark.parametrize("n,p", [(4, 2), (6, 2), (6, 3), (8, 2), (8, 4)])
def test_enumeration_moments_match_formula(n, p):
    st_ = random_state(n, seed=100 + n + p)
    for i in range(n):
        mean, var = exact_x_moments(st_, BS, p, i)
        assert np.abs(mean).max() <= 1e-12
        expected = batch_variance_factor(n, p) * lambda_i(st_, BS, i)
        assert var == pytest.approx(expected, rel=1e-10)


def test_enumeration_by_x_deviation_agrees(frozen_state):
    devs = [x_deviation(frozen_state, _part(*blocks), BS, 3) for blocks in enumerate_partitions(8, 4)]
    mean, var = exact_x_moments(frozen_state, BS, 4, 3)
    np.testing.assert_allclose(np.mean(devs, axis=0), mean, atol=1e-15)


def test_sampled_variance_matches_formula():
    st_ = random_state(24, seed=8)
    i, p, n_samples = 5, 4, 100_000
    z = frozen_x_sampler(st_, BS, p, i)(RngStream(3, "sample", 0).generator(), n_samples)
    sq = np.sum((z - z.mean(axis=0)) ** 2, axis=1)
    se = sq.std() / math.sqrt(n_samples)
    expected = batch_variance_factor(24, p) * lambda_i(st_, BS, i)
    assert abs(sq.mean() - expected) <= 3 * se


def test_sampler_draws_uniform_batch_mates():
    st_ = random_state(12, seed=1)
    row = kernel_row(st_, BS, 0)
    z = frozen_x_sampler(st_, BS, 3, 0)(np.random.default_rng(0), 60_000)
    # each mate appears with probability (p-1)/(N-1); check the implied mean
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=4 * np.abs(row).max() / math.sqrt(60_000))


def test_x_sampler_mean_within_clt_band():
    st_ = random_state(40, seed=21)
    stats = estimator_stats(frozen_x_sampler(st_, BS, 4, 7), 10_000, RngStream(0, "sample", 1))
    assert stats.mean_norm <= 3 * stats.std_error * math.sqrt(2)
    assert np.all(np.abs(stats.mean) <= 3 * math.sqrt(stats.variance / 2 / 10_000) * 1.5)


def test_estimator_stats_constant_sampler():
    sample = EstimatorSample(np.array([1.0, 2.0]), np.array([0.5, 0.5]), 0, 0)
    stats = estimator_stats(lambda gen, size: sample, 5, RngStream(0, "sample"))
    assert stats.variance == 0.0 and stats.n_samples == 5
    np.testing.assert_array_equal(stats.mean, [1.0, 2.0])
    ys = estimator_stats(lambda gen, size: sample, 5, RngStream(0, "sample"), field="y_dev")
    np.testing.assert_array_equal(ys.mean, [0.5, 0.5])


def test_estimator_stats_is_reproducible():
    st_ = random_state(20, seed=2)
    s = frozen_y_sampler(st_, BS, 4, 0, 0.1, 5)
    a = estimator_stats(s, 500, RngStream(4, "sample", 9))
    b = estimator_stats(s, 500, RngStream(4, "sample", 9))
    assert np.array_equal(a.mean, b.mean) and a.variance == b.variance


def test_estimator_stats_rejects_tiny_count():
    with pytest.raises(ValueError):
        estimator_stats(lambda g, n: np.zeros((n, 2)), 1, RngStream(0, "sample"))


def test_y_deviation_beta_zero_and_first_step(frozen_state):
    parts = [partition(8, 2, RngStream(1, "partition", s)) for s in range(4)]
    hist = [(frozen_state, p) for p in parts]
    for i in (0, 5):
        np.testing.assert_array_equal(y_deviation(hist, BS, 0.0, i, 3), x_deviation(frozen_state, parts[3], BS, i))
        np.testing.assert_array_equal(y_deviation(hist, BS, 0.7, i, 0), x_deviation(frozen_state, parts[0], BS, i))


def test_y_deviation_hand_unrolled_two_steps():
    s0 = ParticleEnsemble(np.array([[0.0], [2.0], [3.0], [-1.0]]))
    s1 = ParticleEnsemble(np.array([[0.5], [2.0], [3.0], [-1.0]]))
    hist = [(s0, _part([0, 1], [2, 3])), (s1, _part([0, 3], [1, 2]))]
    # step 0 mate 1: f(-2) = 1/3; step 1 mate 3: f(1.5) = 2
    corrected = 0.5 * (1 / 3) + 0.5 * 2.0
    full1 = (1 / 2.5 + 1 / 3.5 + 2.0) / 3
    got = y_deviation(hist, STEEP, 0.5, 0, 1)
    assert got[0] == pytest.approx(corrected - full1, rel=1e-12)


def test_y_deviation_needs_full_history(frozen_state):
    with pytest.raises(ValueError):
        y_deviation([(frozen_state, _part(range(8)))], BS, 0.1, 0, 2)


def test_momentum_weights_examples():
    np.testing.assert_allclose(momentum_weights(2, 0.5), [0.25, 0.25, 0.5])
    np.testing.assert_array_equal(momentum_weights(0, 0.3), [1.0])
    assert variance_contraction(0.1) == pytest.approx(0.8181818181818181, rel=1e-15)


def test_variance_contraction_in_frozen_toy():
    st_ = random_state(24, seed=3)
    beta, n = 0.1, 40
    x = estimator_stats(frozen_x_sampler(st_, BS, 4, 2), 50_000, RngStream(1, "sample", 0))
    y = estimator_stats(frozen_y_sampler(st_, BS, 4, 2, beta, n), 50_000, RngStream(1, "sample", 1))
    assert y.variance / x.variance < 1
    assert y.variance / x.variance <= variance_contraction(beta) * 1.05


def _drifting_start(st_, i, rate, n):
    """Start state whose particle ``i`` reaches the frozen position at step ``n``."""
    x = st_.positions.copy()
    x[i, 0] -= rate * n
    return ParticleEnsemble(x)


def _bias(st_, tau, beta, n, i=1, speed=5.0):
    """Exact mean of Y on the drifting toy: weighted full means minus the last one."""
    start = _drifting_start(st_, i, speed * tau, n).positions
    fulls = []
    for s in range(n + 1):
        x = start.copy()
        x[i, 0] += speed * tau * s
        fulls.append(full_mean(kernel_row(ParticleEnsemble(x), BS, i), i))
    w = momentum_weights(n, beta)
    return np.linalg.norm(np.tensordot(w, np.array(fulls), axes=1) - fulls[-1])


@pytest.mark.parametrize("beta", [0.1, 0.3])
def test_mean_of_y_scales_with_tau_exactly(beta):
    st_ = random_state(24, seed=5)
    ratio = _bias(st_, 2e-3, beta, 30) / _bias(st_, 1e-3, beta, 30)
    assert abs(ratio - 2) <= 0.25 * 2


def test_mean_of_y_scales_with_tau_sampled():
    st_ = random_state(24, seed=5)
    beta, n, size, speed = 0.3, 30, 40_000, 5.0
    stream = RngStream(11, "sample", 0)
    # common random numbers: the frozen run shares every partition draw, so
    # subtracting its mean removes the sampling noise from the bias estimate
    frozen = estimator_stats(frozen_y_sampler(st_, BS, 4, 1, beta, n), size, stream).mean
    biases = []
    for tau in (2e-3, 1e-3):
        start = _drifting_start(st_, 1, speed * tau, n)
        s = frozen_y_sampler(start, BS, 4, 1, beta, n, drift_rate=speed * tau)
        biases.append(np.linalg.norm(estimator_stats(s, size, stream).mean - frozen))
    assert abs(biases[0] / biases[1] - 2) <= 0.25 * 2


def test_var_y_non_increasing_in_beta():
    hits = 0
    for seed in range(10):
        st_ = random_state(20, seed=seed)
        vs = [estimator_stats(frozen_y_sampler(st_, BS, 4, 0, b, 20), 4000,
                              RngStream(seed, "sample", 0)).variance for b in (0.0, 0.05, 0.1)]
        hits += vs[0] >= vs[1] >= vs[2]
    assert hits >= 8


def test_frozen_samplers_require_divisible_batches():
    with pytest.raises(ValueError):
        frozen_x_sampler(random_state(10), BS, 3, 0)
    with pytest.raises(ValueError):
        frozen_y_sampler(random_state(10), BS, 3, 0, 0.1, 2)
