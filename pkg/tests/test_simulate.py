import math

import numpy as np
import pytest

from maec.errors import ValidationError
from maec.operators import total_variation
from maec.simulate import (
    INVERSION_CUTOFF, SAMPLER_PARTITION, ForwardModel, PhantomKind,
    intensity, make_phantom, poisson_sample, simulate_views,
)

BIPATH = ForwardModel.bipath()


def test_intensity_without_attenuation(rng):
    beta = rng.uniform(0.0, 10.0, (6, 5))
    lam1, lam2 = intensity(ForwardModel.bipath(scale=3.0), beta, np.zeros((6, 5)))
    assert np.array_equal(lam1, 3.0 * beta)
    assert np.array_equal(lam2, 3.0 * beta)


def test_intensity_example():
    (lam,) = intensity(ForwardModel.lidar(range_squared=False), [1.0, 2.0, 3.0], [math.log(2.0), 0.0, 0.0])
    assert np.allclose(lam, [0.5, 1.0, 1.5], rtol=1e-15)


def test_log_ratio_of_opposite_views(rng):
    beta = rng.uniform(1.0, 100.0, (16, 8))
    alpha = rng.uniform(0.0, 0.1, (16, 8))
    lam1, lam2 = intensity(BIPATH, beta, alpha)
    first, second = BIPATH.operators
    expected = first.apply(alpha) - second.apply(alpha)
    assert np.allclose(np.log(lam2 / lam1), expected, rtol=1e-12, atol=1e-12)


def test_intensity_decreases_with_attenuation(rng):
    beta = rng.uniform(1.0, 100.0, 32)
    alpha = rng.uniform(0.0, 0.1, 32)
    more = alpha + rng.uniform(0.0, 0.05, 32)
    for lo, hi in zip(intensity(BIPATH, beta, more), intensity(BIPATH, beta, alpha)):
        assert np.all(lo <= hi)


def test_lidar_range_weight():
    model = ForwardModel.lidar(scale=2.0)
    w = model.weights((3, 2))
    assert w[0].tolist() == [8.0, 8.0]
    assert w[1] == pytest.approx([2.0 / 2.25] * 2)
    assert model.views == 1


def test_intensity_validation():
    with pytest.raises(ValidationError):
        intensity(BIPATH, [-1.0, 1.0], [0.0, 0.0])
    with pytest.raises(ValidationError):
        intensity(BIPATH, [1.0, 1.0], [0.0, 0.0, 0.0])
    with pytest.raises(ValidationError):
        ForwardModel(())
    with pytest.raises(ValidationError):
        ForwardModel.bipath(scale=0.0)


def test_poisson_zero_mean():
    assert not poisson_sample(np.zeros(1000)).any()


@pytest.mark.parametrize('mean', [0.5, 3.0, INVERSION_CUTOFF, 100.0, 1e4])
def test_poisson_moments(mean):
    n = 100000
    counts = poisson_sample(np.full(n, mean), seed=3)
    assert np.array_equal(counts, np.round(counts))
    assert counts.min() >= 0
    # five standard errors of the sample mean and variance
    assert abs(counts.mean() - mean) <= 5 * math.sqrt(mean / n)
    assert abs(counts.var() - mean) <= 5 * mean * math.sqrt(2.0 / n) + 5 * math.sqrt(mean / n)


def test_poisson_is_seeded():
    lam = np.full((50, 50), 20.0)
    a = poisson_sample(lam, seed=1)
    assert np.array_equal(a, poisson_sample(lam, seed=1))
    assert not np.array_equal(a, poisson_sample(lam, seed=2))
    assert not np.array_equal(a, poisson_sample(lam, seed=1, stream=1))


def test_poisson_partitions_are_independent(rng):
    lam = rng.uniform(0.0, 200.0, 3 * SAMPLER_PARTITION)
    counts = poisson_sample(lam, seed=9)
    assert np.array_equal(counts[:SAMPLER_PARTITION], poisson_sample(lam[:SAMPLER_PARTITION], seed=9))


def test_poisson_scaled_means(rng):
    n = 100000
    counts = poisson_sample(np.full(n, 7.0), seed=4)
    scaled = poisson_sample(np.full(n, 70.0), seed=4)
    assert abs(scaled.mean() / counts.mean() - 10.0) <= 0.2


def test_poisson_validation():
    with pytest.raises(ValidationError):
        poisson_sample([-1.0])
    with pytest.raises(ValidationError):
        poisson_sample([np.inf])
    with pytest.raises(ValidationError):
        poisson_sample([1.0], partition=0)


def test_simulated_views(rng):
    beta, alpha = make_phantom('blocks', (16, 16))
    noisy = simulate_views(BIPATH, beta, alpha, seed=5)
    assert len(noisy) == 2
    assert all(np.array_equal(u, np.round(u)) for u in noisy)
    assert not np.array_equal(noisy[0], noisy[1])

    exact = simulate_views(BIPATH, beta, alpha, noiseless=True)
    for u, lam in zip(exact, intensity(BIPATH, beta, alpha)):
        assert np.array_equal(u, lam)


@pytest.mark.parametrize('kind', list(PhantomKind))
@pytest.mark.parametrize('dims', [(64,), (32, 32), (8, 8, 8)])
def test_phantom_families(kind, dims):
    beta, alpha = make_phantom(kind, dims, beta_max=50.0, alpha_max=0.02, seed=11)
    assert beta.shape == alpha.shape == dims
    assert beta.max() == 50.0 and alpha.max() == 0.02
    assert beta.min() >= 0 and alpha.min() >= 0
    assert math.isfinite(total_variation(beta))

    again = make_phantom(kind.value, dims, beta_max=50.0, alpha_max=0.02, seed=11)
    assert np.array_equal(again[0], beta) and np.array_equal(again[1], alpha)


def test_blocks_are_piecewise_constant():
    beta, alpha = make_phantom(PhantomKind.BLOCKS, (8, 8))
    assert beta.max() == 100.0 and beta.min() == 0.0
    assert alpha.max() == 0.03
    blocks = beta.reshape(4, 2, 4, 2)
    assert np.all(blocks == blocks[:, :1, :, :1])
    assert not np.array_equal(beta, make_phantom(PhantomKind.BLOCKS, (8, 8), seed=1)[0])


def test_stripes_end_in_fine_bands():
    beta, _ = make_phantom('stripes', (64, 4))
    tail = beta[48:, 0]
    assert np.all(tail[0::2] == 0.0)
    assert np.all(tail[1::2] > 0.0)
    assert np.all(beta == beta[:, :1])


def test_phantom_validation():
    with pytest.raises(ValidationError):
        make_phantom('nope', (8, 8))
    with pytest.raises(ValidationError):
        make_phantom('blocks', (8, 8, 8, 8))
    with pytest.raises(ValidationError):
        make_phantom('blocks', (0, 8))
    with pytest.raises(ValidationError):
        make_phantom('blocks', (8, 8), beta_max=0.0)
