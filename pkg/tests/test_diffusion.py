import math

import numpy as np
import pytest

from semcomsim.channel import INF_SNR, sample_snr_db, sigma_squared
from semcomsim.data import synthetic_images
from semcomsim.diffusion import (Denoiser, DenoiserConfig, NoiseSchedule, forward_noise, noise_mix, sample,
                                 timestep_embedding, training_loss)
from semcomsim.pipeline import Pipeline, noisy_condition, reconstruct
from semcomsim.semantic import EmbeddingSpec, SemanticEncoder, extract
from semcomsim.tensor import ShapeError, Tensor
from semcomsim.vq import VQConfig, VQModel, vq_decode, vq_encode

SHAPE = (8, 8, 8)


@pytest.fixture(scope="module")
def schedule():
    return NoiseSchedule.cosine(1000)


@pytest.fixture(scope="module")
def denoiser():
    d = Denoiser(DenoiserConfig(width=16, emb_dim=32), np.random.default_rng(0))
    # zero-initialised layers would hide the conditioning path at init
    rng = np.random.default_rng(1)
    for p in d.parameters():
        if not p.data.any():
            p.data[:] = rng.normal(0, 0.1, p.shape)
    return d


class _Stub:
    """Callable with the denoiser signature."""

    def __init__(self, fn):
        self.fn = fn

    def __call__(self, x, t, z_hat):
        return Tensor(self.fn(x.data, t, z_hat))


# -- schedule ----------------------------------------------------------------

def test_cosine_schedule_invariants(schedule):
    ab = schedule.alpha_bar
    assert schedule.T == 1000 and ab.size == 1001
    assert ab[0] == 1.0
    assert np.all(np.diff(ab) < 0)
    assert 0 < ab[-1] < 1e-3


def test_schedule_rejects_bad_sequences():
    with pytest.raises(ValueError):
        NoiseSchedule([0.9, 0.5])
    with pytest.raises(ValueError):
        NoiseSchedule([1.0, 0.5, 0.5])
    with pytest.raises(ValueError):
        NoiseSchedule([1.0, 0.5, 0.0])


def test_strided_timesteps(schedule):
    taus = schedule.strided(20)
    assert taus[0] == 1000 and taus[-1] == 0 and taus.size == 21
    assert np.all(np.diff(taus) == -50)
    with pytest.raises(ValueError):
        schedule.strided(1001)


# -- forward process ---------------------------------------------------------

def test_forward_noise_hand_value():
    sched = NoiseSchedule([1.0, 0.25, 0.1])
    # 0.5 * 2 + sqrt(0.75) * 1
    assert forward_noise(sched, 2.0, 1, 1.0) == pytest.approx(1.8660254, abs=1e-7)


def test_noise_mix_limits():
    x = np.random.default_rng(0).standard_normal(SHAPE)
    eps = np.random.default_rng(1).standard_normal(SHAPE)
    np.testing.assert_array_equal(noise_mix(1.0, x, eps), x)
    np.testing.assert_array_equal(noise_mix(0.0, x, eps), eps)


def test_forward_noise_near_limits():
    x = np.random.default_rng(0).standard_normal(SHAPE)
    eps = np.random.default_rng(1).standard_normal(SHAPE)
    sched = NoiseSchedule([1.0, 1.0 - 1e-14, 1e-20])
    np.testing.assert_allclose(forward_noise(sched, x, 1, eps), x, atol=1e-6)
    np.testing.assert_allclose(forward_noise(sched, x, 2, eps), eps, atol=1e-9)


def test_forward_noise_t_range(schedule):
    x = np.zeros(SHAPE)
    with pytest.raises(ValueError):
        forward_noise(schedule, x, 0, x)
    with pytest.raises(ValueError):
        forward_noise(schedule, x, 1001, x)
    with pytest.raises(ShapeError):
        forward_noise(schedule, x, 5, np.zeros((2, 2)))


def test_forward_noise_per_sample_t(schedule):
    x = np.ones((3,) + SHAPE)
    eps = np.zeros_like(x)
    out = forward_noise(schedule, x, np.array([1, 500, 1000]), eps)
    for i, t in enumerate([1, 500, 1000]):
        np.testing.assert_allclose(out[i], math.sqrt(schedule[t]))


def test_correlation_decreases_with_t(schedule):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((1000, 16))
    corrs = []
    for t in (50, 250, 500, 750, 950):
        xt = forward_noise(schedule, x, t, rng.standard_normal(x.shape))
        corrs.append(np.corrcoef(x.ravel(), xt.ravel())[0, 1])
    assert np.all(np.diff(corrs) < 0)


# -- training loss -----------------------------------------------------------

def test_zero_predictor_loss_is_one(schedule):
    # the Gaussian second moment: E[eps^2] = 1
    rng = np.random.default_rng(0)
    x0 = rng.standard_normal((10**4 // 512 + 1, 8, 8, 8))
    zero = _Stub(lambda x, t, z: np.zeros_like(x))
    loss = training_loss(zero, schedule, x0, np.zeros((x0.shape[0], 64)), rng).item()
    assert loss == pytest.approx(1.0, rel=0.05)


def test_oracle_predictor_loss_is_zero(schedule):
    rng = np.random.default_rng(0)
    eps = rng.standard_normal((4,) + SHAPE)
    oracle = _Stub(lambda x, t, z: eps)
    loss = training_loss(oracle, schedule, np.zeros_like(eps), np.zeros((4, 64)), rng, eps=eps)
    assert loss.item() == 0.0


def test_loss_permutation_invariant(schedule, denoiser):
    rng = np.random.default_rng(0)
    x0 = rng.standard_normal((4,) + SHAPE)
    z = rng.standard_normal((4, 16, 2, 2))
    t = np.array([3, 300, 600, 999])
    eps = rng.standard_normal(x0.shape)
    perm = np.array([2, 0, 3, 1])
    a = training_loss(denoiser, schedule, x0, z, rng, t=t, eps=eps).item()
    b = training_loss(denoiser, schedule, x0[perm], z[perm], rng, t=t[perm], eps=eps[perm]).item()
    assert a == pytest.approx(b, rel=1e-12)


def test_loss_backward_reaches_parameters(schedule, denoiser):
    rng = np.random.default_rng(0)
    loss = training_loss(denoiser, schedule, rng.standard_normal((2,) + SHAPE),
                         rng.standard_normal((2, 16, 2, 2)), rng)
    loss.backward()
    assert all(p.grad is not None for p in denoiser.parameters())
    denoiser.zero_grad()


# -- denoiser / sampler ------------------------------------------------------

@pytest.mark.parametrize("t", [1, 10, 500, 1000])
def test_denoiser_output_shape(denoiser, t):
    x = Tensor(np.zeros((2,) + SHAPE))
    assert denoiser(x, t, np.zeros((2, 16, 2, 2))).shape == (2,) + SHAPE


def test_denoiser_shape_errors(denoiser):
    with pytest.raises(ShapeError):
        denoiser(Tensor(np.zeros((2, 4, 8, 8))), 1, np.zeros((2, 64)))
    with pytest.raises(ShapeError):
        denoiser(Tensor(np.zeros((2,) + SHAPE)), 1, np.zeros((3, 64)))


def test_timestep_embedding():
    e = timestep_embedding([0, 10], 8)
    assert e.shape == (2, 8)
    np.testing.assert_array_equal(e[0], [0, 0, 0, 0, 1, 1, 1, 1])


def test_sample_deterministic_and_shaped(schedule, denoiser):
    z = np.random.default_rng(0).standard_normal((3, 16, 2, 2))
    a = sample(denoiser, schedule, z, SHAPE, 20, np.random.default_rng(7))
    b = sample(denoiser, schedule, z, SHAPE, 20, np.random.default_rng(7))
    assert a.shape == (3,) + SHAPE
    np.testing.assert_array_equal(a, b)


def test_conditioning_changes_output(schedule, denoiser):
    rng = np.random.default_rng(0)
    z1, z2 = rng.standard_normal((2, 1, 16, 2, 2))
    a = sample(denoiser, schedule, z1, SHAPE, 20, np.random.default_rng(7))
    b = sample(denoiser, schedule, z2, SHAPE, 20, np.random.default_rng(7))
    assert np.linalg.norm(a - b) > 0


def test_sampler_with_oracle_recovers_target(schedule):
    target = np.random.default_rng(0).standard_normal((2,) + SHAPE)

    def eps_for_target(x, t, z):
        ab = schedule[int(np.asarray(t).ravel()[0])]
        return (x - math.sqrt(ab) * target) / math.sqrt(1 - ab)

    out = sample(_Stub(eps_for_target), schedule, np.zeros((2, 64)), SHAPE, 20, np.random.default_rng(0))
    np.testing.assert_allclose(out, target, atol=1e-9)


def test_sample_clip_bounds_output(schedule, denoiser):
    z = np.zeros((1, 16, 2, 2))
    out = sample(denoiser, schedule, z, SHAPE, 10, np.random.default_rng(0), clip=0.5)
    assert np.all(np.abs(out) <= 0.5 + 1e-12)


# -- pipeline ----------------------------------------------------------------

@pytest.fixture(scope="module")
def small_pipeline(schedule):
    rng = np.random.default_rng(0)
    vq = VQModel(VQConfig(width=8, groups=4), rng)
    enc = SemanticEncoder(EmbeddingSpec(), 32, rng, width=8, groups=4)
    den = Denoiser(DenoiserConfig(width=16, emb_dim=32), rng)
    return Pipeline(vq, enc, den, schedule, latent_scale=2.0)


def test_reconstruct_with_oracle_denoiser_at_infinite_snr(small_pipeline, schedule):
    x = synthetic_images("shapes", 3)
    target = vq_encode(small_pipeline.vq, x)[0] * small_pipeline.latent_scale
    z_clean = extract(small_pipeline.encoder, x)

    def eps_for_target(xt, t, z_hat):
        np.testing.assert_array_equal(z_hat, z_clean)  # no channel noise at infinite SNR
        ab = schedule[int(np.asarray(t).ravel()[0])]
        return (xt - math.sqrt(ab) * target) / math.sqrt(1 - ab)

    oracle = Pipeline(small_pipeline.vq, small_pipeline.encoder, _Stub(eps_for_target), schedule,
                      latent_scale=small_pipeline.latent_scale)
    out = reconstruct(oracle, x, INF_SNR, np.random.default_rng(0))
    assert out.shape == x.shape
    # order preserved: reconstruction i decodes image i's latent
    np.testing.assert_allclose(out, vq_decode(small_pipeline.vq, vq_encode(small_pipeline.vq, x)[0]), atol=1e-9)


def test_reconstruct_deterministic(small_pipeline):
    x = synthetic_images("shapes", 2)
    a = reconstruct(small_pipeline, x, 5.0, np.random.default_rng(3))
    b = reconstruct(small_pipeline, x, 5.0, np.random.default_rng(3))
    np.testing.assert_array_equal(a, b)


def test_snr_draws_uniform_in_db():
    # mean of U[1, 20] is 10.5
    draws = sample_snr_db(np.random.default_rng(0), 1.0, 20.0, size=10**5)
    assert draws.mean() == pytest.approx(10.5, abs=0.1)
    assert draws.min() >= 1.0 and draws.max() <= 20.0


def test_collapsed_snr_range_gives_constant_noise_variance():
    rng = np.random.default_rng(0)
    z = np.zeros((4000, 64))
    snr = sample_snr_db(rng, 20.0, 20.0, size=4000)
    noisy = noisy_condition(z, snr, rng)
    assert np.all(snr == 20.0)
    assert np.mean(noisy ** 2) == pytest.approx(sigma_squared(20.0), rel=0.01)


def test_infinite_snr_condition_is_clean():
    z = np.random.default_rng(0).standard_normal((3, 64))
    np.testing.assert_array_equal(noisy_condition(z, np.full(3, INF_SNR), np.random.default_rng(1)), z)
