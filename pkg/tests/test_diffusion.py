import math

import numpy as np
import pytest
import torch

from platesr import (
    ImageTensor,
    degrade,
    init_denoiser,
    iterate_forward,
    make_linear_schedule,
    p_sample_step,
    posterior_mean,
    predict_x0_from_eps,
    predicted_mean,
    psnr,
    q_sample,
    super_resolve,
    super_resolve_many,
    training_loss,
    upsample_bicubic,
)
from platesr import DenoiserConfig

from conftest import random_image
from oracles import ZeroNoise

# sqrt(alpha_bar_1000), from the schedule oracle
SQRT_AB_1000 = 0.006352818087570016


@pytest.fixture(scope="module")
def sched1000():
    return make_linear_schedule(1000, 1e-4, 0.02)


class EpsOracle:
    """Returns a fixed noise field regardless of the input."""

    def __init__(self, eps: np.ndarray):
        self.eps = eps

    def predict(self, img, t):
        return ImageTensor(self.eps)


class ZeroPredictor:
    def predict(self, img, t):
        return ImageTensor(np.zeros((img.height, img.width, 3)))


# --- q_sample ---

def test_q_sample_zero_noise_scales_signal(rng, desk_schedule):
    x0 = random_image(rng, 8, 8, 3, "symmetric")
    eps = ImageTensor(np.zeros(x0.shape))
    t = 37
    out = q_sample(x0, t, eps, desk_schedule)
    ab = desk_schedule.alpha_bars[t - 1]
    assert np.allclose(out.values, math.sqrt(ab) * x0.values, atol=1e-15)


def test_q_sample_zero_signal_scales_noise(rng, desk_schedule):
    x0 = ImageTensor(np.zeros((8, 8, 3)), "symmetric")
    eps = ImageTensor(rng.standard_normal((8, 8, 3)))
    t = 101
    out = q_sample(x0, t, eps, desk_schedule)
    ab = desk_schedule.alpha_bars[t - 1]
    assert np.allclose(out.values, math.sqrt(1 - ab) * eps.values, atol=1e-15)


def test_q_sample_final_step_kills_the_signal(sched1000):
    x0 = ImageTensor(np.ones((8, 8, 3)), "symmetric")
    eps = ImageTensor(np.zeros(x0.shape))
    out = q_sample(x0, 1000, eps, sched1000)
    assert np.all(np.abs(out.values) < 0.011)
    assert np.allclose(out.values, SQRT_AB_1000, atol=1e-12)


def test_q_sample_validates_shapes_and_range(rng, desk_schedule):
    x0 = random_image(rng, 8, 8, 3, "symmetric")
    with pytest.raises(ValueError):
        q_sample(x0, 1, ImageTensor(np.zeros((8, 9, 3))), desk_schedule)
    with pytest.raises(ValueError):
        q_sample(x0, 0, ImageTensor(np.zeros(x0.shape)), desk_schedule)
    with pytest.raises(ValueError):
        q_sample(x0, desk_schedule.T + 1, ImageTensor(np.zeros(x0.shape)), desk_schedule)


# --- iterate_forward ---

def test_iterate_forward_single_noiseless_step(rng, desk_schedule):
    x0 = random_image(rng, 8, 8, 3, "symmetric")
    out = iterate_forward(x0, 1, desk_schedule, ZeroNoise())
    assert np.allclose(out.values, math.sqrt(1 - desk_schedule.betas[0]) * x0.values)


def test_iterate_forward_three_noiseless_steps_compound(rng, desk_schedule):
    x0 = random_image(rng, 8, 8, 3, "symmetric")
    out = iterate_forward(x0, 3, desk_schedule, ZeroNoise())
    assert np.allclose(out.values,
                       math.sqrt(desk_schedule.alpha_bars[2]) * x0.values)


def test_iterate_forward_variance_monte_carlo(desk_schedule):
    # per-pixel sample variance near (1 - alpha_bar_10); the +-5% band was
    # verified by a pre-build pilot at this trial count
    t = 10
    trials = 20000
    x0 = ImageTensor(np.zeros((8, 8, 1)), "symmetric")
    rng = np.random.default_rng(99)
    acc = np.zeros((trials,) + x0.shape)
    for k in range(trials):
        acc[k] = iterate_forward(x0, t, desk_schedule, rng).values
    var = acc.var(axis=0)
    target = 1 - desk_schedule.alpha_bars[t - 1]
    assert np.all(np.abs(var - target) / target < 0.05)


# --- predict_x0_from_eps ---

def test_round_trip_recovers_x0(rng, desk_schedule):
    x0 = random_image(rng, 8, 8, 3, "symmetric")
    eps = ImageTensor(rng.standard_normal(x0.shape))
    x_t = q_sample(x0, 17, eps, desk_schedule)
    back = predict_x0_from_eps(x_t, 17, eps, desk_schedule)
    assert np.all(np.abs(back.values - x0.values) <= 1e-5)


def test_predict_x0_zero_signal_case(rng, desk_schedule):
    t = 44
    ab = desk_schedule.alpha_bars[t - 1]
    eps = rng.standard_normal((8, 8, 3))
    x_t = ImageTensor(eps * math.sqrt(1 - ab))
    out = predict_x0_from_eps(x_t, t, ImageTensor(eps), desk_schedule)
    assert np.allclose(out.values, 0.0, atol=1e-12)


def test_predict_x0_clamp_contract(rng, desk_schedule):
    t = 3
    x_t = ImageTensor(rng.standard_normal((8, 8, 3)) * 50.0)
    eps = ImageTensor(np.zeros(x_t.shape))
    out = predict_x0_from_eps(x_t, t, eps, desk_schedule, clamp=True)
    assert out.range_tag == "symmetric"
    assert out.values.min() >= -1.0 and out.values.max() <= 1.0


# --- posterior and predicted means ---

def test_posterior_mean_linearity(rng, desk_schedule):
    v = random_image(rng, 8, 8, 3, None)
    t = 60
    row_c0 = desk_schedule.posterior_coef_x0[t - 1]
    row_ct = desk_schedule.posterior_coef_xt[t - 1]
    both = posterior_mean(v, v, t, desk_schedule)
    assert np.allclose(both.values, (row_c0 + row_ct) * v.values)
    zero = ImageTensor(np.zeros(v.shape))
    only_xt = posterior_mean(zero, v, t, desk_schedule)
    assert np.allclose(only_xt.values, row_ct * v.values)


def test_predicted_mean_zero_eps_and_cancellation(rng, desk_schedule):
    t = 25
    i = t - 1
    v = random_image(rng, 8, 8, 3, None)
    out = predicted_mean(v, t, ImageTensor(np.zeros(v.shape)), desk_schedule)
    assert np.allclose(out.values, v.values / math.sqrt(desk_schedule.alphas[i]))

    e = rng.standard_normal(v.shape)
    coef = desk_schedule.betas[i] / math.sqrt(1 - desk_schedule.alpha_bars[i])
    out2 = predicted_mean(ImageTensor(coef * e), t, ImageTensor(e), desk_schedule)
    assert np.allclose(out2.values, 0.0, atol=1e-12)


def test_posterior_equals_predicted_mean_under_true_eps(desk_schedule):
    # the two mean parameterizations agree whenever eps_hat is the true eps
    rng = np.random.default_rng(5)
    for _ in range(100):
        t = int(rng.integers(1, desk_schedule.T + 1))
        x0 = ImageTensor(rng.uniform(-1, 1, (6, 6, 3)), "symmetric")
        eps = ImageTensor(rng.standard_normal(x0.shape))
        x_t = q_sample(x0, t, eps, desk_schedule)
        a = posterior_mean(x0, x_t, t, desk_schedule)
        b = predicted_mean(x_t, t, eps, desk_schedule)
        assert np.all(np.abs(a.values - b.values) <= 1e-5)


# --- training loss ---

def _pair_batch(rng, n=2, hr=16):
    hrs = [random_image(rng, hr, hr, 3) for _ in range(n)]
    lrs = [degrade(im, 4) for im in hrs]
    return hrs, lrs


class TrueEpsOracle:
    """Replays the loss function's own draws to return the true noise."""

    def __init__(self, seed, schedule, shape, n):
        r = np.random.default_rng(seed)
        self.eps = []
        for _ in range(n):
            r.integers(1, schedule.T + 1)
            self.eps.append(r.standard_normal(shape))
        self.calls = 0

    def predict(self, img, t):
        eps = self.eps[self.calls]
        self.calls += 1
        return ImageTensor(eps)


def test_loss_is_zero_for_perfect_predictor(rng, desk_schedule):
    hrs, lrs = _pair_batch(rng, n=3)
    oracle = TrueEpsOracle(777, desk_schedule, (16, 16, 3), 3)
    loss, grads = training_loss(oracle, hrs, lrs, desk_schedule,
                                np.random.default_rng(777))
    assert loss == 0.0
    assert grads == {}


def test_loss_of_zero_predictor_is_one(rng, desk_schedule):
    # E||eps||^2 per element = 1; 4 images x 32x32x3 > 1e4 elements
    hrs, lrs = _pair_batch(rng, n=4, hr=32)
    loss, _ = training_loss(ZeroPredictor(), hrs, lrs, desk_schedule,
                            np.random.default_rng(31))
    assert abs(loss - 1.0) < 0.05


def test_loss_gradient_matches_finite_differences(desk_schedule):
    class TwoParam(torch.nn.Module):
        def __init__(self):
            super().__init__()
            self.a = torch.nn.Parameter(torch.tensor(0.3, dtype=torch.float64))
            self.b = torch.nn.Parameter(torch.tensor(-0.1, dtype=torch.float64))

        def forward(self, x, t):
            return self.a * x[:, :3] + self.b

    rng_img = np.random.default_rng(8)
    hrs = [random_image(rng_img, 8, 8, 3) for _ in range(2)]
    lrs = [degrade(im, 4) for im in hrs]

    net = TwoParam()
    loss, grads = training_loss(net, hrs, lrs, desk_schedule,
                                np.random.default_rng(21))
    h = 1e-6
    for name, param in net.named_parameters():
        def f(v, param=param):
            with torch.no_grad():
                old = param.item()
                param.fill_(v)
            out, _ = training_loss(net, hrs, lrs, desk_schedule,
                                   np.random.default_rng(21))
            with torch.no_grad():
                param.fill_(old)
            return out

        v0 = param.item()
        numeric = (f(v0 + h) - f(v0 - h)) / (2 * h)
        analytic = grads[name].item()
        assert abs(analytic - numeric) <= 1e-4 * max(abs(numeric), 1e-12)


def test_loss_populates_gradients_for_every_parameter(rng, tiny_net, desk_schedule):
    hrs, lrs = _pair_batch(rng, n=2, hr=16)
    loss, grads = training_loss(tiny_net, hrs, lrs, desk_schedule,
                                np.random.default_rng(3))
    assert math.isfinite(loss)
    names = {n for n, _ in tiny_net.named_parameters()}
    assert set(grads) == names


def test_loss_rejects_empty_and_mismatched_batches(rng, desk_schedule):
    with pytest.raises(ValueError):
        training_loss(ZeroPredictor(), [], [], desk_schedule, rng)
    hrs, _ = _pair_batch(rng, n=1)
    with pytest.raises(ValueError):
        training_loss(ZeroPredictor(), hrs, [random_image(rng, 5, 5, 3)],
                      desk_schedule, rng)


# --- reverse step ---

def test_p_sample_final_step_is_deterministic(rng, tiny_net, desk_schedule):
    x_t = random_image(rng, 16, 16, 3, None)
    lr = random_image(rng, 4, 4, 3)
    a = p_sample_step(tiny_net, x_t, 1, lr, desk_schedule, np.random.default_rng(1))
    b = p_sample_step(tiny_net, x_t, 1, lr, desk_schedule, np.random.default_rng(2))
    assert np.array_equal(a.values, b.values)


def test_p_sample_is_deterministic_under_seed(rng, tiny_net, desk_schedule):
    x_t = random_image(rng, 16, 16, 3, None)
    lr = random_image(rng, 4, 4, 3)
    a = p_sample_step(tiny_net, x_t, 50, lr, desk_schedule, np.random.default_rng(9))
    b = p_sample_step(tiny_net, x_t, 50, lr, desk_schedule, np.random.default_rng(9))
    assert np.array_equal(a.values, b.values)


def test_p_sample_mean_matches_posterior_under_true_eps(rng, desk_schedule):
    # with the true eps and the noise draw suppressed, one reverse step lands
    # exactly on the posterior mean of (x0, x_t)
    x0 = ImageTensor(rng.uniform(-0.9, 0.9, (16, 16, 3)), "symmetric")
    lr = degrade(ImageTensor((x0.values + 1) / 2, "unit"), 4)
    t = 80
    eps = ImageTensor(rng.standard_normal(x0.shape))
    x_t = q_sample(x0, t, eps, desk_schedule)
    got = p_sample_step(EpsOracle(eps.values), x_t, t, lr, desk_schedule, ZeroNoise())
    want = posterior_mean(x0, x_t, t, desk_schedule)
    assert np.all(np.abs(got.values - want.values) <= 1e-5)


# --- full sampling ---

def _sr_setup(rng, lr_side=12):
    lr = random_image(rng, lr_side, lr_side, 3)
    schedule = make_linear_schedule(5, 1e-4, 0.02)
    config = DenoiserConfig(base_channels=8, channel_multipliers=(1, 2),
                            blocks_per_level=1, time_embed_dim=16, seed=2)
    return init_denoiser(config), lr, schedule


def test_super_resolve_output_is_4x_and_unit_range(rng):
    net, lr, schedule = _sr_setup(rng)
    hr, trace = super_resolve(net, lr, schedule, np.random.default_rng(0))
    assert hr.shape == (48, 48, 3)
    assert hr.range_tag == "unit"
    assert hr.values.min() >= 0.0 and hr.values.max() <= 1.0
    assert trace is None


def test_super_resolve_48_to_192(rng):
    net, _, _ = _sr_setup(rng)
    schedule = make_linear_schedule(2, 1e-4, 0.02)
    lr = random_image(rng, 48, 48, 3)
    hr, _ = super_resolve(net, lr, schedule, np.random.default_rng(0))
    assert hr.shape == (192, 192, 3)


def test_super_resolve_same_seed_bit_identical(rng):
    net, lr, schedule = _sr_setup(rng)
    a, _ = super_resolve(net, lr, schedule, np.random.default_rng(77))
    b, _ = super_resolve(net, lr, schedule, np.random.default_rng(77))
    assert np.array_equal(a.values, b.values)


def test_super_resolve_trace_stride_T_gives_two_frames(rng):
    net, lr, schedule = _sr_setup(rng)
    _, trace = super_resolve(net, lr, schedule, np.random.default_rng(0),
                             trace_stride=schedule.T)
    assert [t for t, _ in trace.steps] == [schedule.T, 0]


def test_super_resolve_trace_count_matches_formula(rng):
    net, lr, _ = _sr_setup(rng)
    schedule = make_linear_schedule(10, 1e-4, 0.02)
    _, trace = super_resolve(net, lr, schedule, np.random.default_rng(0),
                             trace_stride=3)
    ts = [t for t, _ in trace.steps]
    assert len(ts) == math.ceil(10 / 3) + 1
    assert ts[0] == 10 and ts[-1] == 0
    assert ts == sorted(ts, reverse=True)


def test_super_resolve_validates_inputs(rng):
    net, lr, schedule = _sr_setup(rng)
    with pytest.raises(ValueError):
        super_resolve(net, random_image(rng, 8, 8, 3), schedule,
                      np.random.default_rng(0))
    with pytest.raises(ValueError):
        super_resolve(net, lr, schedule, np.random.default_rng(0), trace_stride=0)


def test_super_resolve_many_matches_shapes_and_is_seeded(rng):
    net, lr, schedule = _sr_setup(rng)
    lrs = [lr, random_image(rng, 12, 12, 3)]
    outs = super_resolve_many(net, lrs, schedule, seed=5)
    outs2 = super_resolve_many(net, lrs, schedule, seed=5)
    assert len(outs) == 2
    for a, b in zip(outs, outs2):
        assert a.shape == (48, 48, 3)
        assert np.array_equal(a.values, b.values)
    with pytest.raises(ValueError):
        super_resolve_many(net, [lr, random_image(rng, 16, 16, 3)], schedule, seed=0)
