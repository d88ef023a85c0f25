"""Forward corruption process, conditional reverse process, training loss,
and full ancestral sampling from a low-resolution input to its
high-resolution reconstruction.

The chain lives at HR resolution on the target image in the [-1,1]
convention; the LR input conditions the noise predictor by bicubic
upsampling and channel concatenation. All stochastic operations take an
explicit numpy Generator, making every result a pure function of its seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .data import upsample_bicubic
from .images import ImageTensor, require_same_shape, to_symmetric, to_unit
from .schedule import NoiseSchedule, check_step


@dataclass(frozen=True)
class SamplerTrace:
    """Intermediate reconstruction snapshots, ordered by decreasing t and
    ending with the t=0 result."""

    steps: list[tuple[int, ImageTensor]]
    stride: int


def q_sample(x0: ImageTensor, t: int, eps: ImageTensor,
             schedule: NoiseSchedule) -> ImageTensor:
    """Jump straight to the noisy state: sqrt(abar_t)*x0 + sqrt(1-abar_t)*eps.

    Exact affine combination, never clamped; the result is untagged.
    """
    check_step(schedule, t)
    require_same_shape(x0, eps, "x0 and eps")
    ab = schedule.alpha_bars[t - 1]
    out = math.sqrt(ab) * x0.values + math.sqrt(1.0 - ab) * eps.values
    return ImageTensor(out)


def iterate_forward(x0: ImageTensor, t: int, schedule: NoiseSchedule,
                    rng: np.random.Generator) -> ImageTensor:
    """Run the per-step corruption kernel s = 1..t:
    x_s = sqrt(1-beta_s)*x_{s-1} + sqrt(beta_s)*eps_s.

    Distributionally identical to q_sample at the same t.
    """
    check_step(schedule, t)
    x = x0.values.copy()
    for s in range(t):
        beta = schedule.betas[s]
        x = math.sqrt(1.0 - beta) * x + math.sqrt(beta) * rng.standard_normal(x.shape)
    return ImageTensor(x)


def predict_x0_from_eps(x_t: ImageTensor, t: int, eps: ImageTensor,
                        schedule: NoiseSchedule, clamp: bool = False) -> ImageTensor:
    """Invert q_sample: x0 = (x_t - sqrt(1-abar_t)*eps) / sqrt(abar_t).

    With `clamp` the prediction is clipped to [-1,1] (always on inside the
    sampler).
    """
    check_step(schedule, t)
    require_same_shape(x_t, eps, "x_t and eps")
    ab = schedule.alpha_bars[t - 1]
    x0 = (x_t.values - math.sqrt(1.0 - ab) * eps.values) / math.sqrt(ab)
    if clamp:
        return ImageTensor(np.clip(x0, -1.0, 1.0), "symmetric")
    return ImageTensor(x0)


def posterior_mean(x0: ImageTensor, x_t: ImageTensor, t: int,
                   schedule: NoiseSchedule) -> ImageTensor:
    """Mean of the tractable reverse posterior: coef_x0*x0 + coef_xt*x_t."""
    check_step(schedule, t)
    require_same_shape(x0, x_t, "x0 and x_t")
    i = t - 1
    out = (schedule.posterior_coef_x0[i] * x0.values
           + schedule.posterior_coef_xt[i] * x_t.values)
    return ImageTensor(out)


def predicted_mean(x_t: ImageTensor, t: int, eps_hat: ImageTensor,
                   schedule: NoiseSchedule) -> ImageTensor:
    """Network-parameterized reverse mean:
    (x_t - beta_t/sqrt(1-abar_t)*eps_hat) / sqrt(alpha_t)."""
    check_step(schedule, t)
    require_same_shape(x_t, eps_hat, "x_t and eps_hat")
    i = t - 1
    coef = schedule.betas[i] / math.sqrt(1.0 - schedule.alpha_bars[i])
    out = (x_t.values - coef * eps_hat.values) / math.sqrt(schedule.alphas[i])
    return ImageTensor(out)


def _predict_eps(denoiser, noisy_plus_cond: ImageTensor, t: int) -> ImageTensor:
    """Dispatch to a torch network or any object with .predict(img, t)."""
    if isinstance(denoiser, torch.nn.Module):
        from .denoiser import denoise
        return denoise(denoiser, noisy_plus_cond, t)
    return denoiser.predict(noisy_plus_cond, t)


def _conditioning(lr_cond: ImageTensor, hr_height: int, hr_width: int) -> ImageTensor:
    if hr_height % lr_cond.height or hr_width % lr_cond.width:
        raise ValueError(
            f"HR size {hr_height}x{hr_width} is not an integer multiple of the "
            f"conditioning image {lr_cond.height}x{lr_cond.width}"
        )
    factor = hr_height // lr_cond.height
    if hr_width // lr_cond.width != factor:
        raise ValueError("conditioning image aspect ratio does not match the state")
    return to_symmetric(upsample_bicubic(lr_cond, factor))


def p_sample_step(denoiser, x_t: ImageTensor, t: int, lr_cond: ImageTensor,
                  schedule: NoiseSchedule, rng: np.random.Generator) -> ImageTensor:
    """One reverse step: predict eps, clamp the implied x0, recombine through
    the posterior mean, then add sqrt(posterior_variance)*z. The t=1 step is
    deterministic (its posterior variance is zero)."""
    check_step(schedule, t)
    cond = _conditioning(lr_cond, x_t.height, x_t.width)
    stacked = ImageTensor(np.concatenate([x_t.values, cond.values], axis=2))
    eps_hat = _predict_eps(denoiser, stacked, t)
    require_same_shape(x_t, eps_hat, "x_t and predicted eps")
    x0_hat = predict_x0_from_eps(x_t, t, eps_hat, schedule, clamp=True)
    mean = posterior_mean(x0_hat, x_t, t, schedule)
    if t == 1:
        return mean
    sigma = math.sqrt(schedule.posterior_variances[t - 1])
    z = rng.standard_normal(mean.shape)
    return ImageTensor(mean.values + sigma * z)


def _snapshot(x: np.ndarray) -> ImageTensor:
    return to_unit(ImageTensor(np.clip(x, -1.0, 1.0), "symmetric"))


def super_resolve(denoiser, lr_image: ImageTensor, schedule: NoiseSchedule,
                  rng: np.random.Generator, trace_stride: int | None = None,
                  factor: int = 4) -> tuple[ImageTensor, SamplerTrace | None]:
    """Full reverse chain from pure noise to the x4 reconstruction.

    Returns the HR image in [0,1] and, when `trace_stride` is given,
    ceil(T/stride)+1 snapshots starting at x_T and ending at the result.
    """
    if lr_image.height < 12 or lr_image.width < 12:
        raise ValueError(
            f"conditioning image must be at least 12x12, got "
            f"{lr_image.height}x{lr_image.width}"
        )
    if trace_stride is not None and trace_stride < 1:
        raise ValueError(f"trace_stride must be >= 1, got {trace_stride}")

    H, W, C = lr_image.height * factor, lr_image.width * factor, lr_image.channels
    T = schedule.T
    x = rng.standard_normal((H, W, C))
    snapshots = [(T, _snapshot(x))] if trace_stride else None

    for t in range(T, 0, -1):
        x = p_sample_step(denoiser, ImageTensor(x), t, lr_image, schedule, rng).values
        if snapshots is not None and t - 1 > 0 and (T - (t - 1)) % trace_stride == 0:
            snapshots.append((t - 1, _snapshot(x)))

    hr = _snapshot(x)
    trace = None
    if snapshots is not None:
        snapshots.append((0, hr))
        trace = SamplerTrace(steps=snapshots, stride=trace_stride)
    return hr, trace


def super_resolve_many(denoiser: torch.nn.Module, lr_images: list[ImageTensor],
                       schedule: NoiseSchedule, seed: int,
                       factor: int = 4) -> list[ImageTensor]:
    """Run independent chains for several same-shaped LR inputs, batching the
    network call per step. Chain i draws its noise from a generator seeded by
    (seed, i), so results are a pure function of (inputs, seed)."""
    if not lr_images:
        return []
    shape = lr_images[0].shape
    if any(im.shape != shape for im in lr_images):
        raise ValueError("batched sampling requires same-shaped LR inputs")
    if shape[0] < 12 or shape[1] < 12:
        raise ValueError("conditioning images must be at least 12x12")

    B = len(lr_images)
    H, W, C = shape[0] * factor, shape[1] * factor, shape[2]
    T = schedule.T
    rngs = [np.random.default_rng([seed, i]) for i in range(B)]
    conds = np.stack([_conditioning(im, H, W).values for im in lr_images])
    x = np.stack([r.standard_normal((H, W, C)) for r in rngs])

    dtype = next(denoiser.parameters()).dtype
    cond_t = torch.from_numpy(conds.transpose(0, 3, 1, 2)).to(dtype)
    for t in range(T, 0, -1):
        i = t - 1
        xt = torch.from_numpy(x.transpose(0, 3, 1, 2)).to(dtype)
        with torch.no_grad():
            eps_hat = denoiser(
                torch.cat([xt, cond_t], dim=1),
                torch.full((B,), t, dtype=torch.long),
            )
        eps = eps_hat.double().numpy().transpose(0, 2, 3, 1)
        ab = schedule.alpha_bars[i]
        x0 = np.clip((x - math.sqrt(1.0 - ab) * eps) / math.sqrt(ab), -1.0, 1.0)
        x = schedule.posterior_coef_x0[i] * x0 + schedule.posterior_coef_xt[i] * x
        if t > 1:
            sigma = math.sqrt(schedule.posterior_variances[i])
            x += sigma * np.stack([r.standard_normal((H, W, C)) for r in rngs])
    return [_snapshot(x[b]) for b in range(B)]


def training_loss(denoiser, hr_batch: list[ImageTensor], lr_batch: list[ImageTensor],
                  schedule: NoiseSchedule, rng: np.random.Generator
                  ) -> tuple[float, dict[str, torch.Tensor]]:
    """Simplified noise-matching objective: draw (t, eps) per batch element,
    form the noisy state, and score mean squared error between eps and the
    prediction. For torch denoisers the loss is backpropagated and the
    per-parameter gradients are returned (they also stay on .grad for an
    optimizer step).

    Randomness order per batch element: one uniform t from {1..T}, then one
    standard-normal field of HR shape.
    """
    if len(hr_batch) == 0:
        raise ValueError("empty batch")
    if len(hr_batch) != len(lr_batch):
        raise ValueError(f"batch size mismatch: {len(hr_batch)} hr vs {len(lr_batch)} lr")

    xs, conds, targets, ts = [], [], [], []
    factor = hr_batch[0].height // lr_batch[0].height
    for hr, lr in zip(hr_batch, lr_batch):
        if (hr.height != lr.height * factor or hr.width != lr.width * factor
                or hr.height % lr.height or hr.width % lr.width):
            raise ValueError(
                f"LR/HR spatial mismatch: hr {hr.shape} vs lr {lr.shape} "
                f"(expected uniform x{factor})"
            )
        x0 = to_symmetric(hr)
        cond = to_symmetric(upsample_bicubic(lr, factor))
        t = int(rng.integers(1, schedule.T + 1))
        eps = rng.standard_normal(x0.shape)
        ab = schedule.alpha_bars[t - 1]
        xs.append(math.sqrt(ab) * x0.values + math.sqrt(1.0 - ab) * eps)
        conds.append(cond.values)
        targets.append(eps)
        ts.append(t)

    if isinstance(denoiser, torch.nn.Module):
        params = list(denoiser.named_parameters())
        dtype = params[0][1].dtype if params else torch.float32
        x = torch.from_numpy(
            np.stack([np.concatenate([xi, ci], axis=2) for xi, ci in zip(xs, conds)])
            .transpose(0, 3, 1, 2)
        ).to(dtype)
        target = torch.from_numpy(np.stack(targets).transpose(0, 3, 1, 2)).to(dtype)
        eps_hat = denoiser(x, torch.tensor(ts, dtype=torch.long))
        loss = torch.mean((eps_hat - target) ** 2)
        grads: dict[str, torch.Tensor] = {}
        if any(p.requires_grad for _, p in params):
            for _, p in params:
                p.grad = None
            loss.backward()
            grads = {name: p.grad for name, p in params if p.grad is not None}
        return float(loss.detach()), grads

    total = 0.0
    count = 0
    for xi, ci, eps, t in zip(xs, conds, targets, ts):
        stacked = ImageTensor(np.concatenate([xi, ci], axis=2))
        eps_hat = denoiser.predict(stacked, t)
        total += float(np.sum((eps_hat.values - eps) ** 2))
        count += eps.size
    return total / count, {}
