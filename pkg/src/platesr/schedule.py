"""Diffusion variance schedule and every per-step coefficient derived from it.

All sequences are precomputed in float64 at construction and indexed by the
1-based step t in [1, T]. The convention alpha_bar_0 = 1 makes the first
posterior variance exactly zero, so the final reverse step is deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_T = 1000
DESK_T = 200
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


@dataclass(frozen=True)
class ScheduleRow:
    """Coefficients of one diffusion step."""

    t: int
    beta: float
    alpha: float
    alpha_bar: float
    posterior_variance: float
    posterior_coef_x0: float
    posterior_coef_xt: float


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    T: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray
    alpha_bars_prev: np.ndarray      # alpha_bar_{t-1}, with alpha_bar_0 = 1
    posterior_variances: np.ndarray
    posterior_coef_x0: np.ndarray
    posterior_coef_xt: np.ndarray

    def __eq__(self, other) -> bool:
        if not isinstance(other, NoiseSchedule):
            return NotImplemented
        return self.T == other.T and all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("betas", "alphas", "alpha_bars", "alpha_bars_prev",
                      "posterior_variances", "posterior_coef_x0", "posterior_coef_xt")
        )

    def row(self, t: int) -> ScheduleRow:
        return lookup(self, t)


def make_linear_schedule(T: int,
                         beta_start: float = DEFAULT_BETA_START,
                         beta_end: float = DEFAULT_BETA_END) -> NoiseSchedule:
    """Linearly interpolated beta schedule with all derived sequences.

    betas[t] = beta_start + (beta_end - beta_start) * (t-1)/(T-1) for t = 1..T
    (a single-step schedule uses beta_start alone).
    """
    if not isinstance(T, int) or T < 1:
        raise ValueError(f"T must be a positive integer, got {T!r}")
    if not (0.0 < beta_start < 1.0):
        raise ValueError(f"beta_start must lie in (0, 1), got {beta_start}")
    if not (0.0 < beta_end < 1.0):
        raise ValueError(f"beta_end must lie in (0, 1), got {beta_end}")
    if beta_end < beta_start:
        raise ValueError(f"beta_end {beta_end} < beta_start {beta_start}")

    betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    alpha_bars_prev = np.concatenate(([1.0], alpha_bars[:-1]))

    one_minus_ab = 1.0 - alpha_bars
    posterior_variances = (1.0 - alpha_bars_prev) / one_minus_ab * betas
    posterior_coef_x0 = np.sqrt(alpha_bars_prev) * betas / one_minus_ab
    posterior_coef_xt = np.sqrt(alphas) * (1.0 - alpha_bars_prev) / one_minus_ab

    return NoiseSchedule(
        T=T,
        betas=betas,
        alphas=alphas,
        alpha_bars=alpha_bars,
        alpha_bars_prev=alpha_bars_prev,
        posterior_variances=posterior_variances,
        posterior_coef_x0=posterior_coef_x0,
        posterior_coef_xt=posterior_coef_xt,
    )


def make_default_schedule() -> NoiseSchedule:
    return make_linear_schedule(DEFAULT_T, DEFAULT_BETA_START, DEFAULT_BETA_END)


def make_desk_schedule() -> NoiseSchedule:
    """Short schedule (T=200, same endpoints) for fast desk-scale runs."""
    return make_linear_schedule(DESK_T, DEFAULT_BETA_START, DEFAULT_BETA_END)


def check_step(schedule: NoiseSchedule, t: int) -> None:
    if not isinstance(t, (int, np.integer)) or t < 1 or t > schedule.T:
        raise ValueError(f"step t={t!r} out of range [1, {schedule.T}]")


def lookup(schedule: NoiseSchedule, t: int) -> ScheduleRow:
    """Pure read of the t-th entry of every sequence (1-based)."""
    check_step(schedule, t)
    i = t - 1
    return ScheduleRow(
        t=t,
        beta=float(schedule.betas[i]),
        alpha=float(schedule.alphas[i]),
        alpha_bar=float(schedule.alpha_bars[i]),
        posterior_variance=float(schedule.posterior_variances[i]),
        posterior_coef_x0=float(schedule.posterior_coef_x0[i]),
        posterior_coef_xt=float(schedule.posterior_coef_xt[i]),
    )
