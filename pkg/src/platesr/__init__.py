"""Diffusion-based x4 super-resolution for license-plate imagery."""

__version__ = "0.1.0"

from .images import ImageTensor, load_png, save_png, to_symmetric, to_unit
from .schedule import (
    NoiseSchedule,
    ScheduleRow,
    lookup,
    make_desk_schedule,
    make_default_schedule,
    make_linear_schedule,
)
from .diffusion import (
    SamplerTrace,
    iterate_forward,
    p_sample_step,
    posterior_mean,
    predict_x0_from_eps,
    predicted_mean,
    q_sample,
    super_resolve,
    super_resolve_many,
    training_loss,
)
from .denoiser import (
    DenoiserConfig,
    DenoiserUNet,
    denoise,
    init_denoiser,
    load_checkpoint,
    parameter_count,
    save_checkpoint,
    timestep_embedding,
)
from .data import (
    PairedDataset,
    PairedSample,
    PlateSpec,
    augment_rotate,
    degrade,
    load_dataset,
    load_prepared,
    save_prepared,
    synth_plate,
    upsample_bicubic,
)
from .trainer import TrainConfig, TrainLog, TrainResult, ema_update, train, warmup_lr
from .metrics import (
    MetricReport,
    MetricRow,
    SsimParams,
    evaluate_directories,
    histogram,
    histogram_intersection,
    improvement_percent,
    mse,
    ms_ssim,
    psnr,
    ssim,
    ssim_components,
)
from .study import (
    ChoiceRecord,
    StudyResults,
    StudySession,
    StudyStore,
    load_bundle,
    make_server,
)

__all__ = [name for name in dir() if not name.startswith("_")]
