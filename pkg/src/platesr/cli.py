"""Single entry-point command line: dataset preparation, synthetic corpus
generation, training, super-resolution with reconstruction traces, metric
evaluation, study-bundle export, and the study service.

Every artifact-producing command writes one run_manifest.json next to its
outputs; all randomness flows from the --seed flag, so reruns are
byte-identical apart from manifest timestamps. Failures print one
machine-readable JSON line to stderr and exit nonzero.
"""
from __future__ import annotations

import functools
import hashlib
import json
import shutil
import sys
from datetime import datetime, timezone
from pathlib import Path

import click
import numpy as np

from . import __version__
from .data import load_dataset, load_prepared, save_prepared, synth_plate
from .denoiser import DenoiserConfig, load_checkpoint
from .diffusion import super_resolve
from .images import load_png, save_png
from .metrics import evaluate_directories
from .schedule import make_linear_schedule
from .study import make_server
from .trainer import TrainConfig, train


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _collect_seeds(config: dict) -> dict:
    seeds = {}
    for key, value in config.items():
        if isinstance(value, dict):
            seeds.update({f"{key}.{k}": v for k, v in _collect_seeds(value).items()})
        elif "seed" in key:
            seeds[key] = value
    return seeds


def write_run_manifest(out_dir: Path, command: str, config: dict,
                       inputs: list[str], outputs: list[str], started: str) -> Path:
    doc = {
        "command": command,
        "config": config,
        "seeds": _collect_seeds(config),
        "inputs": inputs,
        "outputs": outputs,
        "tool_version": __version__,
        "started": started,
        "finished": _now(),
    }
    path = Path(out_dir) / "run_manifest.json"
    path.write_text(json.dumps(doc, indent=2))
    return path


def _fail_json(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except Exception as exc:
            line = json.dumps({"code": type(exc).__name__, "message": str(exc)})
            click.echo(line, err=True)
            sys.exit(1)
    return wrapper


def _parse_methods(method: tuple[str, ...]) -> dict[str, Path]:
    out: dict[str, Path] = {}
    for item in method:
        if "=" not in item:
            raise ValueError(f"--method expects name=dir, got {item!r}")
        name, d = item.split("=", 1)
        if name in out:
            raise ValueError(f"duplicate method name {name!r}")
        out[name] = Path(d)
    return out


@click.group()
@click.version_option(__version__)
@click.option("--config", "config_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON file of per-command option defaults "
                   "(precedence: flags > config file > built-in defaults).")
@click.pass_context
def main(ctx, config_path):
    """License-plate diffusion super-resolution toolkit."""
    if config_path:
        ctx.default_map = json.loads(Path(config_path).read_text())


@main.command()
@click.argument("hr_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--factor", default=4, show_default=True)
@click.option("--split-ratio", default=0.92, show_default=True)
@click.option("--train-count", default=None, type=int,
              help="Explicit train size (overrides --split-ratio).")
@click.option("--seed", default=0, show_default=True)
@_fail_json
def prepare(hr_dir, out_dir, factor, split_ratio, train_count, seed):
    """Build the paired dataset layout (hr/, lr/, manifest.json) from HR images."""
    started = _now()
    dataset = load_dataset(hr_dir, split_ratio=split_ratio, split_seed=seed,
                           factor=factor, train_count=train_count)
    out = Path(out_dir)
    save_prepared(dataset, out)
    n_train = len(dataset.train_samples())
    write_run_manifest(
        out, "prepare",
        {"factor": factor, "split_ratio": split_ratio, "train_count": train_count,
         "seed": seed},
        [str(hr_dir)], ["hr/", "lr/", "manifest.json"], started,
    )
    click.echo(f"prepared {len(dataset.samples)} pairs "
               f"({n_train} train / {len(dataset.samples) - n_train} test) in {out}")


@main.command()
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--count", default=16, show_default=True)
@click.option("--seed", default=0, show_default=True)
@_fail_json
def synth(out_dir, count, seed):
    """Generate a synthetic plate corpus (192x192 PNG per image)."""
    started = _now()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        img = synth_plate(rng)
        name = f"plate_{i:04d}.png"
        save_png(img, out / name)
        names.append(name)
    write_run_manifest(out, "synth", {"count": count, "seed": seed}, [], names, started)
    click.echo(f"wrote {count} synthetic plates to {out}")


@main.command()
@click.argument("dataset_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--batch-size", default=4, show_default=True)
@click.option("--epochs", default=64, show_default=True)
@click.option("--lr", "base_lr", default=2e-4, show_default=True)
@click.option("--warmup-steps", default=500, show_default=True)
@click.option("--ema-decay", default=0.999, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--checkpoint-every", default=0, show_default=True,
              help="Checkpoint cadence in steps (0 = end only).")
@click.option("--timesteps", default=1000, show_default=True)
@click.option("--beta-start", default=1e-4, show_default=True)
@click.option("--beta-end", default=0.02, show_default=True)
@click.option("--base-channels", default=32, show_default=True)
@click.option("--multipliers", default="1,2,4,4", show_default=True)
@click.option("--blocks", default=2, show_default=True)
@click.option("--time-embed-dim", default=128, show_default=True)
@click.option("--resume", "resume_from", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="train_state_*.pt file to resume from.")
@_fail_json
def train_cmd(dataset_dir, out_dir, batch_size, epochs, base_lr, warmup_steps,
              ema_decay, seed, checkpoint_every, timesteps, beta_start, beta_end,
              base_channels, multipliers, blocks, time_embed_dim, resume_from):
    """Train the denoiser on a prepared dataset."""
    started = _now()
    dataset = load_prepared(dataset_dir)
    config = TrainConfig(batch_size=batch_size, epochs=epochs, base_lr=base_lr,
                         warmup_steps=warmup_steps, ema_decay=ema_decay, seed=seed,
                         checkpoint_every=checkpoint_every)
    channels = dataset.samples[0].hr.channels
    dconfig = DenoiserConfig(
        in_channels=channels * 2, out_channels=channels,
        base_channels=base_channels,
        channel_multipliers=tuple(int(m) for m in multipliers.split(",")),
        blocks_per_level=blocks, time_embed_dim=time_embed_dim, seed=seed,
    )
    schedule = make_linear_schedule(timesteps, beta_start, beta_end)
    result = train(config, dataset, dconfig, schedule=schedule, out_dir=out_dir,
                   resume_from=resume_from)
    write_run_manifest(
        Path(out_dir), "train",
        {"train": config.__dict__, "denoiser": dconfig.__dict__,
         "schedule": {"timesteps": timesteps, "beta_start": beta_start,
                      "beta_end": beta_end}},
        [str(dataset_dir)],
        [p.name for p in result.checkpoints] + ["train_log.jsonl"],
        started,
    )
    click.echo(f"trained {result.log.records[-1]['step']} steps; "
               f"final loss {result.log.records[-1]['loss']:.4f}")


@main.command()
@click.argument("checkpoint", type=click.Path(exists=True, dir_okay=False))
@click.argument("lr_source", type=click.Path(exists=True))
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--seed", default=0, show_default=True)
@click.option("--trace-stride", default=None, type=int,
              help="Also export every Nth reconstruction snapshot.")
@click.option("--timesteps", default=1000, show_default=True)
@click.option("--beta-start", default=1e-4, show_default=True)
@click.option("--beta-end", default=0.02, show_default=True)
@click.option("--factor", default=4, show_default=True)
@_fail_json
def sr(checkpoint, lr_source, out_dir, seed, trace_stride, timesteps,
       beta_start, beta_end, factor):
    """Super-resolve one LR image or a directory of them."""
    started = _now()
    net = load_checkpoint(checkpoint)
    schedule = make_linear_schedule(timesteps, beta_start, beta_end)
    src = Path(lr_source)
    files = sorted(src.glob("*.png")) if src.is_dir() else [src]
    if not files:
        raise ValueError(f"no PNG inputs under {src}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for i, f in enumerate(files):
        rng = np.random.default_rng([seed, i])
        hr, trace = super_resolve(net, load_png(f), schedule, rng,
                                  trace_stride=trace_stride, factor=factor)
        name = f"{f.stem}_sr.png"
        save_png(hr, out / name)
        outputs.append(name)
        if trace is not None:
            tdir = out / f"trace_{f.stem}"
            tdir.mkdir(exist_ok=True)
            for t, snap in trace.steps:
                save_png(snap, tdir / f"step_{t:06d}.png")
            outputs.append(f"trace_{f.stem}/")
    write_run_manifest(
        out, "sr",
        {"checkpoint": str(checkpoint), "seed": seed, "trace_stride": trace_stride,
         "timesteps": timesteps, "beta_start": beta_start, "beta_end": beta_end,
         "factor": factor},
        [str(src)], outputs, started,
    )
    click.echo(f"super-resolved {len(files)} image(s) into {out}")


@main.command(name="eval")
@click.argument("gt_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--method", multiple=True, required=True,
              help="name=dir; repeat per method. First one is the reference.")
@_fail_json
def eval_cmd(gt_dir, out_dir, method):
    """Score method directories against ground truth (PSNR/SSIM/MS-SSIM)."""
    started = _now()
    methods = _parse_methods(method)
    report = evaluate_directories(gt_dir, methods)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.to_csv(out / "report.csv")
    report.to_json(out / "report.json")
    write_run_manifest(
        out, "eval",
        {"methods": {k: str(v) for k, v in methods.items()},
         "reference": report.reference},
        [str(gt_dir)], ["report.csv", "report.json"], started,
    )
    for m, stats in report.means.items():
        click.echo(f"{m}: psnr={stats['psnr_db']:.4f} ssim={stats['ssim']:.4f} "
                   f"ms_ssim={stats['ms_ssim']:.4f}")


@main.command(name="bundle-study")
@click.argument("gt_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--method", multiple=True, required=True,
              help="name=dir; exactly three methods.")
@click.option("--questions", default=11, show_default=True)
@click.option("--seed", default=0, show_default=True)
@_fail_json
def bundle_study(gt_dir, out_dir, method, questions, seed):
    """Select question images and export the anonymized 3-AFC study bundle."""
    started = _now()
    methods = _parse_methods(method)
    if len(methods) != 3:
        raise ValueError(f"need exactly 3 methods, got {len(methods)}")
    ids = {p.stem for p in Path(gt_dir).glob("*.png")}
    for d in methods.values():
        ids &= {p.stem for p in Path(d).glob("*.png")}
    ids = sorted(ids)
    if len(ids) < questions:
        raise ValueError(
            f"only {len(ids)} images common to all methods; need {questions}"
        )
    rng = np.random.default_rng(seed)
    chosen = [ids[i] for i in rng.choice(len(ids), size=questions, replace=False)]

    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    bundle = []
    for qnum, source_id in enumerate(chosen, start=1):
        files = []
        labels = {}
        for name, d in methods.items():
            opaque = hashlib.sha1(f"{seed}|{source_id}|{name}".encode()).hexdigest()[:12]
            fname = f"{opaque}.png"
            shutil.copyfile(Path(d) / f"{source_id}.png", out / "images" / fname)
            files.append(fname)
            labels[fname] = name
        bundle.append({
            "question_id": f"q{qnum:02d}",
            "source_id": source_id,
            "image_files": files,
            "method_labels": labels,
        })
    (out / "questions.json").write_text(json.dumps(bundle, indent=2))
    write_run_manifest(
        out, "bundle-study",
        {"methods": {k: str(v) for k, v in methods.items()},
         "questions": questions, "seed": seed},
        [str(gt_dir)], ["questions.json", "images/"], started,
    )
    click.echo(f"bundled {questions} questions x 3 images in {out}")


@main.command(name="study-serve")
@click.argument("bundle_dir", type=click.Path(exists=True, file_okay=False),
                envvar="PLATESR_STUDY_BUNDLE")
@click.option("--data", "data_dir", required=True, envvar="PLATESR_STUDY_DATA",
              type=click.Path(file_okay=False), help="Writable log directory.")
@click.option("--host", default="127.0.0.1", show_default=True,
              envvar="PLATESR_STUDY_HOST")
@click.option("--port", default=8765, show_default=True, envvar="PLATESR_STUDY_PORT")
@click.option("--ui", "ui_dir", default=None, type=click.Path(file_okay=False),
              help="Optional static frontend build to serve at /.")
@_fail_json
def study_serve(bundle_dir, data_dir, host, port, ui_dir):
    """Run the 3-AFC study HTTP service over a prepared bundle."""
    server = make_server(bundle_dir, data_dir, host=host, port=port, ui_dir=ui_dir)
    click.echo(f"study service on http://{host}:{server.server_address[1]} "
               f"(bundle {bundle_dir})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()


if __name__ == "__main__":
    main()
