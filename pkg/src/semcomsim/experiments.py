"""Experiment orchestration: training stages, checkpoints, sweeps and result files.

Every stage reads its inputs from checkpoints in the output directory and
writes its own, so commands can be run one at a time from the CLI. All
randomness comes from named sub-streams of the configured seed.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .baseline import baseline_transmit, peg_code
from .channel import INF_SNR, PowerConvention
from .checkpoint import load_checkpoint, round_to_storage, save_checkpoint
from .config import ExperimentConfig
from .data import load_images, synthetic_images
from .diffusion import Denoiser, DenoiserConfig, NoiseSchedule
from .metrics import compression_ratio, evaluate_pair, predictability, to_pixels
from .pipeline import Pipeline, finetune, reconstruct
from .rng import stream
from .semantic import EmbeddingSpec, SemanticEncoder, pretrain, standardize
from .vq import VQConfig, VQModel, train_vq

log = logging.getLogger(__name__)

OUT_ENV = "SEMCOM_OUT"
DEFAULT_OUT = "runs"
EVAL_BATCH = 16

# which command produces each checkpoint
PRODUCERS = {
    "vq": "train-vq",
    "encoder": "pretrain-encoder",
    "diffusion": "finetune-diffusion",
    "diffusion_clean": "ablate --clean-vs-noisy",
}


class MissingCheckpoint(FileNotFoundError):
    def __init__(self, name: str, path: Path):
        cmd = PRODUCERS.get(name) or PRODUCERS[name.split("_s")[0]]
        super().__init__(f"missing checkpoint {path}: run `semcomsim {cmd}` first")
        self.name = name
        self.command = cmd


def output_dir(explicit=None) -> Path:
    return Path(explicit or os.environ.get(OUT_ENV) or DEFAULT_OUT)


@dataclass(frozen=True)
class Workspace:
    root: Path

    def __post_init__(self):
        object.__setattr__(self, "root", Path(self.root))

    def checkpoint(self, name: str) -> Path:
        return self.root / "checkpoints" / f"{name}.cscm"

    def result(self, name: str) -> Path:
        return self.root / "results" / name

    def require(self, name: str) -> dict:
        path = self.checkpoint(name)
        if not path.exists():
            raise MissingCheckpoint(name, path)
        return load_checkpoint(path)


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------

def _directory_split(cfg: ExperimentConfig, directory: str, split: str) -> np.ndarray:
    images = load_images(directory, cfg.data.image_size)
    n_test = min(cfg.data.test_count, max(1, len(images) // 2)) if len(images) > 1 else 0
    if split == "test":
        return images[:n_test] if n_test else images
    return images[n_test:] if n_test else images


def dataset(cfg: ExperimentConfig, split: str, count: Optional[int] = None,
            family: Optional[str] = None) -> np.ndarray:
    """Train/test images. A directory dataset reserves its first files for testing."""
    if family is None and cfg.data.directory:
        images = _directory_split(cfg, cfg.data.directory, split)
        if count is not None and count < len(images):
            images = images[:count]
        elif count is not None and count > len(images):
            log.warning("requested %d %s images but the directory provides %d", count, split, len(images))
        return images
    if family is not None and Path(family).is_dir():
        images = load_images(family, cfg.data.image_size)
        return images[:count] if count is not None else images
    if count is None:
        count = cfg.data.train_count if split == "train" else cfg.data.test_count
    return synthetic_images(family or cfg.data.family, count, cfg.data.image_size, cfg.seed, split)


# ---------------------------------------------------------------------------
# model construction and checkpoints
# ---------------------------------------------------------------------------

def _config_record(cfg: ExperimentConfig) -> dict:
    return {"config": cfg.to_dict(), "hash": cfg.hash()}


def _to_storage(*models) -> None:
    # weights live at checkpoint precision from here on, so metrics survive a reload
    for m in models:
        m.load_state_dict(round_to_storage(m.state_dict()))


def vq_config(cfg: ExperimentConfig) -> VQConfig:
    return VQConfig(image_size=cfg.data.image_size, latent_channels=cfg.vq.latent_channels,
                    codebook_size=cfg.vq.codebook_size, commitment_beta=cfg.vq.commitment_beta)


def embedding_spec(cfg: ExperimentConfig, spatial: Optional[int] = None) -> EmbeddingSpec:
    e = cfg.embedding
    return EmbeddingSpec(e.channels, spatial or e.spatial, e.standardize)


def _vq_from(ckpt: dict) -> VQModel:
    model = VQModel(VQConfig(**ckpt["meta"]["vq_config"]), np.random.default_rng(0))
    model.load_state_dict(ckpt["vq"])
    return model


def _encoder_from(ckpt: dict) -> SemanticEncoder:
    meta = ckpt["meta"]
    enc = SemanticEncoder(EmbeddingSpec(**meta["embedding"]), meta["image_size"], np.random.default_rng(0))
    enc.load_state_dict(ckpt["encoder"])
    return enc


def train_vq_stage(cfg: ExperimentConfig, ws: Workspace) -> VQModel:
    images = dataset(cfg, "train")
    vcfg = vq_config(cfg)
    model = VQModel(vcfg, stream(cfg.seed, "vq/init"))
    train_vq(model, images, cfg.vq.steps, stream(cfg.seed, "vq/train"),
             batch_size=cfg.vq.batch_size, lr=cfg.vq.lr)
    _to_storage(model)
    save_checkpoint(ws.checkpoint("vq"), {
        "vq": model.state_dict(),
        "meta": {"vq_config": dataclasses.asdict(vcfg)},
        "config": _config_record(cfg),
    })
    return model


def encoder_name(cfg: ExperimentConfig, spatial: Optional[int] = None) -> str:
    spatial = spatial or cfg.embedding.spatial
    return "encoder" if spatial == cfg.embedding.spatial else f"encoder_s{spatial}"


def pretrain_encoder_stage(cfg: ExperimentConfig, ws: Workspace, spatial: Optional[int] = None) -> SemanticEncoder:
    images = dataset(cfg, "train")
    spec = embedding_spec(cfg, spatial)
    enc = SemanticEncoder(spec, cfg.data.image_size, stream(cfg.seed, "encoder/init", spec.spatial))
    pretrain(enc, images, cfg.encoder.steps, stream(cfg.seed, "encoder/train", spec.spatial),
             batch_size=cfg.encoder.batch_size, lr=cfg.encoder.lr)
    _to_storage(enc)
    save_checkpoint(ws.checkpoint(encoder_name(cfg, spatial)), {
        "encoder": enc.state_dict(),
        "meta": {"embedding": dataclasses.asdict(spec), "image_size": cfg.data.image_size},
        "config": _config_record(cfg),
    })
    return enc


def diffusion_name(cfg: ExperimentConfig, clean: bool = False, spatial: Optional[int] = None) -> str:
    if clean:
        return "diffusion_clean"
    spatial = spatial or cfg.embedding.spatial
    return "diffusion" if spatial == cfg.embedding.spatial else f"diffusion_s{spatial}"


def _pipeline_sections(cfg: ExperimentConfig, p: Pipeline, step: int) -> dict:
    return {
        "vq": p.vq.state_dict(),
        "encoder": p.encoder.state_dict(),
        "denoiser": p.denoiser.state_dict(),
        "schedule": {"alpha_bar": p.schedule.alpha_bar.copy(),
                     "params": {"kind": "cosine", "T": p.schedule.T}},
        "meta": {
            "vq_config": dataclasses.asdict(p.vq.config),
            "embedding": dataclasses.asdict(p.encoder.spec),
            "image_size": p.encoder.image_size,
            "denoiser_config": dataclasses.asdict(p.denoiser.config),
            "latent_scale": p.latent_scale,
            "clip": p.clip,
            "sample_steps": p.sample_steps,
            "power_convention": p.power_convention.value,
            "step": step,
        },
        "config": _config_record(cfg),
    }


def finetune_stage(cfg: ExperimentConfig, ws: Workspace, clean: bool = False,
                   spatial: Optional[int] = None):
    """Train a denoiser on frozen VQ + encoder checkpoints; returns (pipeline, losses)."""
    vq_ckpt = ws.require("vq")
    enc_ckpt = ws.require(encoder_name(cfg, spatial))
    vq, enc = _vq_from(vq_ckpt), _encoder_from(enc_ckpt)
    d = cfg.diffusion
    dcfg = DenoiserConfig(latent_channels=vq.config.latent_channels, latent_size=vq.config.latent_size,
                          cond_size=enc.spec.size, width=d.width)
    name = diffusion_name(cfg, clean, spatial)
    den = Denoiser(dcfg, stream(cfg.seed, "diffusion/init", enc.spec.spatial))
    pipe = Pipeline(vq, enc, den, NoiseSchedule.cosine(d.timesteps), sample_steps=d.sample_steps,
                    power_convention=PowerConvention(cfg.eval.power_convention))
    snr_range = (INF_SNR, INF_SNR) if clean else (d.snr_min, d.snr_max)
    # the clean and noisy runs share one training stream so they differ only in the channel
    rng = stream(cfg.seed, "diffusion/train", enc.spec.spatial)

    def save(step, extra=None):
        # the file holds float32 either way; live weights stay float64 until training ends
        save_checkpoint(ws.checkpoint(name), {**_pipeline_sections(cfg, pipe, step), **(extra or {})})

    res = finetune(pipe, dataset(cfg, "train"), d.steps, snr_range, rng, batch_size=d.batch_size,
                   lr=d.lr, lr_final=d.lr_final, checkpoint_every=d.checkpoint_every, on_checkpoint=save)
    _to_storage(den)
    save(d.steps, {"history": {"loss": np.array(res.losses)}})
    return pipe, res.losses


def load_pipeline(ws: Workspace, name: str = "diffusion") -> Pipeline:
    ck = ws.require(name)
    meta = ck["meta"]
    vq = VQModel(VQConfig(**meta["vq_config"]), np.random.default_rng(0))
    vq.load_state_dict(ck["vq"])
    enc = SemanticEncoder(EmbeddingSpec(**meta["embedding"]), meta["image_size"], np.random.default_rng(0))
    enc.load_state_dict(ck["encoder"])
    den = Denoiser(DenoiserConfig(**meta["denoiser_config"]), np.random.default_rng(0))
    den.load_state_dict(ck["denoiser"])
    params = ck["schedule"]["params"]
    schedule = NoiseSchedule.cosine(params["T"])
    stored = ck["schedule"]["alpha_bar"]
    if not np.array_equal(stored, schedule.alpha_bar.astype(np.float32).astype(np.float64)):
        raise ValueError(f"{name}: stored noise schedule does not match its parameters")
    return Pipeline(vq, enc, den, schedule, latent_scale=meta["latent_scale"], clip=meta["clip"],
                    sample_steps=meta["sample_steps"], power_convention=PowerConvention(meta["power_convention"]))


# ---------------------------------------------------------------------------
# result files
# ---------------------------------------------------------------------------

def score(x: np.ndarray, x_hat: Optional[np.ndarray]):
    """Metrics on the 0..255 pixel scale; ``None`` is a failed transmission."""
    return evaluate_pair(to_pixels(x), None if x_hat is None else to_pixels(x_hat))


SWEEP_COLUMNS = ["run_id", "config_hash", "model", "dataset", "snr_db", "sample", "psnr_db", "ssim", "mse", "failed"]
SUMMARY_COLUMNS = ["run_id", "config_hash", "model", "dataset", "snr_db", "n", "psnr_mean", "ssim_mean",
                   "mse_mean", "failure_rate"]


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[dict]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])
    return path


def read_csv(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_snapshot(cfg: ExperimentConfig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(f"# config hash {cfg.hash()}\n" + cfg.to_toml(), encoding="utf-8")
    return path


def summarize(rows: list) -> list:
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["model"], r["dataset"], r["snr_db"]), []).append(r)
    out = []
    for (model, ds, snr), rs in groups.items():
        out.append({
            "run_id": rs[0]["run_id"], "config_hash": rs[0]["config_hash"], "model": model, "dataset": ds,
            "snr_db": snr, "n": len(rs),
            "psnr_mean": float(np.mean([r["psnr_db"] for r in rs])),
            "ssim_mean": float(np.mean([r["ssim"] for r in rs])),
            "mse_mean": float(np.mean([r["mse"] for r in rs])),
            "failure_rate": float(np.mean([r["failed"] for r in rs])),
        })
    return out


GNUPLOT_TEMPLATE = """\
# {title}
# usage: gnuplot {script}
set datafile separator ','
set terminal pngcairo size 900,380
set output '{png}'
set multiplot layout 1,2 title '{title}'
set key bottom right
set xlabel 'SNR (dB)'
set ylabel 'PSNR (dB)'
plot {psnr}
set ylabel 'SSIM'
plot {ssim}
unset multiplot
"""


def write_gnuplot(summary_csv: Path, models: Sequence[str], title: str) -> Path:
    script = summary_csv.with_suffix(".gp")
    name = summary_csv.name

    def series(col):
        return ", ".join(
            f"'{name}' using (stringcolumn(3) eq '{m}' ? $5 : 1/0):{col} with linespoints title '{m}'"
            for m in models)

    script.write_text(GNUPLOT_TEMPLATE.format(title=title, script=script.name, png=summary_csv.stem + ".png",
                                              psnr=series(7), ssim=series(8)), encoding="utf-8")
    return script


@dataclass
class SweepResult:
    rows: list
    summary: list
    csv: Optional[Path] = None
    summary_csv: Optional[Path] = None


def _run_id(command: str, cfg: ExperimentConfig) -> str:
    return f"{command}-{cfg.hash()}"


def sweep(pipeline: Pipeline, cfg: ExperimentConfig, images: np.ndarray, snrs: Sequence[float],
          model: str, dataset_name: str, run_id: str, timings: Optional[list] = None) -> list:
    """Reconstruct every image at every SNR; image i always uses the same random streams."""
    rows = []
    for snr in snrs:
        for start in range(0, len(images), EVAL_BATCH):
            x = images[start:start + EVAL_BATCH]
            rngs = [stream(cfg.seed, "eval", start + i) for i in range(len(x))]
            t0 = time.perf_counter()
            out = reconstruct(pipeline, x, float(snr), rngs)
            if timings is not None:
                timings.append({"run_id": run_id, "model": model, "snr_db": float(snr), "images": len(x),
                                "seconds_per_image": (time.perf_counter() - t0) / len(x)})
            for i, (a, b) in enumerate(zip(x, out)):
                m = score(a, b)
                rows.append({"run_id": run_id, "config_hash": cfg.hash(), "model": model, "dataset": dataset_name,
                             "snr_db": float(snr), "sample": start + i, "psnr_db": m.psnr_db, "ssim": m.ssim,
                             "mse": m.mse, "failed": m.failed})
    return rows


TIMING_COLUMNS = ["run_id", "model", "snr_db", "images", "seconds_per_image"]


def _emit(ws: Workspace, cfg: ExperimentConfig, stem: str, rows: list, title: str,
          timings: Optional[list] = None) -> SweepResult:
    summary = summarize(rows)
    path = write_csv(ws.result(f"{stem}.csv"), SWEEP_COLUMNS, rows)
    spath = write_csv(ws.result(f"{stem}_summary.csv"), SUMMARY_COLUMNS, summary)
    write_snapshot(cfg, ws.result(f"{stem}.config.toml"))
    write_gnuplot(spath, sorted({r["model"] for r in rows}), title)
    if timings:
        # wall-clock numbers vary run to run, so they stay out of the reproducible CSV
        write_csv(ws.result(f"{stem}_timing.csv"), TIMING_COLUMNS, timings)
    return SweepResult(rows, summary, path, spath)


def evaluate_command(cfg: ExperimentConfig, ws: Workspace, snrs: Optional[Sequence[float]] = None,
                     samples: Optional[int] = None, model: str = "diffusion") -> SweepResult:
    snrs = list(snrs or cfg.eval.snr_grid)
    samples = samples or cfg.eval.samples
    pipe = load_pipeline(ws, model)
    images = dataset(cfg, "test", count=samples)
    run_id = _run_id("evaluate", cfg)
    timings: list = []
    rows = sweep(pipe, cfg, images, snrs, model, cfg.data.directory or cfg.data.family, run_id, timings)
    return _emit(ws, cfg, "evaluate", rows, "semantic link: quality vs SNR", timings)


# ---------------------------------------------------------------------------
# predictability
# ---------------------------------------------------------------------------

PREDICT_COLUMNS = ["run_id", "config_hash", "model", "snr_db", "image", "repeats", "pairs", "mu", "sigma",
                   "cv", "psnr_mean", "psnr_std"]


def predictability_run(pipeline: Pipeline, cfg: ExperimentConfig, image: np.ndarray, snr_db: float,
                       repeats: int, image_index: int = 0) -> list:
    """Repeat one transmission; compare against a control conditioned on fresh random embeddings."""
    x = np.repeat(image[None], repeats, axis=0)
    rngs = [stream(cfg.seed, "predict", image_index, r) for r in range(repeats)]
    out = {"conditioned": reconstruct(pipeline, x, snr_db, rngs)}
    ctrl = stream(cfg.seed, "predict/control", image_index)
    z_rand = standardize(ctrl.standard_normal((repeats,) + pipeline.encoder.spec.shape))
    rngs = [stream(cfg.seed, "predict", image_index, r) for r in range(repeats)]
    out["unconditioned"] = reconstruct(pipeline, x, snr_db, rngs, z_override=z_rand)
    rows = []
    for model, rec in out.items():
        mu, sigma = predictability([to_pixels(r) for r in rec], "mse")
        psnrs = [score(image, r).psnr_db for r in rec]
        rows.append({"run_id": _run_id("predictability", cfg), "config_hash": cfg.hash(), "model": model,
                     "snr_db": float(snr_db), "image": image_index, "repeats": repeats,
                     "pairs": repeats * (repeats - 1) // 2, "mu": mu, "sigma": sigma,
                     "cv": sigma / mu if mu > 0 else math.inf,
                     "psnr_mean": float(np.mean(psnrs)), "psnr_std": float(np.std(psnrs))})
    return rows


def predictability_command(cfg: ExperimentConfig, ws: Workspace, repeats: Optional[int] = None,
                           snr_db: Optional[float] = None, image_index: int = 0) -> Path:
    repeats = repeats or cfg.eval.repeats
    snr_db = cfg.eval.predictability_snr if snr_db is None else snr_db
    pipe = load_pipeline(ws)
    images = dataset(cfg, "test", count=image_index + 1)
    rows = predictability_run(pipe, cfg, images[image_index], snr_db, repeats, image_index)
    write_snapshot(cfg, ws.result("predictability.config.toml"))
    return write_csv(ws.result("predictability.csv"), PREDICT_COLUMNS, rows)


# ---------------------------------------------------------------------------
# classical baseline
# ---------------------------------------------------------------------------

BASELINE_COLUMNS = SWEEP_COLUMNS + ["blocks", "failed_blocks"]


def baseline_rows(cfg: ExperimentConfig, images: np.ndarray, snrs: Sequence[float], quality: int,
                  ldpc_n: int, qam_order: int) -> list:
    code = peg_code(ldpc_n, seed=cfg.seed)
    run_id = _run_id("baseline", cfg)
    model = f"dct{quality}+ldpc{ldpc_n}+{qam_order}qam"
    rows = []
    for snr in snrs:
        for i, x in enumerate(images):
            res = baseline_transmit(x, quality, code, qam_order, float(snr), stream(cfg.seed, "baseline", i),
                                    cfg.baseline.max_iters)
            m = score(x, res.image)
            rows.append({"run_id": run_id, "config_hash": cfg.hash(), "model": model,
                         "dataset": cfg.data.directory or cfg.data.family, "snr_db": float(snr), "sample": i,
                         "psnr_db": m.psnr_db, "ssim": m.ssim, "mse": m.mse, "failed": m.failed,
                         "blocks": res.blocks, "failed_blocks": res.failed_blocks})
    return rows


def baseline_command(cfg: ExperimentConfig, ws: Workspace, snrs: Optional[Sequence[float]] = None,
                     samples: Optional[int] = None) -> SweepResult:
    b = cfg.baseline
    snrs = list(snrs or cfg.eval.snr_grid)
    images = dataset(cfg, "test", count=samples or cfg.eval.samples)
    rows = baseline_rows(cfg, images, snrs, b.quality, b.ldpc_n, b.qam_order)
    summary = summarize(rows)
    path = write_csv(ws.result("baseline.csv"), BASELINE_COLUMNS, rows)
    spath = write_csv(ws.result("baseline_summary.csv"), SUMMARY_COLUMNS, summary)
    write_snapshot(cfg, ws.result("baseline.config.toml"))
    write_gnuplot(spath, sorted({r["model"] for r in rows}), "classical baseline: quality vs SNR")
    return SweepResult(rows, summary, path, spath)


# ---------------------------------------------------------------------------
# ablations and generalization
# ---------------------------------------------------------------------------

def ablate_clean_vs_noisy(cfg: ExperimentConfig, ws: Workspace, samples: Optional[int] = None) -> SweepResult:
    """Noisy-fine-tuned vs clean-trained denoiser on the same test sweep."""
    if not ws.checkpoint("diffusion_clean").exists():
        log.info("no clean-trained denoiser yet; training it")
        finetune_stage(cfg, ws, clean=True)
    images = dataset(cfg, "test", count=samples or cfg.eval.samples)
    run_id = _run_id("ablate-clean-vs-noisy", cfg)
    ds = cfg.data.directory or cfg.data.family
    rows = []
    for name, label in (("diffusion", "noisy-finetuned"), ("diffusion_clean", "clean-trained")):
        rows += sweep(load_pipeline(ws, name), cfg, images, cfg.eval.snr_grid, label, ds, run_id)
    return _emit(ws, cfg, "ablate_clean_vs_noisy", rows, "fine-tuned vs clean-trained")


EMBED_COLUMNS = ["run_id", "config_hash", "spatial", "embedding_shape", "compression_ratio", "snr_db", "n",
                 "psnr_mean", "ssim_mean"]


def ablate_embed_size(cfg: ExperimentConfig, ws: Workspace, samples: Optional[int] = None) -> Path:
    """Embedding spatial sizes image/16 and image/8: compression ratio against quality."""
    size = cfg.data.image_size
    images = dataset(cfg, "test", count=samples or cfg.eval.samples)
    run_id = _run_id("ablate-embed-size", cfg)
    out = []
    for spatial in (size // 16, size // 8):
        if not ws.checkpoint(encoder_name(cfg, spatial)).exists():
            pretrain_encoder_stage(cfg, ws, spatial)
        name = diffusion_name(cfg, spatial=spatial)
        if not ws.checkpoint(name).exists():
            finetune_stage(cfg, ws, spatial=spatial)
        pipe = load_pipeline(ws, name)
        shape = pipe.encoder.spec.shape
        rows = sweep(pipe, cfg, images, cfg.eval.snr_grid, name, cfg.data.family, run_id)
        for s in summarize(rows):
            out.append({"run_id": run_id, "config_hash": cfg.hash(), "spatial": spatial,
                        "embedding_shape": "x".join(map(str, shape)),
                        "compression_ratio": compression_ratio((3, size, size), shape),
                        "snr_db": s["snr_db"], "n": s["n"], "psnr_mean": s["psnr_mean"], "ssim_mean": s["ssim_mean"]})
    write_snapshot(cfg, ws.result("ablate_embed_size.config.toml"))
    return write_csv(ws.result("ablate_embed_size.csv"), EMBED_COLUMNS, out)


def generalize_command(cfg: ExperimentConfig, ws: Workspace, other: str, samples: Optional[int] = None) -> SweepResult:
    """Evaluate the fine-tuned pipeline on another image family without further training."""
    pipe = load_pipeline(ws)
    images = dataset(cfg, "test", count=samples or cfg.eval.samples, family=other)
    run_id = _run_id("generalize", cfg)
    rows = sweep(pipe, cfg, images, cfg.eval.snr_grid, "diffusion", Path(other).name, run_id)
    return _emit(ws, cfg, "generalize", rows, f"unseen family: {other}")
