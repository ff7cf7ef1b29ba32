"""Command-line entry point: ``semcomsim <command> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import experiments as ex
from .config import ConfigError, ExperimentConfig, load_config

log = logging.getLogger("semcomsim")


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML experiment config (defaults when omitted)")
    common.add_argument("--out", help=f"output directory (env {ex.OUT_ENV}, default '{ex.DEFAULT_OUT}')")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="semcomsim", description="Desk-scale semantic image transmission experiments")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("init-config", parents=[common], help="print the default config as TOML")
    s = sub.add_parser("train-vq", parents=[common], help="train the VQ autoencoder")
    s.add_argument("--steps", type=int)
    s = sub.add_parser("pretrain-encoder", parents=[common], help="pretrain the semantic encoder")
    s.add_argument("--steps", type=int)
    s.add_argument("--embed-channels", type=int)
    s.add_argument("--embed-spatial", type=int)
    s = sub.add_parser("finetune-diffusion", parents=[common], help="train the conditional denoiser")
    s.add_argument("--steps", type=int)
    s.add_argument("--snr-min", type=float)
    s.add_argument("--snr-max", type=float)
    s.add_argument("--sample-steps", type=int)
    s.add_argument("--clean", action="store_true", help="train on clean embeddings (ablation control)")
    s = sub.add_parser("evaluate", parents=[common], help="SNR sweep of the fine-tuned pipeline")
    s.add_argument("--snr-sweep", type=_floats, metavar="DB,DB,...")
    s.add_argument("--samples", type=int)
    s = sub.add_parser("predictability", parents=[common], help="repeated transmissions of one image")
    s.add_argument("--repeats", type=int)
    s.add_argument("--snr", type=float)
    s.add_argument("--image", type=int, default=0, help="test image index")
    s = sub.add_parser("baseline", parents=[common], help="DCT codec + LDPC + QAM sweep")
    s.add_argument("--quality", type=int)
    s.add_argument("--ldpc-n", type=int)
    s.add_argument("--qam-order", type=int)
    s.add_argument("--snr", type=_floats, metavar="DB,DB,...")
    s.add_argument("--samples", type=int)
    s = sub.add_parser("ablate", parents=[common], help="ablation studies")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--clean-vs-noisy", action="store_true")
    g.add_argument("--embed-size", action="store_true")
    s.add_argument("--samples", type=int)
    s = sub.add_parser("generalize", parents=[common], help="evaluate on an unseen image family")
    s.add_argument("--dataset", required=True, help="synthetic family name or image directory")
    s.add_argument("--samples", type=int)
    return p


def _overrides(args) -> dict:
    """Command-line flags folded into config sections, so they land in the hash."""
    o: dict = {}

    def put(section, key, value):
        if value is not None:
            o.setdefault(section, {})[key] = value

    cmd = args.command
    if args.seed is not None:
        o["seed"] = args.seed
    if cmd == "train-vq":
        put("vq", "steps", args.steps)
    elif cmd == "pretrain-encoder":
        put("encoder", "steps", args.steps)
        put("embedding", "channels", args.embed_channels)
        put("embedding", "spatial", args.embed_spatial)
    elif cmd == "finetune-diffusion":
        put("diffusion", "steps", args.steps)
        put("diffusion", "snr_min", args.snr_min)
        put("diffusion", "snr_max", args.snr_max)
        put("diffusion", "sample_steps", args.sample_steps)
    elif cmd == "baseline":
        put("baseline", "quality", args.quality)
        put("baseline", "ldpc_n", args.ldpc_n)
        put("baseline", "qam_order", args.qam_order)
    return o


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    o = _overrides(args)
    return cfg.replace(**o) if o else cfg


def run(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        cfg = _config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    ws = ex.Workspace(ex.output_dir(args.out))
    cmd = args.command
    try:
        if cmd == "init-config":
            sys.stdout.write(cfg.to_toml())
        elif cmd == "train-vq":
            ex.train_vq_stage(cfg, ws)
            print(ws.checkpoint("vq"))
        elif cmd == "pretrain-encoder":
            ex.pretrain_encoder_stage(cfg, ws)
            print(ws.checkpoint(ex.encoder_name(cfg)))
        elif cmd == "finetune-diffusion":
            ex.finetune_stage(cfg, ws, clean=args.clean)
            print(ws.checkpoint(ex.diffusion_name(cfg, clean=args.clean)))
        elif cmd == "evaluate":
            print(ex.evaluate_command(cfg, ws, args.snr_sweep, args.samples).csv)
        elif cmd == "predictability":
            print(ex.predictability_command(cfg, ws, args.repeats, args.snr, args.image))
        elif cmd == "baseline":
            print(ex.baseline_command(cfg, ws, args.snr, args.samples).csv)
        elif cmd == "ablate":
            if args.clean_vs_noisy:
                print(ex.ablate_clean_vs_noisy(cfg, ws, args.samples).csv)
            else:
                print(ex.ablate_embed_size(cfg, ws, args.samples))
        elif cmd == "generalize":
            print(ex.generalize_command(cfg, ws, args.dataset, args.samples).csv)
    except ex.MissingCheckpoint as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
