"""Shared fixtures. The trained desk recipe is built once per session and cached on disk."""

import os
from pathlib import Path

import pytest

from semcomsim import experiments as ex
from semcomsim.checkpoint import load_checkpoint
from semcomsim.config import ExperimentConfig

CACHE_ENV = "SEMCOM_TEST_CACHE"
DEFAULT_CACHE = Path(__file__).resolve().parent.parent / ".test_runs"

# criterion number -> (passed, detail); filled by the acceptance tests
VERDICTS: dict = {}


def record(number: int, passed: bool, detail: str) -> None:
    VERDICTS[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        ok, detail = VERDICTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def desk_config() -> ExperimentConfig:
    """Desk training recipe at 32x32: larger batch and a decaying lr for the denoiser."""
    return ExperimentConfig().replace(diffusion={"batch_size": 32, "lr": 2e-3, "lr_final": 1e-4})


def _fresh(ws: ex.Workspace, name: str, cfg: ExperimentConfig) -> bool:
    path = ws.checkpoint(name)
    if not path.exists():
        return False
    ck = load_checkpoint(path)
    # periodic denoiser checkpoints from an interrupted run do not count
    done = "denoiser" not in ck or ck["meta"]["step"] == cfg.diffusion.steps
    return ck["config"]["hash"] == cfg.hash() and done


@pytest.fixture(scope="session")
def desk_run():
    """(config, workspace) with vq, encoder, noisy and clean denoisers trained."""
    cfg = desk_config()
    ws = ex.Workspace(Path(os.environ.get(CACHE_ENV, DEFAULT_CACHE)) / cfg.hash())
    if not _fresh(ws, "vq", cfg):
        ex.train_vq_stage(cfg, ws)
    if not _fresh(ws, "encoder", cfg):
        ex.pretrain_encoder_stage(cfg, ws)
    for clean in (False, True):
        if not _fresh(ws, ex.diffusion_name(cfg, clean=clean), cfg):
            ex.finetune_stage(cfg, ws, clean=clean)
    return cfg, ws
