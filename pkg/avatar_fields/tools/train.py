"""
train tool: fit a model to a dataset directory, writing checkpoints and a JSONL log.
"""

from pathlib import Path

from avatar_fields.models import RunConfig, TrainResult
from avatar_fields.train.dataset import load_dataset
from avatar_fields.train.loop import train_loop


def run(
    config: RunConfig,
    data_dir: Path,
    out_dir: Path,
    resume: Path | None = None,
    progress: bool = True,
) -> TrainResult:
    dataset = load_dataset(data_dir)
    return train_loop(dataset, config, out_dir, resume=resume, progress=progress)
