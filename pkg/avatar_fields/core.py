"""
Minimal shared primitives: error types, dtype lookup, thread setup and seeded RNGs.
No CLI, no Typer. Used by every subpackage.
"""

import logging
import os

import numpy as np
import torch

log = logging.getLogger(__name__)

THREADS_ENV = "NECA_THREADS"

DTYPES: dict[str, torch.dtype] = {
    "float32": torch.float32,
    "float64": torch.float64,
}


class AvatarFieldsError(Exception):
    """Base error. `code` is the short machine-readable tag printed by the CLI."""

    code = "error"


class StructuralError(AvatarFieldsError, ValueError):
    """Invalid mesh, skeleton, shapes or topology."""

    code = "structural"


class ConfigError(AvatarFieldsError, ValueError):
    """Invalid run configuration or environment."""

    code = "config"


class CheckpointError(AvatarFieldsError, ValueError):
    """Unreadable or incompatible checkpoint file."""

    code = "checkpoint"


class DatasetError(AvatarFieldsError, ValueError):
    """Missing or malformed dataset files."""

    code = "dataset"


class NonFiniteError(AvatarFieldsError, RuntimeError):
    """NaN or Inf in a loss or gradient."""

    code = "non_finite"


def get_dtype(name: str) -> torch.dtype:
    """Return the torch dtype for a config name. Raises ConfigError if unknown."""
    if name not in DTYPES:
        raise ConfigError(f"Unknown dtype: {name}. Available: {list(DTYPES)}")
    return DTYPES[name]


def configure_threads() -> int | None:
    """Apply NECA_THREADS to torch's intra-op pool. Returns the count, or None when unset."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or not raw.strip():
        return None
    try:
        count = int(raw)
    except ValueError as e:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from e
    if count < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    torch.set_num_threads(count)
    log.debug("Using %d worker threads", count)
    return count


def rng_for(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based generator: the same (seed, keys) always yields the same stream."""
    return np.random.default_rng([seed, *keys])


def torch_generator(seed: int) -> torch.Generator:
    gen = torch.Generator()
    gen.manual_seed(seed)
    return gen
