"""
Run configuration: one JSON file validated into RunConfig. Missing file means defaults.
The canonical text form (sorted keys, 2-space indent) is what `--print-config` emits and
what checkpoints embed, so load(dump(c)) == c. The only environment variable read by the
package is NECA_THREADS (see core.configure_threads).
"""

import json
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from avatar_fields.core import ConfigError, configure_threads
from avatar_fields.models import RunConfig

__all__ = [
    "apply_overrides",
    "config_from_dict",
    "configure_threads",
    "dump_run_config",
    "load_run_config",
]


def _first_error(e: ValidationError) -> str:
    err = e.errors()[0]
    loc = ".".join(str(p) for p in err.get("loc", ())) or "<root>"
    return f"{loc}: {err.get('msg', 'invalid value')}"


def config_from_dict(data: dict[str, Any], source: str = "<dict>") -> RunConfig:
    """Validate a parsed config document. Raises ConfigError naming the first bad field."""
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid config {source}: {_first_error(e)}") from e


def load_run_config(path: str | Path | None = None) -> RunConfig:
    """Load and validate a config file; None returns the defaults."""
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Config {path} must hold a JSON object")
    return config_from_dict(data, str(path))


def config_to_dict(config: RunConfig) -> dict[str, Any]:
    return config.model_dump(mode="json")


def dump_run_config(config: RunConfig) -> str:
    """Canonical JSON text: sorted keys, 2-space indent, trailing newline."""
    return json.dumps(config_to_dict(config), sort_keys=True, indent=2) + "\n"


def apply_overrides(
    config: RunConfig, *, seed: int | None = None, out: str | Path | None = None
) -> RunConfig:
    """Apply the global --seed / --out flags on top of the file values."""
    data = config_to_dict(config)
    if seed is not None:
        data["seed"] = seed
    if out is not None:
        data["paths"]["out_dir"] = str(out)
    return config_from_dict(data, "<overrides>")
