"""
CLI entry point: dataset generation, training, rendering, edits and evaluation.

    avatar-fields --config configs/acceptance.json gen-data
    avatar-fields --config configs/acceptance.json train data
    avatar-fields render outputs/checkpoints/latest.ckpt data/poses.json data/cameras.json --out renders
    avatar-fields relight outputs/checkpoints/latest.ckpt data/relight/0/probe.nfimg data/poses.json data/cameras.json
    avatar-fields edit outputs/checkpoints/latest.ckpt edits/retexture.json data/poses.json data/cameras.json
    avatar-fields eval renders data --split val
"""

import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import typer

from avatar_fields.config import apply_overrides, configure_threads, dump_run_config, load_run_config
from avatar_fields.core import AvatarFieldsError
from avatar_fields.models import RenderResult, RunConfig
from avatar_fields.oracle.intersect import REGISTRY
from avatar_fields.tools import edit, evaluate, gen_data, render, train
from avatar_fields.train.dataset import SPLITS

log = logging.getLogger(__name__)

app = typer.Typer(
    name="avatar-fields",
    help="Train, render, relight and edit neural-field human avatars anchored to a skinned mesh.",
    no_args_is_help=True,
)


@dataclass
class _State:
    config: RunConfig
    out_given: bool
    progress: bool


def _fail(e: Exception) -> None:
    code = e.code if isinstance(e, AvatarFieldsError) else "invalid"
    message = " ".join(str(e).split())
    typer.echo(f"error: {code}: {message}", err=True)
    raise typer.Exit(1)


def _echo_render(result: RenderResult) -> None:
    typer.echo(result.message)
    if result.degenerate_fraction > 0:
        typer.echo(f"  degenerate normals {result.degenerate_fraction:.4%}")


def _run_tool(run_fn, *args, **kwargs):
    """Run a tool; on a package error or ValueError print one error line and exit 1."""
    try:
        return run_fn(*args, **kwargs)
    except (AvatarFieldsError, ValueError) as e:
        _fail(e)


def _setup_logging(verbose: bool, quiet: bool) -> None:
    if not logging.getLogger().handlers:
        logging.basicConfig(level=logging.INFO, format="%(message)s")
    if verbose:
        logging.getLogger("avatar_fields").setLevel(logging.DEBUG)
    elif quiet:
        logging.getLogger("avatar_fields").setLevel(logging.WARNING)


def _parse_frames(frames: str | None) -> list[int] | None:
    if frames is None:
        return None
    try:
        return [int(f) for f in frames.split(",") if f.strip()]
    except ValueError:
        _fail(ValueError(f"--frames must be a comma-separated list of frame ids, got {frames!r}"))


def _out_dir(state: _State, fallback: Path | None = None) -> Path:
    if state.out_given or fallback is None:
        return Path(state.config.paths.out_dir)
    return fallback


@app.callback(invoke_without_command=True)
def main_callback(
    ctx: typer.Context,
    config: Path | None = typer.Option(None, "--config", "-c", help="Run config JSON (default: built-in defaults)", path_type=Path),
    seed: int | None = typer.Option(None, "--seed", min=0, max=2**64 - 1, help="Override the config seed (u64)"),
    out: Path | None = typer.Option(None, "--out", "-o", help="Output directory (overrides paths.out_dir)", path_type=Path),
    print_config: bool = typer.Option(False, "--print-config", help="Print the canonical config JSON and exit"),
    verbose: bool = typer.Option(False, "-v", "--verbose", help="Debug logging"),
    quiet: bool = typer.Option(False, "-q", "--quiet", help="Warnings only, no progress bars"),
) -> None:
    """Global flags apply to every command and must come before it."""
    _setup_logging(verbose, quiet)
    run_config = _run_tool(apply_overrides, _run_tool(load_run_config, config), seed=seed, out=out)
    _run_tool(configure_threads)
    if print_config:
        typer.echo(dump_run_config(run_config), nl=False)
        raise typer.Exit(0)
    ctx.obj = _State(config=run_config, out_given=out is not None, progress=not quiet and sys.stderr.isatty())


@app.command("gen-data")
def gen_data_cmd(
    ctx: typer.Context,
    backend: str = typer.Option("bvh", "--backend", "-b", help=f"Ray intersector: {', '.join(REGISTRY)}"),
) -> None:
    """Generate the synthetic capsule-person dataset (into --out, else paths.data_dir)."""
    state: _State = ctx.obj
    out_dir = _out_dir(state, Path(state.config.paths.data_dir))
    result = _run_tool(gen_data.run, state.config, out_dir, backend=backend, progress=state.progress)
    typer.echo(result.message)
    m = result.manifest
    typer.echo(f"  train {len(m.train)}  val {len(m.val)}  novel_pose {len(m.novel_pose)}")


@app.command("train")
def train_cmd(
    ctx: typer.Context,
    data_dir: Path | None = typer.Argument(None, help="Dataset directory (default: paths.data_dir)", path_type=Path),
    resume: Path | None = typer.Option(None, "--resume", help="Continue from this checkpoint", path_type=Path),
) -> None:
    """Fit the model; writes checkpoints and train_log.jsonl into paths.out_dir."""
    state: _State = ctx.obj
    data = data_dir if data_dir is not None else Path(state.config.paths.data_dir)
    result = _run_tool(train.run, state.config, data, _out_dir(state), resume=resume, progress=state.progress)
    typer.echo(result.message)
    typer.echo(f"  checkpoint → {result.checkpoint}")
    typer.echo(f"  log        → {result.log_path}")


@app.command("render")
def render_cmd(
    ctx: typer.Context,
    checkpoint: Path = typer.Argument(..., help="Checkpoint file", path_type=Path),
    poses: Path = typer.Argument(..., help="poses.json", path_type=Path),
    cameras: Path = typer.Argument(..., help="cameras.json (frame, pose_index, intrinsics, extrinsics)", path_type=Path),
    frames: str | None = typer.Option(None, "--frames", help="Comma-separated frame ids (default: all)"),
) -> None:
    """Novel pose / novel view synthesis: rgb plus alpha, normal, albedo, shadow and depth buffers."""
    state: _State = ctx.obj
    result = _run_tool(
        render.run, checkpoint, poses, cameras, _out_dir(state),
        frames=_parse_frames(frames), progress=state.progress,
    )
    _echo_render(result)


@app.command("relight")
def relight_cmd(
    ctx: typer.Context,
    checkpoint: Path = typer.Argument(..., help="Checkpoint file", path_type=Path),
    probe: Path = typer.Argument(..., help="Light probe (.nfimg, lat-long)", path_type=Path),
    poses: Path = typer.Argument(..., help="poses.json", path_type=Path),
    cameras: Path = typer.Argument(..., help="cameras.json", path_type=Path),
    frames: str | None = typer.Option(None, "--frames", help="Comma-separated frame ids (default: all)"),
) -> None:
    """Render under a different light probe."""
    state: _State = ctx.obj
    result = _run_tool(
        edit.run_relight, checkpoint, probe, poses, cameras, _out_dir(state),
        frames=_parse_frames(frames), progress=state.progress,
    )
    _echo_render(result)


@app.command("edit")
def edit_cmd(
    ctx: typer.Context,
    checkpoint: Path = typer.Argument(..., help="Checkpoint file", path_type=Path),
    spec: Path = typer.Argument(..., help="Edit spec JSON (relight, shadow_override, shadow_transfer, retexture, reshape)", path_type=Path),
    poses: Path = typer.Argument(..., help="poses.json", path_type=Path),
    cameras: Path = typer.Argument(..., help="cameras.json", path_type=Path),
    frames: str | None = typer.Option(None, "--frames", help="Comma-separated frame ids (default: all)"),
) -> None:
    """Apply a post-training edit and render."""
    state: _State = ctx.obj
    result = _run_tool(
        edit.run, checkpoint, spec, poses, cameras, _out_dir(state),
        frames=_parse_frames(frames), progress=state.progress,
    )
    _echo_render(result)


@app.command("eval")
def eval_cmd(
    ctx: typer.Context,
    render_dir: Path = typer.Argument(..., help="Rendered frames directory", path_type=Path),
    gt_dir: Path = typer.Argument(..., help="Ground-truth directory (frames/, masks/)", path_type=Path),
    manifest: Path | None = typer.Option(None, "--manifest", help="Split manifest (default: GT_DIR/manifest.json)", path_type=Path),
    split: str = typer.Option("val", "--split", help=f"Split: {', '.join(SPLITS)}"),
) -> None:
    """PSNR/SSIM per frame and means; writes metrics.json and metrics.txt."""
    state: _State = ctx.obj
    result = _run_tool(
        evaluate.run, render_dir, gt_dir, manifest=manifest, split=split,
        out_dir=_out_dir(state, render_dir),
    )
    typer.echo(evaluate.format_table(result), nl=False)


def main() -> None:
    app()


if __name__ == "__main__":
    main()
