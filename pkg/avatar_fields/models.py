"""Data models for run configuration, edit specs, dataset records and command results."""

from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

LocalMode = Literal["tangent", "relative", "direction", "uvh"]
Activation = Literal["relu", "softplus"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TriplaneConfig(_Strict):
    """CP-factorized tri-plane resolution and rank."""

    res_x: int = Field(default=512, ge=2, description="Grid resolution along x (L_x)")
    res_y: int = Field(default=512, ge=2, description="Grid resolution along y (L_y); must equal res_x")
    res_z: int = Field(default=128, ge=2, description="Grid resolution along z (L_z)")
    features: int = Field(default=32, ge=1, description="Feature width D per plane")
    components: int = Field(default=48, ge=1, description="CP component count R")
    domain_dilation: float = Field(
        default=0.1, ge=0.0, description="Canonical bbox dilation for the tri-plane domain box"
    )
    init_std: float = Field(default=0.1, gt=0.0, description="Std of the normal init of factors")

    @model_validator(mode="after")
    def _square_xy(self) -> "TriplaneConfig":
        if self.res_x != self.res_y:
            raise ValueError("triplane.res_x must equal triplane.res_y")
        return self


class EncodingConfig(_Strict):
    """Subject-level and pose-aware feature options."""

    local_mode: LocalMode = Field(default="tangent", description="Local coordinate used in s_o")
    freq_local: int = Field(default=6, ge=0, description="Positional-encoding octaves for x_l")
    freq_canonical: int = Field(default=10, ge=0, description="Positional-encoding octaves for x_c")
    freq_direction: int = Field(
        default=4, ge=0, description="Positional-encoding octaves for view direction and normal"
    )
    code_dim: int = Field(default=16, ge=1, description="Per-vertex latent code width")
    pose_top_k: int = Field(default=5, ge=1, description="Training poses blended at unseen poses")
    pose_temperature: float | None = Field(
        default=None,
        gt=0.0,
        description="Gaussian kernel width tau; default is the mean pairwise squared distance",
    )
    use_subject_feature: bool = Field(default=True, description="Feed s_o to the geometry MLP")
    use_pose_feature: bool = Field(default=True, description="Feed p_o to the geometry MLP")


class FieldsConfig(_Strict):
    """MLP shapes, SDF initialization and density sharpness."""

    geometry_depth: int = Field(default=8, ge=1, description="Hidden layers of the geometry MLP")
    geometry_width: int = Field(default=256, ge=1, description="Hidden width of the geometry MLP")
    skip_layer: int = Field(
        default=4,
        ge=0,
        description="0-based layer whose input also receives the encoded inputs (the fifth layer)",
    )
    softplus_beta: float = Field(default=100.0, gt=0.0, description="Geometry softplus sharpness")
    latent_width: int = Field(default=256, ge=1, description="Width of the geometry latent h")
    shadow_depth: int = Field(default=4, ge=1)
    shadow_width: int = Field(default=256, ge=1)
    albedo_depth: int = Field(default=4, ge=1)
    albedo_width: int = Field(default=256, ge=1)
    head_activation: Activation = Field(
        default="relu", description="Hidden activation of the shadow and albedo MLPs"
    )
    sphere_radius: float = Field(default=0.3, gt=0.0, description="Proxy radius r0 of the SDF init")
    beta_init: float = Field(default=0.1, gt=0.0, description="Initial density sharpness")
    beta_min: float = Field(default=1e-4, gt=0.0, description="Lower clamp of beta")
    normal_eps: float = Field(default=1e-3, gt=0.0, description="Central-difference step for normals")

    @model_validator(mode="after")
    def _skip_in_range(self) -> "FieldsConfig":
        if self.skip_layer >= self.geometry_depth:
            raise ValueError("fields.skip_layer must be below fields.geometry_depth")
        return self


class RenderConfig(_Strict):
    """Ray sampling, probe layout and chunking."""

    samples_per_ray: int = Field(default=64, ge=1, description="N samples per ray")
    bounds_dilation: float = Field(
        default=0.15, ge=0.0, description="Posed-mesh AABB dilation for near/far bounds"
    )
    probe_height: int = Field(default=16, ge=1)
    probe_width: int = Field(default=32, ge=1)
    chunk_rays: int = Field(default=2048, ge=1, description="Rays evaluated per forward chunk")


class TrainConfig(_Strict):
    """Loss weights, optimizer schedule and checkpoint cadence."""

    iterations: int = Field(default=200_000, ge=0)
    rays_per_batch: int = Field(default=1024, ge=1)
    lambda_p: float = Field(default=0.0, ge=0.0, description="Perceptual weight (term excluded)")
    lambda_m: float = Field(default=1.0, ge=0.0)
    lambda_e: float = Field(default=0.1, ge=0.0)
    lambda_n: float = Field(default=0.1, ge=0.0)
    use_normal_reg: bool = Field(default=True, description="False forces lambda_n to 0")
    lr_start: float = Field(default=5e-4, gt=0.0)
    lr_end: float = Field(default=1e-4, gt=0.0)
    adam_beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    adam_beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(default=1e-8, gt=0.0)
    rho: float = Field(default=50.0, gt=0.0, description="Mask-loss sigmoid sharpness")
    inside_fraction: float = Field(
        default=0.8, ge=0.0, le=1.0, description="Share of rays drawn inside the dilated mask bbox"
    )
    mask_bbox_dilation: int = Field(default=4, ge=0, description="Mask bbox dilation in pixels")
    patch_size: int = Field(default=0, ge=0, description="Square patch side; 0 samples scattered rays")
    train_cameras: list[int] | None = Field(
        default=None, description="Restrict training frames to these camera indices"
    )
    checkpoint_every: int = Field(default=1000, ge=1)

    @model_validator(mode="after")
    def _lr_order(self) -> "TrainConfig":
        if self.lr_end > self.lr_start:
            raise ValueError("train.lr_end must not exceed train.lr_start")
        return self

    @property
    def effective_lambda_n(self) -> float:
        return self.lambda_n if self.use_normal_reg else 0.0


class ProbeRecipe(_Strict):
    """Procedural light probe: uniform gray, a smooth random field, or a key light."""

    kind: Literal["uniform", "smooth_random", "key_light"] = "uniform"
    channels: Literal[1, 3] = 1
    intensity: float = Field(default=1.0, ge=0.0)
    color: tuple[float, float, float] = (1.0, 1.0, 1.0)
    azimuth_deg: float = Field(default=90.0, description="Key-light azimuth")
    elevation_deg: float = Field(default=30.0, description="Key-light elevation")
    ambient: float = Field(default=0.2, ge=0.0, description="Floor added to key-light probes")
    seed: int = Field(default=0, ge=0)


class SceneConfig(_Strict):
    """Capsule-person proportions, texture, probe, camera ring and poses."""

    torso_length: float = Field(default=0.55, gt=0.0)
    torso_radius: float = Field(default=0.16, gt=0.0)
    head_radius: float = Field(default=0.12, gt=0.0)
    upper_arm_length: float = Field(default=0.28, ge=0.0)
    forearm_length: float = Field(default=0.26, ge=0.0)
    arm_radius: float = Field(default=0.05, gt=0.0)
    thigh_length: float = Field(default=0.4, ge=0.0)
    shin_length: float = Field(default=0.4, ge=0.0)
    leg_radius: float = Field(default=0.07, gt=0.0)
    rings: int = Field(default=12, ge=3, description="Rings per capsule (mesh resolution)")
    segments: int = Field(default=16, ge=3, description="Segments around each capsule")
    collar: float = Field(default=0.06, ge=0.0, description="Skin-weight blend half-width")
    texture_size: int = Field(default=256, ge=8)
    checker_cells: int = Field(default=8, ge=1)
    part_colors: list[tuple[float, float, float]] = Field(
        default_factory=lambda: [
            (0.85, 0.35, 0.3),
            (0.3, 0.55, 0.85),
            (0.9, 0.8, 0.35),
            (0.35, 0.75, 0.4),
        ],
        description="Checker colors cycled over body parts",
    )
    probe: ProbeRecipe = Field(default_factory=ProbeRecipe)
    relight_probes: list[ProbeRecipe] = Field(default_factory=list)
    n_cameras: int = Field(default=24, ge=1)
    camera_radius: float = Field(default=3.0, gt=0.0)
    camera_elevation_deg: float = Field(default=10.0)
    val_cameras: list[int] = Field(default_factory=lambda: [3, 9, 15, 21])
    image_size: int = Field(default=64, ge=4)
    focal_scale: float = Field(default=1.4, gt=0.0, description="Focal length in image widths")
    n_poses: int = Field(default=3, ge=1)
    train_poses: list[int] = Field(default_factory=lambda: [0, 1])
    max_joint_angle_deg: float = Field(default=45.0, ge=0.0, lt=360.0)

    @model_validator(mode="after")
    def _color_range(self) -> "SceneConfig":
        for c in self.part_colors:
            if any(v < 0.0 or v > 1.0 for v in c):
                raise ValueError("scene.part_colors entries must lie in [0, 1]")
        if not self.part_colors:
            raise ValueError("scene.part_colors must not be empty")
        return self


class PathsConfig(_Strict):
    data_dir: str = Field(default="data", description="Dataset directory")
    out_dir: str = Field(default="outputs", description="Output directory for commands")


class RunConfig(_Strict):
    """Canonical configuration covering every tunable. Unknown keys are rejected."""

    seed: int = Field(default=0, ge=0, lt=2**64)
    dtype: Literal["float32", "float64"] = "float32"
    triplane: TriplaneConfig = Field(default_factory=TriplaneConfig)
    encoding: EncodingConfig = Field(default_factory=EncodingConfig)
    fields: FieldsConfig = Field(default_factory=FieldsConfig)
    render: RenderConfig = Field(default_factory=RenderConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    scene: SceneConfig = Field(default_factory=SceneConfig)
    paths: PathsConfig = Field(default_factory=PathsConfig)


class CameraRecord(_Strict):
    """One entry of cameras.json."""

    frame: int = Field(ge=0)
    pose_index: int = Field(ge=0)
    camera_index: int = Field(default=0, ge=0)
    fx: float = Field(gt=0.0)
    fy: float = Field(gt=0.0)
    cx: float
    cy: float
    width: int = Field(ge=1)
    height: int = Field(ge=1)
    world_to_camera: list[float] = Field(min_length=16, max_length=16)


class Manifest(_Strict):
    """Frame-id split of a dataset."""

    train: list[int] = Field(default_factory=list)
    val: list[int] = Field(default_factory=list)
    novel_pose: list[int] = Field(default_factory=list)


class EditSpec(_Strict):
    """Post-training edit. Paths are resolved against the edit-spec file's directory."""

    kind: Literal["relight", "shadow_override", "shadow_transfer", "retexture", "reshape"]
    probe: str | None = Field(default=None, description="Probe file (relight)")
    shadow_mode: Literal["off", "constant"] = Field(default="off")
    shadow_value: float = Field(default=1.0, ge=0.0, le=1.0, description="k for constant shadow")
    source_checkpoint: str | None = Field(
        default=None, description="Source subject checkpoint (shadow_transfer, retexture)"
    )
    source_mesh: str | None = Field(
        default=None, description="Source subject mesh; defaults to the mesh in its checkpoint"
    )
    uv_mask: str | None = Field(
        default=None, description="8-bit UV-space PNG; None selects the whole surface"
    )
    swap_shadow: bool = Field(default=False, description="Retexture also swaps the shadow field")
    mesh: str | None = Field(default=None, description="Edited mesh (reshape)")

    @model_validator(mode="after")
    def _payload(self) -> "EditSpec":
        needs = {
            "relight": ("probe",),
            "shadow_transfer": ("source_checkpoint",),
            "retexture": ("source_checkpoint",),
            "reshape": ("mesh",),
        }.get(self.kind, ())
        for key in needs:
            if getattr(self, key) is None:
                raise ValueError(f"edit kind {self.kind!r} requires {key!r}")
        return self


class FrameMetrics(BaseModel):
    """PSNR/SSIM for one frame."""

    frame: int
    psnr: float
    ssim: float


class EvalResult(BaseModel):
    """Result of an eval run."""

    split: str = Field(description="Manifest split evaluated")
    frames: list[FrameMetrics] = Field(default_factory=list)
    mean_psnr: float = Field(default=0.0)
    mean_ssim: float = Field(default=0.0)
    metrics_json: Path | None = Field(default=None)
    metrics_txt: Path | None = Field(default=None)


class TrainResult(BaseModel):
    """Result of a training run."""

    iterations: int = Field(description="Iteration counter of the last checkpoint")
    checkpoint: Path = Field(description="Path of the latest checkpoint")
    log_path: Path = Field(description="JSONL training log")
    final_loss: float | None = Field(default=None)
    message: str = Field(default="")


class RenderResult(BaseModel):
    """Result of a render/relight/edit run."""

    out_dir: Path
    frames: list[int] = Field(default_factory=list)
    degenerate_fraction: float = Field(
        default=0.0, description="Share of samples whose SDF gradient vanished (template normal used)"
    )
    message: str = Field(default="")


class DatasetResult(BaseModel):
    """Result of dataset generation."""

    out_dir: Path
    frame_count: int
    manifest: Manifest
    message: str = Field(default="")
