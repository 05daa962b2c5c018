"""
AvatarModel holds every learnable scalar: the geometry, shadow and albedo MLPs, per-vertex
latent codes, one factorized tri-plane per training pose, the light probe texels and the
density sharpness beta.

Normals and the eikonal term use central differences of the SDF in canonical space with
the subject and pose features held fixed, so the six extra SDF evaluations are ordinary
forward passes and their parameter gradients come from first-order autograd only.
"""

import logging
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from avatar_fields.core import get_dtype, torch_generator
from avatar_fields.encode.local import encoded_width, positional_encoding, subject_feature, uv_latent
from avatar_fields.encode.triplane import FactorizedTriPlane, PoseDictionary, domain_box
from avatar_fields.fields.mlp import Mlp, MlpSpec, sdf_to_density, sphere_init, uniform_init
from avatar_fields.models import RunConfig
from avatar_fields.rig.mesh import SkinnedMesh

log = logging.getLogger(__name__)

DEGENERATE_GRAD = 1e-12


@dataclass
class FieldInputs:
    """Per-sample inputs to the fields, already warped to canonical space."""

    x_c: torch.Tensor
    local: torch.Tensor
    tri_vertices: torch.Tensor
    bary: torch.Tensor
    view_dir: torch.Tensor
    template_normal: torch.Tensor
    pose: np.ndarray

    def __len__(self) -> int:
        return self.x_c.shape[0]


@dataclass
class FieldOutputs:
    d: torch.Tensor
    h: torch.Tensor
    grad: torch.Tensor
    normal: torch.Tensor
    albedo: torch.Tensor
    shadow: torch.Tensor
    degenerate: torch.Tensor


class AvatarModel(nn.Module):
    """All field parameters for one subject."""

    def __init__(self, config: RunConfig, mesh: SkinnedMesh, train_poses: np.ndarray):
        super().__init__()
        self.config = config
        dtype = get_dtype(config.dtype)
        gen = torch_generator(config.seed)
        tp, enc, fc, rc = config.triplane, config.encoding, config.fields, config.render
        train_poses = np.asarray(train_poses, dtype=np.float64).reshape(-1, 3 * mesh.n_joints)

        lo, hi = domain_box(mesh.vertices, tp.domain_dilation)
        self.register_buffer("origin", torch.tensor((lo + hi) / 2.0, dtype=dtype))
        planes = [
            FactorizedTriPlane(
                lo, hi, (tp.res_x, tp.res_y, tp.res_z), tp.features, tp.components,
                init_std=tp.init_std, dtype=dtype, generator=gen,
            )
            for _ in range(len(train_poses))
        ]
        self.poses = PoseDictionary(train_poses, planes, enc.pose_top_k, enc.pose_temperature)

        if mesh.vertex_codes is not None and mesh.vertex_codes.shape[1] == enc.code_dim:
            codes = torch.tensor(mesh.vertex_codes, dtype=dtype)
        else:
            codes = torch.randn((mesh.n_vertices, enc.code_dim), generator=gen, dtype=dtype) * 1e-2
        self.vertex_codes = nn.Parameter(codes)

        self.xc_width = encoded_width(3, enc.freq_canonical)
        self.subject_width = encoded_width(3, enc.freq_local) + enc.code_dim
        self.pose_width = self.poses.out_features
        geo_in = self.xc_width + self.subject_width + self.pose_width
        self.geometry = Mlp(
            MlpSpec(geo_in, fc.geometry_width, fc.geometry_depth, 1 + fc.latent_width,
                    "softplus", fc.skip_layer or None, fc.softplus_beta),
            dtype,
        )
        dir_width = encoded_width(3, enc.freq_direction)
        self.shadow = Mlp(
            MlpSpec(2 * dir_width + fc.latent_width, fc.shadow_width, fc.shadow_depth, 1, fc.head_activation),
            dtype,
        )
        self.albedo = Mlp(
            MlpSpec(self.xc_width + fc.latent_width, fc.albedo_width, fc.albedo_depth, 3, fc.head_activation),
            dtype,
        )
        sphere_init(self.geometry, fc.sphere_radius, generator=gen)
        uniform_init(self.shadow, generator=gen)
        uniform_init(self.albedo, generator=gen)

        self.probe = nn.Parameter(torch.ones((rc.probe_height, rc.probe_width, 1), dtype=dtype))
        self.beta = nn.Parameter(torch.tensor(fc.beta_init, dtype=dtype))

    @property
    def dtype(self) -> torch.dtype:
        return self.origin.dtype

    def effective_beta(self) -> torch.Tensor:
        return self.beta.clamp(min=self.config.fields.beta_min)

    @torch.no_grad()
    def clamp_parameters(self) -> None:
        """Project beta and probe texels back into their valid ranges after a step."""
        self.beta.clamp_(min=self.config.fields.beta_min)
        self.probe.clamp_(min=0.0)

    def subject_features(self, inputs: FieldInputs) -> torch.Tensor:
        if not self.config.encoding.use_subject_feature:
            return inputs.x_c.new_zeros((len(inputs), self.subject_width))
        g_s = uv_latent(self.vertex_codes, inputs.tri_vertices, inputs.bary)
        return subject_feature(inputs.local, g_s, self.config.encoding.freq_local)

    def pose_features(self, inputs: FieldInputs) -> torch.Tensor:
        if not self.config.encoding.use_pose_feature:
            return inputs.x_c.new_zeros((len(inputs), self.pose_width))
        return self.poses.feature(inputs.pose, inputs.x_c)

    def encode_position(self, x_c: torch.Tensor) -> torch.Tensor:
        return positional_encoding(x_c - self.origin, self.config.encoding.freq_canonical)

    def geometry_forward(
        self, x_c: torch.Tensor, s_o: torch.Tensor, p_o: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """d, h = MLP_geo(gamma(x_c), s_o, p_o)."""
        out = self.geometry(torch.cat([self.encode_position(x_c), s_o, p_o], dim=-1))
        return out[:, 0], out[:, 1:]

    def shadow_forward(self, e: torch.Tensor, n_c: torch.Tensor, h: torch.Tensor) -> torch.Tensor:
        k = self.config.encoding.freq_direction
        x = torch.cat([positional_encoding(e, k), positional_encoding(n_c, k), h], dim=-1)
        return torch.sigmoid(self.shadow(x))[:, 0]

    def albedo_forward(self, x_c: torch.Tensor, h: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.albedo(torch.cat([self.encode_position(x_c), h], dim=-1)))

    def sdf_with_gradient(
        self, x_c: torch.Tensor, s_o: torch.Tensor, p_o: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """d, h at x_c and the central-difference gradient of d w.r.t. x_c (context fixed)."""
        eps = self.config.fields.normal_eps
        n = x_c.shape[0]
        offsets = torch.eye(3, dtype=x_c.dtype) * eps
        shifted = [x_c] + [x_c + sign * offsets[k] for k in range(3) for sign in (1.0, -1.0)]
        d_all, h_all = self.geometry_forward(
            torch.cat(shifted), s_o.repeat(7, 1), p_o.repeat(7, 1)
        )
        d_all = d_all.view(7, n)
        grad = torch.stack(
            [(d_all[1 + 2 * k] - d_all[2 + 2 * k]) / (2.0 * eps) for k in range(3)], dim=-1
        )
        return d_all[0], h_all[:n], grad

    def forward(self, inputs: FieldInputs) -> FieldOutputs:
        s_o = self.subject_features(inputs)
        p_o = self.pose_features(inputs)
        d, h, grad = self.sdf_with_gradient(inputs.x_c, s_o, p_o)
        normal, degenerate = sdf_normal_from_gradient(grad, inputs.template_normal)
        return FieldOutputs(
            d=d,
            h=h,
            grad=grad,
            normal=normal,
            albedo=self.albedo_forward(inputs.x_c, h),
            shadow=self.shadow_forward(inputs.view_dir, normal, h),
            degenerate=degenerate,
        )

    def density(self, d: torch.Tensor) -> torch.Tensor:
        return sdf_to_density(d, self.effective_beta())


def sdf_normal_from_gradient(
    grad: torch.Tensor, fallback: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """n_c = grad / |grad|; zero gradients take the fallback normal and are flagged."""
    norm = torch.linalg.vector_norm(grad, dim=-1, keepdim=True)
    degenerate = norm[:, 0] < DEGENERATE_GRAD
    safe = torch.where(degenerate[:, None], torch.ones_like(norm), norm)
    normal = torch.where(degenerate[:, None], fallback.to(grad.dtype), grad / safe)
    if bool(degenerate.any()):
        log.debug("%d samples with zero SDF gradient use the template normal", int(degenerate.sum()))
    return normal, degenerate


def sdf_normal(
    model: AvatarModel, x_c: torch.Tensor, s_o: torch.Tensor, p_o: torch.Tensor, fallback: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """Unit SDF normals at x_c via central differences; returns (normal, degenerate flags)."""
    _, _, grad = model.sdf_with_gradient(x_c, s_o, p_o)
    return sdf_normal_from_gradient(grad, fallback)


def init_params(config: RunConfig, mesh: SkinnedMesh, train_poses: np.ndarray) -> AvatarModel:
    """Deterministic model initialization from config.seed."""
    return AvatarModel(config, mesh, train_poses)
