"""Alpha compositing along rays and normal transport to observation space."""

import torch


def transmittance(sigma: torch.Tensor, deltas: torch.Tensor) -> torch.Tensor:
    """T_i = exp(-Sum_{j<i} sigma_j delta_j) for (R, N) inputs."""
    tau = sigma * deltas
    excl = torch.cat([torch.zeros_like(tau[..., :1]), torch.cumsum(tau, dim=-1)[..., :-1]], dim=-1)
    return torch.exp(-excl)


def composite(
    sigma: torch.Tensor, deltas: torch.Tensor, colors: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """
    C(r) = Sum_i T_i (1 - exp(-sigma_i delta_i)) c_i for colors (R, N, C).
    Returns (C (R, C), alpha (R,), weights (R, N)).
    """
    alpha_i = 1.0 - torch.exp(-sigma * deltas)
    weights = transmittance(sigma, deltas) * alpha_i
    return (weights[..., None] * colors).sum(dim=1), weights.sum(dim=1), weights


def transform_normal(n_c: torch.Tensor, blend_rotation: torch.Tensor) -> torch.Tensor:
    """n_o = normalize(R_blend n_c) where R_blend is the rotation block of Sum_b W_b B_b."""
    n_o = torch.einsum("nij,nj->ni", blend_rotation.to(n_c.dtype), n_c)
    return n_o / torch.linalg.vector_norm(n_o, dim=-1, keepdim=True).clamp(min=1e-12)
