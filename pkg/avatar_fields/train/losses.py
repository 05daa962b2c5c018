"""Training objectives. Every term is a batch mean and is >= 0 on finite inputs."""

from dataclasses import dataclass

import torch

from avatar_fields.models import TrainConfig

BCE_CLAMP = 1e-7


def loss_color(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """Mean over rays of the squared RGB distance."""
    if pred.numel() == 0:
        return pred.new_zeros(())
    return ((pred - gt) ** 2).sum(dim=-1).mean()


def loss_mask(d_min: torch.Tensor, mask: torch.Tensor, rho: float) -> torch.Tensor:
    """BCE(sigmoid(-rho d_r), M(r)) with log arguments clamped at 1e-7."""
    if d_min.numel() == 0:
        return d_min.new_zeros(())
    p = torch.sigmoid(-rho * d_min).clamp(BCE_CLAMP, 1.0 - BCE_CLAMP)
    m = mask.to(d_min.dtype)
    return -(m * torch.log(p) + (1.0 - m) * torch.log(1.0 - p)).mean()


def loss_eikonal(grad: torch.Tensor) -> torch.Tensor:
    """(|grad d| - 1)^2 averaged over ray samples."""
    if grad.numel() == 0:
        return grad.new_zeros(())
    return ((torch.linalg.vector_norm(grad, dim=-1) - 1.0) ** 2).mean()


def loss_normal_reg(n_c: torch.Tensor, n_s: torch.Tensor) -> torch.Tensor:
    """Hinge max(-n_c . n_s, 0) against the nearest template vertex normal."""
    if n_c.numel() == 0:
        return n_c.new_zeros(())
    return torch.clamp(-(n_c * n_s.to(n_c.dtype)).sum(dim=-1), min=0.0).mean()


@dataclass
class LossParts:
    color: torch.Tensor
    mask: torch.Tensor
    eikonal: torch.Tensor
    normal: torch.Tensor

    def as_floats(self) -> dict[str, float]:
        return {
            "L_c": float(self.color),
            "L_m": float(self.mask),
            "L_e": float(self.eikonal),
            "L_n": float(self.normal),
        }


def total_loss(parts: LossParts, config: TrainConfig) -> torch.Tensor:
    """L = L_c + lambda_m L_m + lambda_e L_e + lambda_n L_n (the perceptual term is zero)."""
    return (
        parts.color
        + config.lambda_m * parts.mask
        + config.lambda_e * parts.eikonal
        + config.effective_lambda_n * parts.normal
    )
