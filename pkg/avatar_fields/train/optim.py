"""Adam with an explicit, checkpointable state and the exponential learning-rate decay."""

from dataclasses import dataclass, field

import torch
from torch import nn

from avatar_fields.models import TrainConfig


@dataclass
class AdamState:
    """First and second moments per parameter name, plus the step counter."""

    step: int = 0
    m: dict[str, torch.Tensor] = field(default_factory=dict)
    v: dict[str, torch.Tensor] = field(default_factory=dict)

    @classmethod
    def zeros_like(cls, model: nn.Module) -> "AdamState":
        named = list(model.named_parameters())
        return cls(
            0,
            {n: torch.zeros_like(p) for n, p in named},
            {n: torch.zeros_like(p) for n, p in named},
        )


def lr_schedule(iteration: int, total: int, lr_start: float, lr_end: float) -> float:
    """lr(i) = lr_start * (lr_end / lr_start) ** (i / total)."""
    if total <= 0:
        return lr_start
    return lr_start * (lr_end / lr_start) ** (iteration / total)


@torch.no_grad()
def adam_step(
    params: dict[str, torch.Tensor],
    grads: dict[str, torch.Tensor],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """One bias-corrected Adam update applied in place to `params`."""
    state.step += 1
    c1 = 1.0 - beta1**state.step
    c2 = 1.0 - beta2**state.step
    for name, p in params.items():
        g = grads[name]
        m = state.m.setdefault(name, torch.zeros_like(p))
        v = state.v.setdefault(name, torch.zeros_like(p))
        m.mul_(beta1).add_(g, alpha=1.0 - beta1)
        v.mul_(beta2).addcmul_(g, g, value=1.0 - beta2)
        p.sub_(lr * (m / c1) / (torch.sqrt(v / c2) + eps))
    return state


def step_model(model: nn.Module, grads: dict[str, torch.Tensor], state: AdamState, lr: float, config: TrainConfig) -> None:
    """Adam on every named parameter, then project constrained parameters back."""
    params = dict(model.named_parameters())
    adam_step(params, grads, state, lr, config.adam_beta1, config.adam_beta2, config.adam_eps)
    clamp = getattr(model, "clamp_parameters", None)
    if clamp is not None:
        clamp()
