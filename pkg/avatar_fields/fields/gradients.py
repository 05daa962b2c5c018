"""Reverse-mode parameter gradients with NaN guards, and a central-difference checker."""

from typing import Callable, Iterable

import torch
from torch import nn

from avatar_fields.core import NonFiniteError


def backward(loss: torch.Tensor, model: nn.Module) -> dict[str, torch.Tensor]:
    """dL/dp for every named parameter; parameters the loss does not reach get zeros."""
    if not torch.isfinite(loss):
        raise NonFiniteError(f"Loss is not finite: {float(loss)}")
    named = [(n, p) for n, p in model.named_parameters() if p.requires_grad]
    if not loss.requires_grad:
        return {n: torch.zeros_like(p) for n, p in named}
    grads = torch.autograd.grad(loss, [p for _, p in named], allow_unused=True)
    out: dict[str, torch.Tensor] = {}
    for (name, p), g in zip(named, grads):
        g = torch.zeros_like(p) if g is None else g
        if not torch.isfinite(g).all():
            raise NonFiniteError(f"Gradient of {name} has non-finite entries")
        out[name] = g
    return out


def finite_difference_gradient(
    closure: Callable[[], torch.Tensor],
    param: torch.Tensor,
    indices: Iterable[int],
    step: float = 1e-4,
) -> dict[int, float]:
    """Central differences of closure() w.r.t. selected flat entries of `param`."""
    flat = param.data.view(-1)
    out = {}
    with torch.no_grad():
        for i in indices:
            orig = flat[i].item()
            flat[i] = orig + step
            plus = float(closure())
            flat[i] = orig - step
            minus = float(closure())
            flat[i] = orig
            out[i] = (plus - minus) / (2.0 * step)
    return out


def max_relative_error(
    closure: Callable[[], torch.Tensor],
    model: nn.Module,
    per_param: int = 4,
    step: float = 1e-4,
    atol: float = 1e-6,
    generator: torch.Generator | None = None,
) -> tuple[float, str]:
    """
    Compare backward() against central differences on `per_param` random entries of every
    parameter. Returns (worst relative error, parameter name). The error is
    |g - g_fd| / max(|g|, |g_fd|, atol).
    """
    grads = backward(closure(), model)
    worst, worst_name = 0.0, ""
    for name, p in model.named_parameters():
        n = p.numel()
        idx = torch.randperm(n, generator=generator)[: min(per_param, n)].tolist()
        fd = finite_difference_gradient(closure, p, idx, step)
        g = grads[name].reshape(-1)
        for i, fd_val in fd.items():
            an = float(g[i])
            err = abs(an - fd_val) / max(abs(an), abs(fd_val), atol)
            if err > worst:
                worst, worst_name = err, name
    return worst, worst_name
