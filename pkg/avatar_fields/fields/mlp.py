"""
The three field networks share one MLP shape: `depth` hidden layers of `width` units,
an optional skip that concatenates the network input to a hidden layer's input (scaled
by 1/sqrt(2)), and a linear output layer.
"""

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from avatar_fields.core import StructuralError


@dataclass(frozen=True)
class MlpSpec:
    in_dim: int
    width: int
    depth: int
    out_dim: int
    activation: Literal["softplus", "relu"] = "relu"
    skip: int | None = None
    softplus_beta: float = 100.0

    def __post_init__(self) -> None:
        if min(self.in_dim, self.width, self.out_dim) < 1 or self.depth < 0:
            raise StructuralError(f"Invalid MLP shape {self}")
        if self.skip is not None and not 0 < self.skip < max(self.depth, 1):
            raise StructuralError(f"Skip layer {self.skip} outside 1..{self.depth - 1}")

    def layer_dims(self) -> list[tuple[int, int]]:
        dims = []
        for i in range(self.depth):
            fan_in = self.in_dim if i == 0 else self.width
            if i == self.skip:
                fan_in += self.in_dim
            dims.append((fan_in, self.width))
        dims.append((self.width if self.depth else self.in_dim, self.out_dim))
        return dims


class Mlp(nn.Module):
    def __init__(self, spec: MlpSpec, dtype: torch.dtype = torch.float32):
        super().__init__()
        self.spec = spec
        self.layers = nn.ModuleList(nn.Linear(i, o, dtype=dtype) for i, o in spec.layer_dims())

    def activation(self, x: torch.Tensor) -> torch.Tensor:
        if self.spec.activation == "softplus":
            return F.softplus(x, beta=self.spec.softplus_beta)
        return F.relu(x)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.spec.in_dim:
            raise StructuralError(f"MLP expects {self.spec.in_dim} inputs, got {x.shape[-1]}")
        h = x
        for i, layer in enumerate(self.layers[:-1]):
            if i == self.spec.skip:
                h = torch.cat([h, x], dim=-1) / math.sqrt(2.0)
            h = self.activation(layer(h))
        return self.layers[-1](h)


def sphere_init(net: Mlp, radius: float, n_xyz: int = 3, generator: torch.Generator | None = None) -> None:
    """
    Geometric init so that output[0] ~ |x| - radius, where x is the first `n_xyz` inputs.
    Other input columns start at zero weight; the output bias is calibrated so d(0) = -radius.
    """
    spec = net.spec
    with torch.no_grad():
        for i, layer in enumerate(net.layers):
            fan_in, fan_out = layer.weight.shape[1], layer.weight.shape[0]
            if i == len(net.layers) - 1:
                mean = math.sqrt(math.pi) / math.sqrt(fan_in)
                layer.weight.normal_(mean, 1e-4, generator=generator)
                layer.bias.fill_(-radius)
                continue
            layer.weight.normal_(0.0, math.sqrt(2.0) / math.sqrt(fan_out), generator=generator)
            layer.bias.zero_()
            if i == 0:
                layer.weight[:, n_xyz:] = 0.0
            elif i == spec.skip:
                layer.weight[:, spec.width + n_xyz :] = 0.0
        origin = torch.zeros(1, spec.in_dim, dtype=net.layers[0].weight.dtype)
        offset = net(origin)[0, 0]
        net.layers[-1].bias[0] -= offset + radius


def uniform_init(net: Mlp, generator: torch.Generator | None = None) -> None:
    """Scaled uniform init U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases."""
    with torch.no_grad():
        for layer in net.layers:
            bound = 1.0 / math.sqrt(layer.weight.shape[1])
            layer.weight.uniform_(-bound, bound, generator=generator)
            layer.bias.uniform_(-bound, bound, generator=generator)


def sdf_to_density(d: torch.Tensor, beta: torch.Tensor | float) -> torch.Tensor:
    """Laplace-CDF density (1/beta) * Psi_beta(-d)."""
    s = -d
    half_exp = 0.5 * torch.exp(-torch.abs(s) / beta)
    psi = torch.where(s <= 0, half_exp, 1.0 - half_exp)
    return psi / beta


def interpret_mlp(spec: MlpSpec, weights: list[tuple[np.ndarray, np.ndarray]], x: np.ndarray) -> np.ndarray:
    """Straight-line numpy evaluation of an MLP (reference for the torch module)."""
    h = np.asarray(x, dtype=np.float64)
    for i, (w, b) in enumerate(weights[:-1]):
        if i == spec.skip:
            h = np.concatenate([h, x], axis=-1) / math.sqrt(2.0)
        z = h @ w.T + b
        if spec.activation == "softplus":
            bz = spec.softplus_beta * z
            h = np.where(bz > 20.0, z, np.log1p(np.exp(np.minimum(bz, 20.0))) / spec.softplus_beta)
        else:
            h = np.maximum(z, 0.0)
    w, b = weights[-1]
    return h @ w.T + b
