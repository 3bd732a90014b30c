from __future__ import annotations

from typing import Sequence

import torch
import torch.nn as nn

__all__ = ["MLP", "ConfigurationError", "zero_parameters"]


class ConfigurationError(ValueError):
    pass


class MLP(nn.Module):
    """Point-wise MLP over the last dimension.

    Every layer except the last is followed by batch normalization and ReLU
    (the last one too when ``activate_last``). Leading dimensions are flattened
    for the normalization statistics.
    """

    def __init__(self, in_dim: int, widths: Sequence[int], norm: bool = True, activate_last: bool = False):
        super().__init__()
        layers: list[nn.Module] = []
        dims = [in_dim, *widths]
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            layers.append(nn.Linear(a, b))
            if i < len(widths) - 1 or activate_last:
                if norm:
                    layers.append(nn.BatchNorm1d(b))
                layers.append(nn.ReLU())
        self.layers = nn.ModuleList(layers)
        self.out_dim = dims[-1]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        lead = x.shape[:-1]
        h = x.reshape(-1, x.shape[-1])
        for layer in self.layers:
            if isinstance(layer, nn.BatchNorm1d) and h.shape[0] == 0:
                continue
            h = layer(h)
        return h.reshape(*lead, self.out_dim)


@torch.no_grad()
def zero_parameters(module: nn.Module) -> None:
    for p in module.parameters():
        p.zero_()
