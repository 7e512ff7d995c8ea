"""Building-block layers shared by the synthesis and critic networks.

Weights are stored N(0, 1) and rescaled at use time by the He constant,
so the effective learning rate is equalized across layers of different
fan-in.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn


class EqualizedLinear(nn.Module):
    def __init__(self, in_features: int, out_features: int, bias_init: float = 0.0):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(out_features, in_features))
        self.bias = nn.Parameter(torch.full((out_features,), float(bias_init)))
        self.scale = 1.0 / math.sqrt(in_features)

    def forward(self, x):
        return F.linear(x, self.weight * self.scale, self.bias)


class EqualizedConv2d(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 stride: int = 1, padding: int = 0):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(out_channels, in_channels, kernel_size, kernel_size))
        self.bias = nn.Parameter(torch.zeros(out_channels))
        self.scale = 1.0 / math.sqrt(in_channels * kernel_size * kernel_size)
        self.stride = stride
        self.padding = padding

    def forward(self, x):
        return F.conv2d(x, self.weight * self.scale, self.bias,
                        stride=self.stride, padding=self.padding)


def upsample2x(x: torch.Tensor) -> torch.Tensor:
    return F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)


def downsample2x(x: torch.Tensor) -> torch.Tensor:
    return F.avg_pool2d(x, kernel_size=2)


class MiniBatchStdDev(nn.Module):
    """Appends one channel holding the mean per-feature standard deviation
    across a sample group, giving the critic a batch-level statistic."""

    def __init__(self, group_size: int = 4):
        super().__init__()
        self.group_size = group_size

    def forward(self, x):
        b, c, h, w = x.shape
        g = self.group_size
        while b % g != 0:  # largest divisor of the batch not above group_size
            g -= 1
        y = x.reshape(g, b // g, c, h, w)
        std = torch.sqrt(y.var(dim=0, unbiased=False) + 1e-8)
        std = std.mean(dim=(1, 2, 3), keepdim=True)
        std = std.repeat(g, 1, h, w)
        return torch.cat([x, std], dim=1)
