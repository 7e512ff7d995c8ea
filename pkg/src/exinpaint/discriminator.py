"""Realness critic with residual downsampling blocks and R1 regularization."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from .config import ModelConfig
from .errors import NumericError, ParameterError
from .layers import EqualizedConv2d, EqualizedLinear, MiniBatchStdDev, downsample2x


class DiscriminatorBlock(nn.Module):
    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.conv0 = EqualizedConv2d(in_channels, in_channels, 3, padding=1)
        self.conv1 = EqualizedConv2d(in_channels, out_channels, 3, padding=1)
        self.residual = EqualizedConv2d(in_channels, out_channels, 1)
        self.gain = 1 / math.sqrt(2)

    def forward(self, x):
        r = self.residual(downsample2x(x))
        x = F.leaky_relu(self.conv0(x), 0.2)
        x = F.leaky_relu(self.conv1(x), 0.2)
        return (downsample2x(x) + r) * self.gain


class Discriminator(nn.Module):
    """Maps an image at model resolution to one unbounded realness logit."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        ch = cfg.channels
        res_list = cfg.resolutions()
        self.from_img = EqualizedConv2d(cfg.img_channels, ch[res_list[-1]], 1)
        self.blocks = nn.ModuleList(
            DiscriminatorBlock(ch[r], ch[r // 2]) for r in reversed(res_list[1:])
        )
        self.mbstd = MiniBatchStdDev(cfg.mbstd_group)
        self.final_conv = EqualizedConv2d(ch[4] + 1, ch[4], 3, padding=1)
        self.final = EqualizedLinear(ch[4] * 16, 1)

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        if img.ndim == 3:
            img = img[None]
        r = self.cfg.resolution
        if img.shape[-2:] != (r, r):
            raise ParameterError(
                f"discriminator expects {r}x{r} input, got {tuple(img.shape[-2:])}"
            )
        x = F.leaky_relu(self.from_img(img), 0.2)
        for block in self.blocks:
            x = block(x)
        x = self.mbstd(x)
        x = F.leaky_relu(self.final_conv(x), 0.2)
        return self.final(x.flatten(1)).squeeze(1)


def r1_penalty(disc, real: torch.Tensor, gamma: float) -> torch.Tensor:
    """gamma/2 times the batch-mean squared gradient norm of the logit at
    real samples."""
    if gamma < 0:
        raise ParameterError(f"gamma must be >= 0, got {gamma}")
    if gamma == 0:
        return torch.zeros((), dtype=real.dtype)
    x = real.detach().requires_grad_(True)
    logits = disc(x)
    (grads,) = torch.autograd.grad(logits.sum(), x, create_graph=True)
    if not torch.isfinite(grads).all():
        raise NumericError("non-finite gradients in R1 penalty")
    norms2 = grads.reshape(grads.shape[0], -1).pow(2).sum(dim=1)
    return 0.5 * gamma * norms2.mean()
