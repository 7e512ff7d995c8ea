"""Frozen embedding networks used by the similarity losses, plus
parameter freezing and hashing helpers.

The face-identity embedder is a small convolutional net intended to be
briefly trained on the toy corpus's identity labels and then frozen;
the perceptual extractor keeps its seeded random weights, which is
sufficient to define a stable multi-scale feature distance.
"""

from __future__ import annotations

import hashlib
import math

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ParameterError
from .layers import EqualizedConv2d, EqualizedLinear, downsample2x


def freeze(module: nn.Module) -> nn.Module:
    module.eval()
    for p in module.parameters():
        p.requires_grad_(False)
    return module


def module_param_hash(module: nn.Module) -> str:
    """sha256 over named parameters and buffers, order-independent."""
    h = hashlib.sha256()
    state = module.state_dict()
    for name in sorted(state):
        t = state[name].detach().cpu().contiguous()
        h.update(name.encode("utf-8"))
        h.update(str(tuple(t.shape)).encode("ascii"))
        h.update(t.numpy().tobytes())
    return h.hexdigest()


class IdentityEmbedder(nn.Module):
    """Face-identity embedding network; embeddings are compared by cosine."""

    def __init__(self, resolution: int, embed_dim: int = 128, base_channels: int = 32):
        super().__init__()
        if resolution < 8:
            raise ParameterError("identity embedder needs resolution >= 8")
        self.resolution = resolution
        chans = [base_channels, base_channels * 2, base_channels * 4]
        self.stem = EqualizedConv2d(3, chans[0], 3, padding=1)
        self.convs = nn.ModuleList(
            EqualizedConv2d(cin, cout, 3, padding=1)
            for cin, cout in zip(chans[:-1], chans[1:])
        )
        self.head = EqualizedLinear(chans[-1], embed_dim)

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        if img.ndim == 3:
            img = img[None]
        x = F.leaky_relu(self.stem(img), 0.2)
        for conv in self.convs:
            x = F.leaky_relu(conv(downsample2x(x)), 0.2)
        x = x.mean(dim=(2, 3))  # global average pool
        return self.head(x)


class PerceptualExtractor(nn.Module):
    """Fixed multi-scale convolutional features for perceptual distance.

    Per stage, feature maps are unit-normalized across channels at every
    location before flattening, so no single channel dominates the
    distance.
    """

    def __init__(self, channels: tuple[int, ...] = (16, 32, 64)):
        super().__init__()
        convs = []
        cin = 3
        for cout in channels:
            convs.append(EqualizedConv2d(cin, cout, 3, padding=1))
            cin = cout
        self.convs = nn.ModuleList(convs)

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        if img.ndim == 3:
            img = img[None]
        feats = []
        x = img
        for i, conv in enumerate(self.convs):
            if i > 0:
                x = downsample2x(x)
            x = F.leaky_relu(conv(x), 0.2)
            normed = x / torch.sqrt((x**2).sum(dim=1, keepdim=True) + 1e-8)
            # scale so each stage contributes a spatial mean, not a sum
            feats.append(normed.flatten(1) / math.sqrt(normed.shape[-2] * normed.shape[-1]))
        return torch.cat(feats, dim=1)


def build_frozen_perceptual(seed: int = 77) -> PerceptualExtractor:
    torch.manual_seed(seed)
    return freeze(PerceptualExtractor())
