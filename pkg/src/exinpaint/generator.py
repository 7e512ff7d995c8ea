"""Multi-style synthesis network.

The encoder consumes the masked image and its hole mask, producing a
global style code plus a feature pyramid; the decoder runs two style-
modulated convolutions per resolution with skip connections from the
pyramid and accumulates an image-space output. Known pixels of the
final output always come verbatim from the input via compositing.
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .config import ModelConfig
from .errors import ParameterError
from .layers import EqualizedConv2d, EqualizedLinear, downsample2x, upsample2x

GLOBAL_CODE_SHAPE = (2, 512)


def modulated_conv2d(feat: torch.Tensor, weight: torch.Tensor, v: torch.Tensor,
                     demodulate: bool, padding: int | None = None) -> torch.Tensor:
    """Convolution with per-sample input-channel modulation.

    ``weight`` is (out, in, k, k); ``v`` is (batch, in). Each sample's
    kernel is scaled per input channel by its style vector; with
    ``demodulate`` every output filter is rescaled to approximately unit
    gain. Implemented as a grouped convolution with one group per sample.
    """
    b, cin, h, w = feat.shape
    cout, cin_w, kh, kw = weight.shape
    if v.shape != (b, cin) or cin_w != cin:
        raise ParameterError(
            f"style vector shape {tuple(v.shape)} does not match weight "
            f"{tuple(weight.shape)} and input {tuple(feat.shape)}"
        )
    if padding is None:
        padding = kh // 2
    wmod = weight[None] * v[:, None, :, None, None]
    if demodulate:
        sigma_inv = torch.rsqrt((wmod**2).sum(dim=(2, 3, 4), keepdim=True) + 1e-8)
        wmod = wmod * sigma_inv
    x = feat.reshape(1, b * cin, h, w)
    wmod = wmod.reshape(b * cout, cin, kh, kw)
    out = F.conv2d(x, wmod, padding=padding, groups=b)
    return out.reshape(b, cout, out.shape[-2], out.shape[-1])


class ModulatedConv2d(nn.Module):
    """Equalized conv whose kernel is modulated by an affine-transformed
    style condition (global code concatenated with the layer's code)."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 cond_dim: int, demodulate: bool = True):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(out_channels, in_channels, kernel_size, kernel_size))
        self.scale = 1.0 / math.sqrt(in_channels * kernel_size * kernel_size)
        self.affine = EqualizedLinear(cond_dim, in_channels, bias_init=1.0)
        self.demodulate = demodulate

    def style(self, cond: torch.Tensor) -> torch.Tensor:
        return self.affine(cond)

    def forward(self, x: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
        return modulated_conv2d(x, self.weight * self.scale, v, self.demodulate)


class StyleLayer(nn.Module):
    """Modulated conv + per-pixel noise (learned amplitude, zero init) + bias + lrelu."""

    def __init__(self, in_channels: int, out_channels: int, cond_dim: int):
        super().__init__()
        self.conv = ModulatedConv2d(in_channels, out_channels, 3, cond_dim)
        self.noise_scale = nn.Parameter(torch.zeros(1))
        self.bias = nn.Parameter(torch.zeros(out_channels))

    def forward(self, x, cond, noise=None):
        y = self.conv(x, self.conv.style(cond))
        if noise is not None:
            y = y + self.noise_scale * noise
        return F.leaky_relu(y + self.bias[None, :, None, None], 0.2)


class ToImage(nn.Module):
    """Modulated 1x1 projection to image space, without demodulation."""

    def __init__(self, in_channels: int, img_channels: int, cond_dim: int):
        super().__init__()
        self.conv = ModulatedConv2d(in_channels, img_channels, 1, cond_dim, demodulate=False)
        self.bias = nn.Parameter(torch.zeros(img_channels))

    def forward(self, x, cond):
        return self.conv(x, self.conv.style(cond)) + self.bias[None, :, None, None]


class SynthesisEncoder(nn.Module):
    """Downsampling pyramid over [image, mask]; emits the global style code
    and per-resolution features for the decoder's skip connections."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        res_list = cfg.resolutions()  # [4, 8, ..., R]
        ch = cfg.channels
        self.stem = EqualizedConv2d(cfg.img_channels + 1, ch[res_list[-1]], 3, padding=1)
        self.convs = nn.ModuleDict()
        self.downs = nn.ModuleDict()
        for r in reversed(res_list):
            self.convs[str(r)] = EqualizedConv2d(ch[r], ch[r], 3, padding=1)
            if r > 4:
                self.downs[str(r)] = EqualizedConv2d(ch[r], ch[r // 2], 3, stride=2, padding=1)
        code_len = GLOBAL_CODE_SHAPE[0] * GLOBAL_CODE_SHAPE[1]
        self.head = EqualizedLinear(ch[4] * 16, code_len)

    def forward(self, img: torch.Tensor, mask: torch.Tensor):
        if img.ndim == 3:
            img = img[None]
        if mask.ndim == 3:
            mask = mask[None]
        r = self.cfg.resolution
        if img.shape[-2:] != (r, r) or mask.shape[-2:] != (r, r):
            raise ParameterError(
                f"encoder expects {r}x{r} inputs, got image {tuple(img.shape[-2:])} "
                f"and mask {tuple(mask.shape[-2:])}"
            )
        x = F.leaky_relu(self.stem(torch.cat([img, mask], dim=1)), 0.2)
        pyramid: dict[int, torch.Tensor] = {}
        for res in reversed(self.cfg.resolutions()):
            x = F.leaky_relu(self.convs[str(res)](x), 0.2)
            pyramid[res] = x
            if res > 4:
                x = F.leaky_relu(self.downs[str(res)](x), 0.2)
        c = self.head(pyramid[4].flatten(1))
        return c.reshape(-1, *GLOBAL_CODE_SHAPE), pyramid


class SynthesisDecoder(nn.Module):
    """Style-modulated decoder over the encoder pyramid.

    Style slots follow the two-per-resolution layout: slot 0 drives the
    4x4 layer, each higher resolution owns two slots, and the last slot
    drives the final image projection; intermediate image projections
    reuse the following resolution's first slot.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        ch = cfg.channels
        cond_dim = GLOBAL_CODE_SHAPE[0] * GLOBAL_CODE_SHAPE[1] + cfg.style_dim
        self.cond_dim = cond_dim
        self.conv4 = StyleLayer(ch[4], ch[4], cond_dim)
        self.to_img4 = ToImage(ch[4], cfg.img_channels, cond_dim)
        self.skip_proj = nn.ModuleDict()
        self.conv0 = nn.ModuleDict()
        self.conv1 = nn.ModuleDict()
        self.to_img = nn.ModuleDict()
        for res in cfg.resolutions()[1:]:
            prev = ch[res // 2]
            self.skip_proj[str(res)] = EqualizedConv2d(ch[res], prev, 1)
            self.conv0[str(res)] = StyleLayer(prev, ch[res], cond_dim)
            self.conv1[str(res)] = StyleLayer(ch[res], ch[res], cond_dim)
            self.to_img[str(res)] = ToImage(ch[res], cfg.img_channels, cond_dim)

    @property
    def num_noise_layers(self) -> int:
        return 2 * len(self.cfg.resolutions()) - 1

    def _cond(self, c: torch.Tensor, w_hat: torch.Tensor, slot: int) -> torch.Tensor:
        return torch.cat([c.flatten(1), w_hat[:, slot]], dim=1)

    def affine_style(self, c: torch.Tensor, w_i: torch.Tensor, slot: int) -> torch.Tensor:
        """Style vector of the conv layer owning the given slot."""
        num_layers = self.cfg.num_style_layers
        if not 0 <= slot < num_layers:
            raise ParameterError(f"style slot {slot} out of range [0, {num_layers})")
        cond = torch.cat([c.flatten(1), w_i], dim=1)
        if slot == 0:
            return self.conv4.conv.style(cond)
        if slot == num_layers - 1:
            return self.to_img[str(self.cfg.resolution)].conv.style(cond)
        res = self.cfg.resolutions()[(slot + 1) // 2]
        layer = self.conv0[str(res)] if slot % 2 == 1 else self.conv1[str(res)]
        return layer.conv.style(cond)

    def forward(self, c: torch.Tensor, w_hat: torch.Tensor, pyramid: dict,
                noise: list | None = None) -> torch.Tensor:
        num_layers = self.cfg.num_style_layers
        if w_hat.ndim != 3 or w_hat.shape[1] != num_layers:
            raise ParameterError(
                f"style code must have {num_layers} layers, got shape {tuple(w_hat.shape)}"
            )
        res_list = self.cfg.resolutions()
        if set(pyramid) != set(res_list):
            raise ParameterError(f"pyramid resolutions {sorted(pyramid)} do not match {res_list}")
        if noise is not None and len(noise) != self.num_noise_layers:
            raise ParameterError(
                f"expected {self.num_noise_layers} noise maps, got {len(noise)}"
            )

        def take_noise(idx):
            return None if noise is None else noise[idx]

        x = self.conv4(pyramid[4], self._cond(c, w_hat, 0), take_noise(0))
        img = self.to_img4(x, self._cond(c, w_hat, 1))
        noise_idx = 1
        for k, res in enumerate(res_list[1:], start=1):
            x = upsample2x(x)
            x = x + self.skip_proj[str(res)](pyramid[res])
            x = self.conv0[str(res)](x, self._cond(c, w_hat, 2 * k - 1), take_noise(noise_idx))
            x = self.conv1[str(res)](x, self._cond(c, w_hat, 2 * k), take_noise(noise_idx + 1))
            noise_idx += 2
            img_slot = min(2 * k + 1, num_layers - 1)
            img = upsample2x(img) + self.to_img[str(res)](x, self._cond(c, w_hat, img_slot))
        return img


def composite(i_in: torch.Tensor, i_pred: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Known pixels verbatim from the input, hole pixels from the prediction."""
    if i_in.shape != i_pred.shape:
        raise ParameterError(f"image shapes differ: {tuple(i_in.shape)} vs {tuple(i_pred.shape)}")
    if mask.shape[-2:] != i_in.shape[-2:]:
        raise ParameterError(
            f"mask spatial shape {tuple(mask.shape[-2:])} does not match image"
        )
    return torch.where(mask.to(i_in.dtype) > 0.5, i_pred, i_in)


def mask_to_tensor(mask: np.ndarray, batch: int = 1) -> torch.Tensor:
    """(h, w, 1) numpy mask -> (batch, 1, h, w) float tensor."""
    m = torch.from_numpy(np.ascontiguousarray(mask[:, :, 0], dtype=np.float32))
    return m[None, None].expand(batch, -1, -1, -1).contiguous()


def sample_decoder_noise(rng: np.random.Generator, batch: int, cfg: ModelConfig) -> list[torch.Tensor]:
    """One unit-normal noise map per decoder conv, batch-shaped."""
    res_list = cfg.resolutions()
    shapes = [(batch, 1, 4, 4)]
    for r in res_list[1:]:
        shapes.append((batch, 1, r, r))
        shapes.append((batch, 1, r, r))
    return [torch.from_numpy(rng.standard_normal(s).astype(np.float32)) for s in shapes]


class Generator(nn.Module):
    """Encoder + decoder pair with hole-preserving compositing."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = SynthesisEncoder(cfg)
        self.decoder = SynthesisDecoder(cfg)

    def forward(self, i_in: torch.Tensor, mask: torch.Tensor, w_hat: torch.Tensor,
                noise: list | None = None) -> torch.Tensor:
        c, pyramid = self.encoder(i_in, mask)
        return self.decoder(c, w_hat, pyramid, noise)

    def generate(self, i_in: torch.Tensor, mask: torch.Tensor, w_hat: torch.Tensor,
                 noise_seed: int | None = None) -> torch.Tensor:
        noise = None
        if noise_seed is not None:
            rng = np.random.default_rng(noise_seed)
            noise = sample_decoder_noise(rng, i_in.shape[0], self.cfg)
        i_pred = self.forward(i_in, mask, w_hat, noise)
        return composite(i_in, i_pred, mask)
