"""Latent machinery: mapping network, frozen style encoder, style mixing.

Style codes are layered tensors of shape ``(batch, L, 512)``. Codes from
the mapping network are one 512-vector replicated across the L layers;
codes from the image encoder vary per layer.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .config import ModelConfig
from .errors import NumericError, ParameterError
from .layers import EqualizedConv2d, EqualizedLinear, downsample2x


class MappingNetwork(nn.Module):
    """Maps a normalized 512-dim latent through a stack of fully-connected
    layers to a style vector, replicated across all style layers."""

    def __init__(self, num_style_layers: int, style_dim: int = 512, depth: int = 8):
        super().__init__()
        self.num_style_layers = num_style_layers
        self.style_dim = style_dim
        self.layers = nn.ModuleList(
            EqualizedLinear(style_dim, style_dim) for _ in range(depth)
        )

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        if z.ndim == 1:
            z = z[None]
        if not torch.isfinite(z).all():
            raise NumericError("latent contains non-finite values")
        x = F.normalize(z, dim=1)
        for layer in self.layers:
            x = F.leaky_relu(layer(x), 0.2)
        return x[:, None, :].expand(-1, self.num_style_layers, -1).contiguous()


class StyleEncoder(nn.Module):
    """Convolutional pyramid that maps an image to a layered style code.

    Used pre-trained and frozen; gradients still flow to the input image.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.resolution = cfg.resolution
        self.num_style_layers = cfg.num_style_layers
        self.style_dim = cfg.style_dim
        chans = [min(cfg.encoder_max_channels, cfg.channels[r]) for r in cfg.resolutions()]
        chans = chans[::-1]  # finest resolution first
        self.stem = EqualizedConv2d(cfg.img_channels, chans[0], 3, padding=1)
        downs = []
        for cin, cout in zip(chans[:-1], chans[1:]):
            downs.append(EqualizedConv2d(cin, cout, 3, padding=1))
        self.downs = nn.ModuleList(downs)
        self.head = EqualizedLinear(chans[-1] * 16, self.num_style_layers * self.style_dim)

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        if img.ndim == 3:
            img = img[None]
        if img.shape[-1] != self.resolution or img.shape[-2] != self.resolution:
            raise ParameterError(
                f"encoder expects {self.resolution}x{self.resolution} input, "
                f"got {img.shape[-2]}x{img.shape[-1]}"
            )
        x = F.leaky_relu(self.stem(img), 0.2)
        for conv in self.downs:
            x = F.leaky_relu(conv(downsample2x(x)), 0.2)
        x = self.head(x.flatten(1))
        return x.reshape(-1, self.num_style_layers, self.style_dim)


# --- code mixing -------------------------------------------------------------

def _check_codes(*codes: torch.Tensor) -> None:
    shape = codes[0].shape
    for c in codes[1:]:
        if c.shape != shape:
            raise ParameterError(f"style code shapes differ: {shape} vs {c.shape}")


def mix_styles(w: torch.Tensor, w_tilde: torch.Tensor, phi) -> torch.Tensor:
    """Layerwise selection: exemplar layer where phi is 1, stochastic otherwise."""
    _check_codes(w, w_tilde)
    sel = torch.as_tensor(np.asarray(phi), device=w.device)
    if sel.numel() != w.shape[1]:
        raise ParameterError(
            f"selector length {sel.numel()} does not match {w.shape[1]} layers"
        )
    sel = sel.reshape(1, -1, 1).bool()
    return torch.where(sel, w, w_tilde)


def crossover_mix(w1: torch.Tensor, w2: torch.Tensor, i: int, j: int) -> torch.Tensor:
    """Replace layers i..j (1-based, inclusive) of ``w1`` with those of ``w2``."""
    _check_codes(w1, w2)
    num_layers = w1.shape[1]
    if not (1 <= i <= j <= num_layers):
        raise ParameterError(f"invalid layer range ({i}, {j}) for L={num_layers}")
    phi = [1 if i <= k + 1 <= j else 0 for k in range(num_layers)]
    return mix_styles(w2, w1, phi)


def truncate(w_tilde: torch.Tensor, w_avg: torch.Tensor, psi: float) -> torch.Tensor:
    """Interpolate a code toward the running-average code.

    Written in lerp form so the endpoints are exact: psi=1 returns the
    code unchanged, psi=0 returns the average.
    """
    if not 0 <= psi <= 1:
        raise ParameterError(f"psi must be in [0, 1], got {psi}")
    return psi * w_tilde + (1.0 - psi) * w_avg


def _should_mix(rng: np.random.Generator, p: float) -> bool:
    if not 0 <= p <= 1:
        raise ParameterError(f"mix probability must be in [0, 1], got {p}")
    return bool(rng.random() < p)


def mixing_regularization(mapper: MappingNetwork, z1: torch.Tensor, z2: torch.Tensor,
                          rng: np.random.Generator, p: float) -> torch.Tensor:
    """With probability ``p`` map both latents and cross them at a uniformly
    random layer; otherwise map ``z1`` alone."""
    if _should_mix(rng, p):
        cut = int(rng.integers(1, mapper.num_style_layers))
        w1 = mapper(z1)
        w2 = mapper(z2)
        return torch.cat([w1[:, :cut], w2[:, cut:]], dim=1)
    return mapper(z1)


class WAvgTracker:
    """Exponential moving average of mapped style vectors, used by truncation."""

    def __init__(self, style_dim: int = 512, decay: float = 0.995):
        self.decay = decay
        self.value = torch.zeros(style_dim)
        self.initialized = False

    def update(self, w: torch.Tensor) -> None:
        vec = w.detach()
        if vec.ndim == 3:
            vec = vec[:, 0]
        batch_mean = vec.mean(dim=0).cpu()
        if not self.initialized:
            self.value = batch_mean.clone()
            self.initialized = True
        else:
            self.value = self.decay * self.value + (1 - self.decay) * batch_mean

    def as_code(self, num_layers: int) -> torch.Tensor:
        return self.value[None, None, :].expand(1, num_layers, -1).contiguous()

    def state(self) -> np.ndarray:
        return self.value.numpy().astype(np.float32)

    def load(self, arr: np.ndarray) -> None:
        self.value = torch.from_numpy(np.asarray(arr, dtype=np.float32)).clone()
        self.initialized = True


def serialize_style_code(code: torch.Tensor) -> bytes:
    """L-header + float32 rows; inverse of :func:`deserialize_style_code`."""
    arr = code.detach().cpu().numpy().astype(np.float32)
    if arr.ndim == 3:
        if arr.shape[0] != 1:
            raise ParameterError("can only serialize a single (unbatched) code")
        arr = arr[0]
    header = np.array([arr.shape[0]], dtype="<i8").tobytes()
    return header + arr.astype("<f4").tobytes()


def deserialize_style_code(data: bytes) -> torch.Tensor:
    num_layers = int(np.frombuffer(data[:8], dtype="<i8")[0])
    arr = np.frombuffer(data[8:], dtype="<f4").reshape(num_layers, -1).copy()
    return torch.from_numpy(arr)[None]
