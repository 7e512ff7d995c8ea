"""Configuration dataclasses and the flat ``key = value`` config file format."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

from .errors import ParameterError

# Reference free-form brush parameters, defined at 256x256.
REFERENCE_SIDE = 256
REFERENCE_BRUSH = (20, 100, 24, 360.0)  # max_vertex, max_length, max_brush_width, max_angle


@dataclass
class BrushParams:
    """Free-form brush stroke sampling parameters."""

    max_vertex: int = 20
    max_length: float = 100.0
    max_brush_width: float = 24.0
    max_angle: float = 360.0

    def validate(self) -> None:
        if self.max_vertex <= 0 or self.max_length < 0 or self.max_brush_width <= 0:
            raise ParameterError(f"brush parameters must be positive: {self}")
        if not 0 < self.max_angle <= 360:
            raise ParameterError(f"max_angle must be in (0, 360]: {self.max_angle}")


def default_brush_params(side: int) -> BrushParams:
    """Reference brush parameters rescaled to a square image of size ``side``.

    Lengths and widths scale with resolution; vertex count and angle do not.
    """
    mv, ml, mw, ma = REFERENCE_BRUSH
    s = side / REFERENCE_SIDE
    return BrushParams(
        max_vertex=mv,
        max_length=float(max(1, round(ml * s))),
        max_brush_width=float(max(1, round(mw * s))),
        max_angle=ma,
    )


def round_to_odd(x: float) -> int:
    k = max(1, int(round(x)))
    return k if k % 2 == 1 else k + 1


def default_blur_kernel(side: int) -> tuple[int, float]:
    """Gaussian kernel size/sigma used to build weight masks at ``side``."""
    k = round_to_odd(side / 8)
    k = max(k, 3)
    return k, k / 3.0


@dataclass
class LossWeights:
    lambda_id: float = 0.1
    lambda_lpips: float = 0.5
    lambda_attr: float = 0.1
    gamma: float = 10.0

    def validate(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ParameterError(f"loss weight {f.name} must be >= 0")


def default_channels(resolution: int) -> dict[int, int]:
    """Per-resolution channel widths for the synthesis pyramid."""
    base = {4: 512, 8: 512, 16: 256, 32: 128, 64: 64, 128: 32}
    res, out = 4, {}
    while res <= resolution:
        out[res] = base[res]
        res *= 2
    return out


@dataclass
class ModelConfig:
    """Architecture hyperparameters shared by the generator, discriminator and encoders."""

    resolution: int = 64
    img_channels: int = 3
    style_dim: int = 512
    mapping_layers: int = 8
    channels: dict[int, int] = field(default_factory=lambda: default_channels(64))
    encoder_max_channels: int = 128
    embed_dim: int = 128
    mbstd_group: int = 4

    def __post_init__(self):
        r = self.resolution
        if r < 8 or (r & (r - 1)) != 0:
            raise ParameterError(f"resolution must be a power of two >= 8, got {r}")
        missing = [res for res in self.resolutions() if res not in self.channels]
        if missing:
            raise ParameterError(f"channel map missing resolutions {missing}")

    def resolutions(self) -> list[int]:
        out, r = [], 4
        while r <= self.resolution:
            out.append(r)
            r *= 2
        return out

    @property
    def num_style_layers(self) -> int:
        """Count of per-layer style slots: two per resolution above 4x4, plus
        the 4x4 layer and the final image-space layer."""
        return 2 * int(math.log2(self.resolution)) - 2


def default_phi(num_layers: int) -> list[int]:
    """Layer selector with the first four coarse layers stochastic, rest exemplar."""
    return [0 if i < 4 else 1 for i in range(num_layers)]


@dataclass
class TrainConfig:
    resolution: int = 64
    batch_size: int = 8
    total_steps: int = 5000
    tau: float = 0.1
    mix_prob: float = 0.5
    lr: float = 0.002
    beta1: float = 0.5
    beta2: float = 0.99
    d_reg_every: int = 16
    w_avg_decay: float = 0.995
    seed: int = 0
    deterministic: bool = True
    encoder_pretrain_steps: int = 150
    identity_pretrain_steps: int = 150
    checkpoint_every: int = 1000
    run_dir: str = "runs/default"
    weights: LossWeights = field(default_factory=LossWeights)
    brush: BrushParams | None = None
    blur_kernel: int | None = None
    blur_sigma: float | None = None
    # Architecture shrink knobs for small runs; None keeps defaults.
    channels: dict[int, int] | None = None
    phi: list[int] | None = None

    def __post_init__(self):
        if not 0 <= self.tau <= 1:
            raise ParameterError(f"tau must be in [0,1]: {self.tau}")
        if not 0 <= self.mix_prob <= 1:
            raise ParameterError(f"mix_prob must be in [0,1]: {self.mix_prob}")
        self.weights.validate()
        if self.brush is None:
            self.brush = default_brush_params(self.resolution)
        self.brush.validate()
        if self.blur_kernel is None or self.blur_sigma is None:
            k, s = default_blur_kernel(self.resolution)
            self.blur_kernel = self.blur_kernel or k
            self.blur_sigma = self.blur_sigma or s

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            resolution=self.resolution,
            channels=dict(self.channels) if self.channels else default_channels(self.resolution),
        )

    def phi_vector(self) -> list[int]:
        if self.phi is not None:
            if len(self.phi) != self.model_config().num_style_layers:
                raise ParameterError("phi length does not match style layer count")
            return list(self.phi)
        return default_phi(self.model_config().num_style_layers)


# --- flat key=value serialization ------------------------------------------

def _fmt_channels(ch: dict[int, int]) -> str:
    return ",".join(f"{k}:{v}" for k, v in sorted(ch.items()))


def _parse_channels(s: str) -> dict[int, int]:
    out = {}
    for part in s.split(","):
        k, v = part.split(":")
        out[int(k)] = int(v)
    return out


def _fmt_phi(phi: list[int]) -> str:
    return "".join(str(int(b)) for b in phi)


def _parse_phi(s: str) -> list[int]:
    if any(c not in "01" for c in s):
        raise ParameterError(f"phi must be a bitstring, got {s!r}")
    return [int(c) for c in s]


# key -> (getter path, parser, formatter); dotted keys address nested fields.
_SCALARS = {
    "resolution": int,
    "batch_size": int,
    "total_steps": int,
    "tau": float,
    "mix_prob": float,
    "lr": float,
    "beta1": float,
    "beta2": float,
    "d_reg_every": int,
    "w_avg_decay": float,
    "seed": int,
    "deterministic": lambda s: s.lower() in ("1", "true", "yes"),
    "encoder_pretrain_steps": int,
    "identity_pretrain_steps": int,
    "checkpoint_every": int,
    "run_dir": str,
    "blur_kernel": int,
    "blur_sigma": float,
    "weights.lambda_id": float,
    "weights.lambda_lpips": float,
    "weights.lambda_attr": float,
    "weights.gamma": float,
    "brush.max_vertex": int,
    "brush.max_length": float,
    "brush.max_brush_width": float,
    "brush.max_angle": float,
}


def train_config_to_flat(cfg: TrainConfig) -> dict[str, str]:
    flat: dict[str, str] = {}
    for key in _SCALARS:
        obj = cfg
        *prefix, leaf = key.split(".")
        for p in prefix:
            obj = getattr(obj, p)
        val = getattr(obj, leaf)
        flat[key] = str(val).lower() if isinstance(val, bool) else str(val)
    flat["channels"] = _fmt_channels(cfg.model_config().channels)
    flat["phi"] = _fmt_phi(cfg.phi_vector())
    return flat


def train_config_from_flat(flat: dict[str, str]) -> TrainConfig:
    kwargs: dict = {}
    weights: dict = {}
    brush: dict = {}
    for key, raw in flat.items():
        if key == "channels":
            kwargs["channels"] = _parse_channels(raw)
        elif key == "phi":
            kwargs["phi"] = _parse_phi(raw)
        elif key in _SCALARS:
            val = _SCALARS[key](raw)
            if key.startswith("weights."):
                weights[key.split(".", 1)[1]] = val
            elif key.startswith("brush."):
                brush[key.split(".", 1)[1]] = val
            else:
                kwargs[key] = val
        else:
            raise ParameterError(f"unknown config key {key!r}")
    if weights:
        kwargs["weights"] = LossWeights(**weights)
    if brush:
        kwargs["brush"] = BrushParams(**brush)
    return TrainConfig(**kwargs)


def parse_flat_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; '#' starts a comment, blank lines ignored."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ParameterError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, val = stripped.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def format_flat_text(flat: dict[str, str]) -> str:
    return "\n".join(f"{k} = {v}" for k, v in sorted(flat.items())) + "\n"


def load_train_config(path) -> TrainConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return train_config_from_flat(parse_flat_text(fh.read()))


def save_train_config(path, cfg: TrainConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_flat_text(train_config_to_flat(cfg)))
