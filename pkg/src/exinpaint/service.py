"""Checkpoint-backed inference engine and the HTTP service over it.

Images travel as base64-encoded PNG inside JSON bodies. Every response
preserves unmasked request pixels byte-for-byte, and identical requests
(same seed) produce byte-identical images. Requests are serialized onto
one inference executor guarded by a lock; the loaded checkpoint is
never mutated.
"""

from __future__ import annotations

import base64
import hashlib
import io
import logging
import os
import threading
import time
import uuid
from typing import Optional, Tuple

import numpy as np
import torch
from PIL import Image
from pydantic import BaseModel

from . import container
from .config import TrainConfig, train_config_from_flat
from .errors import ParameterError
from .generator import composite, sample_decoder_noise
from .styles import crossover_mix, mix_styles, truncate
from .training import ModelBundle, build_models

logger = logging.getLogger(__name__)


# --- image codecs ------------------------------------------------------------

def png_b64_to_array(data: str) -> np.ndarray:
    """base64 PNG -> uint8 HWC RGB array."""
    try:
        raw = base64.b64decode(data, validate=True)
        img = Image.open(io.BytesIO(raw))
        img.load()
    except Exception as exc:
        raise ParameterError(f"could not decode PNG payload: {exc}") from exc
    return np.asarray(img.convert("RGB"), dtype=np.uint8)


def array_to_png_b64(arr: np.ndarray) -> str:
    img = Image.fromarray(arr.astype(np.uint8))
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def mask_b64_to_array(data: str) -> np.ndarray:
    """base64 PNG -> (h, w, 1) binary mask; any value above 127 is a hole."""
    try:
        raw = base64.b64decode(data, validate=True)
        img = Image.open(io.BytesIO(raw)).convert("L")
    except Exception as exc:
        raise ParameterError(f"could not decode mask payload: {exc}") from exc
    arr = np.asarray(img, dtype=np.uint8)
    return (arr > 127).astype(np.float32)[:, :, None]


def u8_to_tensor(img: np.ndarray) -> torch.Tensor:
    """uint8 HWC -> (1, 3, h, w) float in [-1, 1]."""
    arr = np.ascontiguousarray(img, dtype=np.float32) / 127.5 - 1.0
    return torch.from_numpy(arr.transpose(2, 0, 1))[None]

def tensor_to_u8(t: torch.Tensor) -> np.ndarray:
    arr = t.detach().clamp(-1, 1).numpy()
    if arr.ndim == 4:
        arr = arr[0]
    return np.round((arr.transpose(1, 2, 0) + 1.0) * 127.5).astype(np.uint8)


# --- engine -------------------------------------------------------------------

class InferenceEngine:
    """Loads a training checkpoint and serves deterministic inpainting."""

    def __init__(self, checkpoint_path: str, num_threads: int | None = 1):
        if num_threads:
            torch.set_num_threads(num_threads)
        with open(checkpoint_path, "rb") as fh:
            blob = fh.read()
        self.checkpoint_hash = hashlib.sha256(blob).hexdigest()
        tensors, meta = container.from_bytes(blob)
        self.cfg: TrainConfig = train_config_from_flat(meta["config"])
        self.models: ModelBundle = build_models(self.cfg)
        from .training import _MODEL_PREFIXES  # local import to avoid cycle at module load

        for prefix, attr in _MODEL_PREFIXES:
            module = getattr(self.models, attr)
            sd = {
                name[len(prefix) + 1:]: torch.from_numpy(arr.copy())
                for name, arr in tensors.items()
                if name.startswith(prefix + "/")
            }
            module.load_state_dict(sd)
        for _, attr in _MODEL_PREFIXES:
            mod = getattr(self.models, attr)
            mod.eval()
            for p in mod.parameters():
                p.requires_grad_(False)
        self.w_avg = torch.from_numpy(tensors["w_avg"].copy())
        self.phi_default = self.cfg.phi_vector()
        self.num_style_layers = self.cfg.model_config().num_style_layers
        self.resolution = self.cfg.resolution
        self.lock = threading.Lock()
        self.params_hash = container.tensors_sha256(
            {k: v for k, v in tensors.items() if k[0] in "gfderp" and "/" in k}
        )

    def _w_avg_code(self) -> torch.Tensor:
        return self.w_avg[None, None, :].expand(1, self.num_style_layers, -1)

    def _check_resolution(self, arr: np.ndarray, what: str) -> None:
        if arr.shape[0] != self.resolution or arr.shape[1] != self.resolution:
            raise ResolutionMismatch(
                f"{what} is {arr.shape[1]}x{arr.shape[0]}, model expects "
                f"{self.resolution}x{self.resolution}"
            )

    def _resize(self, arr: np.ndarray) -> np.ndarray:
        img = Image.fromarray(arr.squeeze().astype(np.uint8))
        s = min(img.size)
        w, h = img.size
        img = img.crop(((w - s) // 2, (h - s) // 2, (w - s) // 2 + s, (h - s) // 2 + s))
        out = np.asarray(img.resize((self.resolution, self.resolution), Image.BILINEAR))
        return out if out.ndim == 3 else out[:, :, None]

    def inpaint_arrays(self, image: np.ndarray, mask: np.ndarray, exemplar: np.ndarray,
                       exemplar2: np.ndarray | None = None,
                       crossover: tuple[int, int] | None = None,
                       phi=None, psi: float = 1.0, seed: int = 0,
                       allow_resize: bool = False) -> np.ndarray:
        """uint8 HWC in, uint8 HWC out; deterministic given the seed."""
        if allow_resize:
            image = self._resize(image)
            mask = (self._resize((mask * 255).astype(np.uint8)) > 127).astype(np.float32)
            exemplar = self._resize(exemplar)
            if exemplar2 is not None:
                exemplar2 = self._resize(exemplar2)
        self._check_resolution(image, "input image")
        self._check_resolution(mask, "mask")
        self._check_resolution(exemplar, "exemplar")
        if not 0 <= psi <= 1:
            raise ParameterError(f"psi must be in [0, 1], got {psi}")
        phi_vec = self.phi_default if phi is None else list(phi)
        if len(phi_vec) != self.num_style_layers:
            raise ParameterError(
                f"phi must have {self.num_style_layers} entries, got {len(phi_vec)}"
            )

        with self.lock, torch.no_grad():
            img_t = u8_to_tensor(image)
            mask_t = torch.from_numpy(mask[:, :, 0])[None, None]
            i_in = img_t * (1.0 - mask_t)
            w_exe = self.models.style_encoder(u8_to_tensor(exemplar))
            if exemplar2 is not None:
                if crossover is None:
                    raise ParameterError("second exemplar requires a crossover range")
                self._check_resolution(exemplar2, "second exemplar")
                w_exe2 = self.models.style_encoder(u8_to_tensor(exemplar2))
                w_exe = crossover_mix(w_exe, w_exe2, crossover[0], crossover[1])
            rng = np.random.default_rng(seed)
            z = torch.from_numpy(rng.standard_normal((1, 512)).astype(np.float32))
            w_sto = truncate(self.models.mapper(z), self._w_avg_code(), psi)
            w_hat = mix_styles(w_exe, w_sto, phi_vec)
            noise = sample_decoder_noise(rng, 1, self.models.generator.cfg)
            i_pred = self.models.generator(i_in, mask_t, w_hat, noise)
            i_out = composite(img_t, i_pred, mask_t)
        return tensor_to_u8(i_out)

    def inpaint_tensors(self, i_gt: torch.Tensor, mask: torch.Tensor,
                        i_exe: torch.Tensor, seed: int = 0, psi: float = 1.0) -> torch.Tensor:
        """Batched float-tensor path used by the evaluation protocol."""
        with self.lock, torch.no_grad():
            i_in = i_gt * (1.0 - mask)
            w_exe = self.models.style_encoder(i_exe)
            rng = np.random.default_rng(seed)
            b = i_gt.shape[0]
            z = torch.from_numpy(rng.standard_normal((b, 512)).astype(np.float32))
            w_sto = truncate(self.models.mapper(z), self._w_avg_code(), psi)
            w_hat = mix_styles(w_exe, w_sto, self.phi_default)
            noise = sample_decoder_noise(rng, b, self.models.generator.cfg)
            i_pred = self.models.generator(i_in, mask, w_hat, noise)
            return composite(i_gt, i_pred, mask)


class ResolutionMismatch(ParameterError):
    """Input resolution does not match the loaded model."""


# --- HTTP layer ---------------------------------------------------------------

class InpaintBody(BaseModel):
    image_b64: str
    mask_b64: str
    exemplar_b64: str
    exemplar2_b64: Optional[str] = None
    crossover: Optional[Tuple[int, int]] = None
    phi: Optional[str] = None
    psi: float = 1.0
    seed: int = 0
    allow_resize: bool = False


class MixBody(BaseModel):
    image_b64: str
    mask_b64: str
    exemplar1_b64: str
    exemplar2_b64: str
    i: int
    j: int
    psi: float = 1.0
    seed: int = 0
    allow_resize: bool = False


def create_app(engine: InferenceEngine, gallery_dir: str | None = None):
    from fastapi import FastAPI, Request
    from fastapi.exceptions import RequestValidationError
    from fastapi.responses import JSONResponse

    app = FastAPI(title="exemplar inpainting service")

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        errors = [
            {"field": ".".join(str(p) for p in e["loc"]), "message": e["msg"]}
            for e in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"errors": errors})

    @app.exception_handler(ResolutionMismatch)
    async def resolution_handler(request: Request, exc: ResolutionMismatch):
        return JSONResponse(status_code=422, content={"error": str(exc)})

    @app.exception_handler(ParameterError)
    async def parameter_handler(request: Request, exc: ParameterError):
        return JSONResponse(status_code=400, content={"errors": [{"field": "", "message": str(exc)}]})

    @app.exception_handler(Exception)
    async def internal_handler(request: Request, exc: Exception):
        error_id = uuid.uuid4().hex
        logger.exception("inference failure %s", error_id)
        return JSONResponse(status_code=500, content={"error_id": error_id})

    def _run(body: InpaintBody, phi_override=None):
        t0 = time.monotonic()
        image = png_b64_to_array(body.image_b64)
        mask = mask_b64_to_array(body.mask_b64)
        exemplar = png_b64_to_array(body.exemplar_b64)
        exemplar2 = png_b64_to_array(body.exemplar2_b64) if body.exemplar2_b64 else None
        phi = phi_override
        if phi is None and body.phi is not None:
            if any(c not in "01" for c in body.phi):
                raise ParameterError("phi must be a bitstring")
            phi = [int(c) for c in body.phi]
        out = engine.inpaint_arrays(
            image, mask, exemplar, exemplar2=exemplar2, crossover=body.crossover,
            phi=phi, psi=body.psi, seed=body.seed, allow_resize=body.allow_resize,
        )
        latency_ms = (time.monotonic() - t0) * 1000.0
        phi_used = phi if phi is not None else engine.phi_default
        return {
            "image_b64": array_to_png_b64(out),
            "request": {
                "seed": body.seed,
                "psi": body.psi,
                "phi": "".join(str(int(v)) for v in phi_used),
            },
            "checkpoint_hash": engine.checkpoint_hash,
            "latency_ms": latency_ms,
        }

    @app.post("/inpaint")
    def inpaint(body: InpaintBody):
        return _run(body)

    @app.post("/mix")
    def mix(body: MixBody):
        merged = InpaintBody(
            image_b64=body.image_b64,
            mask_b64=body.mask_b64,
            exemplar_b64=body.exemplar1_b64,
            exemplar2_b64=body.exemplar2_b64,
            crossover=(body.i, body.j),
            psi=body.psi,
            seed=body.seed,
            allow_resize=body.allow_resize,
        )
        return _run(merged)

    @app.get("/model")
    def model():
        return {
            "checkpoint_hash": engine.checkpoint_hash,
            "params_hash": engine.params_hash,
            "resolution": engine.resolution,
            "num_style_layers": engine.num_style_layers,
            "phi_default": "".join(str(int(v)) for v in engine.phi_default),
        }

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/exemplars")
    def exemplars():
        items = []
        if gallery_dir and os.path.isdir(gallery_dir):
            for name in sorted(os.listdir(gallery_dir)):
                if not name.lower().endswith((".png", ".jpg", ".jpeg")):
                    continue
                arr = np.asarray(Image.open(os.path.join(gallery_dir, name)).convert("RGB"))
                items.append({"id": name, "image_b64": array_to_png_b64(arr)})
        return {"items": items}

    return app


def serve(checkpoint: str, host: str = "127.0.0.1", port: int = 8000,
          gallery_dir: str | None = None) -> None:
    import uvicorn

    engine = InferenceEngine(checkpoint)
    app = create_app(engine, gallery_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")
