"""Procedural toy-face corpus and dataset loading.

The corpus generator draws simple parametric faces (skin ellipse, hair,
eyes, brows, mouth, optional glasses) with per-identity traits and
per-image variation, giving a small labeled dataset that trains at desk
scale. Real photos can be substituted by pointing the loader at any
folder of images.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
import torch
from PIL import Image

from .errors import ParameterError


@dataclass
class IdentityTraits:
    skin: tuple
    hair: tuple
    iris: tuple
    face_ax: float
    face_ay: float
    eye_dx: float
    eye_r: float
    hair_top: float
    mouth_w: float
    brow_drop: float
    glasses: bool


def sample_identity(rng: np.random.Generator) -> IdentityTraits:
    skin = np.array([0.85, 0.65, 0.5]) + rng.uniform(-0.12, 0.12, 3)
    hair = rng.uniform(0.05, 0.55, 3)
    iris = rng.uniform(0.1, 0.6, 3)
    return IdentityTraits(
        skin=tuple(np.clip(skin, 0, 1)),
        hair=tuple(hair),
        iris=tuple(iris),
        face_ax=rng.uniform(0.26, 0.34),
        face_ay=rng.uniform(0.34, 0.42),
        eye_dx=rng.uniform(0.10, 0.15),
        eye_r=rng.uniform(0.035, 0.055),
        hair_top=rng.uniform(0.06, 0.16),
        mouth_w=rng.uniform(0.10, 0.16),
        brow_drop=rng.uniform(0.05, 0.08),
        glasses=bool(rng.random() < 0.35),
    )


def _ellipse(xx, yy, cx, cy, ax, ay):
    return ((xx - cx) / ax) ** 2 + ((yy - cy) / ay) ** 2 <= 1.0


def render_face(ident: IdentityTraits, rng: np.random.Generator, side: int = 64) -> np.ndarray:
    """Draw one face image as uint8 HWC."""
    ys, xs = np.mgrid[0:side, 0:side]
    xx = (xs + 0.5) / side
    yy = (ys + 0.5) / side

    dx = rng.uniform(-0.02, 0.02)
    dy = rng.uniform(-0.02, 0.02)
    smile = rng.uniform(-0.4, 1.0)
    eye_open = rng.uniform(0.55, 1.0)
    brightness = rng.uniform(0.9, 1.1)
    bg = rng.uniform(0.2, 0.8, 3)

    canvas = np.zeros((side, side, 3), dtype=np.float64)
    grad = (0.75 + 0.25 * yy)[:, :, None]
    canvas[:] = bg[None, None, :] * grad

    cx, cy = 0.5 + dx, 0.54 + dy
    face = _ellipse(xx, yy, cx, cy, ident.face_ax, ident.face_ay)

    hair = _ellipse(xx, yy, cx, cy - 0.05, ident.face_ax + 0.05, ident.face_ay + ident.hair_top)
    hair &= yy < cy - 0.05
    canvas[hair] = ident.hair
    canvas[face] = ident.skin

    eye_y = cy - 0.08
    for sgn in (-1, 1):
        ex = cx + sgn * ident.eye_dx
        white = _ellipse(xx, yy, ex, eye_y, ident.eye_r, ident.eye_r * eye_open)
        canvas[white & face] = (0.95, 0.95, 0.95)
        iris = _ellipse(xx, yy, ex, eye_y, ident.eye_r * 0.45, ident.eye_r * 0.45 * eye_open)
        canvas[iris & face] = ident.iris
        pupil = _ellipse(xx, yy, ex, eye_y, ident.eye_r * 0.18, ident.eye_r * 0.18 * eye_open)
        canvas[pupil & face] = (0.05, 0.05, 0.05)
        brow = (np.abs(yy - (eye_y - ident.brow_drop)) < 0.012) & (np.abs(xx - ex) < ident.eye_r * 1.2)
        canvas[brow & face] = np.asarray(ident.hair) * 0.6
        if ident.glasses:
            ring = _ellipse(xx, yy, ex, eye_y, ident.eye_r * 1.6, ident.eye_r * 1.6)
            ring &= ~_ellipse(xx, yy, ex, eye_y, ident.eye_r * 1.3, ident.eye_r * 1.3)
            canvas[ring] = (0.1, 0.1, 0.12)
    if ident.glasses:
        bridge = (np.abs(yy - eye_y) < 0.01) & (np.abs(xx - cx) < ident.eye_dx * 0.45)
        canvas[bridge] = (0.1, 0.1, 0.12)

    nose = (np.abs(xx - cx) < 0.012) & (yy > cy - 0.02) & (yy < cy + 0.08)
    canvas[nose & face] = np.asarray(ident.skin) * 0.8

    mouth_y = cy + 0.17
    mouth = _ellipse(xx, yy, cx, mouth_y, ident.mouth_w, 0.035)
    if smile > 0.15:  # carve the upper lip into an arc
        mouth &= ~_ellipse(xx, yy, cx, mouth_y - 0.03 * smile, ident.mouth_w, 0.035)
    canvas[mouth & face] = (0.65, 0.25, 0.3)

    canvas = np.clip(canvas * brightness, 0.0, 1.0)
    return (canvas * 255.0 + 0.5).astype(np.uint8)


def make_toy_corpus(out_dir, n_images: int, n_identities: int = 24,
                    side: int = 64, seed: int = 0) -> list[str]:
    """Write a labeled corpus of toy faces; returns the image paths."""
    if n_images <= 0 or n_identities <= 0:
        raise ParameterError("corpus sizes must be positive")
    os.makedirs(out_dir, exist_ok=True)
    master = np.random.default_rng(seed)
    idents = [sample_identity(master) for _ in range(n_identities)]
    labels = {}
    paths = []
    for i in range(n_images):
        ident_idx = i % n_identities
        img = render_face(idents[ident_idx], master, side)
        name = f"img_{i:05d}.png"
        Image.fromarray(img).save(os.path.join(out_dir, name))
        labels[name] = ident_idx
        paths.append(os.path.join(out_dir, name))
    with open(os.path.join(out_dir, "identities.json"), "w", encoding="utf-8") as fh:
        json.dump(labels, fh, sort_keys=True)
    return paths


class ImageDataset:
    """In-memory image set in [-1, 1], optionally with identity labels."""

    def __init__(self, images: torch.Tensor, labels: list[int] | None = None):
        if images.ndim != 4:
            raise ParameterError("images must be (n, c, h, w)")
        self.images = images
        self.labels = labels

    def __len__(self) -> int:
        return self.images.shape[0]


def load_image_folder(path, resolution: int) -> ImageDataset:
    """Load a folder of images: center-crop to square, resize, scale to [-1, 1]."""
    names = sorted(
        n for n in os.listdir(path)
        if n.lower().endswith((".png", ".jpg", ".jpeg", ".bmp"))
    )
    if not names:
        raise ParameterError(f"no images found in {path}")
    labels = None
    label_file = os.path.join(path, "identities.json")
    if os.path.exists(label_file):
        with open(label_file, "r", encoding="utf-8") as fh:
            mapping = json.load(fh)
        labels = [mapping.get(n, 0) for n in names]
    arrs = []
    for name in names:
        img = Image.open(os.path.join(path, name)).convert("RGB")
        w, h = img.size
        s = min(w, h)
        img = img.crop(((w - s) // 2, (h - s) // 2, (w - s) // 2 + s, (h - s) // 2 + s))
        if s != resolution:
            img = img.resize((resolution, resolution), Image.BILINEAR)
        arrs.append(np.asarray(img, dtype=np.float32) / 127.5 - 1.0)
    stack = np.stack(arrs).transpose(0, 3, 1, 2)
    return ImageDataset(torch.from_numpy(np.ascontiguousarray(stack)), labels)


class EpochSampler:
    """Shuffled-epoch index stream with serializable state."""

    def __init__(self, n: int, rng: np.random.Generator):
        if n <= 0:
            raise ParameterError("sampler needs a nonempty dataset")
        self.n = n
        self._rng = rng
        self._perm: list[int] = []
        self._pos = 0

    def take(self, k: int) -> list[int]:
        out = []
        while len(out) < k:
            if self._pos >= len(self._perm):
                self._perm = self._rng.permutation(self.n).tolist()
                self._pos = 0
            out.append(self._perm[self._pos])
            self._pos += 1
        return out

    def state(self) -> dict:
        return {"perm": list(self._perm), "pos": self._pos}

    def load(self, state: dict) -> None:
        self._perm = list(state["perm"])
        self._pos = int(state["pos"])
