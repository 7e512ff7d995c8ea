"""Quantitative evaluation: distribution distance and separability scores
over mask-ratio bins.

The feature extractor is a small frozen seeded network standing in for
the usual large pretrained model; reports record its parameter hash so
scores are only compared across runs that used the same extractor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from sklearn.svm import LinearSVC
from torch import nn

from .embedders import freeze, module_param_hash
from .errors import NumericError, ParameterError
from .layers import EqualizedConv2d, downsample2x
from .masks import center_mask, masked_ratio, sample_freeform


class FeatureExtractor(nn.Module):
    """Frozen conv pyramid; features are channel means of the middle stage
    plus channel means and stds of the deepest stage."""

    def __init__(self, channels: tuple[int, ...] = (12, 16, 16), seed: int = 1234):
        super().__init__()
        torch.manual_seed(seed)
        convs = []
        cin = 3
        for cout in channels:
            convs.append(EqualizedConv2d(cin, cout, 3, padding=1))
            cin = cout
        self.convs = nn.ModuleList(convs)
        self.feature_dim = channels[-2] + 2 * channels[-1]
        freeze(self)

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        if img.ndim == 3:
            img = img[None]
        x = img
        stages = []
        for i, conv in enumerate(self.convs):
            if i > 0:
                x = downsample2x(x)
            x = F.leaky_relu(conv(x), 0.2)
            stages.append(x)
        mid = stages[-2].mean(dim=(2, 3))
        deep_mean = stages[-1].mean(dim=(2, 3))
        deep_std = stages[-1].std(dim=(2, 3), unbiased=False)
        return torch.cat([mid, deep_mean, deep_std], dim=1)

    @property
    def weights_hash(self) -> str:
        return module_param_hash(self)


def extract_features(images: torch.Tensor, extractor: FeatureExtractor,
                     batch_size: int = 64) -> np.ndarray:
    """(n, d) float64 feature matrix from a frozen extractor."""
    feats = []
    with torch.no_grad():
        for start in range(0, images.shape[0], batch_size):
            feats.append(extractor(images[start : start + batch_size]).double().numpy())
    out = np.concatenate(feats, axis=0)
    if not np.isfinite(out).all():
        raise NumericError("extractor produced non-finite features")
    return out


def _sqrtm_psd(mat: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    sym = (mat + mat.T) / 2.0
    vals, vecs = np.linalg.eigh(sym)
    floor = -tol * max(1.0, float(np.abs(vals).max()))
    if vals.min() < floor:
        raise NumericError(f"matrix not PSD within tolerance: min eigenvalue {vals.min():.3e}")
    vals = np.clip(vals, 0.0, None)
    return vecs @ np.diag(np.sqrt(vals)) @ vecs.T


def fid(a: np.ndarray, b: np.ndarray, eps: float = 1e-6) -> float:
    """Fréchet distance between Gaussian fits of two feature sets.

    Covariances are regularized by ``eps * I``; the matrix square root is
    taken by eigendecomposition of the symmetrized product.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ParameterError(f"feature sets must be (n, d) with equal d: {a.shape} vs {b.shape}")
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ParameterError("need at least two samples per feature set")
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    d = a.shape[1]
    cov_a = np.cov(a, rowvar=False).reshape(d, d) + eps * np.eye(d)
    cov_b = np.cov(b, rowvar=False).reshape(d, d) + eps * np.eye(d)
    a_half = _sqrtm_psd(cov_a)
    cross = _sqrtm_psd(a_half @ cov_b @ a_half)
    val = float(np.sum((mu_a - mu_b) ** 2) + np.trace(cov_a + cov_b - 2.0 * cross))
    if val < -1e-6:
        raise NumericError(f"distance came out negative beyond tolerance: {val}")
    return max(val, 0.0)


def ids_scores(real_feats: np.ndarray, fake_feats: np.ndarray) -> tuple[float, float]:
    """Separability scores from a linear soft-margin classifier (C = 1).

    The unpaired score is the classifier's misclassification rate over
    both sets; the paired score is the fraction of pairs where the fake
    sample scores more real than its paired real. Decision ties count as
    half in both.
    """
    real = np.asarray(real_feats, dtype=np.float64)
    fake = np.asarray(fake_feats, dtype=np.float64)
    if real.shape != fake.shape:
        raise ParameterError(f"paired feature sets must match: {real.shape} vs {fake.shape}")
    stacked = np.concatenate([real, fake], axis=0)
    if not np.isfinite(stacked).all():
        raise NumericError("features contain non-finite values")
    if np.allclose(stacked.var(axis=0), 0.0):
        raise NumericError("features are degenerate (zero variance everywhere)")
    labels = np.concatenate([np.ones(len(real)), -np.ones(len(fake))])
    clf = LinearSVC(C=1.0, dual=False, tol=1e-4, max_iter=10000)
    clf.fit(stacked, labels)
    scores = clf.decision_function(stacked)
    s_real, s_fake = scores[: len(real)], scores[len(real):]

    wrong_real = np.where(s_real < 0, 1.0, np.where(s_real == 0, 0.5, 0.0))
    wrong_fake = np.where(s_fake > 0, 1.0, np.where(s_fake == 0, 0.5, 0.0))
    u_ids = float(np.concatenate([wrong_real, wrong_fake]).mean())
    p_ids = float(np.where(s_fake > s_real, 1.0,
                           np.where(s_fake == s_real, 0.5, 0.0)).mean())
    return u_ids, p_ids


DEFAULT_RATIO_BINS = tuple((lo / 10, (lo + 1) / 10) for lo in range(1, 7))


@dataclass
class BinResult:
    name: str
    lo: float
    hi: float
    count: int
    fid: float
    u_ids: float
    p_ids: float


@dataclass
class EvalReport:
    extractor_hash: str
    bins: list[BinResult] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "extractor_hash": self.extractor_hash,
                "bins": [vars(b) for b in self.bins],
            },
            indent=2,
            sort_keys=True,
        )

    @staticmethod
    def from_json(text: str) -> "EvalReport":
        raw = json.loads(text)
        return EvalReport(
            extractor_hash=raw["extractor_hash"],
            bins=[BinResult(**b) for b in raw["bins"]],
        )


def _sample_mask_in_ratio(rng, res, brush, lo, hi, max_tries=400) -> np.ndarray:
    """Rejection-sample a free-form mask into the ratio range; a union of
    free-form draws is itself free-form, so undershoots are topped up by
    OR-ing further draws before rejecting."""
    for _ in range(max_tries):
        m = sample_freeform(rng, res, res, brush)
        grow = 0
        while masked_ratio(m) < lo and grow < 24:
            m = np.maximum(m, sample_freeform(rng, res, res, brush))
            grow += 1
        if lo <= masked_ratio(m) < hi:
            return m
    raise ParameterError(f"could not sample a mask with ratio in [{lo}, {hi})")


def evaluate(inpaint_fn, reals: torch.Tensor, extractor: FeatureExtractor,
             rng: np.random.Generator, brush,
             bins=DEFAULT_RATIO_BINS, n_samples: int = 64,
             center_frac: float = 0.5) -> EvalReport:
    """Mask-ratio binned protocol.

    ``inpaint_fn(i_gt, mask, i_exe) -> i_out`` receives the full image and
    must zero hole pixels itself before synthesis. Exemplars are the batch
    in reverse index order. Each ratio bin rejection-samples free-form
    masks into its range; a fixed centered-rectangle bin is always
    included.
    """
    if n_samples < 2:
        raise ParameterError("need at least two samples per bin")
    res = reals.shape[-1]
    idx = rng.integers(0, reals.shape[0], size=n_samples)
    batch = reals[torch.from_numpy(idx)]
    exemplars = torch.flip(batch, dims=(0,))
    real_feats = extract_features(batch, extractor)

    report = EvalReport(extractor_hash=extractor.weights_hash)
    named_bins = [(f"ratio_{lo:.1f}_{hi:.1f}", lo, hi) for lo, hi in bins]
    named_bins.append(("center", center_frac**2, center_frac**2))
    for name, lo, hi in named_bins:
        if name == "center":
            masks = [center_mask(res, res, center_frac)] * n_samples
        else:
            masks = [_sample_mask_in_ratio(rng, res, brush, lo, hi) for _ in range(n_samples)]
        mask_t = torch.from_numpy(np.stack([m[:, :, 0] for m in masks])[:, None])
        with torch.no_grad():
            outs = inpaint_fn(batch, mask_t, exemplars)
        fake_feats = extract_features(outs, extractor)
        u_ids, p_ids = ids_scores(real_feats, fake_feats)
        report.bins.append(BinResult(
            name=name, lo=lo, hi=hi, count=n_samples,
            fid=fid(real_feats, fake_feats), u_ids=u_ids, p_ids=p_ids,
        ))
    return report
