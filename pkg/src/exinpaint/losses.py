"""The four training losses and their weighted combination.

The adversarial term is the non-saturating logistic loss with R1
regularization folded into the critic side. Identity similarity is a
cosine distance of frozen face embeddings; perceptual similarity is an
L2 distance of frozen multi-scale features, active only on samples
whose exemplar is the ground truth; attribute similarity compares
layered style codes on exemplar-selected layers. The perceptual and
attribute losses expect their image input to have passed through the
spatial gradient gate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .config import LossWeights
from .errors import ParameterError


def adv_loss_d(logits_real: torch.Tensor, logits_fake: torch.Tensor,
               r1_term: torch.Tensor | float = 0.0) -> torch.Tensor:
    """Critic objective (to minimize): push real logits up, fake down."""
    loss = F.softplus(-logits_real).mean() + F.softplus(logits_fake).mean()
    return loss + r1_term


def adv_loss_g(logits_fake: torch.Tensor) -> torch.Tensor:
    """Non-saturating generator objective (to minimize)."""
    return F.softplus(-logits_fake).mean()


def identity_loss(i_out: torch.Tensor, i_exe: torch.Tensor, embedder) -> torch.Tensor:
    """One minus the cosine similarity of face embeddings; range [0, 2]."""
    e_out = embedder(i_out)
    e_exe = embedder(i_exe)
    e_out = e_out / (e_out.norm(dim=1, keepdim=True) + 1e-8)
    e_exe = e_exe / (e_exe.norm(dim=1, keepdim=True) + 1e-8)
    return (1.0 - (e_out * e_exe).sum(dim=1)).mean()


def lpips_loss(i_out_gated: torch.Tensor, i_gt: torch.Tensor, extractor,
               same_flags) -> torch.Tensor:
    """Frozen-feature L2 distance, counted only where the exemplar was the
    ground-truth image; other samples contribute exactly zero.

    ``i_out_gated`` should be the output image passed through the gradient
    gate built from the confidence weight mask.
    """
    flags = torch.as_tensor(np.asarray(same_flags), dtype=torch.bool,
                            device=i_out_gated.device)
    if flags.ndim == 0:
        flags = flags[None]
    if flags.shape[0] != i_out_gated.shape[0]:
        raise ParameterError("same_flags length must match the batch")
    if not flags.any():
        return torch.zeros((), dtype=i_out_gated.dtype, device=i_out_gated.device)
    sel = flags.nonzero(as_tuple=True)[0]
    f_out = extractor(i_out_gated[sel])
    f_gt = extractor(i_gt[sel])
    dists = (f_out - f_gt).pow(2).sum(dim=1).clamp_min(1e-12).sqrt()
    # mean over the full batch: unflagged samples are zero terms
    return dists.sum() / flags.shape[0]


def attribute_loss(i_out_gated: torch.Tensor, w_hat: torch.Tensor, phi,
                   style_encoder) -> torch.Tensor:
    """Mean L2 distance between the output image's style code and the mixed
    target code over the exemplar-selected layers.

    ``i_out_gated`` should carry the gradient gate built from the reverse
    weight mask.
    """
    sel = np.asarray(phi).astype(bool).reshape(-1)
    if sel.size != w_hat.shape[1]:
        raise ParameterError(f"phi length {sel.size} does not match {w_hat.shape[1]} layers")
    count = int(sel.sum())
    if count == 0:
        raise ParameterError("phi selects no layers; attribute loss undefined")
    w_bar = style_encoder(i_out_gated)
    idx = torch.from_numpy(np.nonzero(sel)[0]).to(w_hat.device)
    diffs = w_bar[:, idx] - w_hat[:, idx]
    per_layer = diffs.pow(2).sum(dim=2).clamp_min(1e-12).sqrt()  # (batch, selected)
    return (per_layer.sum(dim=1) / count).mean()


@dataclass
class LossParts:
    adv: torch.Tensor
    identity: torch.Tensor
    lpips: torch.Tensor
    attribute: torch.Tensor


def total_objective(parts: LossParts, weights: LossWeights) -> torch.Tensor:
    """Weighted sum of the adversarial, identity, perceptual and attribute terms."""
    return (
        parts.adv
        + weights.lambda_id * parts.identity
        + weights.lambda_lpips * parts.lpips
        + weights.lambda_attr * parts.attribute
    )
