"""Spatially weighted gradient gate.

Forward pass is the identity; the backward pass multiplies incoming
gradients pointwise by a fixed spatial weight mask (broadcast across
channels). The mask is treated as a constant and never receives
gradients. This lets losses computed in embedding spaces, whose
dimensions have no spatial correspondence, still be spatially shaped
at the image they are attached to.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import NumericError, ParameterError


class _SpatialGradientGate(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x, weight):
        ctx.save_for_backward(weight)
        return x.view_as(x)

    @staticmethod
    def backward(ctx, grad_output):
        (weight,) = ctx.saved_tensors
        return grad_output * weight, None


def as_weight_tensor(weight, like: torch.Tensor) -> torch.Tensor:
    """Normalize an (h, w, 1)/(h, w) array or tensor to a (1, 1, h, w)
    constant broadcastable over a (..., h, w) image tensor."""
    if isinstance(weight, np.ndarray):
        w = torch.from_numpy(np.ascontiguousarray(weight))
    else:
        w = torch.as_tensor(weight)
    w = w.to(dtype=like.dtype, device=like.device)
    if w.ndim == 3 and w.shape[-1] == 1:  # (h, w, 1) layout
        w = w[:, :, 0]
    if w.ndim == 2:
        w = w[None, None]
    elif w.ndim == 3:  # (b, h, w)
        w = w[:, None]
    elif w.ndim != 4:
        raise ParameterError(f"unsupported weight mask shape {tuple(w.shape)}")
    if w.shape[-2:] != like.shape[-2:]:
        raise ParameterError(
            f"weight mask spatial shape {tuple(w.shape[-2:])} does not match "
            f"input {tuple(like.shape[-2:])}"
        )
    return w.detach()


def svgl_apply(x: torch.Tensor, weight) -> torch.Tensor:
    """Identity on ``x`` whose backward multiplies gradients by ``weight``."""
    if x.ndim < 2:
        raise ParameterError("input must have spatial dimensions")
    w = as_weight_tensor(weight, like=x)
    return _SpatialGradientGate.apply(x, w)


@dataclass
class GradientCheckReport:
    max_rel_error: float
    max_abs_error: float
    analytic: np.ndarray
    numeric: np.ndarray


def gradient_check(weight, loss_fn, x: torch.Tensor, eps: float = 1e-5) -> GradientCheckReport:
    """Compare the gated reverse-mode gradient against masked central
    finite differences of the raw loss.

    The relative error is measured against the largest finite-difference
    gradient magnitude, so near-zero entries do not dominate the report.
    """
    if eps <= 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    x = x.detach().to(torch.float64).clone()
    w = as_weight_tensor(weight, like=x)

    xg = x.clone().requires_grad_(True)
    loss = loss_fn(svgl_apply(xg, w))
    if not torch.isfinite(loss):
        raise NumericError(f"loss is not finite: {loss.item()}")
    (analytic,) = torch.autograd.grad(loss, xg)

    numeric = torch.zeros_like(x)
    flat = x.reshape(-1)
    nflat = numeric.reshape(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + eps
        hi = loss_fn(x)
        flat[i] = orig - eps
        lo = loss_fn(x)
        flat[i] = orig
        if not (torch.isfinite(hi) and torch.isfinite(lo)):
            raise NumericError("loss is not finite during finite differencing")
        nflat[i] = (hi - lo) / (2 * eps)
    numeric = numeric * w  # the gate's contribution, applied to the raw-loss gradient

    diff = (analytic - numeric).abs()
    scale = max(float(numeric.abs().max()), 1e-12)
    return GradientCheckReport(
        max_rel_error=float(diff.max()) / scale,
        max_abs_error=float(diff.max()),
        analytic=analytic.numpy(),
        numeric=numeric.numpy(),
    )
