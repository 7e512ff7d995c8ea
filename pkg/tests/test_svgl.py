import numpy as np
import pytest
import torch

from exinpaint.embedders import PerceptualExtractor, freeze
from exinpaint.errors import NumericError, ParameterError
from exinpaint.svgl import gradient_check, svgl_apply


def _rand(shape, seed=0, dtype=torch.float64):
    rng = np.random.default_rng(seed)
    return torch.from_numpy(rng.standard_normal(shape)).to(dtype)


def test_forward_is_bit_identical():
    x = _rand((2, 3, 5, 5), seed=1)
    w = np.random.default_rng(2).uniform(0, 1, (5, 5, 1)).astype(np.float32)
    assert torch.equal(svgl_apply(x, w), x)


def test_unit_mask_matches_ungated_gradient():
    x = _rand((1, 3, 4, 4), seed=3).requires_grad_(True)
    y = svgl_apply(x, np.ones((4, 4, 1), dtype=np.float32))
    (y**2).sum().backward()
    assert torch.allclose(x.grad, 2 * x.detach())


def test_zero_mask_blocks_gradient():
    x = _rand((1, 3, 4, 4), seed=4).requires_grad_(True)
    y = svgl_apply(x, np.zeros((4, 4, 1), dtype=np.float32))
    (y**2).sum().backward()
    assert torch.equal(x.grad, torch.zeros_like(x))


def test_random_mask_analytic_gradient():
    x = _rand((1, 1, 3, 3), seed=5).requires_grad_(True)
    w = np.random.default_rng(6).uniform(0, 1, (3, 3, 1))
    y = svgl_apply(x, w.astype(np.float64))
    (y**2).sum().backward()
    expected = 2 * x.detach() * torch.from_numpy(w[:, :, 0])[None, None]
    assert torch.allclose(x.grad, expected, atol=1e-12)


def test_backward_linearity():
    w = np.random.default_rng(7).uniform(0, 1, (4, 4, 1))
    a, b = 2.5, -1.25

    def grad_of(fn, x0):
        x = x0.clone().requires_grad_(True)
        fn(svgl_apply(x, w)).backward()
        return x.grad

    x0 = _rand((1, 2, 4, 4), seed=8)
    l1 = lambda y: (y**2).sum()
    l2 = lambda y: (y**3).sum()
    combined = grad_of(lambda y: a * l1(y) + b * l2(y), x0)
    assert torch.allclose(combined, a * grad_of(l1, x0) + b * grad_of(l2, x0), atol=1e-10)


def test_double_gating_composes():
    w1 = np.random.default_rng(9).uniform(0, 1, (4, 4, 1))
    w2 = np.random.default_rng(10).uniform(0, 1, (4, 4, 1))
    x = _rand((1, 1, 4, 4), seed=11).requires_grad_(True)
    y = svgl_apply(svgl_apply(x, w1), w2)
    (y**2).sum().backward()
    gate = torch.from_numpy((w1 * w2)[:, :, 0])[None, None]
    assert torch.allclose(x.grad, 2 * x.detach() * gate, atol=1e-12)


def test_masked_pixels_have_exact_zero_gradient():
    w = np.random.default_rng(12).uniform(0, 1, (6, 6, 1))
    w[w < 0.5] = 0.0
    x = _rand((1, 3, 6, 6), seed=13).requires_grad_(True)
    y = svgl_apply(x, w)
    # a messy downstream loss
    (torch.sin(y).sum() + (y**2).mean()).backward()
    zero_at = torch.from_numpy((w[:, :, 0] == 0))
    assert (x.grad[:, :, zero_at] == 0).all()


def test_gradient_check_quadratic():
    w = np.random.default_rng(14).uniform(0, 1, (4, 4, 1))
    x = _rand((1, 3, 4, 4), seed=15)
    report = gradient_check(w, lambda y: (y**2).sum(), x)
    assert report.max_rel_error < 1e-6


def test_gradient_check_unit_mask_matches_raw_fd():
    x = _rand((1, 1, 3, 3), seed=16)
    ones = np.ones((3, 3, 1))
    report = gradient_check(ones, lambda y: (y**3).sum(), x)
    # with a unit mask the gated and raw finite-difference gradients coincide
    assert np.allclose(report.analytic, report.numeric, atol=1e-7)


def test_gradient_check_perceptual_surrogate():
    net = freeze(PerceptualExtractor(channels=(4, 8)).double())
    target = net(_rand((1, 3, 8, 8), seed=17)).detach()

    def loss_fn(y):
        return ((net(y) - target) ** 2).sum()

    w = np.random.default_rng(18).uniform(0, 1, (8, 8, 1))
    x = _rand((1, 3, 8, 8), seed=19)
    report = gradient_check(w, loss_fn, x, eps=1e-5)
    assert report.max_rel_error < 1e-4


def test_gradient_check_nonfinite_loss():
    x = _rand((1, 1, 3, 3), seed=20)
    with pytest.raises(NumericError):
        gradient_check(np.ones((3, 3, 1)), lambda y: (y / 0.0).sum(), x)


def test_shape_mismatch_rejected():
    x = _rand((1, 3, 4, 4))
    with pytest.raises(ParameterError):
        svgl_apply(x, np.ones((5, 5, 1), dtype=np.float32))
