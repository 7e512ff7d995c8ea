import numpy as np
import pytest
import torch
from torch import nn

from exinpaint.config import ModelConfig
from exinpaint.discriminator import Discriminator, r1_penalty
from exinpaint.errors import ParameterError

from conftest import TINY_CHANNELS, rand_image


@pytest.fixture(scope="module")
def disc():
    torch.manual_seed(30)
    return Discriminator(ModelConfig(resolution=16, channels=dict(TINY_CHANNELS)))


def test_discriminate_deterministic(disc):
    img = rand_image(np.random.default_rng(0), 16)
    assert torch.equal(disc(img), disc(img))


def test_discriminate_resolution_check(disc):
    with pytest.raises(ParameterError):
        disc(torch.zeros(1, 3, 32, 32))


def test_init_logits_bounded(disc):
    imgs = rand_image(np.random.default_rng(1), 16, batch=8)
    logits = disc(imgs)
    assert torch.isfinite(logits).all()
    assert logits.abs().max() < 100


def test_batch_vs_single_without_group_stat():
    torch.manual_seed(31)
    d = Discriminator(ModelConfig(resolution=16, channels=dict(TINY_CHANNELS), mbstd_group=1))
    imgs = rand_image(np.random.default_rng(2), 16, batch=3)
    batched = d(imgs)
    singles = torch.cat([d(imgs[i : i + 1]) for i in range(3)])
    assert torch.allclose(batched, singles, atol=1e-5)


def test_duplicated_batch_matches_single_with_group_stat(disc):
    # with identical samples the group statistic is zero, same as a lone sample
    img = rand_image(np.random.default_rng(3), 16)
    batched = disc(img.repeat(4, 1, 1, 1))
    single = disc(img)
    assert torch.allclose(batched, single.repeat(4), atol=1e-5)


def test_r1_zero_gamma(disc):
    imgs = rand_image(np.random.default_rng(4), 16, batch=2)
    assert r1_penalty(disc, imgs, 0.0).item() == 0.0


class _LinearCritic(nn.Module):
    """x -> sum(a * x); gradient wrt x is the fixed map a."""

    def __init__(self, a: torch.Tensor, offset: float = 0.0):
        super().__init__()
        self.a = a
        self.offset = offset

    def forward(self, x):
        return (x * self.a).sum(dim=(1, 2, 3)) + self.offset


def test_r1_closed_form_linear_critic():
    rng = np.random.default_rng(5)
    a = torch.from_numpy(rng.standard_normal((3, 16, 16)).astype(np.float64))
    critic = _LinearCritic(a[None])
    imgs = torch.from_numpy(rng.standard_normal((4, 3, 16, 16)))
    gamma = 10.0
    expected = gamma / 2 * float((a**2).sum())
    assert r1_penalty(critic, imgs, gamma).item() == pytest.approx(expected, abs=1e-6)


def test_r1_invariant_to_output_shift():
    rng = np.random.default_rng(6)
    a = torch.from_numpy(rng.standard_normal((3, 16, 16)).astype(np.float64))
    imgs = torch.from_numpy(rng.standard_normal((2, 3, 16, 16)))
    p0 = r1_penalty(_LinearCritic(a[None], offset=0.0), imgs, 10.0)
    p1 = r1_penalty(_LinearCritic(a[None], offset=123.0), imgs, 10.0)
    assert torch.allclose(p0, p1)


def test_r1_nonnegative_and_decreases_under_optimization(disc):
    imgs = rand_image(np.random.default_rng(7), 16, batch=4)
    torch.manual_seed(32)
    d = Discriminator(ModelConfig(resolution=16, channels=dict(TINY_CHANNELS)))
    opt = torch.optim.Adam(d.parameters(), lr=5e-3)
    first = r1_penalty(d, imgs, 10.0)
    assert first.item() >= 0
    penalty = first
    for _ in range(25):
        opt.zero_grad()
        penalty.backward()
        opt.step()
        penalty = r1_penalty(d, imgs, 10.0)
    assert penalty.item() >= 0
    assert penalty.item() < first.item()
