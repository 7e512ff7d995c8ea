"""Training loop: batch assembly, alternating updates, checkpointing.

Every stochastic draw flows through one numpy Generator whose state is
saved in checkpoints, so a resumed run continues bit-identically to an
uninterrupted one (single-threaded mode). The pre-trained embedding
networks are frozen before the first step and their parameter hashes
are tracked across the whole run.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from . import container
from .config import TrainConfig, train_config_to_flat
from .data import EpochSampler, ImageDataset
from .discriminator import Discriminator, r1_penalty
from .embedders import IdentityEmbedder, PerceptualExtractor, freeze, module_param_hash
from .errors import NumericError, ParameterError
from .generator import Generator, composite, sample_decoder_noise
from .layers import EqualizedLinear
from .losses import LossParts, adv_loss_d, adv_loss_g, attribute_loss, identity_loss, lpips_loss, total_objective
from .masks import confidence_weight, reverse_weight, sample_freeform
from .styles import MappingNetwork, StyleEncoder, WAvgTracker, mix_styles, mixing_regularization
from .svgl import svgl_apply

LOG_TERMS = ("adv_g", "identity", "lpips", "attribute", "total_g", "adv_d", "r1", "total_d")


def set_requires_grad(module: nn.Module, flag: bool) -> None:
    for p in module.parameters():
        p.requires_grad_(flag)


@dataclass
class ModelBundle:
    generator: Generator
    mapper: MappingNetwork
    discriminator: Discriminator
    style_encoder: StyleEncoder
    identity_net: IdentityEmbedder
    perceptual: PerceptualExtractor

    def frozen_hashes(self) -> dict[str, str]:
        return {
            "style_encoder": module_param_hash(self.style_encoder),
            "identity_net": module_param_hash(self.identity_net),
            "perceptual": module_param_hash(self.perceptual),
        }


def build_models(cfg: TrainConfig) -> ModelBundle:
    """Construct all networks with deterministic seeded initialization."""
    torch.manual_seed(cfg.seed)
    mcfg = cfg.model_config()
    return ModelBundle(
        generator=Generator(mcfg),
        mapper=MappingNetwork(mcfg.num_style_layers, mcfg.style_dim, mcfg.mapping_layers),
        discriminator=Discriminator(mcfg),
        style_encoder=StyleEncoder(mcfg),
        identity_net=IdentityEmbedder(mcfg.resolution, mcfg.embed_dim),
        perceptual=PerceptualExtractor(),
    )


def pretrain_style_encoder(encoder: StyleEncoder, generator: Generator,
                           dataset: ImageDataset, steps: int, rng: np.random.Generator,
                           batch_size: int = 16, lr: float = 1e-3) -> None:
    """Teach the style encoder to carry image content: reconstruct images
    through the (held fixed) generator from the encoder's codes alone."""
    if steps <= 0:
        return
    set_requires_grad(generator, False)
    opt = torch.optim.Adam(encoder.parameters(), lr=lr)
    n = len(dataset)
    b = min(batch_size, n)
    r = encoder.resolution
    empty_mask = torch.zeros(b, 1, r, r)
    for _ in range(steps):
        idx = rng.integers(0, n, size=b)
        imgs = dataset.images[torch.from_numpy(idx)]
        c, pyr = generator.encoder(imgs, empty_mask)
        pred = generator.decoder(c, encoder(imgs), pyr)
        loss = F.mse_loss(pred, imgs)
        opt.zero_grad()
        loss.backward()
        opt.step()
    set_requires_grad(generator, True)


def pretrain_identity_embedder(embedder: IdentityEmbedder, dataset: ImageDataset,
                               steps: int, rng: np.random.Generator,
                               batch_size: int = 16, lr: float = 1e-3) -> None:
    """Brief identity classification on the corpus labels; the classifier
    head is discarded afterwards."""
    if steps <= 0 or dataset.labels is None:
        return
    labels = torch.tensor(dataset.labels, dtype=torch.long)
    n_classes = int(labels.max().item()) + 1
    head = EqualizedLinear(embedder.head.weight.shape[0], n_classes)
    opt = torch.optim.Adam(list(embedder.parameters()) + list(head.parameters()), lr=lr)
    n = len(dataset)
    b = min(batch_size, n)
    for _ in range(steps):
        idx = torch.from_numpy(rng.integers(0, n, size=b))
        logits = head(embedder(dataset.images[idx]))
        loss = F.cross_entropy(logits, labels[idx])
        opt.zero_grad()
        loss.backward()
        opt.step()


@dataclass
class Batch:
    i_gt: torch.Tensor
    i_exe: torch.Tensor
    i_in: torch.Tensor
    mask: torch.Tensor
    m_w: torch.Tensor
    m_w_rev: torch.Tensor
    z1: torch.Tensor
    z2: torch.Tensor
    same_flags: np.ndarray


def assemble_batch(dataset: ImageDataset, rng: np.random.Generator, cfg: TrainConfig,
                   sampler: EpochSampler | None = None) -> Batch:
    """Draw one training batch.

    Per sample: with probability tau the exemplar is the sample's own
    ground truth (flagged); otherwise an independent uniform draw from the
    dataset. Holes come from the free-form sampler; weight masks are
    derived with the configured Gaussian.
    """
    if len(dataset) == 0:
        raise ParameterError("dataset is empty")
    n = len(dataset)
    b = cfg.batch_size
    res = cfg.resolution

    gt_idx = sampler.take(b) if sampler is not None else rng.integers(0, n, size=b).tolist()
    r_draws = rng.random(b)
    exe_idx = rng.integers(0, n, size=b)
    same_flags = r_draws <= cfg.tau
    exe_idx = np.where(same_flags, np.asarray(gt_idx), exe_idx)

    masks_np = np.stack([sample_freeform(rng, res, res, cfg.brush)[:, :, 0] for _ in range(b)])
    m_w_np = np.stack([
        confidence_weight(m[:, :, None], cfg.blur_kernel, cfg.blur_sigma)[:, :, 0]
        for m in masks_np
    ])
    m_rev_np = np.stack([
        reverse_weight(w[:, :, None], m[:, :, None])[:, :, 0]
        for w, m in zip(m_w_np, masks_np)
    ])

    z1 = torch.from_numpy(rng.standard_normal((b, 512)).astype(np.float32))
    z2 = torch.from_numpy(rng.standard_normal((b, 512)).astype(np.float32))

    i_gt = dataset.images[torch.tensor(gt_idx)]
    i_exe = dataset.images[torch.from_numpy(exe_idx)]
    mask = torch.from_numpy(masks_np[:, None].astype(np.float32))
    i_in = i_gt * (1.0 - mask)
    return Batch(
        i_gt=i_gt,
        i_exe=i_exe,
        i_in=i_in,
        mask=mask,
        m_w=torch.from_numpy(m_w_np[:, None].astype(np.float32)),
        m_w_rev=torch.from_numpy(m_rev_np[:, None].astype(np.float32)),
        z1=z1,
        z2=z2,
        same_flags=same_flags,
    )


@dataclass
class TrainState:
    cfg: TrainConfig
    models: ModelBundle
    opt_g: torch.optim.Adam
    opt_d: torch.optim.Adam
    rng: np.random.Generator
    sampler: EpochSampler
    w_avg: WAvgTracker
    step: int = 0
    frozen_hashes: dict = field(default_factory=dict)
    log_path: str | None = None
    _log_fh: object = None

    def log_record(self, step: int, name: str, value: float) -> None:
        if self._log_fh is not None:
            self._log_fh.write(json.dumps({"step": step, "name": name, "value": value}) + "\n")

    def close(self) -> None:
        if self._log_fh is not None:
            self._log_fh.flush()
            self._log_fh.close()
            self._log_fh = None


def init_state(cfg: TrainConfig, dataset: ImageDataset, run_dir: str | None = None) -> TrainState:
    """Build models, pre-train and freeze the embedding networks, and open
    the loss log. The RNG stream starts after pre-training draws."""
    if cfg.deterministic:
        torch.set_num_threads(1)
    run_dir = run_dir or cfg.run_dir
    os.makedirs(run_dir, exist_ok=True)
    models = build_models(cfg)
    rng = np.random.default_rng(cfg.seed)

    pretrain_style_encoder(models.style_encoder, models.generator, dataset,
                           cfg.encoder_pretrain_steps, rng)
    pretrain_identity_embedder(models.identity_net, dataset,
                               cfg.identity_pretrain_steps, rng)
    freeze(models.style_encoder)
    freeze(models.identity_net)
    freeze(models.perceptual)

    opt_g = torch.optim.Adam(
        list(models.generator.parameters()) + list(models.mapper.parameters()),
        lr=cfg.lr, betas=(cfg.beta1, cfg.beta2),
    )
    opt_d = torch.optim.Adam(models.discriminator.parameters(),
                             lr=cfg.lr, betas=(cfg.beta1, cfg.beta2))
    state = TrainState(
        cfg=cfg,
        models=models,
        opt_g=opt_g,
        opt_d=opt_d,
        rng=rng,
        sampler=EpochSampler(len(dataset), rng),
        w_avg=WAvgTracker(decay=cfg.w_avg_decay),
        frozen_hashes=models.frozen_hashes(),
        log_path=os.path.join(run_dir, "losses.ndjson"),
    )
    state._log_fh = open(state.log_path, "a", encoding="utf-8")
    return state


def _check_finite(state: TrainState, run_dir: str, **values: float) -> None:
    bad = {k: v for k, v in values.items() if not np.isfinite(v)}
    if bad:
        snap = os.path.join(run_dir, "diagnostic.ckpt")
        save_checkpoint(snap, state)
        raise NumericError(
            f"non-finite loss at step {state.step}: {bad}; snapshot saved to {snap}"
        )


def train_step(state: TrainState, batch: Batch, run_dir: str | None = None) -> TrainState:
    """One alternating update: generator plus mapping network, then critic."""
    cfg = state.cfg
    m = state.models
    phi = cfg.phi_vector()
    b = batch.i_gt.shape[0]
    run_dir = run_dir or cfg.run_dir

    # --- generator and mapping network ---------------------------------
    set_requires_grad(m.discriminator, False)
    w_exe = m.style_encoder(batch.i_exe)
    w_tilde = mixing_regularization(m.mapper, batch.z1, batch.z2, state.rng, cfg.mix_prob)
    w_hat = mix_styles(w_exe, w_tilde, phi)
    noise = sample_decoder_noise(state.rng, b, m.generator.cfg)
    i_pred = m.generator(batch.i_in, batch.mask, w_hat, noise)
    i_out = composite(batch.i_in, i_pred, batch.mask)

    l_adv = adv_loss_g(m.discriminator(i_out))
    l_id = identity_loss(i_out, batch.i_exe, m.identity_net)
    l_lp = lpips_loss(svgl_apply(i_out, batch.m_w), batch.i_gt, m.perceptual, batch.same_flags)
    l_attr = attribute_loss(svgl_apply(i_out, batch.m_w_rev), w_hat, phi, m.style_encoder)
    total_g = total_objective(LossParts(l_adv, l_id, l_lp, l_attr), cfg.weights)
    _check_finite(state, run_dir, adv_g=l_adv.item(), identity=l_id.item(),
                  lpips=l_lp.item(), attribute=l_attr.item())

    state.opt_g.zero_grad()
    total_g.backward()
    state.opt_g.step()
    state.w_avg.update(w_tilde[:, 0])
    set_requires_grad(m.discriminator, True)

    # --- critic ----------------------------------------------------------
    logits_real = m.discriminator(batch.i_gt)
    logits_fake = m.discriminator(i_out.detach())
    d_adv = adv_loss_d(logits_real, logits_fake)
    r1_value = 0.0
    d_total = d_adv
    if cfg.weights.gamma > 0 and state.step % cfg.d_reg_every == 0:
        r1 = r1_penalty(m.discriminator, batch.i_gt, cfg.weights.gamma)
        r1_value = float(r1.item())
        d_total = d_adv + r1 * cfg.d_reg_every  # lazy cadence compensation
    _check_finite(state, run_dir, adv_d=d_adv.item(), r1=r1_value)

    state.opt_d.zero_grad()
    d_total.backward()
    state.opt_d.step()

    values = {
        "adv_g": l_adv.item(), "identity": l_id.item(), "lpips": l_lp.item(),
        "attribute": l_attr.item(), "total_g": total_g.item(),
        "adv_d": d_adv.item(), "r1": r1_value, "total_d": d_total.item(),
    }
    for name in LOG_TERMS:
        state.log_record(state.step, name, values[name])
    state.step += 1
    return state


# --- checkpointing -----------------------------------------------------------

_MODEL_PREFIXES = (
    ("g", "generator"), ("f", "mapper"), ("d", "discriminator"),
    ("e", "style_encoder"), ("r", "identity_net"), ("p", "perceptual"),
)


def _optimizer_tensors(opt: torch.optim.Adam, prefix: str) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    sd = opt.state_dict()
    for idx, st in sd["state"].items():
        for key in ("exp_avg", "exp_avg_sq", "step"):
            t = st[key]
            out[f"{prefix}/{idx}/{key}"] = t.detach().cpu().numpy()
    return out


def _restore_optimizer(opt: torch.optim.Adam, tensors: dict[str, np.ndarray], prefix: str) -> None:
    params = [p for g in opt.param_groups for p in g["params"]]
    state: dict = {}
    for idx in range(len(params)):
        keys = {k: f"{prefix}/{idx}/{k}" for k in ("exp_avg", "exp_avg_sq", "step")}
        if keys["exp_avg"] not in tensors:
            continue
        state[idx] = {
            "exp_avg": torch.from_numpy(tensors[keys["exp_avg"]].copy()),
            "exp_avg_sq": torch.from_numpy(tensors[keys["exp_avg_sq"]].copy()),
            "step": torch.from_numpy(tensors[keys["step"]].copy()).reshape(()),
        }
    sd = opt.state_dict()
    sd["state"] = state
    opt.load_state_dict(sd)


def save_checkpoint(path, state: TrainState) -> str:
    tensors: dict[str, np.ndarray] = {}
    for prefix, attr in _MODEL_PREFIXES:
        sd = getattr(state.models, attr).state_dict()
        for name, t in sd.items():
            tensors[f"{prefix}/{name}"] = t.detach().cpu().numpy()
    tensors.update(_optimizer_tensors(state.opt_g, "opt_g"))
    tensors.update(_optimizer_tensors(state.opt_d, "opt_d"))
    tensors["w_avg"] = state.w_avg.state()
    meta = {
        "version": 1,
        "step": state.step,
        "config": train_config_to_flat(state.cfg),
        "rng": state.rng.bit_generator.state,
        "sampler": state.sampler.state(),
        "w_avg_initialized": state.w_avg.initialized,
        "frozen_hashes": state.frozen_hashes,
    }
    container.save(path, tensors, meta)
    return str(path)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    return container.load(path)


def restore_state(state: TrainState, tensors: dict[str, np.ndarray], meta: dict) -> TrainState:
    """Load checkpoint contents into an initialized state in place."""
    for prefix, attr in _MODEL_PREFIXES:
        module = getattr(state.models, attr)
        sd = {
            name[len(prefix) + 1:]: torch.from_numpy(arr.copy())
            for name, arr in tensors.items()
            if name.startswith(prefix + "/")
        }
        module.load_state_dict(sd)
    _restore_optimizer(state.opt_g, tensors, "opt_g")
    _restore_optimizer(state.opt_d, tensors, "opt_d")
    state.w_avg.load(tensors["w_avg"])
    state.w_avg.initialized = bool(meta.get("w_avg_initialized", True))
    state.rng.bit_generator.state = meta["rng"]
    state.sampler.load(meta["sampler"])
    state.step = int(meta["step"])
    state.frozen_hashes = dict(meta["frozen_hashes"])
    return state


def train(cfg: TrainConfig, dataset: ImageDataset, resume_from: str | None = None,
          run_dir: str | None = None) -> TrainState:
    """Run the configured number of steps; returns the final state after
    writing the last checkpoint to ``<run_dir>/ckpt_final.ckpt``."""
    run_dir = run_dir or cfg.run_dir
    state = init_state(cfg, dataset, run_dir)
    if resume_from is not None:
        tensors, meta = load_checkpoint(resume_from)
        restore_state(state, tensors, meta)
        if state.frozen_hashes != state.models.frozen_hashes():
            raise NumericError("frozen network weights changed across resume")
    try:
        while state.step < cfg.total_steps:
            batch = assemble_batch(dataset, state.rng, cfg, state.sampler)
            train_step(state, batch, run_dir)
            current = state.models.frozen_hashes()
            if current != state.frozen_hashes:
                raise NumericError(f"frozen network weights changed at step {state.step}")
            if cfg.checkpoint_every > 0 and state.step % cfg.checkpoint_every == 0:
                save_checkpoint(os.path.join(run_dir, f"ckpt_{state.step:07d}.ckpt"), state)
        save_checkpoint(os.path.join(run_dir, "ckpt_final.ckpt"), state)
    finally:
        state.close()
    return state
