import json
import os

import numpy as np
import pytest
import torch

from exinpaint import container
from exinpaint.config import TrainConfig, train_config_to_flat
from exinpaint.embedders import module_param_hash
from exinpaint.errors import NumericError
from exinpaint.training import (
    LOG_TERMS,
    assemble_batch,
    build_models,
    init_state,
    load_checkpoint,
    restore_state,
    save_checkpoint,
    train,
    train_step,
)

from conftest import tiny_train_config


def _trainable_hashes(state):
    return {
        "g": module_param_hash(state.models.generator),
        "f": module_param_hash(state.models.mapper),
        "d": module_param_hash(state.models.discriminator),
    }


# --- batch assembly -----------------------------------------------------------

def test_assemble_tau_one_always_same(toy_dataset):
    cfg = tiny_train_config("unused", tau=1.0, batch_size=8)
    rng = np.random.default_rng(0)
    b = assemble_batch(toy_dataset, rng, cfg)
    assert b.same_flags.all()
    assert torch.equal(b.i_exe, b.i_gt)


def test_assemble_tau_zero_never_same(toy_dataset):
    cfg = tiny_train_config("unused", tau=0.0, batch_size=8)
    rng = np.random.default_rng(1)
    for _ in range(20):
        assert not assemble_batch(toy_dataset, rng, cfg).same_flags.any()


def test_assemble_shapes_and_input_zeroing(toy_dataset):
    cfg = tiny_train_config("unused", batch_size=4)
    b = assemble_batch(toy_dataset, np.random.default_rng(2), cfg)
    assert b.i_gt.shape == (4, 3, 16, 16)
    assert b.mask.shape == (4, 1, 16, 16)
    assert torch.equal(b.i_in, b.i_gt * (1 - b.mask))
    # weight masks complement each other inside the hole
    assert torch.allclose(b.m_w + b.m_w_rev, b.mask, atol=1e-6)
    assert (b.m_w[b.mask == 0] == 0).all()


def test_assemble_tau_rate_statistics(toy_dataset):
    cfg = tiny_train_config("unused", tau=0.1, batch_size=250, resolution=16)
    rng = np.random.default_rng(3)
    flags = np.concatenate([
        assemble_batch(toy_dataset, rng, cfg).same_flags for _ in range(8)
    ])
    assert abs(flags.mean() - 0.1) <= 0.02  # 2,000 draws; the 10k check runs in acceptance


# --- stepping -------------------------------------------------------------------

def test_one_step_updates_trainables_keeps_frozen(toy_dataset, tmp_path):
    cfg = tiny_train_config(str(tmp_path), total_steps=1)
    state = init_state(cfg, toy_dataset)
    before = _trainable_hashes(state)
    frozen_before = state.models.frozen_hashes()
    batch = assemble_batch(toy_dataset, state.rng, cfg, state.sampler)
    train_step(state, batch)
    after = _trainable_hashes(state)
    assert all(before[k] != after[k] for k in before)
    assert state.models.frozen_hashes() == frozen_before
    state.close()


def test_two_runs_same_seed_identical_after_10_steps(toy_dataset, tmp_path):
    hashes = []
    for run in range(2):
        cfg = tiny_train_config(str(tmp_path / f"run{run}"), total_steps=10)
        state = train(cfg, toy_dataset)
        hashes.append(_trainable_hashes(state))
    assert hashes[0] == hashes[1]


def test_resume_matches_uninterrupted(toy_dataset, tmp_path):
    full_cfg = tiny_train_config(str(tmp_path / "full"), total_steps=8)
    full = train(full_cfg, toy_dataset)

    half_cfg = tiny_train_config(str(tmp_path / "half"), total_steps=4)
    train(half_cfg, toy_dataset)
    resume_cfg = tiny_train_config(str(tmp_path / "half"), total_steps=8)
    resumed = train(resume_cfg, toy_dataset,
                    resume_from=os.path.join(str(tmp_path / "half"), "ckpt_final.ckpt"))

    assert _trainable_hashes(full) == _trainable_hashes(resumed)
    assert np.array_equal(full.w_avg.state(), resumed.w_avg.state())
    assert full.rng.bit_generator.state == resumed.rng.bit_generator.state


def test_zero_steps_checkpoint_equals_initialization(toy_dataset, tmp_path):
    cfg = tiny_train_config(str(tmp_path), total_steps=0)
    state = train(cfg, toy_dataset)
    fresh = init_state(cfg, toy_dataset, str(tmp_path / "fresh"))
    assert _trainable_hashes(state) == _trainable_hashes(fresh)
    assert state.step == 0
    fresh.close()


def test_checkpoint_roundtrip_byte_identical(toy_dataset, tmp_path):
    cfg = tiny_train_config(str(tmp_path), total_steps=2)
    state = train(cfg, toy_dataset)
    p1 = tmp_path / "a.ckpt"
    save_checkpoint(p1, state)

    # container-level: load then re-serialize without modification
    tensors, meta = load_checkpoint(p1)
    assert container.to_bytes(tensors, meta) == p1.read_bytes()

    # state-level: restore into a fresh state built from the same config
    state2 = init_state(tiny_train_config(str(tmp_path), total_steps=2),
                        toy_dataset, run_dir=str(tmp_path / "reload"))
    restore_state(state2, tensors, meta)
    p2 = tmp_path / "b.ckpt"
    save_checkpoint(p2, state2)
    assert p1.read_bytes() == p2.read_bytes()
    state2.close()


def test_loss_log_one_record_per_term_per_step(toy_dataset, tmp_path):
    cfg = tiny_train_config(str(tmp_path), total_steps=3)
    state = train(cfg, toy_dataset)
    with open(state.log_path, "r", encoding="utf-8") as fh:
        records = [json.loads(line) for line in fh]
    assert len(records) == 3 * len(LOG_TERMS)
    for step in range(3):
        names = [r["name"] for r in records if r["step"] == step]
        assert sorted(names) == sorted(LOG_TERMS)
    assert all(np.isfinite(r["value"]) for r in records)


def test_nonfinite_loss_aborts_with_snapshot(toy_dataset, tmp_path):
    cfg = tiny_train_config(str(tmp_path), total_steps=1)
    state = init_state(cfg, toy_dataset)
    with torch.no_grad():
        next(state.models.generator.parameters()).fill_(float("nan"))
    batch = assemble_batch(toy_dataset, state.rng, cfg, state.sampler)
    with pytest.raises(NumericError):
        train_step(state, batch)
    assert os.path.exists(os.path.join(str(tmp_path), "diagnostic.ckpt"))
    state.close()


def test_checkpoint_meta_contents(toy_dataset, tmp_path):
    cfg = tiny_train_config(str(tmp_path), total_steps=2)
    state = train(cfg, toy_dataset)
    tensors, meta = load_checkpoint(os.path.join(str(tmp_path), "ckpt_final.ckpt"))
    assert meta["step"] == 2
    assert meta["config"] == train_config_to_flat(cfg)
    assert meta["frozen_hashes"] == state.frozen_hashes
    assert "w_avg" in tensors


def test_lazy_r1_cadence_logged(toy_dataset, tmp_path):
    cfg = tiny_train_config(str(tmp_path), total_steps=3, d_reg_every=2)
    state = train(cfg, toy_dataset)
    with open(state.log_path, "r", encoding="utf-8") as fh:
        r1_values = {r["step"]: r["value"] for r in map(json.loads, fh) if r["name"] == "r1"}
    assert r1_values[0] > 0 and r1_values[2] > 0
    assert r1_values[1] == 0.0
