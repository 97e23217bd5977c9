"""Adversarial training loop: optimization schedule, init, checkpointing."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .models import (DiscriminatorModel, GeneratorModel, loss_d, loss_g,
                     loss_g_total, loss_mse, save_checkpoint, CHECKPOINT_VERSION)


@dataclass(frozen=True)
class TrainConfig:
    lr_g: float = 5.0e-4
    lr_d: float = 1.0e-4
    weight_decay: float = 1.0e-4
    beta1: float = 0.5
    beta2: float = 0.999
    cosine_period: int = 100
    lr_min: float = 1.0e-7
    epochs: int = 100
    batch_size: int = 8
    lam: float = 10.0
    init_std: float = 0.02
    seed: int = 0
    d_steps_per_g_step: int = 1

    def __post_init__(self):
        if self.lr_g <= 0 or self.lr_d <= 0 or self.lr_min <= 0:
            raise ValueError("learning rates must be positive")
        if self.lr_min >= self.lr_g or self.lr_min >= self.lr_d:
            raise ValueError("lr_min must be below both initial learning rates")


@dataclass
class TrainingSample:
    subject_id: str
    t1: np.ndarray
    pet: np.ndarray
    text: np.ndarray


def init_weights(model: nn.Module, mean: float = 0.0, std: float = 0.02,
                 seed: int = 0) -> nn.Module:
    """Gaussian init: conv/linear weights ~ N(mean, std^2), biases zero.

    Normalization-layer scales are drawn around 1 (N(1, std^2)) so the
    initial network does not collapse activations.
    """
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for m in model.modules():
            if isinstance(m, (nn.Conv3d, nn.ConvTranspose3d, nn.Linear)):
                m.weight.copy_(torch.normal(mean, std, m.weight.shape, generator=gen))
                if m.bias is not None:
                    m.bias.zero_()
            elif isinstance(m, (nn.BatchNorm3d, nn.InstanceNorm3d, nn.GroupNorm, nn.LayerNorm)):
                if m.weight is not None:
                    m.weight.copy_(torch.normal(1.0, std, m.weight.shape, generator=gen))
                if m.bias is not None:
                    m.bias.zero_()
    return model


def cosine_lr(epoch: int, lr0: float, lr_min: float, period: int) -> float:
    if not (0 <= epoch <= period):
        raise ValueError(f"epoch {epoch} outside [0, {period}]")
    return lr_min + (lr0 - lr_min) * (1.0 + math.cos(math.pi * epoch / period)) / 2.0


def _set_lr(optimizer: torch.optim.Optimizer, lr: float) -> None:
    for group in optimizer.param_groups:
        group["lr"] = lr


def _batch_tensors(samples: list[TrainingSample], idx: np.ndarray, dtype):
    t1 = torch.stack([torch.from_numpy(samples[i].t1.copy()) for i in idx]).to(dtype)[:, None]
    pet = torch.stack([torch.from_numpy(samples[i].pet.copy()) for i in idx]).to(dtype)[:, None]
    text = torch.stack([torch.from_numpy(samples[i].text.copy()) for i in idx]).to(dtype)
    return t1, pet, text


def write_history_csv(history: list[dict], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "loss_g", "loss_mse", "loss_d", "lr_g", "lr_d"])
        for row in history:
            w.writerow([row["epoch"], repr(row["loss_g"]), repr(row["loss_mse"]),
                        repr(row["loss_d"]), repr(row["lr_g"]), repr(row["lr_d"])])
    return path


class TrainingDiverged(RuntimeError):
    pass


def train_gan(samples: list[TrainingSample], g: GeneratorModel, d: DiscriminatorModel,
              cfg: TrainConfig, out_dir: str | Path | None = None,
              val_samples: list[TrainingSample] | None = None,
              resume_state: dict | None = None) -> list[dict]:
    """Alternating D/G optimization with AdamW and cosine-annealed rates.

    Returns per-epoch loss history. Deterministic given cfg.seed: batch order
    is derived from (seed, epoch), so resuming from a state checkpoint
    continues identically to an uninterrupted run.
    """
    if not samples:
        raise ValueError("empty training cohort")
    dtype = next(g.parameters()).dtype
    opt_g = torch.optim.AdamW(g.parameters(), lr=cfg.lr_g,
                              betas=(cfg.beta1, cfg.beta2), weight_decay=cfg.weight_decay)
    opt_d = torch.optim.AdamW(d.parameters(), lr=cfg.lr_d,
                              betas=(cfg.beta1, cfg.beta2), weight_decay=cfg.weight_decay)

    history: list[dict] = []
    start_epoch = 0
    if resume_state is not None:
        g.load_state_dict(resume_state["generator"])
        d.load_state_dict(resume_state["discriminator"])
        opt_g.load_state_dict(resume_state["opt_g"])
        opt_d.load_state_dict(resume_state["opt_d"])
        history = list(resume_state["history"])
        start_epoch = int(resume_state["epoch"]) + 1

    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    best_val = math.inf
    kept: list[Path] = []

    g.train()
    d.train()
    period = cfg.cosine_period  # epochs past one period stay at lr_min
    for epoch in range(start_epoch, cfg.epochs):
        lr_g_now = cosine_lr(min(epoch, period), cfg.lr_g, cfg.lr_min, period)
        lr_d_now = cosine_lr(min(epoch, period), cfg.lr_d, cfg.lr_min, period)
        _set_lr(opt_g, lr_g_now)
        _set_lr(opt_d, lr_d_now)

        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(samples))
        sums = {"loss_g": 0.0, "loss_mse": 0.0, "loss_d": 0.0}
        n_batches = 0
        for b0 in range(0, len(order), cfg.batch_size):
            idx = order[b0 : b0 + cfg.batch_size]
            t1, pet, text = _batch_tensors(samples, idx, dtype)

            for _ in range(cfg.d_steps_per_g_step):
                with torch.no_grad():
                    fake = g(t1, text)
                d_real = d(pet, t1, text)
                d_fake = d(fake, t1, text)
                ld = loss_d(d_real, d_fake)
                opt_d.zero_grad(set_to_none=True)
                ld.backward()
                opt_d.step()

            fake = g(t1, text)
            lg = loss_g(d(fake, t1, text))
            lmse = loss_mse(fake, pet)
            lt = loss_g_total(lg, lmse, cfg.lam)
            opt_g.zero_grad(set_to_none=True)
            opt_d.zero_grad(set_to_none=True)  # discard D grads from the G pass
            lt.backward()
            opt_g.step()

            vals = {"loss_g": lg.item(), "loss_mse": lmse.item(), "loss_d": ld.item()}
            if any(not math.isfinite(v) for v in vals.values()):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch {b0 // cfg.batch_size}: {vals}")
            for k, v in vals.items():
                sums[k] += v
            n_batches += 1

        row = {"epoch": epoch, "lr_g": lr_g_now, "lr_d": lr_d_now}
        row.update({k: v / n_batches for k, v in sums.items()})
        history.append(row)

        if out_dir is not None:
            val_mse = None
            if val_samples:
                val_mse = _validation_mse(g, val_samples, dtype)
            _write_epoch_checkpoints(out_dir, g, d, opt_g, opt_d, epoch, history, kept)
            if val_mse is not None and val_mse < best_val:
                best_val = val_mse
                save_checkpoint(out_dir / "generator_best.pt", g, "generator",
                                extra={"epoch": epoch, "val_mse": val_mse})
            write_history_csv(history, out_dir / "history.csv")

    if out_dir is not None:
        save_checkpoint(out_dir / "generator_final.pt", g, "generator")
        save_checkpoint(out_dir / "discriminator_final.pt", d, "discriminator")
    return history


def _validation_mse(g: GeneratorModel, val_samples, dtype) -> float:
    g.eval()
    total = 0.0
    with torch.no_grad():
        for s in val_samples:
            t1 = torch.from_numpy(s.t1.copy()).to(dtype)[None, None]
            text = torch.from_numpy(s.text.copy()).to(dtype)[None]
            pet = torch.from_numpy(s.pet.copy()).to(dtype)[None, None]
            total += loss_mse(g(t1, text), pet).item()
    g.train()
    return total / len(val_samples)


def _write_epoch_checkpoints(out_dir: Path, g, d, opt_g, opt_d, epoch, history,
                             kept: list[Path]) -> None:
    state = {
        "format_version": CHECKPOINT_VERSION,
        "epoch": epoch,
        "generator": g.state_dict(),
        "discriminator": d.state_dict(),
        "opt_g": opt_g.state_dict(),
        "opt_d": opt_d.state_dict(),
        "history": history,
    }
    path = out_dir / f"state_epoch{epoch:04d}.pt"
    torch.save(state, path)
    kept.append(path)
    while len(kept) > 3:
        old = kept.pop(0)
        old.unlink(missing_ok=True)


def load_train_state(path: str | Path) -> dict:
    state = torch.load(path, map_location="cpu", weights_only=False)
    if state.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported state version {state.get('format_version')}")
    return state
