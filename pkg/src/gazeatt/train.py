"""Cross-domain training with selective back-propagation.

Each step runs one forward pass over a mixed batch, then up to four
sub-updates in fixed order (angle, heatmap, fixation, pnc). A sub-update
differentiates only its own loss, hands gradients only to the parameter
groups in its mask, and steps Adam; parameters without a gradient are
skipped by Adam, so their values and moment estimates stay untouched.

Batch-norm running statistics are buffers, not parameters: every forward in
training mode refreshes them in all pathways.
"""
from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from . import losses as L
from .data import INOUT_DOMAINS, AttentionSample, crop_face, quantize_position, quantize_target, read_manifest, resize_scene
from .model import AttentionNet, ModelConfig, parameter_groups, save_checkpoint

log = logging.getLogger(__name__)

UPDATE_MASKS = {
    "angle": ("b", "d"),
    "heatmap": ("a", "b", "c"),
    "fixation": ("e",),
    "pnc": ("b", "d"),
}


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 2.5e-4
    batch_size: int = 36
    epochs: int = 12
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    loss: L.LossConfig = field(default_factory=L.LossConfig)
    seed: int = 0
    mixture: list = field(default_factory=list)  # [(manifest path, domain), ...]
    log_every: int = 10
    checkpoint_every: int = 500
    cache_images: bool = True

    def problems(self) -> list[str]:
        out = []
        if not self.learning_rate > 0:
            out.append("train.learning_rate must be > 0")
        if self.batch_size < 1:
            out.append("train.batch_size must be >= 1")
        if self.epochs < 0:
            out.append("train.epochs must be >= 0")
        if self.optimizer != "adam":
            out.append("train.optimizer must be 'adam'")
        if self.log_every < 1:
            out.append("train.log_every must be >= 1")
        if self.checkpoint_every < 0:
            out.append("train.checkpoint_every must be >= 0")
        return out


# ------------------------------------------------------------------ batching


class SampleLoader:
    """Turns samples into network-ready uint8 arrays, optionally memoized."""

    def __init__(self, model_cfg: ModelConfig, cache: bool = True):
        self.cfg = model_cfg
        self.cache = {} if cache else None

    def arrays(self, s: AttentionSample):
        key = id(s)
        if self.cache is not None and key in self.cache:
            return self.cache[key]
        scene = s.load_scene()
        side = self.cfg.input_side
        out = (resize_scene(scene, side), crop_face(scene, s.face_bbox, side))
        if self.cache is not None:
            self.cache[key] = out
        return out


@dataclass
class Batch:
    scene: torch.Tensor
    face: torch.Tensor
    position: torch.Tensor
    angle: torch.Tensor       # (B, 2), zeros where absent
    has_angle: torch.Tensor   # (B,) bool
    inside: torch.Tensor      # (B,) float
    has_inside: torch.Tensor
    cell: torch.Tensor        # (B,) long, -1 where no in-frame target
    head: torch.Tensor        # (B, 2)
    target: torch.Tensor      # (B, 2)
    in_target: torch.Tensor   # (B,) bool: inside == 1 with a target

    def __len__(self):
        return self.scene.shape[0]


def collate(samples: Sequence[AttentionSample], loader: SampleLoader, dtype=torch.float32) -> Batch:
    cfg = loader.cfg
    scenes, faces = zip(*(loader.arrays(s) for s in samples))
    to_t = lambda a: torch.from_numpy(np.stack(a)).permute(0, 3, 1, 2).to(dtype) / 255.0
    n = len(samples)
    npos = cfg.position_grid ** 2
    position = torch.zeros(n, npos, dtype=dtype)
    angle = torch.zeros(n, 2, dtype=dtype)
    has_angle = torch.zeros(n, dtype=torch.bool)
    inside = torch.zeros(n, dtype=dtype)
    has_inside = torch.zeros(n, dtype=torch.bool)
    cell = torch.full((n,), -1, dtype=torch.long)
    head = torch.zeros(n, 2, dtype=dtype)
    target = torch.zeros(n, 2, dtype=dtype)
    in_target = torch.zeros(n, dtype=torch.bool)
    for i, s in enumerate(samples):
        hc = s.head_center
        hc = (min(max(hc[0], 0.0), 1.0), min(max(hc[1], 0.0), 1.0))
        position[i, quantize_position(hc, cfg.position_grid)] = 1.0
        head[i] = torch.tensor(hc, dtype=dtype)
        if s.gaze_angle is not None:
            angle[i] = torch.tensor(tuple(s.gaze_angle), dtype=dtype)
            has_angle[i] = True
        if s.inside is not None and s.domain in INOUT_DOMAINS:
            inside[i] = float(s.inside)
            has_inside[i] = True
        if s.inside == 1 and s.target is not None:
            target[i] = torch.tensor(s.target, dtype=dtype)
            cell[i] = quantize_target(s.target, cfg.heatmap_grid)
            in_target[i] = True
    return Batch(to_t(scenes), to_t(faces), position, angle, has_angle, inside, has_inside,
                 cell, head, target, in_target)


def make_epoch_schedule(mixture: Sequence[Sequence], batch_size: int, rng) -> list[np.ndarray]:
    """Shuffle every sample of every corpus together and cut into batches.

    Indices refer to the concatenation of the corpora in ``mixture`` order.
    The last partial batch is kept.
    """
    sizes = [len(c) for c in mixture]
    total = sum(sizes)
    if not mixture or total == 0:
        raise TrainingError("training mixture is empty")
    if batch_size < 1:
        raise TrainingError("batch_size must be >= 1")
    order = rng.permutation(total)
    return [order[i:i + batch_size] for i in range(0, total, batch_size)]


# ------------------------------------------------------------------ stepping


def make_optimizer(model: AttentionNet, cfg: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(model.parameters(), lr=cfg.learning_rate,
                            betas=(cfg.beta1, cfg.beta2), eps=cfg.adam_eps, foreach=False)


def task_losses(out, batch: Batch, loss_cfg: L.LossConfig) -> dict:
    """Per-task (loss, count) on the eligible subset of the batch."""
    a = batch.has_angle
    t = batch.in_target
    f = batch.has_inside
    return {
        "angle": L.angle_loss(out.angle[a], batch.angle[a]),
        "heatmap": L.heatmap_loss(out.heatmap_logits[t], batch.cell[t]),
        "fixation": L.fixation_loss(out.fixation_logit[f], batch.inside[f]),
        "pnc": L.project_and_compare_loss(out.angle[t], batch.head[t], batch.target[t],
                                          loss_cfg.pnc_epsilon),
    }


def training_step(model: AttentionNet, optimizer, batch: Batch, cfg: TrainConfig,
                  batch_index: int = 0, tasks: Sequence[str] = L.TASKS) -> L.LossReport:
    model.train()
    out = model(batch.scene, batch.face, batch.position)
    parts = task_losses(out, batch, cfg.loss)
    groups = parameter_groups(model)
    plan = []
    for task in L.TASKS:
        value, count = parts[task]
        if task not in tasks or value is None or count == 0:
            parts[task] = (None, 0)
            continue
        if not torch.isfinite(value):
            raise TrainingError(f"non-finite {task} loss ({float(value.detach())}) at batch {batch_index}")
        if cfg.loss.weight(task) > 0:
            plan.append(task)
    # all gradients are taken at the pre-step parameters, then applied in order
    grads = {}
    for i, task in enumerate(plan):
        params = [p for g in UPDATE_MASKS[task] for p in groups[g]]
        value = parts[task][0] * cfg.loss.weight(task)
        gs = torch.autograd.grad(value, params, retain_graph=i < len(plan) - 1, allow_unused=True)
        grads[task] = list(zip(params, gs))
    for task in plan:
        optimizer.zero_grad(set_to_none=True)
        for p, g in grads[task]:
            if g is not None:
                p.grad = g
        optimizer.step()
    optimizer.zero_grad(set_to_none=True)
    return L.combine(parts, cfg.loss)


# ------------------------------------------------------------------ fitting


def load_mixture(cfg: TrainConfig) -> list[list[AttentionSample]]:
    corpora = []
    for path, domain in cfg.mixture:
        samples = read_manifest(path)
        if domain:
            bad = [s.id for s in samples if s.domain != domain]
            if bad:
                raise TrainingError(f"{path}: expected domain {domain}, sample {bad[0]} differs")
        corpora.append(samples)
    return corpora


@dataclass
class FitResult:
    final_checkpoint: Path
    log_path: Path
    steps: int
    checkpoints: list


def fit(model: AttentionNet, cfg: TrainConfig, out_dir, corpora: Optional[list] = None) -> FitResult:
    """Train for ``cfg.epochs`` over the shuffled mixture.

    ``corpora`` (lists of samples) overrides ``cfg.mixture`` when given.
    Writes ``train_log.jsonl``, periodic ``checkpoints/step_*.pt`` and
    ``final.pt`` under ``out_dir``.
    """
    out_dir = Path(out_dir)
    (out_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
    if corpora is None:
        corpora = load_mixture(cfg)
    flat = [s for c in corpora for s in c]
    rng = np.random.default_rng(cfg.seed)
    loader = SampleLoader(model.cfg, cache=cfg.cache_images)
    optimizer = make_optimizer(model, cfg)
    dtype = next(model.parameters()).dtype
    log_path = out_dir / "train_log.jsonl"
    ckpts = []
    step = 0
    with open(log_path, "w", encoding="utf-8", newline="\n") as logf:
        for epoch in range(cfg.epochs):
            for bi, idx in enumerate(make_epoch_schedule(corpora, cfg.batch_size, rng)):
                batch = collate([flat[i] for i in idx], loader, dtype)
                rep = training_step(model, optimizer, batch, cfg, batch_index=bi)
                step += 1
                if step % cfg.log_every == 0:
                    logf.write(rep.to_json(step=step, epoch=epoch) + "\n")
                    logf.flush()
                if cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
                    p = out_dir / "checkpoints" / f"step_{step:06d}.pt"
                    save_checkpoint(p, model, step)
                    ckpts.append(p)
            log.info("epoch %d done (%d steps)", epoch + 1, step)
    final = out_dir / "final.pt"
    save_checkpoint(final, model, step)
    return FitResult(final, log_path, step, ckpts)
