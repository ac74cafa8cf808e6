"""Training losses: L1 angle, heatmap cross-entropy, fixation BCE, and the
project-and-compare cosine loss tying the angle head to in-frame targets.

Every loss returns ``(value, count)``; ``value`` is None when no sample in
the batch is eligible, which is how absent terms are represented.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import torch
import torch.nn.functional as F

from .geometry import EPS_2D

TASKS = ("angle", "heatmap", "fixation", "pnc")


@dataclass
class LossConfig:
    w_angle: float = 1.0
    w_heatmap: float = 1.0
    w_fixation: float = 1.0
    w_pnc: float = 1.0
    pnc_epsilon: float = EPS_2D

    def __post_init__(self):
        for t in TASKS:
            if getattr(self, f"w_{t}") < 0:
                raise ValueError(f"loss weight w_{t} must be >= 0")

    def weight(self, task: str) -> float:
        return getattr(self, f"w_{task}")


@dataclass
class LossReport:
    angle_loss: float = 0.0
    heatmap_loss: float = 0.0
    fixation_loss: float = 0.0
    pnc_loss: float = 0.0
    total: float = 0.0
    counts: dict = field(default_factory=lambda: {t: 0 for t in TASKS})

    def to_json(self, **extra) -> str:
        d = dict(extra)
        d.update(asdict(self))
        return json.dumps(d, sort_keys=True)


def angle_loss(pred, truth):
    """Mean over samples of |d yaw| + |d pitch| (radians)."""
    n = pred.shape[0]
    if n == 0:
        return None, 0
    return (pred - truth).abs().sum(dim=1).mean(), n


def heatmap_loss(logits, cells):
    n = logits.shape[0]
    if n == 0:
        return None, 0
    cells = torch.as_tensor(cells, dtype=torch.long)
    k = logits.shape[1]
    if bool(((cells < 0) | (cells >= k)).any()):
        raise ValueError(f"target cell index out of range [0, {k})")
    return F.cross_entropy(logits, cells), n


def fixation_loss(logits, inside):
    n = logits.shape[0]
    if n == 0:
        return None, 0
    inside = torch.as_tensor(inside, dtype=logits.dtype)
    if bool(((inside != 0) & (inside != 1)).any()):
        raise ValueError("inside labels must be 0 or 1")
    return F.binary_cross_entropy_with_logits(logits, inside), n


def projected_direction(angles):
    """Image-plane gaze direction (x right, y down) for (N, 2) yaw/pitch."""
    yaw, pitch = angles[:, 0], angles[:, 1]
    return torch.stack([torch.cos(pitch) * torch.sin(yaw), torch.sin(pitch)], dim=1)


def project_and_compare_loss(pred_angles, head, target, eps: float = EPS_2D):
    """Mean cosine distance between the projected predicted gaze and the
    head->target displacement, over samples where both are non-degenerate.
    """
    head = torch.as_tensor(head, dtype=pred_angles.dtype)
    target = torch.as_tensor(target, dtype=pred_angles.dtype)
    if pred_angles.shape[0] == 0:
        return None, 0
    u = projected_direction(pred_angles)
    d = target - head
    nu = torch.linalg.vector_norm(u, dim=1)
    nd = torch.linalg.vector_norm(d, dim=1)
    ok = (nu.detach() > eps) & (nd > eps)
    n = int(ok.sum())
    if n == 0:
        return None, 0
    cos = (u[ok] * d[ok]).sum(dim=1) / (nu[ok] * nd[ok])
    return (1.0 - cos.clamp(-1.0, 1.0)).mean(), n


def combine(parts: dict, cfg: Optional[LossConfig] = None) -> LossReport:
    """Weighted sum of the present terms.

    ``parts`` maps task name to ``(value, count)``; a None value or a zero
    count means the term is absent.
    """
    cfg = cfg or LossConfig()
    rep = LossReport()
    total = 0.0
    for t in TASKS:
        value, count = parts.get(t, (None, 0))
        if value is None or count == 0:
            continue
        v = float(value.detach()) if torch.is_tensor(value) else float(value)
        setattr(rep, f"{t}_loss", v)
        rep.counts[t] = int(count)
        total += cfg.weight(t) * v
    rep.total = total
    return rep
