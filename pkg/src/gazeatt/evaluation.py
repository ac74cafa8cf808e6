"""Evaluation protocols and baselines.

Heatmap metrics score cells of the predicted grid: a cell is positive when
it contains at least one annotated point, and (score, label) pairs are
pooled across images before the ROC sweep, where tied scores share a
threshold. Average precision ranks by likelihood and keeps input order
among ties.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch

from . import kernels
from .data import INOUT_DOMAINS, AttentionSample, cell_center, quantize_target
from .geometry import angular_errors
from .model import AttentionNet, ConfigError, combine


class MetricError(ValueError):
    pass


@dataclass
class EvalConfig:
    grid_sizes: tuple = (2, 5)
    gating_threshold: float = 0.5
    heatmap_combine: str = "weighting"
    baseline: str = "none"
    seed: int = 0
    batch_size: int = 64

    def problems(self) -> list[str]:
        out = []
        if any(int(n) < 1 for n in self.grid_sizes):
            out.append("eval.grid_sizes must all be >= 1")
        if not 0.0 <= self.gating_threshold <= 1.0:
            out.append("eval.gating_threshold must lie in [0, 1]")
        if self.heatmap_combine not in ("weighting", "gating"):
            out.append("eval.heatmap_combine must be 'weighting' or 'gating'")
        if self.baseline not in ("none", "random", "center"):
            out.append("eval.baseline must be none, random or center")
        return out


# ------------------------------------------------------------------ metrics


def _points(p):
    a = np.asarray(p, dtype=np.float64).reshape(-1, 2)
    if a.shape[0] == 0:
        raise MetricError("annotation set is empty")
    return a


def heatmap_auc(heatmaps, annotations, grid: Optional[int] = None) -> float:
    """Pooled cell-level ROC AUC.

    ``heatmaps`` is (N, g, g); ``annotations[i]`` is a point or a list of
    points in normalized coordinates.
    """
    heatmaps = np.asarray(heatmaps, dtype=np.float64)
    if heatmaps.ndim == 2:
        heatmaps = heatmaps[None]
    grid = grid or heatmaps.shape[-1]
    if len(annotations) != heatmaps.shape[0]:
        raise MetricError("one annotation set per heatmap is required")
    if len(annotations) == 0:
        raise MetricError("no annotated images")
    labels = np.zeros((heatmaps.shape[0], grid * grid))
    for i, pts in enumerate(annotations):
        for p in _points(pts):
            labels[i, quantize_target(p, grid)] = 1.0
    # clip: summation order can overshoot 1 by an ulp
    return min(1.0, max(0.0, kernels.roc_auc(heatmaps.reshape(-1), labels.reshape(-1))))


def l2_and_min_distance(heatmap, annotations) -> tuple[float, float]:
    """Distance from the argmax cell center (lowest index on ties) to the
    mean annotation, and to the nearest annotation."""
    heatmap = np.asarray(heatmap, dtype=np.float64)
    g = heatmap.shape[-1]
    pts = _points(annotations)
    pred = np.array(cell_center(int(np.argmax(heatmap.reshape(-1))), g))
    l2 = float(np.linalg.norm(pts.mean(axis=0) - pred))
    mind = float(np.min(np.linalg.norm(pts - pred, axis=1)))
    return l2, mind


def aggregation_matrix(fine: int, coarse: int) -> np.ndarray:
    """(coarse, fine) matrix of the fraction of each fine interval covered
    by each coarse interval on [0, 1]."""
    if coarse > fine:
        raise ConfigError(f"grid size {coarse} exceeds the heatmap grid {fine}")
    a = np.zeros((coarse, fine))
    for i in range(coarse):
        lo, hi = i / coarse, (i + 1) / coarse
        for j in range(fine):
            ov = min(hi, (j + 1) / fine) - max(lo, j / fine)
            if ov > 0:
                a[i, j] = ov * fine
    return a


def aggregate_map(m, n: int) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    a = aggregation_matrix(m.shape[-1], n)
    return a @ m @ a.T


def grid_classification(fixation_maps, likelihoods, inside, targets, n: int,
                        threshold: float = 0.5) -> tuple[float, float]:
    """Precision and recall of the positive-cell decision on an n x n grid.

    An image predicts the argmax aggregated cell when its likelihood reaches
    ``threshold`` and predicts nothing otherwise; its true cell is the one
    containing the target when inside == 1. Precision is 0 when nothing
    fires, recall is 0 when nothing is inside.
    """
    fixation_maps = np.asarray(fixation_maps, dtype=np.float64)
    correct = fired = positives = 0
    a = aggregation_matrix(fixation_maps.shape[-1], n)
    for m, lk, ins, tgt in zip(fixation_maps, likelihoods, inside, targets):
        truth = quantize_target(tgt, n) if ins == 1 else None
        positives += truth is not None
        if lk >= threshold:
            fired += 1
            pred = int(np.argmax((a @ m @ a.T).reshape(-1)))
            correct += pred == truth
    precision = correct / fired if fired else 0.0
    recall = correct / positives if positives else 0.0
    return precision, recall


def fixation_ap(likelihoods, inside) -> float:
    labels = np.asarray(inside, dtype=np.float64)
    if labels.size == 0 or labels.sum() == 0:
        raise MetricError("average precision is undefined without positive samples")
    return min(1.0, kernels.average_precision(np.asarray(likelihoods, dtype=np.float64), labels))


def mean_angular_error(pred, true) -> float:
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 2)
    if pred.shape[0] == 0:
        raise MetricError("no angle-labeled samples")
    return float(np.mean(angular_errors(pred, true)))


def baseline_heatmap(kind: str, grid: int, rng=None, sigma: float = 0.15) -> np.ndarray:
    if kind == "random":
        rng = rng if rng is not None else np.random.default_rng()
        z = rng.standard_normal(grid * grid)
        e = np.exp(z - z.max())
        return (e / e.sum()).reshape(grid, grid)
    if kind == "center":
        c = (np.arange(grid) + 0.5) / grid
        d2 = (c[None, :] - 0.5) ** 2 + (c[:, None] - 0.5) ** 2
        h = np.exp(-d2 / (2 * sigma ** 2))
        return h / h.sum()
    raise ValueError(f"unknown baseline {kind!r}")


# ------------------------------------------------------------------ driver


@dataclass
class MetricReport:
    auc: Optional[float] = None
    l2_distance: Optional[float] = None
    min_distance: Optional[float] = None
    mean_angular_error_deg: Optional[float] = None
    grid_results: dict = field(default_factory=dict)
    fixation_ap: Optional[float] = None
    n_samples: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in
             ("auc", "l2_distance", "min_distance", "mean_angular_error_deg", "fixation_ap")
             if getattr(self, k) is not None}
        if self.grid_results:
            d["grid_results"] = {str(n): {"precision": p, "recall": r}
                                 for n, (p, r) in sorted(self.grid_results.items())}
        d["n_samples"] = dict(sorted(self.n_samples.items()))
        return d

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"


@dataclass
class Predictions:
    angle: np.ndarray
    heatmap: np.ndarray
    likelihood: np.ndarray


def predict(model: AttentionNet, samples: Sequence[AttentionSample], batch_size: int = 64,
            loader=None) -> Predictions:
    from .train import SampleLoader, collate

    loader = loader or SampleLoader(model.cfg, cache=False)
    dtype = next(model.parameters()).dtype
    g = model.cfg.heatmap_grid
    model.eval()
    angles, heats, lks = [], [], []
    with torch.no_grad():
        for i in range(0, len(samples), batch_size):
            b = collate(samples[i:i + batch_size], loader, dtype)
            out = model(b.scene, b.face, b.position)
            angles.append(out.angle.double().numpy())
            heats.append(torch.softmax(out.heatmap_logits.double(), 1).numpy().reshape(-1, g, g))
            lks.append(torch.sigmoid(out.fixation_logit.double()).numpy())
    if not samples:
        return Predictions(np.zeros((0, 2)), np.zeros((0, g, g)), np.zeros(0))
    return Predictions(np.concatenate(angles), np.concatenate(heats), np.concatenate(lks))


def evaluate_predictions(pred: Predictions, samples: Sequence[AttentionSample],
                         cfg: EvalConfig) -> tuple[MetricReport, list[dict]]:
    """Compute every metric whose labels exist in ``samples``."""
    rep = MetricReport()
    heat, lk = pred.heatmap, pred.likelihood
    g = heat.shape[-1]
    if cfg.baseline != "none":
        rng = np.random.default_rng(cfg.seed)
        heat = np.stack([baseline_heatmap(cfg.baseline, g, rng) for _ in samples]) if samples else heat
        lk = np.ones(len(samples))
    scored = combine(lk, heat, cfg.heatmap_combine, cfg.gating_threshold)
    gated = combine(lk, heat, "gating", cfg.gating_threshold)
    details = [{"id": s.id} for s in samples]

    in_idx = [i for i, s in enumerate(samples) if s.inside == 1 and s.target is not None]
    if in_idx:
        rep.auc = heatmap_auc(scored[in_idx], [samples[i].target for i in in_idx], g)
        dists = [l2_and_min_distance(scored[i], samples[i].target) for i in in_idx]
        rep.l2_distance = float(np.mean([d[0] for d in dists]))
        rep.min_distance = float(np.mean([d[1] for d in dists]))
        rep.n_samples["heatmap"] = len(in_idx)
        for i, (l2, md) in zip(in_idx, dists):
            details[i].update(l2=l2, min_distance=md)

    a_idx = [i for i, s in enumerate(samples) if s.gaze_angle is not None]
    if a_idx:
        truth = np.array([tuple(samples[i].gaze_angle) for i in a_idx])
        errs = angular_errors(pred.angle[a_idx], truth)
        rep.mean_angular_error_deg = float(np.mean(errs))
        rep.n_samples["angle"] = len(a_idx)
        for i, e in zip(a_idx, errs):
            details[i]["angular_error_deg"] = float(e)

    f_idx = [i for i, s in enumerate(samples) if s.inside is not None and s.domain in INOUT_DOMAINS]
    labels = [samples[i].inside for i in f_idx]
    # AP and grid recall need at least one in-frame subject
    if sum(labels) > 0:
        rep.fixation_ap = fixation_ap(lk[f_idx], labels)
        rep.n_samples["fixation"] = len(f_idx)
        gridable = [i for i in f_idx if samples[i].inside == 0 or samples[i].target is not None]
        for n in cfg.grid_sizes:
            rep.grid_results[int(n)] = grid_classification(
                gated[gridable], lk[gridable], [samples[i].inside for i in gridable],
                [samples[i].target if samples[i].inside == 1 else None for i in gridable],
                int(n), cfg.gating_threshold)
        rep.n_samples["grid"] = len(gridable)
    for i in f_idx:
        details[i]["likelihood"] = float(lk[i])
        details[i]["inside"] = samples[i].inside
    return rep, details


def evaluate(model: AttentionNet, samples: Sequence[AttentionSample], cfg: Optional[EvalConfig] = None):
    cfg = cfg or EvalConfig()
    for n in cfg.grid_sizes:
        if n > model.cfg.heatmap_grid:
            raise ConfigError(f"grid size {n} exceeds the model heatmap grid {model.cfg.heatmap_grid}")
    pred = predict(model, list(samples), cfg.batch_size)
    return evaluate_predictions(pred, list(samples), cfg)
