"""Two-pathway attention network.

Scene image -> scene backbone (a); face crop -> face backbone (b).
Group (c) turns scene features, face features and the one-hot face position
into heatmap logits. Group (d) turns face features into (yaw, pitch).
Group (e) is a single linear layer reading the inputs of the last layers
of (c) and (d) and emitting the fixation logit.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from typing import NamedTuple, Optional

import numpy as np
import torch
from torch import nn

GROUP_NAMES = {
    "a": "scene_backbone",
    "b": "face_backbone",
    "c": "heatmap_head",
    "d": "angle_head",
    "e": "fixation_head",
}

_TOY_CHANNELS = (16, 32, 64, 64)
_DEPTHS = {
    "toy": ((64, 16, 1), (64, 16, 4)),
    "resnet50-like": ((512, 128, 1), (512, 128, 16)),
}


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    backbone: str = "toy"
    input_side: int = 227
    position_grid: int = 13
    heatmap_grid: int = 10
    scene_head_depths: Optional[tuple[int, int, int]] = None
    face_head_depths: Optional[tuple[int, int, int]] = None
    combine_mode: str = "weighting"
    gating_threshold: float = 0.5

    def __post_init__(self):
        if self.backbone not in _DEPTHS:
            raise ConfigError(f"backbone must be one of {sorted(_DEPTHS)}, got {self.backbone!r}")
        scene_d, face_d = _DEPTHS[self.backbone]
        if self.scene_head_depths is None:
            self.scene_head_depths = scene_d
        if self.face_head_depths is None:
            self.face_head_depths = face_d
        self.scene_head_depths = tuple(int(v) for v in self.scene_head_depths)
        self.face_head_depths = tuple(int(v) for v in self.face_head_depths)
        errors = self.problems()
        if errors:
            raise ConfigError("; ".join(errors))

    def problems(self) -> list[str]:
        out = []
        if self.position_grid < 1:
            out.append("position_grid must be >= 1")
        if self.heatmap_grid < 2:
            out.append("heatmap_grid must be >= 2")
        for name in ("scene_head_depths", "face_head_depths"):
            d = getattr(self, name)
            if len(d) != 3 or min(d) < 1:
                out.append(f"{name} must be three positive integers")
            elif not d[0] > d[1] > d[2]:
                out.append(f"{name} must be strictly decreasing, got {d}")
        if self.scene_head_depths[-1] != 1:
            out.append("last scene head depth must be 1")
        if self.combine_mode not in ("weighting", "gating"):
            out.append("combine_mode must be 'weighting' or 'gating'")
        if not 0.0 <= self.gating_threshold <= 1.0:
            out.append("gating_threshold must lie in [0, 1]")
        if self.input_side < 16:
            out.append("input_side must be >= 16")
        return out

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ModelConfig":
        kv = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            k, _, v = line.partition("=")
            kv[k.strip()] = v.strip()
        return cls.from_mapping(kv)

    @classmethod
    def from_mapping(cls, kv: dict) -> "ModelConfig":
        known = {f.name: f for f in fields(cls)}
        args = {}
        for k, v in kv.items():
            if k not in known:
                raise ConfigError(f"unknown model key {k!r}")
            if k in ("scene_head_depths", "face_head_depths"):
                if isinstance(v, str):
                    v = tuple(int(x) for x in v.split(","))
                args[k] = tuple(int(x) for x in v)
            elif k in ("input_side", "position_grid", "heatmap_grid"):
                args[k] = int(v)
            elif k == "gating_threshold":
                args[k] = float(v)
            else:
                args[k] = str(v)
        return cls(**args)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["scene_head_depths"] = list(self.scene_head_depths)
        d["face_head_depths"] = list(self.face_head_depths)
        return d


def _conv_bn_relu(cin, cout, k, stride=1, padding=0):
    return [nn.Conv2d(cin, cout, k, stride=stride, padding=padding, bias=False),
            nn.BatchNorm2d(cout), nn.ReLU(inplace=True)]


def toy_backbone() -> nn.Sequential:
    layers = []
    cin = 3
    for c in _TOY_CHANNELS:
        layers += _conv_bn_relu(cin, c, 3, stride=2, padding=1)
        cin = c
    return nn.Sequential(*layers)


def resnet50_backbone() -> nn.Sequential:
    """All conv stages of a randomly initialized ResNet-50."""
    from torchvision.models import resnet50

    r = resnet50(weights=None)
    return nn.Sequential(r.conv1, r.bn1, r.relu, r.maxpool, r.layer1, r.layer2, r.layer3, r.layer4)


def head_convs(cin, depths) -> nn.Sequential:
    """1x1 -> 3x3 -> 1x1, stride 1, no padding, each followed by BN + ReLU."""
    d1, d2, d3 = depths
    return nn.Sequential(*_conv_bn_relu(cin, d1, 1), *_conv_bn_relu(d1, d2, 3), *_conv_bn_relu(d2, d3, 1))


def spatial_resampling(fmap: int, grid: int) -> np.ndarray:
    """(grid^2, (fmap-2)^2) matrix averaging head-map cells onto a grid.

    Head-map cell j sits on backbone cell j+1 of ``fmap``, i.e. it covers
    [(j+1)/fmap, (j+2)/fmap] of the image along each axis. Rows are
    normalized to sum to one, so grid cells at the border (partly outside
    the head map's footprint) still average what they do see.
    """
    side = fmap - 2
    lo_s = (np.arange(side) + 1) / fmap
    hi_s = lo_s + 1.0 / fmap
    lo_g = np.arange(grid) / grid
    hi_g = lo_g + 1.0 / grid
    a = np.clip(np.minimum(hi_g[:, None], hi_s[None]) - np.maximum(lo_g[:, None], lo_s[None]), 0, None)
    # a grid cell entirely outside the footprint borrows its nearest head cell
    for i in np.flatnonzero(a.sum(1) == 0):
        c = (lo_g[i] + hi_g[i]) / 2
        a[i, np.argmin(np.abs((lo_s + hi_s) / 2 - c))] = 1.0
    a /= a.sum(1, keepdims=True)
    return np.kron(a, a)


class RawOutput(NamedTuple):
    angle: torch.Tensor           # (B, 2) yaw, pitch in radians
    heatmap_logits: torch.Tensor  # (B, grid^2)
    fixation_logit: torch.Tensor  # (B,)


class AttentionNet(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        make = toy_backbone if cfg.backbone == "toy" else resnet50_backbone
        self.scene_backbone = make()
        self.face_backbone = make()
        cb, fmap = self._probe_backbone()
        side = fmap - 2  # the unpadded 3x3 conv trims one cell per border
        if side < 1:
            raise ConfigError(
                f"input_side={cfg.input_side} gives a {fmap}x{fmap} backbone map; "
                "the head's unpadded 3x3 conv needs at least 3x3")
        self.map_side = side
        self.fmap_side = fmap
        f3 = cfg.face_head_depths[-1]
        n_pos = cfg.position_grid ** 2
        self.heat_in = side * side + f3 * side * side + n_pos
        self.angle_in = f3 * side * side
        self.scene_head = head_convs(cb, cfg.scene_head_depths)
        self.face_heat_head = head_convs(cb, cfg.face_head_depths)
        self.heat_fc = nn.Linear(self.heat_in, cfg.heatmap_grid ** 2)
        self.face_angle_head = head_convs(cb, cfg.face_head_depths)
        self.angle_fc = nn.Linear(self.angle_in, 2)
        self.fixation_fc = nn.Linear(self.heat_in + self.angle_in, 1)
        self._init_weights()

    def _probe_backbone(self):
        was = self.scene_backbone.training
        self.scene_backbone.eval()
        with torch.no_grad():
            y = self.scene_backbone(torch.zeros(1, 3, self.cfg.input_side, self.cfg.input_side))
        self.scene_backbone.train(was)
        return y.shape[1], y.shape[-1]

    def _init_weights(self):
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_normal_(m.weight, mode="fan_in", nonlinearity="relu")
            elif isinstance(m, nn.Linear):
                nn.init.kaiming_normal_(m.weight, mode="fan_in", nonlinearity="linear")
                nn.init.zeros_(m.bias)
        # the saliency block of heat_fc starts as an area resampling of the
        # saliency map onto the output grid, so that early gradients push the
        # scene head to fire where targets are instead of in a random pattern
        k = self.map_side ** 2
        with torch.no_grad():
            r = spatial_resampling(self.fmap_side, self.cfg.heatmap_grid)
            self.heat_fc.weight[:, :k] += torch.as_tensor(r, dtype=self.heat_fc.weight.dtype)

    def groups(self) -> dict[str, list[nn.Module]]:
        return {
            "a": [self.scene_backbone],
            "b": [self.face_backbone],
            "c": [self.scene_head, self.face_heat_head, self.heat_fc],
            "d": [self.face_angle_head, self.angle_fc],
            "e": [self.fixation_fc],
        }

    def forward(self, scene, face, position) -> RawOutput:
        n = self.cfg.input_side
        if scene.dim() != 4 or tuple(scene.shape[1:]) != (3, n, n):
            raise ValueError(f"scene batch must be (B, 3, {n}, {n}), got {tuple(scene.shape)}")
        if tuple(face.shape) != tuple(scene.shape):
            raise ValueError(f"face batch must match scene batch shape, got {tuple(face.shape)}")
        n_pos = self.cfg.position_grid ** 2
        if position.dim() != 2 or position.shape[0] != scene.shape[0] or position.shape[1] != n_pos:
            raise ValueError(f"position batch must be (B, {n_pos}), got {tuple(position.shape)}")
        fs = self.scene_backbone(scene)
        ff = self.face_backbone(face)
        sal = self.scene_head(fs).flatten(1)
        fh = self.face_heat_head(ff).flatten(1)
        heat_vec = torch.cat([sal, fh, position], dim=1)
        angle_vec = self.face_angle_head(ff).flatten(1)
        heat = self.heat_fc(heat_vec)
        angle = self.angle_fc(angle_vec)
        fix = self.fixation_fc(torch.cat([heat_vec, angle_vec], dim=1)).squeeze(1)
        return RawOutput(angle, heat, fix)


def build_model(cfg: Optional[ModelConfig] = None, seed: Optional[int] = None) -> AttentionNet:
    cfg = cfg or ModelConfig()
    if seed is not None:
        torch.manual_seed(seed)
    return AttentionNet(cfg)


def parameter_groups(model: AttentionNet) -> dict[str, list[nn.Parameter]]:
    """Trainable parameters keyed by group letter a..e."""
    return {k: [p for m in mods for p in m.parameters()] for k, mods in model.groups().items()}


# ---------------------------------------------------------------- postprocess


class AttentionEstimate(NamedTuple):
    angle: np.ndarray             # (B, 2) radians
    heatmap: np.ndarray           # (B, grid, grid), rows sum to 1
    fixation_likelihood: np.ndarray  # (B,)
    fixation_map: np.ndarray      # (B, grid, grid)


def combine(likelihood, heatmap, mode="weighting", threshold=0.5):
    likelihood = np.asarray(likelihood, dtype=np.float64)
    lk = likelihood.reshape(likelihood.shape + (1,) * (heatmap.ndim - likelihood.ndim))
    if mode == "weighting":
        return lk * heatmap
    if mode == "gating":
        return heatmap * (lk >= threshold)
    raise ValueError(f"unknown combine mode {mode!r}")


def postprocess(raw: RawOutput, cfg: ModelConfig, mode: Optional[str] = None) -> AttentionEstimate:
    g = cfg.heatmap_grid
    with torch.no_grad():
        logits = raw.heatmap_logits.detach().double()
        heat = torch.softmax(logits, dim=1).cpu().numpy().reshape(-1, g, g)
        lk = torch.sigmoid(raw.fixation_logit.detach().double()).cpu().numpy()
        angle = raw.angle.detach().double().cpu().numpy()
    fmap = combine(lk, heat, mode or cfg.combine_mode, cfg.gating_threshold)
    return AttentionEstimate(angle, heat, lk, fmap)


# ---------------------------------------------------------------- checkpoints

_CKPT_FORMAT = "gazeatt-checkpoint/1"


def save_checkpoint(path, model: AttentionNet, step: int = 0, extra: Optional[dict] = None) -> None:
    state = {k: v.detach().cpu().clone() for k, v in model.state_dict().items()}
    blob = {"format": _CKPT_FORMAT, "config": model.cfg.to_text(), "step": int(step),
            "state": state, "extra": json.dumps(extra or {}, sort_keys=True)}
    torch.save(blob, path)


def load_checkpoint(path, dtype=None) -> tuple[AttentionNet, int]:
    blob = torch.load(path, map_location="cpu", weights_only=True)
    if blob.get("format") != _CKPT_FORMAT:
        raise ConfigError(f"{path}: not a gazeatt checkpoint")
    cfg = ModelConfig.from_text(blob["config"])
    model = AttentionNet(cfg)
    own = model.state_dict()
    for k, v in blob["state"].items():
        if k not in own:
            raise ConfigError(f"{path}: unexpected tensor {k!r} for config backbone={cfg.backbone}")
        if tuple(own[k].shape) != tuple(v.shape):
            raise ConfigError(f"{path}: tensor {k!r} has shape {tuple(v.shape)}, "
                              f"config implies {tuple(own[k].shape)}")
    missing = set(own) - set(blob["state"])
    if missing:
        raise ConfigError(f"{path}: missing tensors {sorted(missing)[:3]}")
    if dtype is not None:
        model.to(dtype)
    model.load_state_dict(blob["state"])
    model.eval()
    return model, int(blob["step"])
