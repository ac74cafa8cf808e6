"""Run configuration: flat dotted key/value text, or JSON.

Text form, one ``section.key = value`` per line, ``#`` starts a comment::

    train.learning_rate = 2.5e-4
    train.epochs = 3
    train.mixture = gf/manifest.jsonl:GF, ed/manifest.jsonl:ED
    model.heatmap_grid = 10
    loss.w_pnc = 0

JSON may be flat (``{"train.epochs": 3}``) or nested by section
(``{"train": {"epochs": 3}}``). Relative mixture paths resolve against the
directory of the config file. Every problem found is reported at once.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .data import DOMAINS, GeneratorConfig
from .evaluation import EvalConfig
from .losses import LossConfig
from .model import ConfigError, ModelConfig
from .train import TrainConfig

SECTIONS = ("train", "loss", "model", "gen", "eval")
GEN_KEYS = tuple(f.name for f in fields(GeneratorConfig))


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _int_list(v):
    if isinstance(v, str):
        v = [x for x in v.replace(" ", "").split(",") if x]
    return tuple(int(x) for x in v)


def _float_list(v):
    if isinstance(v, str):
        v = [x for x in v.replace(" ", "").split(",") if x]
    return tuple(float(x) for x in v)


def _int(v):
    if isinstance(v, float) and not v.is_integer():
        raise ValueError(f"not an integer: {v!r}")
    return int(v)


_TRAIN_TYPES = {
    "learning_rate": float, "batch_size": _int, "epochs": _int, "optimizer": str,
    "beta1": float, "beta2": float, "adam_eps": float, "seed": _int,
    "log_every": _int, "checkpoint_every": _int, "cache_images": _bool,
}
_LOSS_TYPES = {f.name: float for f in fields(LossConfig)}
_EVAL_TYPES = {
    "grid_sizes": _int_list, "gating_threshold": float, "heatmap_combine": str,
    "baseline": str, "seed": _int, "batch_size": _int,
}
_GEN_TYPES = {
    "domain": str, "seed": _int, "count": _int, "p_inside": float, "canvas_side": _int,
    "distractors": _int_list, "target_distance": _float_list, "yaw_range_deg": float,
    "pitch_range_deg": float, "min_projected_norm": float,
}
_MODEL_TYPES = {
    "backbone": str, "input_side": _int, "position_grid": _int, "heatmap_grid": _int,
    "scene_head_depths": _int_list, "face_head_depths": _int_list,
    "combine_mode": str, "gating_threshold": float,
}
_TYPES = {"train": _TRAIN_TYPES, "loss": _LOSS_TYPES, "model": _MODEL_TYPES,
          "gen": _GEN_TYPES, "eval": _EVAL_TYPES}


@dataclass
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    gen: dict = field(default_factory=dict)  # GeneratorConfig overrides
    path: Optional[Path] = None

    def generator(self, **override) -> GeneratorConfig:
        kw = dict(self.gen)
        kw.update({k: v for k, v in override.items() if v is not None})
        return GeneratorConfig(**kw)

    def snapshot(self) -> dict:
        """Flat, JSON-ready view of every resolved value."""
        out = {}
        t = self.train
        for k in _TRAIN_TYPES:
            out[f"train.{k}"] = getattr(t, k)
        out["train.mixture"] = [f"{p}:{d}" for p, d in t.mixture]
        for k in _LOSS_TYPES:
            out[f"loss.{k}"] = getattr(t.loss, k)
        for k, v in self.model.as_dict().items():
            out[f"model.{k}"] = v
        for k in _EVAL_TYPES:
            v = getattr(self.eval, k)
            out[f"eval.{k}"] = list(v) if isinstance(v, tuple) else v
        for k, v in sorted(self.gen.items()):
            out[f"gen.{k}"] = list(v) if isinstance(v, tuple) else v
        return dict(sorted(out.items()))


def parse_text(text: str, where: str = "<config>") -> tuple[dict, list[str]]:
    """Raw ``{dotted key: value}`` from either syntax, plus syntax errors."""
    errors = []
    if text.lstrip().startswith("{"):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as e:
            return {}, [f"{where}:{e.lineno}: invalid JSON ({e.msg})"]
        kv = {}
        for k, v in obj.items():
            if k in SECTIONS and isinstance(v, dict):
                for k2, v2 in v.items():
                    kv[f"{k}.{k2}"] = v2
            else:
                kv[k] = v
        return kv, errors
    kv = {}
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            errors.append(f"{where}:{no}: expected 'key = value'")
            continue
        key = key.strip()
        if key in kv:
            errors.append(f"{where}:{no}: duplicate key {key}")
        kv[key] = value.strip()
    return kv, errors


def _parse_mixture(value, base: Path, errors: list) -> list:
    items = value if isinstance(value, list) else [x for x in str(value).split(",") if x.strip()]
    out = []
    for item in items:
        path, sep, dom = str(item).strip().rpartition(":")
        if not sep or not path:
            errors.append(f"train.mixture: entry {item!r} must be 'path:DOMAIN'")
            continue
        if dom not in DOMAINS:
            errors.append(f"train.mixture: unknown domain {dom!r} in {item!r}")
            continue
        p = Path(path)
        if not p.is_absolute():
            p = base / p
        if not p.is_file():
            errors.append(f"train.mixture: manifest {p} does not exist")
        out.append((str(p), dom))
    return out


def build(kv: dict, base: Path = Path("."), errors: Optional[list] = None) -> RunConfig:
    """Typed RunConfig from raw dotted keys; raises ConfigError listing all problems."""
    errors = list(errors or [])
    typed = {s: {} for s in SECTIONS}
    mixture = []
    for key, raw in kv.items():
        sec, _, name = key.partition(".")
        if sec not in typed or not name:
            errors.append(f"unknown key {key!r} (sections: {', '.join(SECTIONS)})")
            continue
        if sec == "train" and name == "mixture":
            mixture = _parse_mixture(raw, base, errors)
            continue
        conv = _TYPES[sec].get(name)
        if conv is None:
            errors.append(f"unknown key {key!r}")
            continue
        try:
            typed[sec][name] = conv(raw)
        except (TypeError, ValueError) as e:
            errors.append(f"{key}: cannot parse {raw!r} ({e})")

    loss = None
    try:
        loss = LossConfig(**typed["loss"])
    except ValueError as e:
        errors.append(f"loss: {e}")
    train = TrainConfig(loss=loss or LossConfig(), mixture=mixture, **typed["train"])
    errors += train.problems()

    model = None
    try:
        model = ModelConfig(**typed["model"])
    except ConfigError as e:
        errors += [f"model.{m.strip()}" for m in str(e).split(";")]

    ev = EvalConfig(**typed["eval"])
    errors += ev.problems()
    if model is not None:
        for n in ev.grid_sizes:
            if n > model.heatmap_grid:
                errors.append(f"eval.grid_sizes: {n} exceeds model.heatmap_grid {model.heatmap_grid}")

    gen = typed["gen"]
    try:
        GeneratorConfig(**gen)
    except (TypeError, ValueError) as e:
        errors.append(f"gen: {e}")

    if errors:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(errors))
    return RunConfig(train=train, model=model, eval=ev, gen=gen)


def load_config(path=None, require_mixture: bool = False) -> RunConfig:
    """Read a config file (None gives all defaults)."""
    if path is None:
        cfg = build({})
    else:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from e
        kv, errors = parse_text(text, path.name)
        if require_mixture and "train.mixture" not in kv:
            errors.append("train.mixture: no training manifests given")
        cfg = build(kv, path.parent.resolve(), errors)
        cfg.path = path
    if require_mixture and not cfg.train.mixture:
        raise ConfigError("invalid configuration:\n  train.mixture: no training manifests given")
    return cfg
