"""gazeatt command line: gen-data, train, eval, infer, plot.

Every command that writes files also writes ``run_<command>.json`` in its
output directory: the resolved configuration, the seed and a sha256 of each
artifact. The command re-hashes the artifacts before exiting and returns 0
only if all of them match.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .config import RunConfig, load_config
from .data import DOMAINS, AttentionSample, ManifestError, read_manifest, sha256_file, write_corpus
from .model import ConfigError

log = logging.getLogger("gazeatt")

EXIT_OK, EXIT_VERIFY, EXIT_ERROR = 0, 1, 2


def set_threads():
    import torch

    n = int(os.environ.get("GAZEATT_THREADS", "1"))
    torch.set_num_threads(max(1, n))


# ------------------------------------------------------------------ manifests


@dataclass
class RunManifest:
    command: str
    config_path: Optional[str]
    config: dict
    seed: Optional[int]
    out_dir: str
    artifacts: dict = field(default_factory=dict)  # relative path -> sha256

    @property
    def path(self) -> Path:
        return Path(self.out_dir) / f"run_{self.command}.json"

    def add(self, *paths):
        root = Path(self.out_dir)
        for p in paths:
            p = Path(p)
            self.artifacts[p.relative_to(root).as_posix()] = sha256_file(p)

    def write(self) -> Path:
        text = json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"
        tmp = self.path.with_name(self.path.name + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, self.path)
        return self.path

    def verify(self) -> list[str]:
        """Artifacts whose current checksum differs from the recorded one."""
        on_disk = json.loads(self.path.read_text(encoding="utf-8"))
        bad = []
        for rel, digest in on_disk["artifacts"].items():
            p = Path(self.out_dir) / rel
            if not p.is_file():
                bad.append(f"{rel}: missing")
            elif sha256_file(p) != digest:
                bad.append(f"{rel}: checksum mismatch")
        if on_disk["artifacts"] != self.artifacts:
            bad.append(f"{self.path.name}: content differs from the run record")
        return bad


def finish(man: RunManifest) -> int:
    man.write()
    bad = man.verify()
    for b in bad:
        print(f"verification failed: {b}", file=sys.stderr)
    return EXIT_VERIFY if bad else EXIT_OK


def _domain(s: str) -> str:
    d = s.upper().removesuffix("-LIKE")
    if d not in DOMAINS:
        raise argparse.ArgumentTypeError(f"invalid domain {s!r}; choose from {', '.join(DOMAINS)}")
    return d


def _grids(s: str):
    try:
        out = tuple(int(x) for x in s.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"--grids expects comma-separated integers, got {s!r}")
    if not out:
        raise argparse.ArgumentTypeError("--grids is empty")
    return out


def _bbox(s: str):
    try:
        v = tuple(float(x) for x in s.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"--face-bbox expects x,y,w,h, got {s!r}")
    if len(v) != 4:
        raise argparse.ArgumentTypeError(f"--face-bbox expects 4 numbers, got {len(v)}")
    return v


def check_bbox(b):
    x, y, w, h = b
    ok = all(np.isfinite(b)) and w > 0 and h > 0 and x >= 0 and y >= 0 and x + w <= 1 and y + h <= 1
    if not ok:
        raise ValueError(f"face bbox {b} must lie inside [0,1]^2 with positive size")


# ------------------------------------------------------------------ commands


def cmd_gen_data(args) -> int:
    cfg = load_config(args.config)
    gen = cfg.generator(domain=args.domain, seed=args.seed, count=args.count)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res = write_corpus(gen, out)
    stats = res["stats"]
    print(json.dumps(stats, sort_keys=True))
    snap = cfg.snapshot()
    snap.update({f"gen.{k}": list(v) if isinstance(v, tuple) else v for k, v in asdict(gen).items()})
    man = RunManifest("gen-data", _str(args.config), snap, gen.seed, str(out))
    man.add(*res["files"].values())
    man.add(*(s.scene_path for s in res["samples"]))
    return finish(man)


def cmd_train(args) -> int:
    from .model import build_model
    from .train import fit

    cfg = load_config(args.config, require_mixture=True)
    set_threads()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    snap = cfg.snapshot()
    print(json.dumps({k: v for k, v in snap.items() if k.startswith("train.")}, sort_keys=True))
    (out / "config.resolved.json").write_text(json.dumps(snap, indent=2) + "\n", encoding="utf-8")
    model = build_model(cfg.model, seed=cfg.train.seed)
    res = fit(model, cfg.train, out)
    man = RunManifest("train", _str(args.config), snap, cfg.train.seed, str(out))
    man.add(out / "config.resolved.json", res.log_path, res.final_checkpoint, *res.checkpoints)
    return finish(man)


def cmd_eval(args) -> int:
    from .evaluation import evaluate
    from .model import load_checkpoint

    cfg = load_config(args.config)
    set_threads()
    ev = cfg.eval
    if args.grids is not None:
        ev.grid_sizes = args.grids
    if args.baseline is not None:
        ev.baseline = args.baseline
    if args.seed is not None:
        ev.seed = args.seed
    problems = ev.problems()
    if problems:
        raise ConfigError("; ".join(problems))
    model, _ = load_checkpoint(args.checkpoint)
    samples = read_manifest(args.manifest)
    report, details = evaluate(model, samples, ev)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.to_json(), encoding="utf-8")
    print(report.to_json(), end="")
    snap = {f"eval.{k}": (list(v) if isinstance(v, tuple) else v) for k, v in asdict(ev).items()}
    snap.update({f"model.{k}": v for k, v in model.cfg.as_dict().items()})
    snap["checkpoint_sha256"] = sha256_file(args.checkpoint)
    snap["manifest_sha256"] = sha256_file(args.manifest)
    man = RunManifest("eval", _str(args.config), snap, ev.seed, str(out.parent))
    man.add(out)
    if args.details:
        dp = Path(args.details)
        if dp.parent.resolve() != out.parent.resolve():
            dp = out.parent / dp.name
        with open(dp, "w", encoding="utf-8", newline="\n") as fh:
            for d in details:
                fh.write(json.dumps(d, sort_keys=True) + "\n")
        man.add(dp)
    return finish(man)


def _estimates(model, samples):
    from .evaluation import predict
    from .model import combine

    pred = predict(model, samples, batch_size=32)
    fix = combine(pred.likelihood, pred.heatmap, model.cfg.combine_mode, model.cfg.gating_threshold)
    return pred, fix


def cmd_infer(args) -> int:
    from PIL import Image

    from .model import load_checkpoint

    set_threads()
    check_bbox(args.face_bbox)
    model, _ = load_checkpoint(args.checkpoint)
    with Image.open(args.image) as im:
        scene = np.asarray(im.convert("RGB"))
    s = AttentionSample(id=Path(args.image).stem, domain="GF", face_bbox=args.face_bbox, scene_image=scene)
    pred, fix = _estimates(model, [s])
    g = model.cfg.heatmap_grid
    k = int(np.argmax(pred.heatmap[0]))
    print(json.dumps({
        "yaw_deg": float(np.degrees(pred.angle[0, 0])),
        "pitch_deg": float(np.degrees(pred.angle[0, 1])),
        "likelihood": float(pred.likelihood[0]),
        "heatmap": pred.heatmap[0].tolist(),
        "fixation_map": fix[0].tolist(),
        "argmax_cell": {"index": k, "row": k // g, "col": k % g},
    }))
    return EXIT_OK


def render_overlay(scene, fix_map, heat_max, head, angle, likelihood, arrow_frac=0.3):
    """Heatmap alpha-blended in red, gaze arrow, likelihood in the corner.

    Alpha is the fixation map over the heatmap peak, so an unlikely
    fixation draws a faint overlay. Returns (image, arrow start, arrow end).
    """
    from PIL import Image, ImageDraw

    from .geometry import angles_to_vector, project_gaze

    h, w = scene.shape[:2]
    up = np.asarray(Image.fromarray(fix_map.astype(np.float32), mode="F").resize((w, h), Image.BILINEAR))
    alpha = np.clip(0.75 * up / max(heat_max, 1e-12), 0.0, 0.75)[..., None]
    red = np.array([255.0, 0.0, 0.0])
    img = (scene * (1.0 - alpha) + red * alpha).round().astype(np.uint8)
    pil = Image.fromarray(img)
    draw = ImageDraw.Draw(pil)
    u = project_gaze(angles_to_vector(*angle))
    x0, y0 = head[0] * w, head[1] * h
    x1, y1 = x0 + arrow_frac * w * u[0], y0 + arrow_frac * h * u[1]
    draw.line([(x0, y0), (x1, y1)], fill=(0, 255, 0), width=2)
    n = float(np.hypot(x1 - x0, y1 - y0))
    if n > 1e-6:
        dx, dy = (x1 - x0) / n, (y1 - y0) / n
        for sgn in (1, -1):
            draw.line([(x1, y1), (x1 - 6 * dx + sgn * 4 * dy, y1 - 6 * dy - sgn * 4 * dx)], fill=(0, 255, 0), width=2)
    draw.text((3, 2), f"p={likelihood:.2f}", fill=(255, 255, 0))
    return np.asarray(pil), (x0, y0), (x1, y1)


def cmd_plot(args) -> int:
    from .data import save_png
    from .model import load_checkpoint

    set_threads()
    if args.n < 0:
        raise ValueError("--n must be >= 0")
    model, _ = load_checkpoint(args.checkpoint)
    samples = read_manifest(args.manifest)[:args.n]
    if len(samples) < args.n:
        raise ValueError(f"manifest holds only {len(samples)} samples, asked for {args.n}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pred, fix = _estimates(model, samples)
    man = RunManifest("plot", None, {"n": args.n, "checkpoint_sha256": sha256_file(args.checkpoint)},
                      None, str(out))
    rows = []
    for i, s in enumerate(samples):
        scene = s.load_scene()
        img, a, b = render_overlay(scene, fix[i], pred.heatmap[i].max(), s.head_center,
                                   pred.angle[i], pred.likelihood[i])
        p = out / f"{s.id}_overlay.png"
        save_png(img, p)
        man.add(p)
        rows.append({"id": s.id, "file": p.name,
                     "yaw_deg": float(np.degrees(pred.angle[i, 0])),
                     "pitch_deg": float(np.degrees(pred.angle[i, 1])),
                     "likelihood": float(pred.likelihood[i]),
                     "arrow_start": [float(a[0]), float(a[1])], "arrow_end": [float(b[0]), float(b[1])]})
    jl = out / "overlays.jsonl"
    jl.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in rows), encoding="utf-8")
    man.add(jl)
    return finish(man)


def _str(p):
    return None if p is None else str(p)


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gazeatt", description="Gaze following and fixation likelihood")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="render a synthetic corpus")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--domain", type=_domain, help="GF, ED, SH or MMDB")
    p.add_argument("--count", type=int)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train on the configured mixture")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--grids", type=_grids)
    p.add_argument("--baseline", choices=("none", "random", "center"))
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, help="seed for the random baseline")
    p.add_argument("--details", help="per-sample JSON-lines path (next to the report)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="run on one image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--face-bbox", type=_bbox, required=True, help="x,y,w,h normalized")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("plot", help="write overlay figures")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ManifestError, ValueError, OSError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
