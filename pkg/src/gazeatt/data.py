"""Synthetic attention corpora, label quantizers and on-disk formats.

Three scene flavors stand in for the real training corpora:

* ``GF``   gaze-following scenes: cluttered background, salient distractor
           blobs, and (with probability ``p_inside``) a ring-shaped target
           marker lying on the subject's projected gaze ray. No angle label.
* ``ED``   lab-style close-ups on a pale background, angle label only,
           yaw/pitch within +-40 deg, always looking outside the frame.
* ``SH``   textured backgrounds, wide head-pose range (yaw +-90 deg),
           angle label only, always looking outside.
* ``MMDB`` mixed evaluation split, GF-style scenes at 41.4% inside.

The subject is drawn as a head glyph: a disc with a dark tapered wedge from
its center along the projected gaze, wedge length proportional to the
projected length, so the face crop alone determines the gaze angle.

Every sample is a pure function of (seed, domain, index).
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from PIL import Image

from . import kernels
from .geometry import GazeAngle, angles_to_vector, project_gaze

DOMAINS = ("GF", "ED", "SH", "MMDB")
# domains whose in/out label is annotated (and shipped as a sidecar); for the
# others inside = 0 holds by construction and is not a fixation label
INOUT_DOMAINS = ("GF", "MMDB")
_DOMAIN_CODE = {d: i for i, d in enumerate(DOMAINS)}


class ManifestError(ValueError):
    pass


# ------------------------------------------------------------------ quantizers


def _check_point(p):
    x, y = float(p[0]), float(p[1])
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0) or math.isnan(x) or math.isnan(y):
        raise ValueError(f"point ({x}, {y}) is outside [0,1]^2")
    return x, y


def quantize_position(p, grid: int) -> int:
    """Row-major cell index of a normalized point on a grid x grid lattice."""
    if grid < 1:
        raise ValueError("grid must be >= 1")
    x, y = _check_point(p)
    col = min(int(math.floor(x * grid)), grid - 1)
    row = min(int(math.floor(y * grid)), grid - 1)
    return row * grid + col


quantize_target = quantize_position


def cell_center(index: int, grid: int) -> tuple[float, float]:
    if not 0 <= index < grid * grid:
        raise ValueError(f"cell {index} out of range for grid {grid}")
    row, col = divmod(int(index), grid)
    return ((col + 0.5) / grid, (row + 0.5) / grid)


def one_hot(index: int, size: int) -> np.ndarray:
    v = np.zeros(size, dtype=np.float32)
    v[index] = 1.0
    return v


# -------------------------------------------------------------------- samples


@dataclass
class AttentionSample:
    id: str
    domain: str
    face_bbox: tuple[float, float, float, float]
    gaze_angle: Optional[GazeAngle] = None  # radians
    target: Optional[tuple[float, float]] = None
    inside: Optional[int] = None
    # pixels and their location are payload, not labels: equality ignores them
    scene_image: Optional[np.ndarray] = field(default=None, compare=False, repr=False)  # HxWx3 uint8
    scene_path: Optional[Path] = field(default=None, compare=False)
    # generator-side truth, never written to manifests
    true_gaze: Optional[GazeAngle] = field(default=None, compare=False, repr=False)

    @property
    def head_center(self) -> tuple[float, float]:
        x, y, w, h = self.face_bbox
        return (x + w / 2.0, y + h / 2.0)

    def load_scene(self) -> np.ndarray:
        if self.scene_image is not None:
            return self.scene_image
        if self.scene_path is None:
            raise ValueError(f"sample {self.id} has no image")
        with Image.open(self.scene_path) as im:
            return np.asarray(im.convert("RGB"))

    def face_crop(self, side: int, scene: Optional[np.ndarray] = None) -> np.ndarray:
        return crop_face(self.load_scene() if scene is None else scene, self.face_bbox, side)


def crop_face(scene: np.ndarray, bbox, side: int) -> np.ndarray:
    """Crop a normalized (x, y, w, h) box and resize it to side x side (uint8)."""
    h, w = scene.shape[:2]
    x, y, bw, bh = bbox
    box = (x * w, y * h, (x + bw) * w, (y + bh) * h)
    im = Image.fromarray(scene).resize((side, side), Image.BILINEAR, box=box)
    return np.asarray(im)


def resize_scene(scene: np.ndarray, side: int) -> np.ndarray:
    if scene.shape[0] == side and scene.shape[1] == side:
        return scene
    return np.asarray(Image.fromarray(scene).resize((side, side), Image.BILINEAR))


def validate_sample(s: AttentionSample, where: str = "") -> None:
    """Domain-conditional label invariants; raises ManifestError."""
    pre = f"{where}: " if where else ""
    if s.domain not in DOMAINS:
        raise ManifestError(f"{pre}unknown domain {s.domain!r}")
    if s.inside is not None and s.inside not in (0, 1):
        raise ManifestError(f"{pre}inside must be 0 or 1")
    if s.domain in INOUT_DOMAINS:
        if s.inside is None:
            raise ManifestError(f"{pre}{s.domain} sample requires 'inside'")
        if s.gaze_angle is not None:
            raise ManifestError(f"{pre}{s.domain} sample must not carry a gaze angle")
        if s.target is None and (s.domain == "GF" or s.inside == 1):
            raise ManifestError(f"{pre}{s.domain} sample requires 'target'")
    else:
        if s.gaze_angle is None:
            raise ManifestError(f"{pre}{s.domain} sample requires yaw_deg/pitch_deg")
        if s.inside != 0:
            raise ManifestError(f"{pre}{s.domain} sample must have inside=0")
        if s.target is not None:
            raise ManifestError(f"{pre}{s.domain} sample must not carry a target")
    if s.inside == 1:
        tx, ty = s.target
        if not (0.0 <= tx <= 1.0 and 0.0 <= ty <= 1.0):
            raise ManifestError(f"{pre}in-frame target ({tx}, {ty}) outside [0,1]^2")


# ------------------------------------------------------------------ generator

_DEFAULT_P_INSIDE = {"GF": 0.884, "MMDB": 0.414, "ED": 0.0, "SH": 0.0}
_DEFAULT_YAW = {"GF": 90.0, "MMDB": 90.0, "ED": 40.0, "SH": 90.0}
_DEFAULT_PITCH = {"GF": 60.0, "MMDB": 60.0, "ED": 40.0, "SH": 60.0}
# normalized head radius and head-center range per domain
_HEAD_RADIUS = {"GF": (0.05, 0.07), "MMDB": (0.05, 0.07), "ED": (0.09, 0.12), "SH": (0.07, 0.10)}
_HEAD_CENTER = {"GF": (0.12, 0.88), "MMDB": (0.12, 0.88), "ED": (0.35, 0.65), "SH": (0.25, 0.75)}


@dataclass(frozen=True)
class GeneratorConfig:
    domain: str = "GF"
    seed: int = 0
    count: int = 1000
    p_inside: Optional[float] = None
    canvas_side: int = 227
    distractors: tuple[int, int] = (2, 5)
    target_distance: tuple[float, float] = (0.15, 0.6)
    yaw_range_deg: Optional[float] = None
    pitch_range_deg: Optional[float] = None
    min_projected_norm: float = 0.2

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain!r}; expected one of {DOMAINS}")
        if self.p_inside is None:
            object.__setattr__(self, "p_inside", _DEFAULT_P_INSIDE[self.domain])
        if self.yaw_range_deg is None:
            object.__setattr__(self, "yaw_range_deg", _DEFAULT_YAW[self.domain])
        if self.pitch_range_deg is None:
            object.__setattr__(self, "pitch_range_deg", _DEFAULT_PITCH[self.domain])
        if not 0.0 <= self.p_inside <= 1.0:
            raise ValueError("p_inside must be a probability")
        if self.domain in ("ED", "SH") and self.p_inside != 0.0:
            raise ValueError(f"{self.domain} samples always look outside (p_inside = 0)")
        lo, hi = self.distractors
        if not 0 <= lo <= hi:
            raise ValueError("distractor range must satisfy 0 <= min <= max")
        lo, hi = self.target_distance
        if not 0.0 < lo <= hi:
            raise ValueError("target distance range must satisfy 0 < min <= max")
        if not 0.0 < self.pitch_range_deg < 90.0:
            raise ValueError("pitch range must lie in (0, 90) degrees")
        if not 0.0 < self.yaw_range_deg <= 90.0:
            raise ValueError("yaw range must lie in (0, 90] degrees")
        if self.count < 0 or self.canvas_side < 16:
            raise ValueError("count must be >= 0 and canvas_side >= 16")


def _streams(seed: int, domain: str, index: int):
    ss = np.random.SeedSequence([int(seed), _DOMAIN_CODE[domain], int(index)])
    geo, paint = ss.spawn(2)
    return np.random.default_rng(geo), np.random.default_rng(paint)


@dataclass
class _Layout:
    head: tuple[float, float]
    head_r: float
    angle: GazeAngle
    inside: int
    target: Optional[tuple[float, float]]
    marker_r: float
    distractors: list  # (x, y, r, length, theta)


def _sample_angle(cfg: GeneratorConfig, rng) -> GazeAngle:
    ymax = math.radians(cfg.yaw_range_deg)
    pmax = math.radians(cfg.pitch_range_deg)
    while True:
        a = GazeAngle(float(rng.uniform(-ymax, ymax)), float(rng.uniform(-pmax, pmax)))
        if cfg.domain in ("GF", "MMDB"):
            u = project_gaze(angles_to_vector(*a))
            if math.hypot(u[0], u[1]) < cfg.min_projected_norm:
                continue
        return a


def _ray_exit(head, ud):
    """Distance along unit 2D direction ud from head to the frame border."""
    ts = []
    for c, d in zip(head, ud):
        if d > 1e-12:
            ts.append((1.0 - c) / d)
        elif d < -1e-12:
            ts.append(-c / d)
    return min(ts)


def _off_ray(p, r, head, ud, clearance):
    vx, vy = p[0] - head[0], p[1] - head[1]
    t = vx * ud[0] + vy * ud[1]
    if t <= 0.0:
        return True
    perp = abs(vx * ud[1] - vy * ud[0])
    return perp > r + clearance


def _layout(cfg: GeneratorConfig, rng) -> _Layout:
    lo, hi = _HEAD_RADIUS[cfg.domain]
    clo, chi = _HEAD_CENTER[cfg.domain]
    inside = int(rng.random() < cfg.p_inside)
    while True:
        head_r = float(rng.uniform(lo, hi))
        angle = _sample_angle(cfg, rng)
        u = project_gaze(angles_to_vector(*angle))
        nu = math.hypot(u[0], u[1])
        ud = (u[0] / nu, u[1] / nu) if nu > 0 else (1.0, 0.0)
        marker_r = float(rng.uniform(0.03, 0.04))
        target = None
        for _ in range(100):
            head = (float(rng.uniform(clo, chi)), float(rng.uniform(clo, chi)))
            if not inside:
                if cfg.domain in ("GF", "MMDB"):
                    # the looking-outside annotation is where the ray leaves the frame
                    t = _ray_exit(head, ud)
                    target = (min(max(head[0] + t * ud[0], 0.0), 1.0),
                              min(max(head[1] + t * ud[1], 0.0), 1.0))
                break
            t = float(rng.uniform(*cfg.target_distance))
            if t < head_r * 1.2 + marker_r + 0.02:
                continue
            tx, ty = head[0] + t * ud[0], head[1] + t * ud[1]
            m = marker_r + 0.01
            if m <= tx <= 1.0 - m and m <= ty <= 1.0 - m:
                target = (tx, ty)
                break
        else:
            continue  # placement failed: new angle
        break

    distractors = []
    if cfg.domain in ("GF", "MMDB", "SH"):
        dlo, dhi = cfg.distractors
        if cfg.domain == "SH":
            dlo, dhi = 0, min(dhi, 3)
        n = int(rng.integers(dlo, dhi + 1))
        for _ in range(n):
            for _ in range(100):
                r = float(rng.uniform(0.022, 0.045))
                p = (float(rng.uniform(r + 0.01, 1 - r - 0.01)), float(rng.uniform(r + 0.01, 1 - r - 0.01)))
                length = float(rng.uniform(0.0, 0.05))
                theta = float(rng.uniform(0, math.pi))
                ext = r + length
                if math.dist(p, head) < head_r * 1.25 + ext + 0.02:
                    continue
                if not _off_ray(p, ext, head, ud, 0.04):
                    continue
                if inside and math.dist(p, target) < marker_r + ext + 0.03:
                    continue
                if any(math.dist(p, q[:2]) < ext + q[2] + q[3] + 0.01 for q in distractors):
                    continue
                distractors.append((p[0], p[1], r, length, theta))
                break
    return _Layout(head, head_r, angle, inside, target, marker_r, distractors)


_DISTRACTOR_COLORS = np.array([
    [0.95, 0.15, 0.10], [0.10, 0.55, 0.95], [0.15, 0.80, 0.20], [0.98, 0.80, 0.05],
    [0.70, 0.15, 0.85], [0.98, 0.45, 0.05], [0.05, 0.85, 0.80],
])


def _upsample(coarse, side):
    """Bilinear upsampling of a (k, k, 3) grid to (side, side, 3)."""
    k = coarse.shape[0]
    pos = (np.arange(side) + 0.5) / side * (k - 1)
    i0 = np.clip(np.floor(pos).astype(int), 0, k - 2)
    f = pos - i0
    rows = coarse[i0] * (1 - f)[:, None, None] + coarse[i0 + 1] * f[:, None, None]
    return rows[:, i0] * (1 - f)[None, :, None] + rows[:, i0 + 1] * f[None, :, None]


def _background(domain, side, rng):
    if domain == "ED":
        base = rng.uniform(0.82, 0.95)
        img = np.full((side, side, 3), base) + _upsample(rng.normal(0, 0.02, (3, 3, 3)), side)
        img += rng.normal(0, 0.01, img.shape)
        return img
    if domain == "SH":
        img = 0.25 + 0.5 * _upsample(rng.uniform(0, 1, (6, 6, 3)), side)
        yy, xx = np.mgrid[0:side, 0:side] / side
        for _ in range(2):
            th = rng.uniform(0, math.pi)
            freq = rng.uniform(4, 14)
            wave = np.sin(2 * math.pi * freq * (xx * math.cos(th) + yy * math.sin(th)) + rng.uniform(0, 6.3))
            img += 0.06 * wave[..., None] * rng.uniform(0.5, 1.0, 3)
    else:
        img = 0.3 + 0.4 * _upsample(rng.uniform(0, 1, (5, 5, 3)), side)
    # low-contrast clutter
    for _ in range(int(rng.integers(6, 13))):
        x0, y0 = rng.uniform(0, side, 2)
        ang = rng.uniform(0, 2 * math.pi)
        ln = rng.uniform(0, side * 0.25)
        r = rng.uniform(2, side * 0.06)
        col = np.clip(img[int(y0) % side, int(x0) % side] + rng.normal(0, 0.12, 3), 0, 1)
        kernels.paint_capsule(img, x0, y0, x0 + ln * math.cos(ang), y0 + ln * math.sin(ang),
                              r, r, col, rng.uniform(0.3, 0.6))
    img += rng.normal(0, 0.02, img.shape)
    return img


def _render(cfg: GeneratorConfig, lay: _Layout, rng) -> np.ndarray:
    side = cfg.canvas_side
    img = _background(cfg.domain, side, rng)
    s = float(side)
    for (x, y, r, length, theta) in lay.distractors:
        col = _DISTRACTOR_COLORS[int(rng.integers(len(_DISTRACTOR_COLORS)))]
        dx, dy = math.cos(theta) * length * 0.5, math.sin(theta) * length * 0.5
        kernels.paint_capsule(img, (x - dx) * s, (y - dy) * s, (x + dx) * s, (y + dy) * s,
                              r * s, r * s, col)
    if lay.inside:
        tx, ty = lay.target
        rm = lay.marker_r * s
        kernels.paint_capsule(img, tx * s, ty * s, tx * s, ty * s, rm, rm, (0.05, 0.05, 0.05))
        kernels.paint_ring(img, tx * s, ty * s, 0.2 * rm, 0.8 * rm, (1.0, 1.0, 1.0))
    # head glyph
    hx, hy = lay.head[0] * s, lay.head[1] * s
    hr = lay.head_r * s
    skin = np.array([0.88, 0.70, 0.55]) + rng.normal(0, 0.04, 3)
    kernels.paint_capsule(img, hx, hy, hx, hy, hr, hr, (0.25, 0.18, 0.12))
    kernels.paint_capsule(img, hx, hy, hx, hy, hr * 0.88, hr * 0.88, np.clip(skin, 0, 1))
    u = project_gaze(angles_to_vector(*lay.angle))
    length = 0.85 * hr
    kernels.paint_capsule(img, hx, hy, hx + length * u[0], hy + length * u[1],
                          0.28 * hr, 0.08 * hr, (0.08, 0.08, 0.12))
    return np.clip(np.round(np.clip(img, 0.0, 1.0) * 255.0), 0, 255).astype(np.uint8)


def _face_bbox(head, head_r):
    side = 2.4 * head_r
    x = head[0] - side / 2.0
    y = head[1] - side / 2.0
    return (x, y, side, side)


def generate_sample(cfg: GeneratorConfig, index: int, render: bool = True) -> AttentionSample:
    """Sample ``index`` of the corpus described by ``cfg``.

    Geometry and painting draw from separate streams, so labels do not
    depend on ``render``.
    """
    geo_rng, paint_rng = _streams(cfg.seed, cfg.domain, index)
    lay = _layout(cfg, geo_rng)
    sample = AttentionSample(
        id=f"{cfg.domain.lower()}_{index:06d}",
        domain=cfg.domain,
        face_bbox=_face_bbox(lay.head, lay.head_r),
        gaze_angle=lay.angle if cfg.domain in ("ED", "SH") else None,
        target=lay.target,
        inside=lay.inside,
        true_gaze=lay.angle,
    )
    if render:
        sample.scene_image = _render(cfg, lay, paint_rng)
    return sample


def generate_corpus(cfg: GeneratorConfig, render: bool = True) -> list[AttentionSample]:
    return [generate_sample(cfg, i, render=render) for i in range(cfg.count)]


def reveal_angles(samples: Iterable[AttentionSample]) -> list[AttentionSample]:
    """Copies of generated samples carrying their true gaze as an angle label.

    Scene domains never ship angles; this is for scoring angle estimates on
    held-out scenes of the training domain (the result does not pass
    manifest validation for GF/MMDB).
    """
    return [replace(s, gaze_angle=s.true_gaze) for s in samples]


def corpus_stats(samples: Iterable[AttentionSample]) -> dict:
    samples = list(samples)
    n = len(samples)
    inside = sum(1 for s in samples if s.inside == 1)
    stats = {"count": n, "inside_fraction": inside / n if n else 0.0,
             "domains": dict(Counter(s.domain for s in samples))}
    angled = [s.gaze_angle for s in samples if s.gaze_angle is not None]
    if angled:
        deg = np.degrees(np.asarray(angled))
        edges = np.arange(-90, 91, 15)
        stats["yaw_deg_range"] = [float(deg[:, 0].min()), float(deg[:, 0].max())]
        stats["pitch_deg_range"] = [float(deg[:, 1].min()), float(deg[:, 1].max())]
        stats["yaw_hist"] = np.histogram(deg[:, 0], edges)[0].tolist()
        stats["pitch_hist"] = np.histogram(deg[:, 1], edges)[0].tolist()
        stats["hist_edges_deg"] = edges.tolist()
    return stats


# ------------------------------------------------------------------ file I/O


def sample_to_record(s: AttentionSample, scene_rel: str) -> dict:
    rec = {"id": s.id, "scene": scene_rel, "face_bbox": [float(v) for v in s.face_bbox]}
    if s.gaze_angle is not None:
        rec["yaw_deg"], rec["pitch_deg"] = (float(v) for v in s.gaze_angle.degrees())
    if s.target is not None:
        rec["target"] = [float(s.target[0]), float(s.target[1])]
    if s.inside is not None:
        rec["inside"] = int(s.inside)
    rec["domain"] = s.domain
    return rec


def record_to_sample(rec: dict, base: Path, where: str = "") -> AttentionSample:
    try:
        scene = rec["scene"]
        bbox = tuple(float(v) for v in rec["face_bbox"])
        domain = rec["domain"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"{where}: missing or malformed required field ({exc})") from None
    if len(bbox) != 4:
        raise ManifestError(f"{where}: face_bbox needs 4 numbers")
    angle = None
    if "yaw_deg" in rec or "pitch_deg" in rec:
        if "yaw_deg" not in rec or "pitch_deg" not in rec:
            raise ManifestError(f"{where}: yaw_deg and pitch_deg must appear together")
        angle = GazeAngle.from_degrees(float(rec["yaw_deg"]), float(rec["pitch_deg"]))
    target = None
    if rec.get("target") is not None:
        t = rec["target"]
        if len(t) != 2:
            raise ManifestError(f"{where}: target needs 2 numbers")
        target = (float(t[0]), float(t[1]))
    inside = rec.get("inside")
    if inside is not None:
        inside = int(inside)
    sample = AttentionSample(
        id=str(rec.get("id") or Path(scene).stem),
        domain=domain,
        face_bbox=bbox,
        gaze_angle=angle,
        target=target,
        inside=inside,
        scene_path=(base / scene),
    )
    validate_sample(sample, where)
    return sample


def write_manifest(samples: Iterable[AttentionSample], path, image_dir: str = "images") -> Path:
    """Write samples as JSON lines; scene images are saved as PNG next to it
    when they are held in memory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    img_root = path.parent / image_dir
    lines = []
    for s in samples:
        if s.scene_image is not None:
            img_root.mkdir(parents=True, exist_ok=True)
            rel = f"{image_dir}/{s.id}.png"
            save_png(s.scene_image, path.parent / rel)
        elif s.scene_path is not None:
            rel = os.path.relpath(s.scene_path, path.parent)
        else:
            rel = f"{image_dir}/{s.id}.png"
        lines.append(json.dumps(sample_to_record(s, Path(rel).as_posix()), sort_keys=False))
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("".join(line + "\n" for line in lines), encoding="utf-8", newline="\n")
    os.replace(tmp, path)
    return path


def read_manifest(path) -> list[AttentionSample]:
    path = Path(path)
    base = path.parent
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path.name}:{lineno}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{where}: invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise ManifestError(f"{where}: expected a JSON object")
            samples.append(record_to_sample(rec, base, where))
    return samples


def write_inout_annotations(samples: Iterable[AttentionSample], path) -> Path:
    path = Path(path)
    out = []
    for s in samples:
        if s.inside is None:
            raise ValueError(f"sample {s.id} has no inside label")
        if any(c.isspace() for c in s.id):
            raise ValueError(f"sample id {s.id!r} contains whitespace")
        out.append(f"{s.id} {int(s.inside)}\n")
    path.write_text("".join(out), encoding="utf-8", newline="\n")
    return path


def read_inout_annotations(path) -> dict[str, int]:
    labels = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2 or parts[1] not in ("0", "1"):
                raise ManifestError(f"{Path(path).name}:{lineno}: expected '<image-id> <0|1>'")
            labels[parts[0]] = int(parts[1])
    return labels


def save_png(img: np.ndarray, path) -> None:
    Image.fromarray(np.ascontiguousarray(img, dtype=np.uint8), mode="RGB").save(path, format="PNG", compress_level=1)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_corpus(cfg: GeneratorConfig, out_dir, manifest_name: str = "manifest.jsonl") -> dict:
    """Render ``cfg.count`` samples to PNGs plus manifest (and the in/out
    sidecar for GF/MMDB). Images are streamed to disk one at a time."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    light = []
    for i in range(cfg.count):
        s = generate_sample(cfg, i)
        rel = Path("images") / f"{s.id}.png"
        save_png(s.scene_image, out_dir / rel)
        light.append(replace(s, scene_image=None, scene_path=out_dir / rel))
    manifest = write_manifest(light, out_dir / manifest_name)
    files = {"manifest": manifest}
    if cfg.domain in INOUT_DOMAINS:
        files["inout"] = write_inout_annotations(light, out_dir / "inout.txt")
    return {"files": files, "stats": corpus_stats(light), "samples": light}
