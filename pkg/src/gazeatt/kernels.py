"""Hot numeric kernels with two interchangeable backends.

Each kernel exists as a numba-compiled loop and as a vectorized numpy
routine. The backend is picked once at import:

    GAZEATT_NUMBA=0   force the numpy path
    (unset / 1)       numba if importable, else numpy

Both paths are always importable by name (``*_numba`` / ``*_numpy``) so the
tests and ``benchmarks/bench_kernels.py`` can compare them directly.

Rasterization works in pixel units on float64 HxWx3 images. Pixel (i, j)
has its center at (j + 0.5, i + 0.5). Coverage is a one-pixel linear ramp
across the shape edge, which is enough anti-aliasing for sub-pixel
geometry to survive into the network input.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("GAZEATT_NUMBA", "1") != "0"


def _bbox(h, w, x_lo, x_hi, y_lo, y_hi):
    j0 = max(int(np.floor(x_lo)) - 1, 0)
    j1 = min(int(np.ceil(x_hi)) + 1, w)
    i0 = max(int(np.floor(y_lo)) - 1, 0)
    i1 = min(int(np.ceil(y_hi)) + 1, h)
    return i0, i1, j0, j1


# ---------------------------------------------------------------- numpy path


def paint_capsule_numpy(img, x0, y0, x1, y1, r0, r1, color, alpha=1.0):
    """Tapered capsule from (x0, y0) radius r0 to (x1, y1) radius r1.

    x0 == x1 and y0 == y1 with r0 == r1 paints a disc.
    """
    h, w = img.shape[:2]
    rmax = max(r0, r1)
    i0, i1, j0, j1 = _bbox(h, w, min(x0, x1) - rmax, max(x0, x1) + rmax,
                           min(y0, y1) - rmax, max(y0, y1) + rmax)
    if i0 >= i1 or j0 >= j1:
        return img
    px = np.arange(j0, j1, dtype=np.float64)[None, :] + 0.5
    py = np.arange(i0, i1, dtype=np.float64)[:, None] + 0.5
    dx, dy = x1 - x0, y1 - y0
    seg2 = dx * dx + dy * dy
    if seg2 > 0.0:
        t = np.clip(((px - x0) * dx + (py - y0) * dy) / seg2, 0.0, 1.0)
    else:
        t = np.zeros((i1 - i0, j1 - j0))
    qx = x0 + t * dx
    qy = y0 + t * dy
    d = np.sqrt((px - qx) ** 2 + (py - qy) ** 2)
    r = r0 + t * (r1 - r0)
    cov = np.clip(r - d + 0.5, 0.0, 1.0) * alpha
    region = img[i0:i1, j0:j1]
    col = np.asarray(color, dtype=np.float64)
    region *= 1.0 - cov[..., None]
    region += cov[..., None] * col
    return img


def paint_ring_numpy(img, cx, cy, r_in, r_out, color, alpha=1.0):
    h, w = img.shape[:2]
    i0, i1, j0, j1 = _bbox(h, w, cx - r_out, cx + r_out, cy - r_out, cy + r_out)
    if i0 >= i1 or j0 >= j1:
        return img
    px = np.arange(j0, j1, dtype=np.float64)[None, :] + 0.5
    py = np.arange(i0, i1, dtype=np.float64)[:, None] + 0.5
    d = np.sqrt((px - cx) ** 2 + (py - cy) ** 2)
    cov = np.clip(np.minimum(r_out - d + 0.5, d - r_in + 0.5), 0.0, 1.0) * alpha
    region = img[i0:i1, j0:j1]
    col = np.asarray(color, dtype=np.float64)
    region *= 1.0 - cov[..., None]
    region += cov[..., None] * col
    return img


def _tie_sweep_numpy(scores, labels):
    """Cumulative (tp, fp) at the end of each group of tied scores,
    scores visited in descending order."""
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = labels[order]
    tp = np.cumsum(y)
    fp = np.cumsum(1.0 - y)
    ends = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    return tp[ends], fp[ends]


def roc_auc_numpy(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    n_pos = labels.sum()
    n_neg = labels.size - n_pos
    tp, fp = _tie_sweep_numpy(scores, labels)
    tp = np.r_[0.0, tp]
    fp = np.r_[0.0, fp]
    area = np.sum(np.diff(fp) * (tp[1:] + tp[:-1]) * 0.5)
    return float(area / (n_pos * n_neg))


def average_precision_numpy(scores, labels):
    """Mean precision at each positive of the descending-score ranking;
    tied scores keep their input order (stable sort)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    y = labels[np.argsort(-scores, kind="mergesort")]
    tp = np.cumsum(y)
    prec = tp / np.arange(1, y.size + 1)
    return float(np.sum(y * prec) / y.sum())


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _capsule_loop(img, x0, y0, x1, y1, r0, r1, c0, c1, c2, alpha):
        h, w = img.shape[0], img.shape[1]
        rmax = max(r0, r1)
        j0 = max(int(np.floor(min(x0, x1) - rmax)) - 1, 0)
        j1 = min(int(np.ceil(max(x0, x1) + rmax)) + 1, w)
        i0 = max(int(np.floor(min(y0, y1) - rmax)) - 1, 0)
        i1 = min(int(np.ceil(max(y0, y1) + rmax)) + 1, h)
        dx = x1 - x0
        dy = y1 - y0
        seg2 = dx * dx + dy * dy
        for i in range(i0, i1):
            py = i + 0.5
            for j in range(j0, j1):
                px = j + 0.5
                t = 0.0
                if seg2 > 0.0:
                    t = ((px - x0) * dx + (py - y0) * dy) / seg2
                    if t < 0.0:
                        t = 0.0
                    elif t > 1.0:
                        t = 1.0
                qx = x0 + t * dx
                qy = y0 + t * dy
                d = np.sqrt((px - qx) ** 2 + (py - qy) ** 2)
                cov = r0 + t * (r1 - r0) - d + 0.5
                if cov <= 0.0:
                    continue
                if cov > 1.0:
                    cov = 1.0
                cov *= alpha
                img[i, j, 0] = img[i, j, 0] * (1.0 - cov) + cov * c0
                img[i, j, 1] = img[i, j, 1] * (1.0 - cov) + cov * c1
                img[i, j, 2] = img[i, j, 2] * (1.0 - cov) + cov * c2

    @numba.njit(cache=True)
    def _ring_loop(img, cx, cy, r_in, r_out, c0, c1, c2, alpha):
        h, w = img.shape[0], img.shape[1]
        j0 = max(int(np.floor(cx - r_out)) - 1, 0)
        j1 = min(int(np.ceil(cx + r_out)) + 1, w)
        i0 = max(int(np.floor(cy - r_out)) - 1, 0)
        i1 = min(int(np.ceil(cy + r_out)) + 1, h)
        for i in range(i0, i1):
            py = i + 0.5
            for j in range(j0, j1):
                px = j + 0.5
                d = np.sqrt((px - cx) ** 2 + (py - cy) ** 2)
                cov = min(r_out - d + 0.5, d - r_in + 0.5)
                if cov <= 0.0:
                    continue
                if cov > 1.0:
                    cov = 1.0
                cov *= alpha
                img[i, j, 0] = img[i, j, 0] * (1.0 - cov) + cov * c0
                img[i, j, 1] = img[i, j, 1] * (1.0 - cov) + cov * c1
                img[i, j, 2] = img[i, j, 2] * (1.0 - cov) + cov * c2

    @numba.njit(cache=True)
    def _sweep_loop(scores, labels, want_ap):
        order = np.argsort(-scores, kind="mergesort")
        n = scores.size
        n_pos = 0.0
        for k in range(n):
            n_pos += labels[k]
        n_neg = n - n_pos
        tp = 0.0
        fp = 0.0
        tp_prev = 0.0
        fp_prev = 0.0
        acc = 0.0
        for k in range(n):
            idx = order[k]
            if labels[idx] > 0.5:
                tp += 1.0
                if want_ap:
                    acc += tp / (k + 1.0)
            else:
                fp += 1.0
            if want_ap:
                continue
            if k + 1 < n and scores[order[k + 1]] == scores[idx]:
                continue
            acc += (fp - fp_prev) * (tp + tp_prev) * 0.5
            tp_prev = tp
            fp_prev = fp
        if want_ap:
            return acc / n_pos
        return acc / (n_pos * n_neg)

    def paint_capsule_numba(img, x0, y0, x1, y1, r0, r1, color, alpha=1.0):
        _capsule_loop(img, float(x0), float(y0), float(x1), float(y1), float(r0), float(r1),
                      float(color[0]), float(color[1]), float(color[2]), float(alpha))
        return img

    def paint_ring_numba(img, cx, cy, r_in, r_out, color, alpha=1.0):
        _ring_loop(img, float(cx), float(cy), float(r_in), float(r_out),
                   float(color[0]), float(color[1]), float(color[2]), float(alpha))
        return img

    def roc_auc_numba(scores, labels):
        return float(_sweep_loop(np.ascontiguousarray(scores, dtype=np.float64),
                                 np.ascontiguousarray(labels, dtype=np.float64), False))

    def average_precision_numba(scores, labels):
        return float(_sweep_loop(np.ascontiguousarray(scores, dtype=np.float64),
                                 np.ascontiguousarray(labels, dtype=np.float64), True))


if USE_NUMBA:
    paint_capsule = paint_capsule_numba
    paint_ring = paint_ring_numba
    roc_auc = roc_auc_numba
    average_precision = average_precision_numba
else:
    paint_capsule = paint_capsule_numpy
    paint_ring = paint_ring_numpy
    roc_auc = roc_auc_numpy
    average_precision = average_precision_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"
