"""Acceptance suite: one test per criterion, each ending in a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s``; the verdict lines
are also repeated in the terminal summary. Criteria 6 and 7 train real
models and take roughly 20 and 3 minutes on one CPU core.
"""
import math
import time

import numpy as np
import pytest
import torch
from torch import nn

from acceptance_log import verdict
from oracles import pairwise_auc, staircase_ap

from gazeatt import kernels
from gazeatt.cli import main
from gazeatt.data import GeneratorConfig, generate_corpus, read_manifest, reveal_angles, write_corpus
from gazeatt.evaluation import EvalConfig, Predictions, evaluate, evaluate_predictions, fixation_ap, heatmap_auc
from gazeatt.losses import TASKS, LossConfig
from gazeatt.model import ModelConfig, build_model, parameter_groups
from gazeatt.train import UPDATE_MASKS, SampleLoader, TrainConfig, collate, fit, make_optimizer, task_losses, training_step

SMALL = ModelConfig(input_side=64)


def small_batch(seed, dtype=torch.float32):
    samples = (generate_corpus(GeneratorConfig(domain="GF", seed=seed, count=8, canvas_side=64))
               + generate_corpus(GeneratorConfig(domain="ED", seed=seed, count=3, canvas_side=64))
               + generate_corpus(GeneratorConfig(domain="SH", seed=seed, count=2, canvas_side=64)))
    return collate(samples, SampleLoader(SMALL), dtype)


# ------------------------------------------------------------------ 1


class FrozenGates:
    """Pins every ReLU to the on/off pattern recorded at the base point.

    Within one linear region this is the network itself, so its gradient at
    the base point equals the model's; unlike the model it stays smooth
    over the whole +-h segment, so central differences are not spoiled by
    units that switch inside the step.
    """

    def __init__(self, model):
        self.masks, self.recording = None, False
        relus = [m for m in model.modules() if isinstance(m, nn.ReLU)]
        for k, r in enumerate(relus):
            r.inplace = False
            r.register_forward_hook(self._hook(k))

    def _hook(self, k):
        def hook(mod, inp, out):
            if self.recording:
                self.masks.append((inp[0] > 0).to(inp[0].dtype))
            elif self.masks is not None:
                return inp[0] * self.masks[k]
        return hook


def test_criterion_1_gradient_check():
    t0 = time.time()
    h = 1e-3
    worst = {t: 0.0 for t in TASKS}
    for seed in range(20):
        model = build_model(SMALL, seed=seed).double().train()
        gates = FrozenGates(model)
        batch = small_batch(seed, torch.float64)
        params = list(model.parameters())
        g = torch.Generator().manual_seed(10_000 + seed)

        for task in TASKS:
            def f():
                return task_losses(model(batch.scene, batch.face, batch.position), batch, LossConfig())[task][0]

            gates.masks, gates.recording = [], True
            value = f()
            gates.recording = False
            assert value is not None, (seed, task)
            grads = torch.autograd.grad(value, params, allow_unused=True)
            v = [torch.randn(p.shape, generator=g, dtype=torch.float64) for p in params]
            norm = torch.sqrt(sum((x ** 2).sum() for x in v))
            v = [x / norm for x in v]
            analytic = float(sum((gr * x).sum() for gr, x in zip(grads, v) if gr is not None))
            with torch.no_grad():
                for p, x in zip(params, v):
                    p.add_(h * x)
                fp = float(f())
                for p, x in zip(params, v):
                    p.sub_(2 * h * x)
                fm = float(f())
                for p, x in zip(params, v):
                    p.add_(h * x)
            gates.masks = None
            fd = (fp - fm) / (2 * h)
            rel = abs(fd - analytic) / max(abs(fd), abs(analytic))
            worst[task] = max(worst[task], rel)
    elapsed = time.time() - t0
    ok = max(worst.values()) < 1e-4 and elapsed < 300
    detail = ", ".join(f"{t} {e:.1e}" for t, e in worst.items()) + f"; {elapsed:.0f}s"
    verdict(1, "gradient check (worst relative error, 20 seeds)", ok, detail)
    assert ok


# ------------------------------------------------------------------ 2


def test_criterion_2_selective_freezing():
    batch = small_batch(3)
    results = {}
    for task in TASKS:
        model = build_model(SMALL, seed=1)
        cfg = TrainConfig()
        opt = make_optimizer(model, cfg)
        groups = parameter_groups(model)
        frozen = [g for g in groups if g not in UPDATE_MASKS[task]]
        ref = {g: [p.detach().clone() for p in groups[g]] for g in groups}
        identical = True
        for _ in range(10):
            training_step(model, opt, batch, cfg, tasks=(task,))
            identical &= all(torch.equal(a, b) for g in frozen for a, b in zip(ref[g], groups[g]))
        moved = all(any(not torch.equal(a, b) for a, b in zip(ref[g], groups[g])) for g in UPDATE_MASKS[task])
        results[task] = identical and moved
    ok = all(results.values())
    verdict(2, "selective-backprop freezing over 10 steps",
            ok, ", ".join(f"{t} {'frozen-ok' if r else 'LEAK'}" for t, r in results.items()))
    assert ok


# ------------------------------------------------------------------ 3


def test_criterion_3_metric_oracles():
    t0 = time.time()
    rng = np.random.default_rng(2024)
    worst_auc = worst_ap = 0.0
    backends = [(kernels.roc_auc_numpy, kernels.average_precision_numpy)]
    if kernels.HAVE_NUMBA:
        backends.append((kernels.roc_auc_numba, kernels.average_precision_numba))
    for _ in range(200):
        n = int(rng.integers(1, 5))
        heat = rng.random((n, 10, 10))
        if rng.random() < 0.5:
            heat = np.round(heat, 1)
        ann = [rng.random((int(rng.integers(1, 4)), 2)) for _ in range(n)]
        scores, labels = [], []
        for hm, pts in zip(heat, ann):
            lab = np.zeros(100)
            for x, y in pts:
                lab[min(int(y * 10), 9) * 10 + min(int(x * 10), 9)] = 1
            scores += list(hm.reshape(-1))
            labels += list(lab)
        want = pairwise_auc(scores, labels)
        worst_auc = max(worst_auc, abs(heatmap_auc(heat, ann) - want))
        for auc, _ in backends:
            worst_auc = max(worst_auc, abs(auc(np.array(scores), np.array(labels)) - want))
    for _ in range(200):
        m = int(rng.integers(2, 80))
        lab = rng.integers(0, 2, m)
        lab[rng.integers(0, m)] = 1
        s = rng.random(m)
        if rng.random() < 0.5:
            s = np.round(s, 1)
        want = staircase_ap(s, lab)
        worst_ap = max(worst_ap, abs(fixation_ap(s, lab) - want))
        for _, ap in backends:
            worst_ap = max(worst_ap, abs(ap(s, lab.astype(float)) - want))
    elapsed = time.time() - t0
    ok = worst_auc <= 1e-9 and worst_ap <= 1e-9 and elapsed < 60
    verdict(3, "AUC/AP vs brute-force oracles (200 each)", ok,
            f"max |AUC diff| {worst_auc:.1e}, max |AP diff| {worst_ap:.1e}; {elapsed:.1f}s")
    assert ok


# ------------------------------------------------------------------ 4


def test_criterion_4_random_baseline_chance():
    samples = generate_corpus(GeneratorConfig(domain="GF", seed=404, count=1000, p_inside=1.0), render=False)
    dummy = Predictions(np.zeros((1000, 2)), np.full((1000, 10, 10), 0.01), np.ones(1000))
    rep, _ = evaluate_predictions(dummy, samples, EvalConfig(baseline="random", seed=0))
    ok = abs(rep.auc - 0.5) <= 0.03 and rep.n_samples["heatmap"] == 1000
    verdict(4, "random baseline AUC over 1000 inside samples", ok, f"AUC {rep.auc:.4f} (0.5 +- 0.03)")
    assert ok


# ------------------------------------------------------------------ 5


def test_criterion_5_corpus_statistics():
    gf = generate_corpus(GeneratorConfig(domain="GF", seed=5, count=10_000), render=False)
    frac = sum(s.inside for s in gf) / len(gf)
    checks = {"GF inside": abs(frac - 0.884) <= 0.01}
    detail = [f"GF inside {frac:.4f}"]
    for dom, limit in (("ED", 40.0), ("SH", 90.0)):
        ss = generate_corpus(GeneratorConfig(domain=dom, seed=5, count=3000), render=False)
        deg = np.degrees([tuple(s.gaze_angle) for s in ss])
        outside = all(s.inside == 0 for s in ss)
        in_range = bool(np.all(np.abs(deg[:, 0]) <= limit) and np.all(np.abs(deg[:, 1]) <= limit))
        checks[dom] = outside and in_range
        detail.append(f"{dom} outside {outside}, max |yaw| {np.abs(deg[:, 0]).max():.1f}, "
                      f"max |pitch| {np.abs(deg[:, 1]).max():.1f} (limit {limit:.0f})")
    ok = all(checks.values())
    verdict(5, "corpus statistics", ok, "; ".join(detail))
    assert ok


# ------------------------------------------------------------------ 6


@pytest.mark.slow
def test_criterion_6_end_to_end(tmp_path):
    t0 = time.time()
    plan = [("gf", "GF", 5000, 1), ("ed", "ED", 3000, 2), ("sh", "SH", 3000, 3),
            ("gf_test", "GF", 1000, 11), ("ed_test", "ED", 1000, 12), ("mmdb", "MMDB", 1000, 13)]
    corpora = {}
    for name, dom, n, seed in plan:
        res = write_corpus(GeneratorConfig(domain=dom, seed=seed, count=n), tmp_path / name)
        corpora[name] = read_manifest(res["files"]["manifest"])
    t_gen = time.time() - t0

    model = build_model(ModelConfig(), seed=0)
    cfg = TrainConfig(epochs=3, seed=0, log_every=50, checkpoint_every=0, cache_images=False)
    t1 = time.time()
    fit(model, cfg, tmp_path / "run", corpora=[corpora["gf"], corpora["ed"], corpora["sh"]])
    t_train = time.time() - t1

    t2 = time.time()
    held = corpora["gf_test"]
    ours, _ = evaluate(model, held, EvalConfig())
    rand, _ = evaluate(model, held, EvalConfig(baseline="random"))
    cent, _ = evaluate(model, held, EvalConfig(baseline="center"))
    ang, _ = evaluate(model, corpora["ed_test"], EvalConfig())
    mm, _ = evaluate(model, corpora["mmdb"], EvalConfig())
    t_eval = time.time() - t2

    checks = {
        "auc": ours.auc >= 0.85,
        "angle": ang.mean_angular_error_deg <= 15.0,
        "ap": mm.fixation_ap >= 0.90,
        "baselines": ours.auc - max(rand.auc, cent.auc) >= 0.15,
        "time": t_train <= 20 * 60,
    }
    ok = all(checks.values())
    verdict(6, "end-to-end desk-scale training", ok,
            f"AUC {ours.auc:.4f} (random {rand.auc:.4f}, center {cent.auc:.4f}), "
            f"angular error {ang.mean_angular_error_deg:.2f} deg, MMDB AP {mm.fixation_ap:.4f}, "
            f"train {t_train / 60:.1f} min (generation {t_gen / 60:.1f}, eval {t_eval / 60:.1f})")
    assert ok, checks


# ------------------------------------------------------------------ 7


@pytest.mark.slow
def test_criterion_7_project_and_compare_helps(tmp_path):
    mcfg = ModelConfig(input_side=113)
    train = generate_corpus(GeneratorConfig(domain="GF", seed=70, count=1500))
    held = reveal_angles(generate_corpus(GeneratorConfig(domain="GF", seed=71, count=400)))
    errors = {}
    for w in (1.0, 0.0):
        errs = []
        for seed in range(3):
            model = build_model(mcfg, seed=seed)
            cfg = TrainConfig(epochs=2, seed=seed, loss=LossConfig(w_pnc=w), log_every=1000, checkpoint_every=0)
            fit(model, cfg, tmp_path / f"w{w}_s{seed}", corpora=[train])
            rep, _ = evaluate(model, held, EvalConfig())
            errs.append(rep.mean_angular_error_deg)
        errors[w] = errs
    with_pnc, without = np.mean(errors[1.0]), np.mean(errors[0.0])
    ok = with_pnc < without
    verdict(7, "project-and-compare on GF-only training", ok,
            f"mean angular error w_pnc=1 {with_pnc:.1f} deg {np.round(errors[1.0], 1).tolist()} vs "
            f"w_pnc=0 {without:.1f} deg {np.round(errors[0.0], 1).tolist()}")
    assert ok


# ------------------------------------------------------------------ 8


def test_criterion_8_reproducible_reports(tmp_path):
    small = tmp_path / "small.cfg"
    small.write_text("gen.canvas_side = 64\n")
    for name, dom, seed in (("gf", "GF", 1), ("ed", "ED", 2), ("mm", "MMDB", 3)):
        assert main(["gen-data", "--config", str(small), "--out", str(tmp_path / name), "--domain", dom,
                     "--count", "40", "--seed", str(seed)]) == 0
    cfg = tmp_path / "train.cfg"
    cfg.write_text("train.epochs = 2\ntrain.batch_size = 12\ntrain.seed = 8\nmodel.input_side = 64\n"
                   "train.mixture = gf/manifest.jsonl:GF, ed/manifest.jsonl:ED\n")
    reports = []
    for run in ("a", "b"):
        assert main(["train", "--config", str(cfg), "--out", str(tmp_path / run)]) == 0
        for m in ("gf", "ed", "mm"):
            out = tmp_path / f"{run}_eval" / f"{m}.json"
            assert main(["eval", "--checkpoint", str(tmp_path / run / "final.pt"),
                         "--manifest", str(tmp_path / m / "manifest.jsonl"), "--out", str(out)]) == 0
        reports.append([(tmp_path / f"{run}_eval" / f"{m}.json").read_bytes() for m in ("gf", "ed", "mm")])
    ok = reports[0] == reports[1]
    verdict(8, "byte-identical reports from two train+eval runs", ok,
            f"{len(reports[0])} report pairs, {'identical' if ok else 'DIFFERENT'}")
    assert ok
