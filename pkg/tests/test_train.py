import json

import numpy as np
import pytest
import torch
from scipy.stats import chisquare

from gazeatt.data import GeneratorConfig, generate_corpus
from gazeatt.losses import LossConfig, TASKS
from gazeatt.model import ModelConfig, build_model, load_checkpoint, parameter_groups
from gazeatt.train import (
    UPDATE_MASKS,
    SampleLoader,
    TrainConfig,
    TrainingError,
    collate,
    fit,
    make_epoch_schedule,
    make_optimizer,
    task_losses,
    training_step,
)

MCFG = ModelConfig(input_side=64)


def corpus(domain, count, seed=0, **kw):
    return generate_corpus(GeneratorConfig(domain=domain, seed=seed, count=count, canvas_side=64, **kw))


@pytest.fixture(scope="module")
def pools():
    return {
        "GF": corpus("GF", 60, seed=1),
        "ED": corpus("ED", 40, seed=2),
        "SH": corpus("SH", 40, seed=3),
    }


def snapshot(model):
    return {g: [p.detach().clone() for p in ps] for g, ps in parameter_groups(model).items()}


def changed(before, model):
    now = parameter_groups(model)
    return {g for g in before if any(not torch.equal(a, b) for a, b in zip(before[g], now[g]))}


def test_update_masks_match_groups():
    assert UPDATE_MASKS == {"angle": ("b", "d"), "heatmap": ("a", "b", "c"),
                            "fixation": ("e",), "pnc": ("b", "d")}


# ------------------------------------------------------------------ schedule


def test_schedule_sizes_and_determinism():
    sizes = [len(b) for b in make_epoch_schedule([list(range(100))], 36, np.random.default_rng(0))]
    assert sizes == [36, 36, 28]
    a = make_epoch_schedule([range(50), range(70)], 36, np.random.default_rng(5))
    b = make_epoch_schedule([range(50), range(70)], 36, np.random.default_rng(5))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert sorted(np.concatenate(a).tolist()) == list(range(120))


def test_schedule_rejects_empty():
    with pytest.raises(TrainingError):
        make_epoch_schedule([], 36, np.random.default_rng(0))
    with pytest.raises(TrainingError):
        make_epoch_schedule([[], []], 36, np.random.default_rng(0))


def test_schedule_domain_mix_is_proportional():
    sizes = np.array([500, 300, 300])
    owner = np.repeat(np.arange(3), sizes)
    rng = np.random.default_rng(11)
    counts = np.zeros(3)
    for _ in range(1000):
        first = make_epoch_schedule([range(n) for n in sizes], 36, rng)[0]
        counts += np.bincount(owner[first], minlength=3)
    expected = 36 * 1000 * sizes / sizes.sum()
    assert chisquare(counts, expected).pvalue > 0.01


# ------------------------------------------------------------------ stepping


def _step(batch_samples, tasks=TASKS, seed=0, steps=1, cfg=None):
    model = build_model(MCFG, seed=seed)
    cfg = cfg or TrainConfig()
    opt = make_optimizer(model, cfg)
    batch = collate(batch_samples, SampleLoader(MCFG))
    before = snapshot(model)
    reps = [training_step(model, opt, batch, cfg, tasks=tasks) for _ in range(steps)]
    return model, opt, before, reps


def test_ed_only_batch_freezes_a_c_e(pools):
    model, opt, before, (rep,) = _step(pools["ED"][:12])
    assert changed(before, model) == {"b", "d"}
    assert rep.counts == {"angle": 12, "heatmap": 0, "fixation": 0, "pnc": 0}
    # Adam state exists only for parameters that received an update
    stateful = {id(p) for p in opt.state}
    groups = parameter_groups(model)
    assert not stateful & {id(p) for g in "ace" for p in groups[g]}


def test_gf_outside_only_batch_changes_only_e(pools):
    outside = [s for s in pools["GF"] if s.inside == 0]
    outside += [s for s in corpus("GF", 40, seed=9, p_inside=0.0)]
    model, _, before, (rep,) = _step(outside[:10])
    assert changed(before, model) == {"e"}
    assert rep.counts == {"angle": 0, "heatmap": 0, "fixation": 10, "pnc": 0}


def test_mixed_batch_counts(pools):
    mixed = pools["GF"][:20] + pools["ED"][:7] + pools["SH"][:5]
    n_in = sum(s.inside == 1 for s in pools["GF"][:20])
    _, _, _, (rep,) = _step(mixed)
    assert rep.counts == {"angle": 12, "heatmap": n_in, "fixation": 20, "pnc": n_in}


@pytest.mark.parametrize("task", TASKS)
def test_single_task_freezes_complement(pools, task):
    mixed = pools["GF"][:20] + pools["ED"][:10]
    model, _, before, _ = _step(mixed, tasks=(task,), steps=3)
    assert changed(before, model) == set(UPDATE_MASKS[task])


def test_zero_weight_skips_task(pools):
    cfg = TrainConfig(loss=LossConfig(w_fixation=0.0))
    model, _, before, (rep,) = _step(pools["GF"][:20], cfg=cfg)
    assert "e" not in changed(before, model)
    assert rep.counts["fixation"] == 20  # still reported


def test_non_finite_loss_names_task_and_batch(pools):
    model = build_model(MCFG, seed=0)
    with torch.no_grad():
        model.angle_fc.weight.fill_(float("nan"))
    cfg = TrainConfig()
    batch = collate(pools["ED"][:4], SampleLoader(MCFG))
    with pytest.raises(TrainingError, match=r"angle.*batch 7"):
        training_step(model, make_optimizer(model, cfg), batch, cfg, batch_index=7)


# ------------------------------------------------------------------ fitting


def test_epochs_zero_writes_initial_checkpoint(tmp_path, pools):
    model = build_model(MCFG, seed=3)
    before = snapshot(model)
    res = fit(model, TrainConfig(epochs=0), tmp_path, corpora=[pools["GF"]])
    assert res.steps == 0 and res.final_checkpoint.exists()
    assert changed(before, model) == set()
    m2, step = load_checkpoint(res.final_checkpoint)
    assert step == 0 and changed(before, m2) == set()


def test_fit_log_reload_and_reproducibility(tmp_path, pools):
    corp = [pools["GF"][:30], pools["ED"][:20]]
    cfg = TrainConfig(epochs=2, batch_size=10, log_every=1, checkpoint_every=4, seed=2)
    logs = []
    for run in ("r1", "r2"):
        model = build_model(MCFG, seed=2)
        res = fit(model, cfg, tmp_path / run, corpora=corp)
        logs.append(res.log_path.read_text())
    assert logs[0] == logs[1]
    lines = [json.loads(x) for x in logs[0].splitlines()]
    assert len(lines) == res.steps == 10
    assert {"step", "epoch", "counts", "heatmap_loss"} <= set(lines[0])
    assert [p.name for p in res.checkpoints] == ["step_000004.pt", "step_000008.pt"]
    m2, step = load_checkpoint(res.final_checkpoint)
    assert step == 10
    for (k, a), (_, b) in zip(model.state_dict().items(), m2.state_dict().items()):
        assert torch.equal(a, b), k
    x = collate(pools["GF"][:4], SampleLoader(MCFG))
    model.eval()
    m2.eval()
    with torch.no_grad():
        for u, v in zip(model(x.scene, x.face, x.position), m2(x.scene, x.face, x.position)):
            assert torch.equal(u, v)


def _corpus_loss(model, samples, task):
    model.train()  # batch statistics, as seen by the optimizer
    batch = collate(samples, SampleLoader(MCFG))
    with torch.no_grad():
        out = model(batch.scene, batch.face, batch.position)
    v, _ = task_losses(out, batch, LossConfig())[task]
    return float(v)


def test_smoke_training_reduces_fixation_loss(tmp_path):
    samples = corpus("GF", 200, seed=21)
    model = build_model(MCFG, seed=0)
    start = _corpus_loss(model, samples, "fixation")
    fit(model, TrainConfig(epochs=2, seed=0), tmp_path, corpora=[samples])
    assert _corpus_loss(model, samples, "fixation") < start


@pytest.mark.slow
def test_memorization_halves_every_task_loss(pools):
    samples = pools["GF"][:35] + pools["ED"][:15]
    model = build_model(MCFG, seed=0)
    cfg = TrainConfig()
    opt = make_optimizer(model, cfg)
    batch = collate(samples, SampleLoader(MCFG))
    start = {t: _corpus_loss(model, samples, t) for t in TASKS}
    for _ in range(300):
        training_step(model, opt, batch, cfg)
    end = {t: _corpus_loss(model, samples, t) for t in TASKS}
    for t in TASKS:
        assert end[t] <= 0.5 * start[t], (t, start[t], end[t])
