import numpy as np
import pytest

from ampgrad import amplification as amp
from ampgrad.checkpoint import read_checkpoint
from ampgrad.data import Dataset, normalize, synth_gaussians
from ampgrad.errors import NumericError
from ampgrad.nn.archs import build_model, get_preset
from ampgrad.schedule import DESK_TEMPLATE, PhaseParams, Schedule, parse_schedule, s1, s2
from ampgrad.trainer import (AmpOptions, Trainer, TrainOptions, batch_indices, evaluate, train)

SHORT = DESK_TEMPLATE._replace(ends=(2, 4, 5, 6))


@pytest.fixture(scope="module")
def blobs():
    tr = synth_gaussians(0, 256, 2, 8, separation=3.0)
    te = synth_gaussians(1, 100, 2, 8, separation=3.0)
    tr, stats = normalize(tr)
    te, _ = normalize(te, stats)
    return tr, te


def fresh():
    return build_model(get_preset("mlp-tiny"), seed=0)


def trajectory(schedule, blobs, **amp_kw):
    model = fresh()
    snaps = []
    train(model, schedule, *blobs, seed=3, batch_size=32,
          on_epoch_end=lambda r, m: snaps.append([a.copy() for _, a in m.state_arrays()]), **amp_kw)
    return snaps


def assert_same(a, b):
    assert len(a) == len(b)
    for sa, sb in zip(a, b):
        for x, y in zip(sa, sb):
            np.testing.assert_array_equal(x, y)


def test_convergence_on_separable_data():
    tr = synth_gaussians(5, 400, 2, 8, separation=8.0)
    te = synth_gaussians(6, 100, 2, 8, separation=8.0)
    records = train(fresh(), parse_schedule("[(20, 0.1, 0, 1)]"), tr, te, seed=0, batch_size=32)
    assert records[-1].train_acc > 95


def test_records_cover_every_epoch(blobs):
    records = train(fresh(), s2(0.5, 0.5, SHORT), *blobs, seed=0, batch_size=32)
    assert [r.epoch for r in records] == list(range(1, 7))
    assert [r.phase for r in records] == [1, 1, 2, 2, 3, 4]
    assert [r.epoch for r in records if r.phase_end] == [2, 4, 5, 6]
    assert all(0 <= r.train_acc <= 100 and 0 <= r.test_acc <= 100 for r in records)
    assert records[2].beta == 0.5 and records[2].lr == 0.1


def test_gamma_one_matches_baseline(blobs):
    base = trajectory(s1(0.0, SHORT).with_gamma(1.0), blobs)
    assert_same(trajectory(s1(0.5, SHORT).with_gamma(1.0), blobs), base)


def test_zero_ratio_any_gamma_matches_baseline(blobs):
    base = trajectory(s1(0.0, SHORT).with_gamma(1.0), blobs)
    assert_same(trajectory(s1(0.0, SHORT, gamma=5.0), blobs), base)


def test_hooks_disabled_matches_baseline(blobs):
    base = trajectory(s1(0.0, SHORT).with_gamma(1.0), blobs)
    assert_same(trajectory(s2(1.0, 1.0, SHORT, gamma=4.0), blobs, hooks=False), base)


def test_amplification_changes_trajectory(blobs):
    base = trajectory(s1(0.0, SHORT).with_gamma(1.0), blobs)
    amped = trajectory(s1(1.0, SHORT, gamma=4.0), blobs)
    assert_same(amped[:2], base[:2])
    assert not np.array_equal(amped[3][0], base[3][0])


def test_no_leak_across_phases(blobs):
    counts = {}
    sched = s2(0.5, 1.0, SHORT)
    model = fresh()
    train(model, sched, *blobs, seed=1, batch_size=32,
          on_epoch_end=lambda r, m: counts.setdefault(r.epoch, len(amp.amplified_layers(m))))
    assert counts == {1: 0, 2: 0, 3: 1, 4: 1, 5: 2, 6: 0}
    assert amp.amplified_layers(model) == []


def test_selection_redrawn_per_phase(blobs):
    trainer = Trainer(fresh(), TrainOptions(batch_size=32))
    trainer.fit(s2(0.5, 0.5, SHORT), *blobs, seed=4)
    assert [s.stream for s in trainer.selections] == [2, 3]
    assert trainer.selections[0].dump_line().startswith("phase=2 seed=4 beta=0.5 gamma=2")


def test_batches_are_seeded_and_drop_singletons():
    a = batch_indices(65, 32, seed=1, epoch=3)
    assert [len(b) for b in a] == [32, 32]
    b = batch_indices(65, 32, seed=1, epoch=3)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not np.array_equal(a[0], batch_indices(65, 32, seed=1, epoch=4)[0])


def test_evaluate_constant_and_memoriser():
    model = fresh()
    last = model.items[-1]
    last.weight.data[...] = 0
    last.bias.data[...] = [1.0, 0.0]
    ds = Dataset(np.random.default_rng(0).standard_normal((20, 8)).astype(np.float32),
                 np.arange(20) % 2, 2)
    assert evaluate(model, ds) == 50.0

    ten = build_model(get_preset("mlp-tiny", num_classes=10), seed=0)
    ten.items[-1].weight.data[...] = 0
    ten.items[-1].bias.data[...] = np.eye(10)[0]
    balanced = Dataset(np.zeros((30, 8), np.float32), np.arange(30) % 10, 10)
    assert evaluate(ten, balanced) == 10.0


def test_memoriser_scores_full_marks():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((8, 8)).astype(np.float32) * 5
    ds = Dataset(x, np.arange(8) % 2, 2)
    model = fresh()
    train(model, parse_schedule("[(200, 0.1, 0, 1)]"), ds, ds, seed=0, batch_size=8)
    assert evaluate(model, ds) == 100.0


def test_evaluate_side_effect_free_and_deterministic(blobs):
    model = fresh()
    train(model, parse_schedule("[(2, 0.1, 0, 1)]"), *blobs, seed=0, batch_size=32)
    before = [a.copy() for _, a in model.state_arrays()]
    sample = blobs[1].take(np.arange(100))
    values = {evaluate(model, sample) for _ in range(5)}
    assert len(values) == 1
    for a, (_, b) in zip(before, model.state_arrays()):
        np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        evaluate(model, Dataset(np.zeros((0, 8), np.float32), [], 2))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_aborts_with_checkpoint(blobs, tmp_path):
    model = fresh()
    huge = Schedule((PhaseParams(3, 1e30, 1.0, 1e6),))
    path = tmp_path / "last.ampg"
    with pytest.raises(NumericError, match="non-finite loss"):
        Trainer(model, TrainOptions(batch_size=32, amp=AmpOptions(layer_types="relu")),
                checkpoint_path=path).fit(huge, *blobs, seed=0)
    assert path.exists() and set(read_checkpoint(path)) == {n for n, _ in model.state_arrays()}


def test_output_side_option_runs(blobs):
    recs = train(fresh(), s1(0.5, SHORT), *blobs, seed=0, batch_size=32,
                 amp_point="output_side", scale_own_params=False, layer_types=["ReLU", "BatchNorm"])
    assert len(recs) == 6
