import numpy as np
import pytest
from dataclasses import replace
from scipy import stats

from psodr.classifiers import elm_predict, elm_train
from psodr.core import TrialTensor
from psodr.evaluation import score
from psodr.masks import standardize
from psodr.preprocess import (SynthConfig, common_average_reference, demean, dft_magnitude, extract_features,
                              slice_super_epochs, synth_subject)


def _tt(data):
    data = np.asarray(data, dtype=np.float64)
    m = data.shape[0]
    return TrialTensor(data, np.arange(m), np.zeros(m, dtype=int))


def test_demean_constant_is_zero():
    out = demean(_tt(np.full((1, 1, 8), 5.0)))
    np.testing.assert_array_equal(out.data, np.zeros((1, 1, 8)))


def test_demean_zero_mean_unchanged(rng):
    x = rng.normal(size=(3, 4, 50))
    x -= x.mean(axis=2, keepdims=True)
    np.testing.assert_allclose(demean(_tt(x)).data, x, atol=1e-12)


def test_demean_properties(rng):
    x = rng.normal(size=(5, 3, 40)) * 10 + 3
    d = demean(_tt(x)).data
    assert np.abs(d.mean(axis=2)).max() < 1e-9
    shifted = demean(_tt(x + rng.normal(size=(5, 3, 1)))).data
    np.testing.assert_allclose(shifted, d, atol=1e-9)
    np.testing.assert_allclose(demean(demean(_tt(x))).data, d, atol=1e-12)


def test_car_antisymmetric_pair_unchanged(rng):
    x = rng.normal(size=10)
    out = common_average_reference(_tt(np.stack([x, -x])[None])).data[0]
    np.testing.assert_allclose(out, np.stack([x, -x]), atol=1e-12)


def test_car_identical_channels_vanish(rng):
    x = rng.normal(size=10)
    out = common_average_reference(_tt(np.stack([x, x, x])[None])).data
    np.testing.assert_allclose(out, 0.0, atol=1e-12)


def test_car_properties(rng):
    x = rng.normal(size=(4, 4, 30))
    c = common_average_reference(_tt(x)).data
    assert np.abs(c.sum(axis=1)).max() < 1e-9
    np.testing.assert_allclose(common_average_reference(_tt(c)).data, c, atol=1e-12)


def test_car_single_channel_rejected():
    with pytest.raises(ValueError):
        common_average_reference(_tt(np.zeros((2, 1, 10))))


def test_slice_counts_and_labels():
    raw = np.zeros((280, 2, 3500), dtype=np.float32)
    labels = np.arange(280) % 2
    t = slice_super_epochs(raw, 500, 1, labels)
    assert t.data.shape == (1400, 2, 500)
    assert len(np.unique(t.group_id)) == 280
    np.testing.assert_array_equal(t.label, labels[t.group_id])


def test_slice_single_super_epoch():
    t = slice_super_epochs(np.zeros((1, 2, 3500)), 500, 1)
    assert t.n_subepochs == 5
    assert set(t.group_id.tolist()) == {0}


def test_slice_errors():
    with pytest.raises(ValueError, match="divisible"):
        slice_super_epochs(np.zeros((2, 2, 3500)), 400, 1)
    with pytest.raises(ValueError):
        slice_super_epochs(np.zeros((2, 2, 1000)), 500, 1)


def test_slice_reconstructs_interior(rng):
    raw = rng.normal(size=(3, 2, 70))
    t = slice_super_epochs(raw, 10, 1)
    for g in range(3):
        pieces = t.data[t.group_id == g]
        np.testing.assert_array_equal(np.concatenate(list(pieces), axis=-1), raw[g, :, 10:60])


def test_dft_bin_count():
    assert dft_magnitude(_tt(np.zeros((1, 1, 500)))).K == 250


def test_dft_constant_signal():
    f = dft_magnitude(_tt(np.full((1, 1, 64), 2.5))).data[0, 0]
    assert f[0] == pytest.approx(64 * 2.5)
    assert np.abs(f[1:]).max() < 1e-9


def test_dft_cosine_peak():
    n = 500
    x = np.cos(2 * np.pi * 17 * np.arange(n) / n)
    f = dft_magnitude(_tt(x[None, None])).data[0, 0]
    assert int(np.argmax(f)) == 17
    assert f[17] == pytest.approx(n / 2)


def _dft_oracle(x):
    n = len(x)
    k = np.arange(n // 2)
    j = np.arange(n)
    basis = np.exp(-2j * np.pi * np.outer(k, j) / n)
    return np.abs(basis @ x)


def test_dft_matches_direct_summation(rng):
    for _ in range(100):
        n = int(rng.integers(2, 120))
        x = rng.normal(size=n)
        ours = dft_magnitude(_tt(x[None, None])).data[0, 0]
        ref = _dft_oracle(x)
        assert np.max(np.abs(ours - ref)) <= 1e-9 * max(np.max(np.abs(ref)), 1.0)


def test_synth_deterministic(small_cfg):
    a, b = synth_subject(small_cfg), synth_subject(small_cfg)
    assert a.trials.data.tobytes() == b.trials.data.tobytes()
    np.testing.assert_array_equal(a.labels, b.labels)


def test_synth_balanced(small_cfg):
    for seed in range(5):
        for n in (40, 41):
            rec = synth_subject(replace(small_cfg, seed=seed, n_super_epochs=n))
            assert abs(int(rec.labels.sum()) * 2 - n) <= 1


def test_synth_zero_effect_classes_indistinguishable(small_cfg):
    null = synth_subject(replace(small_cfg, effect_size=0.0))
    planted = synth_subject(small_cfg)
    # label-independent draws: class-0 epochs are byte-identical to the planted record
    cls0 = null.trials.label == 0
    np.testing.assert_array_equal(null.trials.data[cls0], planted.trials.data[cls0])
    f = extract_features(null)
    for c in small_cfg.informative_channels:
        for b in small_cfg.informative_bins:
            v = f.data[:, c, b]
            assert stats.ks_2samp(v[f.label == 0], v[f.label == 1]).pvalue > 0.001


def test_synth_planted_signal_is_learnable(small_cfg):
    rec = synth_subject(small_cfg)
    f = extract_features(rec)
    c, b = small_cfg.informative_channels[0], small_cfg.informative_bins[0]
    x = f.data[:, c, b:b + 1]
    train = f.group_id < 20
    xtr, xte = standardize(x[train], x[~train])
    model = elm_train(xtr, f.label[train], hidden=80, seed=0)
    inf, _ = score(f.label[~train], elm_predict(model, xte))
    assert inf > 0.8


def test_synth_rejects_bad_config(small_cfg):
    with pytest.raises(ValueError):
        synth_subject(replace(small_cfg, informative_bins=(60,)))
    with pytest.raises(ValueError):
        synth_subject(replace(small_cfg, informative_channels=(9,)))
