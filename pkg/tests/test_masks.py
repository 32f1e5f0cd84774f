import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from psodr.core import FeatureTensor, Mask
from psodr.evaluation import CvSpec
from psodr.masks import ScoredMask, apply_mask, best_mask, collect_masks, com_mask, load_masks, save_masks
from psodr.preprocess import extract_features, synth_subject
from psodr.pso import SwarmConfig


def test_width_with_full_scale_dims(rng):
    x = rng.normal(size=(3, 118, 250))
    m = Mask(np.arange(10), np.tile(np.arange(30), (10, 1)))
    assert apply_mask(x, m).shape == (3, 300)


def test_identity_mask_flattens(rng):
    x = rng.normal(size=(4, 3, 5))
    m = Mask(np.arange(3), np.tile(np.arange(5), (3, 1)))
    np.testing.assert_array_equal(apply_mask(x, m), x.reshape(4, -1))


def test_single_cell_mask(rng):
    x = rng.normal(size=(6, 3, 5))
    np.testing.assert_array_equal(apply_mask(x, Mask([0], [[0]]))[:, 0], x[:, 0, 0])


def test_out_of_range_mask(rng):
    x = rng.normal(size=(2, 3, 5))
    with pytest.raises(IndexError):
        apply_mask(x, Mask([3], [[0]]))
    with pytest.raises(IndexError):
        apply_mask(x, Mask([0], [[5]]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_column_identity(seed):
    r = np.random.default_rng(seed)
    N, K = int(r.integers(1, 7)), int(r.integers(1, 9))
    n, k = int(r.integers(1, N + 1)), int(r.integers(1, K + 1))
    x = r.normal(size=(3, N, K))
    m = Mask(r.permutation(N)[:n], np.array([r.permutation(K)[:k] for _ in range(n)]))
    out = apply_mask(FeatureTensor(x, np.arange(3), np.zeros(3, int)), m)
    assert out.shape == (3, n * k)
    for j in range(n * k):
        np.testing.assert_array_equal(out[:, j], x[:, m.elv[j // k], m.fsm[j // k, j % k]])


def sm(elv, fsm, val=0.0, test=0.0, fold=0, rep=0):
    return ScoredMask(Mask(elv, fsm), val, test, fold, rep)


def test_best_mask_rules():
    a = sm([1], [[1]], 0.9, 0.9, fold=0)
    b = sm([2], [[2]], 0.5, 0.5, fold=1)
    assert best_mask([a]) == a.mask
    assert best_mask([a, b]) == a.mask
    c = sm([3], [[3]], 0.6, 0.4, fold=1)
    d = sm([4], [[4]], 0.4, 0.6, fold=0)
    assert best_mask([c, d]) == d.mask
    with pytest.raises(ValueError):
        best_mask([])


def test_com_mask_identical_inputs():
    masks = [sm([4, 1], [[3, 2], [0, 5]])] * 200
    out = com_mask(masks, 2, 2)
    assert out == Mask([1, 4], [[0, 5], [2, 3]])


def test_com_mask_frequency_dominance():
    masks = [sm([7], [[0]]) for _ in range(5)] + [sm([9], [[0]])]
    np.testing.assert_array_equal(com_mask(masks, 1, 1).elv, [7])


def test_com_mask_tie_goes_to_lower_index():
    masks = [sm([2, 6], [[0], [0]]), sm([2, 4], [[0], [0]])]
    np.testing.assert_array_equal(com_mask(masks, 2, 1).elv, [2, 4])


def test_com_mask_bins_conditioned_on_channel():
    masks = [sm([1, 2], [[5], [8]]), sm([1, 3], [[5], [9]]), sm([2, 1], [[8], [6]])]
    out = com_mask(masks, 2, 1)
    assert out == Mask([1, 2], [[5], [8]])


def test_com_mask_falls_back_to_global_bins():
    masks = [sm([0], [[4]]), sm([0], [[4]]), sm([1], [[7]])]
    out = com_mask(masks, 1, 2, N=3, K=10)
    assert out == Mask([0], [[4, 7]])


def test_distilled_masks_are_legal(rng):
    masks = []
    for i in range(30):
        elv = rng.permutation(8)[:3]
        fsm = np.array([rng.permutation(12)[:4] for _ in range(3)])
        masks.append(ScoredMask(Mask(elv, fsm), rng.random(), rng.random(), i % 5, i // 5))
    assert com_mask(masks, 3, 4, 8, 12).violations(8, 12) == []
    assert best_mask(masks).violations(8, 12) == []


def test_mask_file_round_trip(tmp_path):
    scored = [sm([1], [[2]], 0.5, float("nan"), 1, 0)]
    path = save_masks(tmp_path / "m.json", scored, scored[0].mask, scored[0].mask, target="S01")
    back, best, common, tags = load_masks(path)
    assert back[0].mask == scored[0].mask and np.isnan(back[0].test_score)
    assert best == scored[0].mask and tags["target"] == "S01"


def _features(small_cfg, seed):
    from dataclasses import replace
    return extract_features(synth_subject(replace(small_cfg, seed=seed)))


def test_one_rep_two_folds_gives_two_masks(small_cfg):
    f = _features(small_cfg, 0)
    cfg = SwarmConfig(n=2, k=2, pop_size=4, max_iter=2)
    out = collect_masks(f, cfg, CvSpec(reps=1, folds=2))
    assert len(out) == 2
    assert [(s.rep_id, s.fold_id) for s in out] == [(0, 0), (0, 1)]


def test_full_plan_gives_200_masks(small_cfg):
    f = _features(small_cfg, 0)
    cfg = SwarmConfig(n=1, k=1, pop_size=2, max_iter=0)
    assert len(collect_masks(f, cfg, CvSpec(reps=10, folds=20), hidden=10)) == 200


def test_parallel_matches_serial(small_cfg):
    f = _features(small_cfg, 1)
    cfg = SwarmConfig(n=2, k=2, pop_size=4, max_iter=2)
    a = collect_masks(f, cfg, CvSpec(reps=1, folds=3))
    b = collect_masks(f, cfg, CvSpec(reps=1, folds=3), n_jobs=2)
    assert [s.to_dict() for s in a] == [s.to_dict() for s in b]


def test_planted_masks_validate_above_chance(small_cfg):
    means = []
    for seed in range(5):
        f = _features(small_cfg, seed)
        cfg = SwarmConfig(n=2, k=3, pop_size=8, max_iter=5, seed=seed)
        out = collect_masks(f, cfg, CvSpec(reps=1, folds=4, seed=seed), hidden=40)
        means.append(np.mean([s.val_score for s in out]))
    means = np.asarray(means)
    assert means.min() > 0
    if means.std() > 1e-6:
        assert stats.ttest_1samp(means, 0.0, alternative="greater").pvalue < 0.05
