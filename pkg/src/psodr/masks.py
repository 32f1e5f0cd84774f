"""Mask collection over grouped CV and distillation into BestMask / ComMask."""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .classifiers import elm_predict, elm_train
from .core import Mask
from .evaluation import CvSpec, make_splits, score
from .pso import run_pso

log = logging.getLogger(__name__)


def apply_mask(features, mask):
    """Reduce a FeatureTensor (or raw (m, N, K) array) to (m, n*k) columns.

    Column j is channel ``elv[j // k]`` at bin ``fsm[j // k, j % k]``.
    """
    data = getattr(features, "data", features)
    data = np.asarray(data)
    _, N, K = data.shape
    if mask.elv.min(initial=0) < 0 or mask.elv.max(initial=0) >= N:
        raise IndexError(f"mask channel index outside [0, {N})")
    if mask.fsm.min(initial=0) < 0 or mask.fsm.max(initial=0) >= K:
        raise IndexError(f"mask bin index outside [0, {K})")
    chans = np.repeat(mask.elv, mask.k)
    return data[:, chans, mask.fsm.reshape(-1)]


@dataclass(frozen=True)
class ScoredMask:
    mask: Mask
    val_score: float
    test_score: float
    fold_id: int = 0
    rep_id: int = 0

    def to_dict(self):
        d = self.mask.to_dict()
        d.update(val_score=_num(self.val_score), test_score=_num(self.test_score),
                 fold_id=self.fold_id, rep_id=self.rep_id)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(Mask.from_dict(d), _unnum(d["val_score"]), _unnum(d["test_score"]),
                   int(d.get("fold_id", 0)), int(d.get("rep_id", 0)))


def _num(v):
    return None if v is None or math.isnan(v) else float(v)


def _unnum(v):
    return float("nan") if v is None else float(v)


def standardize(train, *others):
    mu = train.mean(axis=0)
    sd = train.std(axis=0)
    sd[sd == 0] = 1.0
    return [(a - mu) / sd for a in (train, *others)]


class ElmFitness:
    """Score a mask by an ELM trained on the masked training set.

    Columns are z-scored with training statistics before the ELM sees them.
    ``metric`` is "informedness" (default) or "accuracy"; an undefined
    informedness scores 0.
    """

    def __init__(self, train, val, hidden=80, seed=0, metric="informedness"):
        if metric not in ("informedness", "accuracy"):
            raise ValueError(f"unknown metric {metric!r}")
        self.train, self.val = train, val
        self.hidden, self.seed, self.metric = hidden, seed, metric

    def evaluate(self, mask, target):
        xtr, xte = standardize(apply_mask(self.train, mask), apply_mask(target, mask))
        model = elm_train(xtr, self.train.label, self.hidden, self.seed)
        inf, acc = score(target.label, elm_predict(model, xte))
        value = inf if self.metric == "informedness" else acc
        return 0.0 if math.isnan(value) else value

    def __call__(self, mask):
        return self.evaluate(mask, self.val)


def _group_labels(features):
    gid = np.asarray(features.group_id)
    groups, first = np.unique(gid, return_index=True)
    return groups, np.asarray(features.label)[first]


def _one_fold(features, fold, cfg, hidden, metric):
    train = features.select_groups(fold.train_groups)
    val = features.select_groups(fold.val_groups)
    test = features.select_groups(fold.test_groups)
    fitness = ElmFitness(train, val, hidden=hidden, seed=cfg.seed, metric=metric)
    seed = int(np.random.SeedSequence([cfg.seed, fold.rep, fold.fold]).generate_state(1)[0])
    result = run_pso(replace(cfg, seed=seed), fitness)
    test_score = fitness.evaluate(result.mask, test)
    log.info("rep %d fold %d: val %.3f test %.3f (%d iterations)", fold.rep, fold.fold,
             result.fitness, test_score, result.state.iteration)
    return ScoredMask(result.mask, result.fitness, test_score, fold.fold, fold.rep)


def collect_masks(features, cfg, cv=CvSpec(), hidden=80, metric="informedness", n_jobs=1):
    """Run the swarm once per (rep, fold) and return one ScoredMask each.

    Fitness is ELM performance from the training split on the validation
    split; ``test_score`` rescores the final mask on the untouched test split.
    """
    cfg = replace(cfg, N=features.n_channels, K=features.K)
    groups, labels = _group_labels(features)
    plan = make_splits(groups, labels, cv)
    if n_jobs == 1:
        return [_one_fold(features, f, cfg, hidden, metric) for f in plan]
    return Parallel(n_jobs=n_jobs)(delayed(_one_fold)(features, f, cfg, hidden, metric) for f in plan)


def best_mask(masks):
    """Mask with the highest mean of validation and test score; earliest (rep, fold) wins ties."""
    if not masks:
        raise ValueError("no masks to choose from")

    def key(sm):
        m = (sm.val_score + sm.test_score) / 2
        return (-np.inf if math.isnan(m) else m, -sm.rep_id, -sm.fold_id)

    return max(masks, key=key).mask


def _top(counter, size, exclude=()):
    # highest count first, lower index on ties
    ranked = sorted((i for i in counter if i not in exclude), key=lambda i: (-counter[i], i))
    return ranked[:max(size, 0)]


def _fill(chosen, size, universe):
    chosen = list(chosen)
    taken = set(chosen)
    for i in range(universe):
        if len(chosen) >= size:
            break
        if i not in taken:
            chosen.append(i)
            taken.add(i)
    return chosen


def com_mask(masks, n, k, N=None, K=None):
    """Mask of the most frequently selected channels and, per channel, bins.

    Bin counts for a channel come from the FSM rows of masks that selected
    that channel; when those rows hold fewer than ``k`` distinct bins the
    remainder is taken from the bin counts over all rows. Ties go to the lower
    index. Channels and bins inside a row are returned in ascending order.
    """
    masks = [getattr(m, "mask", m) for m in masks]
    if not masks:
        raise ValueError("no masks to distill")
    chan_counts = Counter()
    bin_counts = {}
    global_bins = Counter()
    for m in masks:
        for c, row in zip(m.elv.tolist(), m.fsm.tolist()):
            chan_counts[c] += 1
            bin_counts.setdefault(c, Counter()).update(row)
            global_bins.update(row)
    N = N if N is not None else max(max(chan_counts) + 1, n)
    K = K if K is not None else max(max(global_bins) + 1, k)
    elv = _fill(_top(chan_counts, n), n, N)
    fsm = []
    for c in elv:
        own = _top(bin_counts.get(c, Counter()), k)
        row = own + _top(global_bins, k - len(own), exclude=set(own))
        fsm.append(sorted(_fill(row, k, K)))
    order = np.argsort(elv, kind="stable")
    return Mask(np.asarray(elv)[order], np.asarray(fsm)[order])


def save_masks(path, scored, best, common, **tags):
    payload = {
        "format_version": "1",
        **tags,
        "scored_masks": [s.to_dict() for s in scored],
        "best_mask": best.to_dict(),
        "com_mask": common.to_dict(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=1), encoding="utf-8")
    return path


def load_masks(path):
    """Returns (scored_masks, best_mask, com_mask, tags)."""
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    scored = [ScoredMask.from_dict(x) for x in d["scored_masks"]]
    tags = {k: v for k, v in d.items() if k not in ("scored_masks", "best_mask", "com_mask")}
    return scored, Mask.from_dict(d["best_mask"]), Mask.from_dict(d["com_mask"]), tags

