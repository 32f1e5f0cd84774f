"""Grouped cross-validation, informedness scoring and result aggregation."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import stats

from .core import ContingencyTable

FRACTION_GRID = tuple(round(0.05 * i, 2) for i in range(19))  # 0.00 .. 0.90


def informedness(t):
    """Bookmaker informedness TPR + TNR - 1; NaN when a class is absent from the truth."""
    pos = t.tp + t.fn
    neg = t.tn + t.fp
    if pos == 0 or neg == 0:
        return float("nan")
    return t.tp / pos + t.tn / neg - 1.0


def score(y_true, y_pred):
    """(informedness, accuracy) of a set of binary predictions."""
    table = ContingencyTable.from_predictions(y_true, y_pred)
    acc = (table.tp + table.tn) / table.total if table.total else float("nan")
    return informedness(table), acc


@dataclass(frozen=True)
class CvSpec:
    reps: int = 10
    folds: int = 20
    train_fraction: float = 0.90
    val_fraction: float = 0.05
    test_fraction: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.reps < 1 or self.folds < 1:
            raise ValueError("reps and folds must be positive")
        if not 0.0 <= self.train_fraction <= 0.9 + 1e-12:
            raise ValueError("train_fraction must lie in [0, 0.9]")
        if self.train_fraction + self.val_fraction + self.test_fraction > 1.0 + 1e-9:
            raise ValueError("train + val + test fractions exceed 1")


@dataclass(frozen=True)
class Fold:
    rep: int
    fold: int
    train_groups: np.ndarray
    val_groups: np.ndarray
    test_groups: np.ndarray


@dataclass(frozen=True)
class SplitPlan:
    spec: CvSpec
    folds: tuple

    def __iter__(self):
        return iter(self.folds)

    def __len__(self):
        return len(self.folds)


def _interleaved_order(groups, labels, rng):
    # shuffle each class, then merge so any window holds both classes in proportion
    by_class = {}
    for c in np.unique(labels):
        g = groups[labels == c].copy()
        rng.shuffle(g)
        by_class[c] = g
    keyed = []
    for g in by_class.values():
        m = len(g)
        keyed.extend(((i + 0.5) / m, rng.random(), gid) for i, gid in enumerate(g))
    keyed.sort()
    return np.array([gid for _, _, gid in keyed], dtype=np.int64)


def make_splits(groups, labels, spec):
    """Build a leakage-free plan over super-epoch groups.

    ``groups`` are the group ids and ``labels`` their classes (one entry per
    group). Each repetition orders the groups by a seeded class-interleaved
    shuffle; fold ``f`` takes its test block at offset ``f * n_test`` and the
    validation block right after it, so test blocks of different folds do not
    overlap while ``folds * n_test`` fits in the group count. Training groups
    are the first ``train_fraction`` of all groups in a class-interleaved
    shuffle of what is left. Only the training set depends on
    ``train_fraction``, and training sets are nested as the fraction grows.
    """
    groups = np.asarray(groups, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(np.unique(groups)) != len(groups):
        raise ValueError("group ids must be unique")
    G = len(groups)
    n_test = max(1, int(round(spec.test_fraction * G)))
    n_val = max(1, int(round(spec.val_fraction * G)))
    if n_test + n_val >= G + (1 if spec.train_fraction == 0 else 0):
        raise ValueError(f"{G} groups are too few for nonempty validation and test sets")
    n_train = int(round(spec.train_fraction * G))
    label_of = dict(zip(groups.tolist(), labels.tolist()))
    folds = []
    for rep in range(spec.reps):
        order_rng = np.random.default_rng([spec.seed, rep, 0])
        order = _interleaved_order(groups, labels, order_rng)
        for f in range(spec.folds):
            start = (f * n_test) % G
            idx = (start + np.arange(n_test + n_val)) % G
            test = np.sort(order[idx[:n_test]])
            val = np.sort(order[idx[n_test:]])
            rest = np.setdiff1d(groups, np.concatenate([test, val]))
            rest_labels = np.array([label_of[g] for g in rest], dtype=np.int64)
            train_rng = np.random.default_rng([spec.seed, rep, f, 1])
            train = np.sort(_interleaved_order(rest, rest_labels, train_rng)[:n_train])
            folds.append(Fold(rep, f, train, val, test))
    return SplitPlan(spec, tuple(folds))


@dataclass
class RunStats:
    informedness: float
    accuracy: float
    train_seconds: float = 0.0
    retrain_seconds: float = 0.0
    rep: int = 0
    fold: int = 0
    condition: str = ""
    fraction: float = 0.0
    zero_trial: bool = False

    def __post_init__(self):
        if not math.isnan(self.informedness) and not -1.0 - 1e-12 <= self.informedness <= 1.0 + 1e-12:
            raise ValueError("informedness out of [-1, 1]")
        if not math.isnan(self.accuracy) and not 0.0 <= self.accuracy <= 1.0:
            raise ValueError("accuracy out of [0, 1]")


RUNSTATS_COLUMNS = ("rep", "fold", "condition", "fraction", "informedness", "accuracy", "train_s", "retrain_s")


def runstats_to_csv(rows, timings=True):
    buf = io.StringIO()
    cols = RUNSTATS_COLUMNS if timings else RUNSTATS_COLUMNS[:6]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        vals = [r.rep, r.fold, r.condition, f"{r.fraction:.2f}", f"{r.informedness:.10g}", f"{r.accuracy:.10g}",
                f"{r.train_seconds:.6f}", f"{r.retrain_seconds:.6f}"]
        w.writerow(vals[: len(cols)])
    return buf.getvalue()


def runstats_from_csv(text):
    rows = []
    for d in csv.DictReader(io.StringIO(text)):
        rows.append(RunStats(
            informedness=float(d["informedness"]), accuracy=float(d["accuracy"]),
            train_seconds=float(d.get("train_s") or 0.0), retrain_seconds=float(d.get("retrain_s") or 0.0),
            rep=int(d["rep"]), fold=int(d["fold"]), condition=d["condition"], fraction=float(d["fraction"]),
        ))
    return rows


class Aggregate(NamedTuple):
    mean: float
    se: float
    n: int
    degenerate: bool  # fewer than two values, SE reported as 0


def _values(stats_or_values, attr="informedness"):
    out = []
    for s in stats_or_values:
        v = getattr(s, attr) if isinstance(s, RunStats) else s
        out.append(float(v))
    return np.asarray(out, dtype=np.float64)


def aggregate(stats_or_values, attr="informedness"):
    """Mean and standard error of the mean, skipping undefined (NaN) entries."""
    v = _values(stats_or_values, attr)
    v = v[~np.isnan(v)]
    if v.size == 0:
        raise ValueError("nothing to aggregate: every entry is undefined")
    if v.size == 1:
        return Aggregate(float(v[0]), 0.0, 1, True)
    return Aggregate(float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)), int(v.size), False)


def threshold_fraction(sweep, reference=0.90, alpha=0.05, attr="informedness"):
    """Smallest fraction whose scores are not significantly different from the reference.

    Uses a two-sided Welch t-test against the scores at ``reference``.
    """
    keys = {round(float(f), 6): f for f in sweep}
    ref_key = round(reference, 6)
    if ref_key not in keys:
        raise KeyError(f"sweep has no reference point {reference}")
    ref = _values(sweep[keys[ref_key]], attr)
    ref = ref[~np.isnan(ref)]
    for f in sorted(keys):
        vals = _values(sweep[keys[f]], attr)
        vals = vals[~np.isnan(vals)]
        if f == ref_key:
            return keys[f]
        if vals.size < 2 or ref.size < 2:
            continue
        if np.array_equal(np.sort(vals), np.sort(ref)):
            return keys[f]
        with warnings.catch_warnings():
            # near-constant samples (e.g. all-zero zero-trial scores) are expected here
            warnings.simplefilter("ignore", RuntimeWarning)
            p = stats.ttest_ind(vals, ref, equal_var=False).pvalue
        if np.isnan(p):
            # both samples constant
            if vals.mean() == ref.mean():
                return keys[f]
            continue
        if p > alpha:
            return keys[f]
    return keys[ref_key]
