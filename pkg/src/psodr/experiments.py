"""Training-fraction sweeps for the mixing (Experiment 1) and
pretrain/retrain (Experiment 2) subject-transfer conditions."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .classifiers import (PerceptronModel, TrainConfig, perceptron_predict, perceptron_retrain,
                          perceptron_train)
from .evaluation import (FRACTION_GRID, CvSpec, RunStats, aggregate, make_splits, runstats_to_csv, score,
                         threshold_fraction)
from .masks import apply_mask, best_mask, collect_masks, com_mask, load_masks, save_masks
from .preprocess import extract_features
from .pso import SwarmConfig
from .transfer import build_super_subject, candidate_groups, select_group

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Condition:
    id: str
    uses_dr: bool
    group_mode: str  # source of extra training data: none | 4sub | Bsub
    retrain: bool
    dr_mask_source: str  # none | 4sub | Bsub
    label: str = ""


CONDITIONS = {c.id: c for c in (
    Condition("1.1a", False, "none", False, "none", "(TS)"),
    Condition("1.1b", False, "4sub", False, "none", "(TS)+(4sub)"),
    Condition("1.1c", False, "Bsub", False, "none", "(TS)+(Bsub)"),
    Condition("1.2a", True, "none", False, "4sub", "DR(TS) [4sub mask]"),
    Condition("1.2b", True, "4sub", False, "4sub", "DR(TS)+DR(4sub)"),
    Condition("1.2c", True, "none", False, "Bsub", "DR(TS) [Bsub mask]"),
    Condition("1.2d", True, "Bsub", False, "Bsub", "DR(TS)+DR(Bsub)"),
    Condition("2.1a", False, "4sub", True, "none", "Tr(4sub)+Ret(TS)"),
    Condition("2.1b", False, "Bsub", True, "none", "Tr(Bsub)+Ret(TS)"),
    Condition("2.2a", True, "4sub", True, "4sub", "Tr(DR(4sub))+Ret(DR(TS))"),
    Condition("2.2b", True, "Bsub", True, "Bsub", "Tr(DR(Bsub))+Ret(DR(TS))"),
)}

FIGURES = {
    "exp1_1": ("1.1a", "1.1b", "1.1c"),
    "exp1_2": ("1.1a", "1.2a", "1.2b", "1.2c", "1.2d"),
    "exp2": ("1.1a", "2.1a", "2.1b", "2.2a", "2.2b"),
}


def parse_conditions(text):
    if text in ("all", "", None):
        return list(CONDITIONS)
    ids = [t.strip() for t in text.split(",") if t.strip()]
    bad = [i for i in ids if i not in CONDITIONS]
    if bad:
        raise ValueError(f"unknown condition ids {bad}; known: {', '.join(CONDITIONS)}")
    return ids


def parse_fractions(text):
    if text in ("all", "", None):
        return list(FRACTION_GRID)
    out = []
    for t in text.split(","):
        f = round(float(t), 2)
        if f not in FRACTION_GRID:
            raise ValueError(f"fraction {t} is not on the 0.00, 0.05, ..., 0.90 grid")
        out.append(f)
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    cv: CvSpec = CvSpec()
    train: TrainConfig = TrainConfig()
    swarm: SwarmConfig = SwarmConfig()
    mask_cv: CvSpec = CvSpec()
    hidden: int = 80
    fitness_metric: str = "informedness"
    bsub_table: dict | None = None
    n_jobs: int = 1

    def to_dict(self):
        d = asdict(self)
        if self.bsub_table is not None:
            d["bsub_table"] = {k: list(v) for k, v in self.bsub_table.items()}
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kw = {}
        for name, typ in (("cv", CvSpec), ("mask_cv", CvSpec), ("train", TrainConfig), ("swarm", SwarmConfig)):
            if name in d:
                kw[name] = typ(**d.pop(name))
        for name in ("hidden", "fitness_metric", "n_jobs"):
            if name in d:
                kw[name] = d.pop(name)
        if d.get("bsub_table") is not None:
            kw["bsub_table"] = {k: tuple(v) for k, v in d.pop("bsub_table").items()}
        d.pop("bsub_table", None)
        d.pop("format_version", None)
        if d:
            raise ValueError(f"unknown experiment config keys {sorted(d)}")
        return cls(**kw)


def flatten(features):
    data = np.asarray(getattr(features, "data", features))
    return data.reshape(len(data), int(np.prod(data.shape[1:])))


class SubjectPool:
    """Records of a roster with their features, Super Subjects and masks cached."""

    def __init__(self, records, cfg, masks_dir=None):
        self.records = {r.subject_id: r for r in records}
        self.cfg = cfg
        self.masks_dir = Path(masks_dir) if masks_dir is not None else None
        self._features = {}
        self._masks = {}

    @property
    def roster(self):
        return list(self.records)

    def features(self, subject_id):
        if subject_id not in self._features:
            self._features[subject_id] = extract_features(self.records[subject_id])
        return self._features[subject_id]

    def group(self, target, mode):
        return select_group(target, self.roster, mode, self.cfg.bsub_table)

    def super_features(self, members):
        key = "+".join(members)
        if key not in self._features:
            rec = build_super_subject([self.records[m] for m in members])
            self._features[key] = extract_features(rec)
        return self._features[key]

    def mask_path(self, target, mode):
        return self.masks_dir / f"masks_{target}_{mode}.json"

    def dr_mask(self, target, mode, compute=True):
        """ComMask derived from the Super Subject of ``target`` under ``mode``."""
        key = (target, mode)
        if key in self._masks:
            return self._masks[key]
        members = self.group(target, mode)
        if self.masks_dir is not None and self.mask_path(target, mode).is_file():
            _, _, common, tags = load_masks(self.mask_path(target, mode))
            if tags.get("members") != members:
                raise ValueError(f"cached mask {self.mask_path(target, mode)} was built from "
                                 f"{tags.get('members')}, expected {members}")
        elif not compute:
            raise FileNotFoundError(str(self.mask_path(target, mode)) if self.masks_dir else f"{target}/{mode}")
        else:
            scored, _, common = mask_search(self.super_features(members), self.cfg)
            if self.masks_dir is not None:
                save_masks(self.mask_path(target, mode), scored, best_mask(scored), common,
                           target=target, group_mode=mode, members=members)
        self._masks[key] = common
        return common


def mask_search(features, cfg):
    """collect_masks + distillation; returns (scored, best, common)."""
    scored = collect_masks(features, cfg.swarm, cfg.mask_cv, hidden=cfg.hidden,
                           metric=cfg.fitness_metric, n_jobs=cfg.n_jobs)
    common = com_mask(scored, cfg.swarm.n, cfg.swarm.k, features.n_channels, features.K)
    return scored, best_mask(scored), common


def _group_labels(features):
    groups, first = np.unique(np.asarray(features.group_id), return_index=True)
    return groups, np.asarray(features.label)[first]


def _cell(target_f, super_f, cond, fraction, fold, train_cfg, pretrained):
    train = target_f.select_groups(fold.train_groups)
    val = target_f.select_groups(fold.val_groups)
    test = target_f.select_groups(fold.test_groups)
    x_tr, x_val, x_te = flatten(train), flatten(val), flatten(test)
    y_tr, y_val, y_te = np.asarray(train.label), np.asarray(val.label), np.asarray(test.label)
    zero_trial = len(y_tr) == 0
    train_s = retrain_s = 0.0
    if cond.retrain:
        model, train_s = pretrained
        t0 = time.perf_counter()
        model = perceptron_retrain(model, x_tr, y_tr, x_val, y_val, train_cfg)
        retrain_s = time.perf_counter() - t0 if not zero_trial else 0.0
    else:
        if super_f is not None:
            x_tr = np.concatenate([flatten(super_f), x_tr])
            y_tr = np.concatenate([np.asarray(super_f.label), y_tr])
        t0 = time.perf_counter()
        if len(y_tr):
            model = perceptron_train(x_tr, y_tr, x_val, y_val, train_cfg)
        else:
            model = PerceptronModel.zeros(x_val.shape[1])
        train_s = time.perf_counter() - t0
    inf, acc = score(y_te, perceptron_predict(model, x_te))
    return RunStats(inf, acc, train_s, retrain_s, fold.rep, fold.fold, cond.id, fraction, zero_trial), model


def _fold_train_cfg(cfg, fold):
    seed = int(np.random.SeedSequence([cfg.cv.seed, fold.rep, fold.fold, 7]).generate_state(1)[0])
    return replace(cfg.train, seed=seed)


class _Reduced:
    # a FeatureTensor stand-in holding mask-reduced columns
    def __init__(self, data, group_id, label):
        self.data, self.group_id, self.label = data, group_id, label

    def select_groups(self, groups):
        keep = np.isin(self.group_id, np.asarray(list(groups), dtype=np.int64))
        return _Reduced(self.data[keep], self.group_id[keep], self.label[keep])


def _prepare(pool, target, cond):
    target_f = pool.features(target)
    super_f = pool.super_features(pool.group(target, cond.group_mode)) if cond.group_mode != "none" else None
    if cond.uses_dr:
        mask = pool.dr_mask(target, cond.dr_mask_source)
        target_f = _Reduced(apply_mask(target_f, mask), np.asarray(target_f.group_id), np.asarray(target_f.label))
        if super_f is not None:
            super_f = _Reduced(apply_mask(super_f, mask), np.asarray(super_f.group_id), np.asarray(super_f.label))
    return target_f, super_f


def run_condition(pool, target, cond, fraction, cfg=None, pretrained_cache=None, return_models=False):
    """All (rep, fold) cells of one condition at one training fraction.

    Experiment-1 conditions train once on target training groups plus the
    whole Super Subject (if any). Experiment-2 conditions pretrain on the
    Super Subject alone, with early stopping on the target validation split,
    then retrain on the target training groups. Scores are always taken on
    the target test split.
    """
    cfg = cfg or pool.cfg
    if isinstance(cond, str):
        cond = CONDITIONS[cond]
    if cond.retrain and cond.group_mode == "none":
        raise ValueError(f"condition {cond.id} retrains but has no pretraining data")
    target_f, super_f = _prepare(pool, target, cond)
    groups, labels = _group_labels(target_f)
    plan = make_splits(groups, labels, replace(cfg.cv, train_fraction=fraction))
    cache = pretrained_cache if pretrained_cache is not None else {}
    jobs = []
    for fold in plan:
        train_cfg = _fold_train_cfg(cfg, fold)
        pre = None
        if cond.retrain:
            key = (target, cond.id, fold.rep, fold.fold)
            if key not in cache:
                val = target_f.select_groups(fold.val_groups)
                t0 = time.perf_counter()
                model = perceptron_train(flatten(super_f), np.asarray(super_f.label), flatten(val),
                                         np.asarray(val.label), train_cfg)
                cache[key] = (model, time.perf_counter() - t0)
            pre = cache[key]
        jobs.append((fold, train_cfg, pre))
    if cfg.n_jobs == 1:
        out = [_cell(target_f, super_f, cond, fraction, f, tc, pre) for f, tc, pre in jobs]
    else:
        out = Parallel(n_jobs=cfg.n_jobs)(
            delayed(_cell)(target_f, super_f, cond, fraction, f, tc, pre) for f, tc, pre in jobs)
    if return_models:
        return out
    return [s for s, _ in out]


@dataclass
class ExperimentReport:
    subject: str
    rows: list = field(default_factory=list)
    thresholds: dict = field(default_factory=dict)
    runs: list = field(default_factory=list)

    COLUMNS = ("subject", "condition", "fraction", "informedness_mean", "informedness_se", "accuracy_mean",
               "accuracy_se", "n_runs", "n_undefined", "zero_trial")
    TIMING_COLUMNS = ("subject", "condition", "fraction", "train_s_mean", "retrain_s_mean")

    def row(self, condition, fraction):
        for r in self.rows:
            if r["condition"] == condition and abs(r["fraction"] - fraction) < 1e-9:
                return r
        raise KeyError((condition, fraction))

    def curve(self, condition, attr="informedness"):
        rows = sorted((r for r in self.rows if r["condition"] == condition), key=lambda r: r["fraction"])
        return (np.array([r["fraction"] for r in rows]), np.array([r[f"{attr}_mean"] for r in rows]),
                np.array([r[f"{attr}_se"] for r in rows]))

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.rows:
            w.writerow([r["subject"], r["condition"], f"{r['fraction']:.2f}", _fmt(r["informedness_mean"]),
                        _fmt(r["informedness_se"]), _fmt(r["accuracy_mean"]), _fmt(r["accuracy_se"]),
                        r["n_runs"], r["n_undefined"], int(r["zero_trial"])])
        return buf.getvalue()

    def timings_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.TIMING_COLUMNS)
        for r in self.rows:
            w.writerow([r["subject"], r["condition"], f"{r['fraction']:.2f}", f"{r['train_s_mean']:.6f}",
                        f"{r['retrain_s_mean']:.6f}"])
        return buf.getvalue()

    def summary(self):
        keep = self.COLUMNS
        return {
            "format_version": "1",
            "subject": self.subject,
            "thresholds": {k: v for k, v in sorted(self.thresholds.items())},
            "rows": [{k: r[k] for k in keep} for r in self.rows],
        }

    def plot_data(self):
        """Per figure: rows of (condition, fraction, mean, se, acc_mean, acc_se)."""
        present = {r["condition"] for r in self.rows}
        out = {}
        for fig, conds in FIGURES.items():
            conds = [c for c in conds if c in present]
            if not conds:
                continue
            out[fig] = [r for c in conds for r in sorted((r for r in self.rows if r["condition"] == c),
                                                           key=lambda r: r["fraction"])]
        return out

    def write(self, out_dir, figures=True):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        p = out_dir / f"report_{self.subject}.csv"
        p.write_text(self.to_csv(), encoding="utf-8")
        written.append(p)
        p = out_dir / f"summary_{self.subject}.json"
        p.write_text(json.dumps(self.summary(), indent=1, allow_nan=False, default=_json_default) + "\n",
                     encoding="utf-8")
        written.append(p)
        p = out_dir / f"timings_{self.subject}.csv"
        p.write_text(self.timings_csv(), encoding="utf-8")
        written.append(p)
        p = out_dir / f"runs_{self.subject}.csv"
        p.write_text(runstats_to_csv(self.runs), encoding="utf-8")
        written.append(p)
        for fig, rows in self.plot_data().items():
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(("condition", "label", "fraction", "informedness_mean", "informedness_se",
                        "accuracy_mean", "accuracy_se"))
            for r in rows:
                w.writerow([r["condition"], CONDITIONS[r["condition"]].label, f"{r['fraction']:.2f}",
                            _fmt(r["informedness_mean"]), _fmt(r["informedness_se"]),
                            _fmt(r["accuracy_mean"]), _fmt(r["accuracy_se"])])
            p = out_dir / f"plotdata_{fig}_{self.subject}.csv"
            p.write_text(buf.getvalue(), encoding="utf-8")
            written.append(p)
        if figures:
            from .plotting import render_report
            written.extend(render_report(self, out_dir))
        return written


def _fmt(v):
    return "nan" if v is None or (isinstance(v, float) and np.isnan(v)) else f"{v:.10g}"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o))


def _summarize(subject, cond_id, fraction, stats):
    inf_vals = [s.informedness for s in stats]
    n_undef = int(np.isnan(inf_vals).sum())
    try:
        inf = aggregate(stats, "informedness")
        acc = aggregate(stats, "accuracy")
    except ValueError:
        inf = acc = None
    return {
        "subject": subject,
        "condition": cond_id,
        "fraction": round(float(fraction), 2),
        "informedness_mean": inf.mean if inf else None,
        "informedness_se": inf.se if inf else None,
        "accuracy_mean": acc.mean if acc else None,
        "accuracy_se": acc.se if acc else None,
        "n_runs": len(stats),
        "n_undefined": n_undef,
        "zero_trial": all(s.zero_trial for s in stats),
        "train_s_mean": float(np.mean([s.train_seconds for s in stats])),
        "retrain_s_mean": float(np.mean([s.retrain_seconds for s in stats])),
    }


def run_sweep(pool, target, conditions, fractions=FRACTION_GRID, cfg=None):
    """Full factorial of ``conditions`` x ``fractions`` for one target subject."""
    cfg = cfg or pool.cfg
    fractions = [round(float(f), 2) for f in fractions]
    bad = [f for f in fractions if f not in FRACTION_GRID]
    if bad:
        raise ValueError(f"fractions {bad} are not on the 0.00 .. 0.90 grid")
    report = ExperimentReport(target)
    cache = {}
    for cid in conditions:
        cond = CONDITIONS[cid] if isinstance(cid, str) else cid
        sweep = {}
        for f in fractions:
            t0 = time.perf_counter()
            stats = run_condition(pool, target, cond, f, cfg, cache)
            log.info("%s cond %s fraction %.2f: %d runs in %.1fs", target, cond.id, f, len(stats),
                     time.perf_counter() - t0)
            sweep[f] = stats
            report.runs.extend(stats)
            report.rows.append(_summarize(target, cond.id, f, stats))
        if 0.9 in sweep:
            report.thresholds[cond.id] = threshold_fraction(sweep)
    return report


def compute_bsub_table(pool, cfg=None, min_size=2):
    """Best Super Subject per target by exhaustive search over subject subsets.

    Each candidate group is scored by training a perceptron on the group's
    ComMask-reduced data (validated on half of the target's super-epochs)
    and measuring informedness on the other half.
    """
    cfg = cfg or pool.cfg
    masks = {}
    table = {}
    for target in pool.roster:
        tf = pool.features(target)
        groups, labels = _group_labels(tf)
        order = np.argsort(labels, kind="stable")
        val_g, test_g = groups[order[0::2]], groups[order[1::2]]
        val, test = tf.select_groups(val_g), tf.select_groups(test_g)
        best = None
        for members in candidate_groups(target, pool.roster, min_size):
            key = "+".join(members)
            sf = pool.super_features(members)
            if key not in masks:
                masks[key] = mask_search(sf, cfg)[2]
            m = masks[key]
            model = perceptron_train(apply_mask(sf, m).reshape(len(sf.label), -1), np.asarray(sf.label),
                                     apply_mask(val, m), np.asarray(val.label), cfg.train)
            inf, _ = score(test.label, perceptron_predict(model, apply_mask(test, m)))
            inf = -np.inf if np.isnan(inf) else inf
            log.info("bsub %s <- %s: %.3f", target, key, inf)
            if best is None or inf > best[0]:
                best = (inf, tuple(members))
        table[target] = best[1]
    return table
