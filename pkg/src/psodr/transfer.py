"""Subject-transfer constructions: Super Subject concatenation and Meta Mask pooling."""

from __future__ import annotations

from itertools import combinations

import numpy as np

from .core import SubjectRecord, TrialTensor
from .masks import com_mask

# Best-performing subject combinations reported for BCI Competition III IVa.
IVA_BSUB_TABLE = {
    "AA": ("AL", "AW", "AY"),
    "AL": ("AV", "AW", "AY"),
    "AV": ("AA", "AL", "AW"),
    "AW": ("AA", "AY"),
    "AY": ("AL", "AV", "AW"),
}


def build_super_subject(subjects):
    """Concatenate several subjects' sub-epochs into one record.

    Group ids are offset by the cumulative super-epoch count so that no two
    source subjects share a group.
    """
    subjects = list(subjects)
    if len(subjects) < 2:
        raise ValueError("a Super Subject needs at least 2 subjects")
    ref = subjects[0]
    for s in subjects[1:]:
        if s.n_channels != ref.n_channels:
            raise ValueError(f"channel count mismatch: {ref.subject_id} has {ref.n_channels}, "
                             f"{s.subject_id} has {s.n_channels}")
        if s.sample_rate != ref.sample_rate:
            raise ValueError(f"sample rate mismatch between {ref.subject_id} and {s.subject_id}")
        if s.trials.n_samples != ref.trials.n_samples:
            raise ValueError(f"sub-epoch length mismatch between {ref.subject_id} and {s.subject_id}")
    data, gids, labels, offset = [], [], [], 0
    members = []
    for s in subjects:
        data.append(np.asarray(s.trials.data))
        gids.append(np.asarray(s.trials.group_id) + offset)
        labels.append(np.asarray(s.labels))
        offset += s.n_super_epochs
        members.append(s.subject_id)
    labels = np.concatenate(labels)
    gid = np.concatenate(gids)
    trials = TrialTensor(np.concatenate(data), gid, labels[gid])
    meta = {"members": members}
    return SubjectRecord("+".join(members), ref.sample_rate, trials, labels, meta)


def build_meta_mask(per_subject_masks, n, k, N=None, K=None):
    """ComMask over the pooled masks of several subjects, each mask weighted equally."""
    pool = [m for _, masks in per_subject_masks for m in masks]
    if not pool:
        raise ValueError("no masks to pool")
    return com_mask(pool, n, k, N, K)


def select_group(target, roster, mode, bsub_table=None):
    """Subject ids that make up the Super Subject for ``target``.

    ``4sub`` takes every other roster member; ``Bsub`` looks the combination
    up in ``bsub_table``.
    """
    roster = list(roster)
    if target not in roster:
        raise KeyError(f"target {target!r} not in roster {roster}")
    if mode == "4sub":
        return [s for s in roster if s != target]
    if mode == "Bsub":
        table = IVA_BSUB_TABLE if bsub_table is None else bsub_table
        if target not in table:
            raise KeyError(f"no Bsub combination configured for {target!r}")
        group = list(table[target])
        missing = [s for s in group if s not in roster]
        if missing or target in group:
            raise KeyError(f"Bsub combination for {target!r} references {missing or [target]}")
        return group
    raise ValueError(f"unknown group mode {mode!r}")


def candidate_groups(target, roster, min_size=2):
    """All subsets of the other subjects with sizes min_size .. len(others)."""
    others = [s for s in roster if s != target]
    out = []
    for size in range(min(min_size, len(others)), len(others) + 1):
        out.extend(list(c) for c in combinations(others, size))
    return out
