"""Shared data containers and the on-disk record format.

A record on disk is a JSON manifest plus a raw little-endian float32 payload
laid out sub-epoch major, then channel, then sample.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_VERSION = "1"

MANIFEST_KEYS = (
    "format_version",
    "subject_id",
    "sample_rate_hz",
    "n_subepochs",
    "n_channels",
    "n_samples",
    "labels",
    "group_ids",
    "payload_file",
)


class RecordFormatError(ValueError):
    """Raised when a manifest/payload pair cannot be read back."""


def _frozen(a, dtype=None):
    # read-only view; the caller's array stays writeable
    v = np.asarray(a, dtype=dtype).view()
    v.setflags(write=False)
    return v


@dataclass(frozen=True)
class TrialTensor:
    """Epoched signals, shape (n_subepochs, n_channels, n_samples).

    ``group_id[i]`` is the super-epoch a sub-epoch was cut from and
    ``label[i]`` its class.
    """

    data: np.ndarray
    group_id: np.ndarray
    label: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data))
        object.__setattr__(self, "group_id", _frozen(self.group_id, np.int64))
        object.__setattr__(self, "label", _frozen(self.label, np.int64))
        if self.data.ndim != 3:
            raise ValueError(f"trial data must be 3-D, got shape {self.data.shape}")
        if len(self.group_id) != len(self.data) or len(self.label) != len(self.data):
            raise ValueError("group_id and label must have one entry per sub-epoch")

    @property
    def n_subepochs(self):
        return self.data.shape[0]

    @property
    def n_channels(self):
        return self.data.shape[1]

    @property
    def n_samples(self):
        return self.data.shape[2]

    def replace_data(self, data):
        return TrialTensor(data, self.group_id, self.label)


@dataclass(frozen=True)
class FeatureTensor:
    """Spectral features, shape (n_subepochs, n_channels, K)."""

    data: np.ndarray
    group_id: np.ndarray
    label: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data))
        object.__setattr__(self, "group_id", _frozen(self.group_id, np.int64))
        object.__setattr__(self, "label", _frozen(self.label, np.int64))
        if self.data.ndim != 3:
            raise ValueError(f"feature data must be 3-D, got shape {self.data.shape}")
        if len(self.group_id) != len(self.data) or len(self.label) != len(self.data):
            raise ValueError("group_id and label must have one entry per sub-epoch")

    @property
    def n_channels(self):
        return self.data.shape[1]

    @property
    def K(self):
        return self.data.shape[2]

    def select_groups(self, groups):
        """Sub-epochs whose super-epoch is in ``groups``, in original order."""
        keep = np.isin(self.group_id, np.asarray(list(groups), dtype=np.int64))
        return FeatureTensor(self.data[keep], self.group_id[keep], self.label[keep])


@dataclass(frozen=True)
class SubjectRecord:
    subject_id: str
    sample_rate: int
    trials: TrialTensor
    labels: np.ndarray  # one class per super-epoch
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "labels", _frozen(self.labels, np.int64))

    @property
    def n_channels(self):
        return self.trials.n_channels

    @property
    def n_super_epochs(self):
        return len(self.labels)


@dataclass(frozen=True)
class Mask:
    """Electrode vector (n channels) and feature-set matrix (n x k bins)."""

    elv: np.ndarray
    fsm: np.ndarray

    def __post_init__(self):
        elv = _frozen(self.elv, np.int64).reshape(-1)
        fsm = _frozen(self.fsm, np.int64)
        if fsm.ndim != 2 or fsm.shape[0] != elv.shape[0]:
            raise ValueError(f"fsm must be (n, k) with n={elv.shape[0]}, got {fsm.shape}")
        object.__setattr__(self, "elv", elv)
        object.__setattr__(self, "fsm", fsm)

    @property
    def n(self):
        return self.elv.shape[0]

    @property
    def k(self):
        return self.fsm.shape[1]

    def violations(self, N=None, K=None):
        out = []
        if len(np.unique(self.elv)) != self.n:
            out.append("duplicate electrode index")
        for row in self.fsm:
            if len(np.unique(row)) != len(row):
                out.append("duplicate bin index within FSM row")
                break
        if N is not None and (self.n > N or self.elv.min(initial=0) < 0 or self.elv.max(initial=0) >= N):
            out.append("electrode index out of range")
        if K is not None and (self.k > K or self.fsm.min(initial=0) < 0 or self.fsm.max(initial=0) >= K):
            out.append("bin index out of range")
        return out

    def to_dict(self):
        return {
            "n": int(self.n),
            "k": int(self.k),
            "elv": [int(c) for c in self.elv],
            "fsm": [[int(b) for b in row] for row in self.fsm],
        }

    @classmethod
    def from_dict(cls, d):
        mask = cls(np.asarray(d["elv"], dtype=np.int64), np.asarray(d["fsm"], dtype=np.int64).reshape(len(d["elv"]), -1))
        if mask.n != d.get("n", mask.n) or mask.k != d.get("k", mask.k):
            raise ValueError("mask n/k do not match elv/fsm dimensions")
        return mask

    def __eq__(self, other):
        if not isinstance(other, Mask):
            return NotImplemented
        return np.array_equal(self.elv, other.elv) and np.array_equal(self.fsm, other.fsm)

    def __hash__(self):
        return hash((self.elv.tobytes(), self.fsm.tobytes()))


@dataclass(frozen=True)
class ContingencyTable:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("contingency counts must be nonnegative")

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_predictions(cls, y_true, y_pred):
        y_true = np.asarray(y_true).astype(bool)
        y_pred = np.asarray(y_pred).astype(bool)
        if y_true.shape != y_pred.shape:
            raise ValueError("y_true and y_pred must have the same shape")
        return cls(
            tp=int(np.sum(y_true & y_pred)),
            fp=int(np.sum(~y_true & y_pred)),
            tn=int(np.sum(~y_true & ~y_pred)),
            fn=int(np.sum(y_true & ~y_pred)),
        )


def validate_record(record):
    """Return a list of broken invariants; an empty list means the record is sound."""
    problems = []
    if not record.sample_rate or record.sample_rate <= 0:
        problems.append("sample_rate must be positive")
    trials = record.trials
    labels = np.asarray(record.labels)
    gid = np.asarray(trials.group_id)
    n_groups = int(gid.max()) + 1 if gid.size else 0
    if gid.size and (gid.min() < 0 or not np.array_equal(np.unique(gid), np.arange(n_groups))):
        problems.append("group ids not contiguous")
    if len(labels) != n_groups:
        problems.append("label length mismatch")
    elif gid.size and not np.array_equal(labels[gid], trials.label):
        problems.append("sub-epoch label disagrees with its super-epoch")
    if labels.size and not np.isin(labels, (0, 1)).all():
        problems.append("labels must be 0 or 1")
    if trials.n_samples < 1:
        problems.append("sub-epochs must contain samples")
    return problems


def save_record(record, manifest_path):
    """Write ``record`` as manifest + float32 payload; returns the manifest path."""
    manifest_path = Path(manifest_path)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    payload_name = manifest_path.with_suffix(".f32").name
    t = record.trials
    payload = np.ascontiguousarray(t.data, dtype="<f4")
    (manifest_path.parent / payload_name).write_bytes(payload.tobytes())
    manifest = {
        "format_version": FORMAT_VERSION,
        "subject_id": record.subject_id,
        "sample_rate_hz": int(record.sample_rate),
        "n_subepochs": int(t.n_subepochs),
        "n_channels": int(t.n_channels),
        "n_samples": int(t.n_samples),
        "labels": [int(v) for v in record.labels],
        "group_ids": [int(v) for v in t.group_id],
        "payload_file": payload_name,
    }
    if record.metadata:
        manifest["metadata"] = record.metadata
    manifest_path.write_text(json.dumps(manifest, indent=1), encoding="utf-8")
    return manifest_path


def load_record(manifest_path):
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise FileNotFoundError(f"manifest not found: {manifest_path}")
    try:
        m = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise RecordFormatError(f"{manifest_path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    missing = [k for k in MANIFEST_KEYS if k not in m]
    if missing:
        raise RecordFormatError(f"{manifest_path}: missing keys {missing}")
    if str(m["format_version"]) != FORMAT_VERSION:
        raise RecordFormatError(f"{manifest_path}: unknown format version {m['format_version']!r}")
    payload_path = manifest_path.parent / m["payload_file"]
    if not payload_path.is_file():
        raise FileNotFoundError(f"payload not found: {payload_path}")
    shape = (int(m["n_subepochs"]), int(m["n_channels"]), int(m["n_samples"]))
    expected = 4 * shape[0] * shape[1] * shape[2]
    actual = os.path.getsize(payload_path)
    if actual != expected:
        raise RecordFormatError(
            f"{payload_path}: dimension mismatch, manifest implies {expected} bytes for {shape}, payload has {actual}"
        )
    data = np.fromfile(payload_path, dtype="<f4").reshape(shape)
    group_ids = np.asarray(m["group_ids"], dtype=np.int64)
    labels = np.asarray(m["labels"], dtype=np.int64)
    if len(group_ids) != shape[0]:
        raise RecordFormatError(f"{manifest_path}: group_ids length {len(group_ids)} != n_subepochs {shape[0]}")
    if group_ids.size and (group_ids.min() < 0 or group_ids.max() >= len(labels)):
        raise RecordFormatError(f"{manifest_path}: group_ids reference missing labels")
    trials = TrialTensor(data, group_ids, labels[group_ids])
    return SubjectRecord(m["subject_id"], int(m["sample_rate_hz"]), trials, labels, m.get("metadata", {}))
