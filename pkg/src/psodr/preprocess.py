"""Signal pipeline (demean, common average reference, slicing, DFT magnitude)
and a seeded synthetic subject generator."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import FeatureTensor, SubjectRecord, TrialTensor


def demean(trials):
    x = np.asarray(trials.data, dtype=np.float64)
    return trials.replace_data(x - x.mean(axis=2, keepdims=True))


def common_average_reference(trials):
    if trials.n_channels < 2:
        raise ValueError("common average reference needs at least 2 channels")
    x = np.asarray(trials.data, dtype=np.float64)
    return trials.replace_data(x - x.mean(axis=1, keepdims=True))


def slice_super_epochs(raw, sub_len, drop_edges=1, labels=None):
    """Cut each super-epoch into ``sub_len``-sample sub-epochs.

    The first and last ``drop_edges`` sub-epochs of every super-epoch are
    discarded. Sub-epochs keep their super-epoch index as ``group_id`` and
    inherit its label.
    """
    raw = np.asarray(raw)
    if raw.ndim != 3:
        raise ValueError(f"raw must be (n_super, n_channels, n_samples), got {raw.shape}")
    n_super, n_ch, n_raw = raw.shape
    if sub_len <= 0 or n_raw % sub_len:
        raise ValueError(f"{n_raw} samples is not divisible by sub_len={sub_len}")
    per_super = n_raw // sub_len
    kept = per_super - 2 * drop_edges
    if kept < 1:
        raise ValueError(f"{per_super} sub-epochs leave nothing after dropping {drop_edges} at each edge")
    if labels is None:
        labels = np.zeros(n_super, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != n_super:
        raise ValueError("need one label per super-epoch")
    # (n_super, ch, per_super, sub_len) -> (n_super, per_super, ch, sub_len)
    pieces = raw.reshape(n_super, n_ch, per_super, sub_len).transpose(0, 2, 1, 3)
    pieces = pieces[:, drop_edges:per_super - drop_edges]
    data = np.ascontiguousarray(pieces.reshape(n_super * kept, n_ch, sub_len))
    group_id = np.repeat(np.arange(n_super), kept)
    return TrialTensor(data, group_id, labels[group_id])


def dft_magnitude(trials):
    """|DFT| per sub-epoch and channel, keeping bins 0 .. floor(n/2) - 1."""
    n = trials.n_samples
    if n < 2:
        raise ValueError("need at least 2 samples for a spectrum")
    K = n // 2
    mag = np.abs(np.fft.rfft(np.asarray(trials.data, dtype=np.float64), axis=2))[:, :, :K]
    return FeatureTensor(mag, trials.group_id, trials.label)


def extract_features(record):
    """Full pipeline from a stored record to its FeatureTensor."""
    return dft_magnitude(common_average_reference(demean(record.trials)))


@dataclass(frozen=True)
class SynthConfig:
    n_channels: int = 8
    n_super_epochs: int = 40
    sample_rate: int = 200
    informative_channels: tuple = (1, 5)
    informative_bins: tuple = (6, 11, 20)
    effect_size: float = 3.0
    noise_sigma: float = 1.0
    seed: int = 0
    subject_id: str = "S01"
    sub_epoch_seconds: float = 0.5
    subs_per_super: int = 7
    drop_edges: int = 1
    metadata: dict = field(default_factory=dict)

    @property
    def sub_len(self):
        n = self.sample_rate * self.sub_epoch_seconds
        if abs(n - round(n)) > 1e-9:
            raise ValueError("sub-epoch duration x sample rate must be a whole number of samples")
        return int(round(n))

    def check(self):
        K = self.sub_len // 2
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.n_channels < 2:
            raise ValueError("need at least 2 channels")
        if any(not 0 <= c < self.n_channels for c in self.informative_channels):
            raise ValueError("informative_channels out of range")
        if any(not 0 <= b < K for b in self.informative_bins):
            raise ValueError(f"informative_bins must lie in [0, {K})")
        if self.effect_size < 0:
            raise ValueError("effect_size must be nonnegative")
        if self.subs_per_super <= 2 * self.drop_edges:
            raise ValueError("too few sub-epochs per super-epoch")


def synth_subject(cfg):
    """Gaussian noise plus, for class 1, sinusoids at the planted channels/bins.

    Planted frequencies complete a whole number of cycles per sub-epoch so
    each lands exactly on its DFT bin. Phases are random per super-epoch and
    bin. Random draws do not depend on the labels, so ``effect_size=0`` gives two
    identically distributed classes.
    """
    cfg.check()
    rng = np.random.default_rng(cfg.seed)
    sub_len = cfg.sub_len
    n_raw = sub_len * cfg.subs_per_super
    labels = np.arange(cfg.n_super_epochs) % 2
    rng.shuffle(labels)
    raw = rng.normal(0.0, cfg.noise_sigma, size=(cfg.n_super_epochs, cfg.n_channels, n_raw))
    chans = np.asarray(cfg.informative_channels, dtype=np.int64)
    bins = np.asarray(cfg.informative_bins, dtype=np.int64)
    phases = rng.uniform(0, 2 * np.pi, size=(cfg.n_super_epochs, len(bins)))
    t = np.arange(n_raw)
    amp = cfg.effect_size * cfg.noise_sigma
    if len(chans) and amp > 0:
        # alternate sign across planted channels so a common average reference
        # does not smear the pattern onto every other channel
        sign = np.where(np.arange(len(chans)) % 2 == 0, 1.0, -1.0)
        cls1 = np.flatnonzero(labels == 1)
        for j, m in enumerate(bins):
            wave = amp * np.cos(2 * np.pi * m * t / sub_len + phases[cls1, j, None])  # (n_cls1, t)
            raw[np.ix_(cls1, chans)] += sign[None, :, None] * wave[:, None, :]
    trials = slice_super_epochs(raw.astype(np.float32), sub_len, cfg.drop_edges, labels)
    meta = {"generator": "synth_subject", "label_names": {"0": "class-0 (noise)", "1": "class-1 (planted)"}}
    meta.update(cfg.metadata)
    return SubjectRecord(cfg.subject_id, cfg.sample_rate, trials, labels, meta)


def synth_roster(n_subjects=5, base=None, shared_channels=(1, 5), extra_channel_pool=None,
                 effect_sizes=None, seed=0):
    """Several subjects with overlapping informative channels.

    Every subject carries ``shared_channels``; each also gets one private
    channel drawn from ``extra_channel_pool``. Subject strength varies via
    ``effect_sizes``.
    """
    base = base or SynthConfig()
    rng = np.random.default_rng(seed)
    if extra_channel_pool is None:
        extra_channel_pool = [c for c in range(base.n_channels) if c not in shared_channels]
    if effect_sizes is None:
        effect_sizes = np.linspace(1.0, 2.0, n_subjects)
    subjects = []
    for i in range(n_subjects):
        private = int(rng.choice(extra_channel_pool)) if len(extra_channel_pool) else None
        chans = tuple(sorted(set(shared_channels) | ({private} if private is not None else set())))
        cfg = replace(
            base,
            informative_channels=chans,
            effect_size=float(effect_sizes[i]),
            seed=int(rng.integers(2**31)),
            subject_id=f"S{i + 1:02d}",
        )
        subjects.append(synth_subject(cfg))
    return subjects
