"""Particle-swarm channel/feature reduction and subject-transfer experiments
for epoched two-class EEG."""

from .classifiers import (ElmModel, PerceptronModel, TrainConfig, elm_predict, elm_train, perceptron_predict,
                          perceptron_retrain, perceptron_train)
from .core import ContingencyTable, FeatureTensor, Mask, SubjectRecord, TrialTensor, load_record, save_record, \
    validate_record
from .evaluation import CvSpec, RunStats, aggregate, informedness, make_splits, threshold_fraction
from .experiments import CONDITIONS, ExperimentConfig, ExperimentReport, SubjectPool, run_condition, run_sweep
from .masks import ScoredMask, apply_mask, best_mask, collect_masks, com_mask
from .preprocess import (SynthConfig, common_average_reference, demean, dft_magnitude, extract_features,
                         slice_super_epochs, synth_roster, synth_subject)
from .pso import SwarmConfig, decode_mask, ldiw, run_pso
from .transfer import build_meta_mask, build_super_subject, select_group

__version__ = "0.1.0"
