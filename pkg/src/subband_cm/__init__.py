"""Sub-band analysis of spoofing countermeasures: CQCC/LFCC front-ends, GMM back-end, EER sweeps."""

from .audio_io import ProtocolEntry, parse_protocol, read_wav, write_wav
from .corpus import Corpus, Utterance, synthetic_corpus, synthesize
from .dsp import (AudioSignal, BandConfig, CqtParams, CqtSpectrogram, PowerSpectrogram, bandpass, cepstra,
                  cqt, design_bandpass, power_spectrogram, resample_to_linear)
from .errors import ConfigurationError, FormatError
from .frontends import (FEATURE_KINDS, FeatureMatrix, LfccParams, append_deltas, cqcc_extract, extract,
                        lfcc_extract, read_features, write_features)
from .gmm import GmmModel, TrainConfig, gmm_loglik, gmm_train, llr_score, load_model, save_model
from .metrics import EerResult, ScoreRecord, per_attack_eer, read_scores, rocch_eer, write_scores
from .sweep import (EerGrid, SweepConfig, assemble_grid, enumerate_bands, export_heatmap, run_baseline,
                    run_cell, run_sweep)

__version__ = "0.1.0"
