"""Run configuration assembled from a flat ``dotted.key = value`` mapping.

Recognised keys (all optional unless a command needs them)::

    frontend                 cqcc-linear | cqcc-geometric | lfcc
    seed                     GMM initialisation seed
    out_dir, cache_dir
    corpus.train_protocol, corpus.train_audio, corpus.eval_protocol, corpus.eval_audio
    corpus.synthetic         highband | lowband (used instead of protocol files)
    corpus.num_per_class, corpus.seed, corpus.duration, corpus.sample_rate
    cqt.octaves, cqt.bins_per_octave, cqt.hop_seconds, cqt.window, cqt.kernel_threshold
    lfcc.frame_seconds, lfcc.hop_seconds, lfcc.nfft, lfcc.num_filters, lfcc.num_coeffs, lfcc.window
    gmm.num_components, gmm.max_iters, gmm.tol, gmm.variance_floor_factor
    sweep.grid_step, sweep.f_low_limit, sweep.f_high_limit, sweep.train_filtered,
    sweep.requantize, sweep.workers, sweep.attacks (comma-separated)
"""

from __future__ import annotations

import dataclasses
import logging
import os
from dataclasses import dataclass, field

from .corpus import SYNTH_KINDS, Corpus, load_protocol_corpus, synthetic_corpus
from .dsp import CqtParams
from .errors import ConfigurationError
from .frontends import FEATURE_KINDS, LfccParams
from .gmm import TrainConfig
from .sweep import SweepConfig

logger = logging.getLogger(__name__)

REFERENCE_RATE = 16000

_CQT_KEYS = {"octaves": int, "bins_per_octave": int, "hop_seconds": float, "window": str,
             "kernel_threshold": float}
_CORPUS_KEYS = {"train_protocol": str, "train_audio": str, "eval_protocol": str, "eval_audio": str,
                "synthetic": str, "num_per_class": int, "seed": int, "duration": float,
                "sample_rate": int}
_SWEEP_KEYS = {"grid_step": float, "f_low_limit": float, "f_high_limit": float,
               "train_filtered": bool, "requantize": bool, "workers": int, "attacks": str}
_TOP_KEYS = {"frontend": str, "seed": int, "out_dir": str, "cache_dir": str}


def _field_types(cls) -> dict:
    casts = {"int": int, "float": float, "str": str, "bool": bool}
    return {f.name: casts.get(str(f.type), str) for f in dataclasses.fields(cls)}


_SECTIONS = {
    "cqt": _CQT_KEYS,
    "lfcc": _field_types(LfccParams),
    "gmm": {k: v for k, v in _field_types(TrainConfig).items() if k != "seed"},
    "corpus": _CORPUS_KEYS,
    "sweep": _SWEEP_KEYS,
}


def _cast(key: str, value, kind):
    if kind is bool:
        if isinstance(value, bool):
            return value
        raise ConfigurationError(f"{key}: expected true/false, got {value!r}")
    if kind is str:
        return str(value)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"{key}: expected a number, got {value!r}")
    if kind is int and float(value) != int(value):
        raise ConfigurationError(f"{key}: expected an integer, got {value!r}")
    return kind(value)


def split_mapping(mapping: dict) -> dict:
    """Validate keys and casts; returns ``{section: {name: value}}`` with ``""`` for top-level keys."""
    out = {"": {}, **{s: {} for s in _SECTIONS}}
    for key, value in mapping.items():
        section, _, name = key.rpartition(".")
        table = _TOP_KEYS if section == "" else _SECTIONS.get(section)
        if table is None or name not in table:
            raise ConfigurationError(f"unknown configuration key {key!r}")
        out[section][name] = _cast(key, value, table[name])
    return out


@dataclass(frozen=True)
class RunConfig:
    frontend: str = "cqcc-linear"
    seed: int = 0
    out_dir: str | None = None
    cache_dir: str | None = None
    corpus: dict = field(default_factory=dict)
    cqt: dict = field(default_factory=dict)
    lfcc: LfccParams = LfccParams()
    train: TrainConfig = TrainConfig()
    sweep: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.frontend not in FEATURE_KINDS:
            raise ConfigurationError(f"unknown front-end {self.frontend!r}; choose from {FEATURE_KINDS}")

    def cqt_params(self, sample_rate: int) -> CqtParams:
        return CqtParams.default(sample_rate, **self.cqt)

    def sweep_config(self, sample_rate: int, **overrides) -> SweepConfig:
        opts = dict(self.sweep)
        if "attacks" in opts:
            opts["attacks"] = tuple(a.strip() for a in opts["attacks"].split(",") if a.strip())
        opts.update(overrides)
        try:
            return SweepConfig(frontend=self.frontend, train=self.train, cqt=self.cqt_params(sample_rate),
                               lfcc=self.lfcc, out_dir=self.out_dir, cache_dir=self.cache_dir, **opts)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc

    def load_corpus(self) -> Corpus:
        c = self.corpus
        rate = c.get("sample_rate", REFERENCE_RATE)
        if "synthetic" in c:
            if c["synthetic"] not in SYNTH_KINDS:
                raise ConfigurationError(f"corpus.synthetic must be one of {SYNTH_KINDS}")
            return synthetic_corpus(c["synthetic"], c.get("num_per_class", 500), c.get("seed", 0),
                                    sample_rate=rate, duration=c.get("duration", 2.0))
        needed = ("train_protocol", "train_audio", "eval_protocol", "eval_audio")
        missing = [k for k in needed if k not in c]
        if missing:
            raise ConfigurationError("corpus not configured; missing " + ", ".join("corpus." + k for k in missing))
        for k in needed:
            if not os.path.exists(c[k]):
                raise ConfigurationError(f"corpus.{k}: path does not exist: {c[k]}")
        corpus = load_protocol_corpus(c["train_protocol"], c["train_audio"], c["eval_protocol"],
                                      c["eval_audio"], rate)
        if corpus.train:
            actual = corpus.train[0].load().sample_rate
            if actual != rate:
                corpus = dataclasses.replace(corpus, sample_rate=actual)
        if corpus.sample_rate != REFERENCE_RATE:
            logger.warning("corpus sample rate is %d Hz, not %d Hz; Nyquist-dependent defaults follow the "
                           "actual rate", corpus.sample_rate, REFERENCE_RATE)
        return corpus


def run_config_from_mapping(mapping: dict) -> RunConfig:
    parts = split_mapping(mapping)
    top = parts[""]
    try:
        return RunConfig(
            frontend=top.get("frontend", "cqcc-linear"),
            seed=top.get("seed", 0),
            out_dir=top.get("out_dir"),
            cache_dir=top.get("cache_dir"),
            corpus=parts["corpus"],
            cqt=parts["cqt"],
            lfcc=LfccParams(**parts["lfcc"]),
            train=TrainConfig(seed=top.get("seed", 0), **parts["gmm"]),
            sweep=parts["sweep"],
        )
    except ConfigurationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc)) from exc
