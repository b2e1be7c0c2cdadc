"""Utterance collections: on-disk protocol corpora and synthetic validation corpora.

The synthetic corpora contain speech-like signals (a jittered glottal pulse
train and breath noise shaped by random, slowly morphing formant envelopes)
whose two classes share one generator and differ only inside a chosen band:

``highband``
    spoofed utterances are band-limited above 7.6 kHz (their noise level there
    drops by ``atten_db``), the kind of artefact left by a vocoder trained on
    band-limited data.
``lowband``
    spoofed utterances carry a spectral tilt below 800 Hz.

Every utterance is regenerated on demand from ``(seed, index)``, so a corpus is
cheap to pickle and identical across processes.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.fft

from .audio_io import ProtocolEntry, parse_protocol, read_wav, requantize, write_wav, format_protocol
from .dsp import AudioSignal

SYNTH_KINDS = ("highband", "lowband")


@dataclass(frozen=True)
class WavSource:
    path: str

    def load(self) -> AudioSignal:
        return read_wav(self.path)


@dataclass(frozen=True)
class SyntheticSource:
    kind: str
    index: int
    spoof: bool
    seed: int
    sample_rate: int = 16000
    duration: float = 2.0

    def load(self) -> AudioSignal:
        return synthesize(self.kind, self.index, self.spoof, self.seed, self.sample_rate, self.duration)


@dataclass(frozen=True)
class Utterance:
    utterance_id: str
    attack_id: str
    key: Literal["bonafide", "spoof"]
    source: WavSource | SyntheticSource

    def load(self) -> AudioSignal:
        return self.source.load()


@dataclass(frozen=True)
class Corpus:
    name: str
    train: tuple[Utterance, ...]
    eval: tuple[Utterance, ...]
    sample_rate: int = 16000
    meta: dict = field(default_factory=dict, compare=False)

    def partition(self, which: str) -> tuple[Utterance, ...]:
        if which not in ("train", "eval"):
            raise ValueError(f"unknown partition {which!r}")
        return self.train if which == "train" else self.eval

    @property
    def attacks(self) -> list[str]:
        return sorted({u.attack_id for u in self.eval if u.key == "spoof"})


def utterances_from_protocol(entries: list[ProtocolEntry], audio_dir) -> tuple[Utterance, ...]:
    return tuple(
        Utterance(e.utterance_id, e.attack_id, e.key,
                  WavSource(os.path.join(os.fspath(audio_dir), e.utterance_id + ".wav")))
        for e in entries
    )


def load_protocol_corpus(train_protocol, train_audio, eval_protocol, eval_audio,
                         sample_rate: int = 16000, name: str = "protocol") -> Corpus:
    train = utterances_from_protocol(parse_protocol(train_protocol, "train"), train_audio)
    evaluation = utterances_from_protocol(parse_protocol(eval_protocol, "eval"), eval_audio)
    return Corpus(name, train, evaluation, sample_rate)


# ---------------------------------------------------------------------------
# synthetic corpora
# ---------------------------------------------------------------------------

HIGHBAND_EDGE = 7600.0
LOWBAND_EDGE = 800.0


def _envelope_db(rng: np.random.Generator, freqs: np.ndarray) -> np.ndarray:
    """Random vocal-tract-like log-magnitude envelope on ``freqs``."""
    env = np.zeros_like(freqs)
    centres = [rng.uniform(300, 900), rng.uniform(900, 2400), rng.uniform(2300, 3400),
               rng.uniform(3400, 4600)]
    for c in centres:
        bw = rng.uniform(80, 250)
        env += rng.uniform(14, 26) / (1 + ((freqs - c) / bw) ** 2)
    # glottal/radiation roll-off above 500 Hz
    env -= 9.0 * np.log2(np.maximum(freqs, 500.0) / 500.0)
    # broad random equalisation, several dB, across the whole band
    for _ in range(6):
        c = rng.uniform(0, freqs[-1])
        env += rng.normal(0, 4.0) * np.exp(-0.5 * ((freqs - c) / rng.uniform(300, 1500)) ** 2)
    return env


def _class_gain(kind: str, freqs: np.ndarray, atten_db: float) -> np.ndarray:
    if kind == "highband":
        # raised-cosine 100 Hz roll-off into the attenuated region
        ramp = np.clip((freqs - (HIGHBAND_EDGE - 50.0)) / 100.0, 0.0, 1.0)
        gain_db = -atten_db * 0.5 * (1 - np.cos(np.pi * ramp))
    elif kind == "lowband":
        # tilt from -atten_db at 50 Hz up to 0 dB at the edge, flat below 50 Hz
        octaves = np.log2(np.clip(freqs, 50.0, LOWBAND_EDGE) / 50.0) / np.log2(LOWBAND_EDGE / 50.0)
        gain_db = -atten_db * (1 - octaves)
    else:
        raise ValueError(f"unknown synthetic corpus kind {kind!r}; choose from {SYNTH_KINDS}")
    return 10.0 ** (gain_db / 20.0)


DEFAULT_ATTEN_DB = {"highband": 50.0, "lowband": 6.0}


def synthesize(kind: str, index: int, spoof: bool, seed: int = 0, sample_rate: int = 16000,
               duration: float = 2.0, atten_db: float | None = None) -> AudioSignal:
    """One synthetic utterance, quantized to 16-bit PCM."""
    if kind not in SYNTH_KINDS:
        raise ValueError(f"unknown synthetic corpus kind {kind!r}; choose from {SYNTH_KINDS}")
    if atten_db is None:
        atten_db = DEFAULT_ATTEN_DB[kind]
    # the class label never enters the generator stream: both classes share one distribution
    rng = np.random.default_rng([seed, index])
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate

    f0 = rng.uniform(90, 220) * (1 + 0.05 * np.sin(2 * np.pi * rng.uniform(3, 6) * t + rng.uniform(0, 6.3)))
    f0 *= np.exp(np.cumsum(rng.normal(0, 0.002, n)))  # slow jitter walk
    phase = np.cumsum(f0 / sample_rate)
    pulses = np.diff(np.floor(phase), prepend=0.0)
    voicing = 0.5 * (1 + np.sin(2 * np.pi * rng.uniform(2, 5) * t + rng.uniform(0, 6.3)))
    breath = rng.normal(0, 1, n)
    excitation = voicing * pulses * 4.0 + (0.15 + 0.35 * (1 - voicing)) * breath * rng.uniform(0.2, 1.0)

    nfft = n
    freqs = np.fft.rfftfreq(nfft, 1 / sample_rate)
    spectrum = scipy.fft.rfft(excitation, nfft)
    first = scipy.fft.irfft(spectrum * 10 ** (_envelope_db(rng, freqs) / 20), nfft)
    second = scipy.fft.irfft(spectrum * 10 ** (_envelope_db(rng, freqs) / 20), nfft)
    morph = 0.5 * (1 - np.cos(np.pi * t / duration))
    y = (1 - morph) * first + morph * second

    level_db = rng.uniform(-28, -16)
    y *= 10 ** (level_db / 20) / np.sqrt(np.mean(y ** 2))
    if spoof:
        y = scipy.fft.irfft(scipy.fft.rfft(y, nfft) * _class_gain(kind, freqs, atten_db), nfft)
    return requantize(AudioSignal(y[:n], sample_rate))


def synthetic_corpus(kind: str, num_per_class: int = 500, seed: int = 0, train_fraction: float = 0.5,
                     sample_rate: int = 16000, duration: float = 2.0) -> Corpus:
    """``num_per_class`` bona fide plus ``num_per_class`` spoofed utterances, split train/eval."""
    if kind not in SYNTH_KINDS:
        raise ValueError(f"unknown synthetic corpus kind {kind!r}; choose from {SYNTH_KINDS}")
    attack = "S-HI" if kind == "highband" else "S-LO"
    n_train = int(round(num_per_class * train_fraction))
    parts = {"train": [], "eval": []}
    for i in range(num_per_class):
        part = "train" if i < n_train else "eval"
        for spoof in (False, True):
            # bona fide and spoof utterances draw from disjoint generator indices
            index = 2 * i + int(spoof)
            prefix = "S" if spoof else "B"
            parts[part].append(Utterance(
                f"{kind[0].upper()}{prefix}{i:05d}", attack if spoof else "bonafide",
                "spoof" if spoof else "bonafide",
                SyntheticSource(kind, index, spoof, seed, sample_rate, duration)))
    return Corpus(f"synthetic-{kind}", tuple(parts["train"]), tuple(parts["eval"]), sample_rate,
                  {"kind": kind, "seed": seed, "num_per_class": num_per_class})


def write_corpus(corpus: Corpus, out_dir) -> dict[str, str]:
    """Write WAV files and ``train``/``eval`` protocol files; returns the protocol paths."""
    out_dir = os.fspath(out_dir)
    paths = {}
    for part in ("train", "eval"):
        audio_dir = os.path.join(out_dir, part)
        os.makedirs(audio_dir, exist_ok=True)
        entries = []
        for u in corpus.partition(part):
            write_wav(os.path.join(audio_dir, u.utterance_id + ".wav"), u.load())
            system = "-" if u.key == "bonafide" else u.attack_id
            entries.append(ProtocolEntry("SYN", u.utterance_id, system, u.key, part))
        paths[part] = os.path.join(out_dir, f"protocol.{part}.txt")
        with open(paths[part], "w", encoding="utf-8") as fh:
            fh.write(format_protocol(entries))
    return paths
