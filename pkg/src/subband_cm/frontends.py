"""CQCC (linear or geometric scale) and LFCC feature extraction."""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.fft
import scipy.signal

from . import dsp
from .dsp import AudioSignal, CqtParams
from .errors import FormatError

FeatureKind = Literal["cqcc-linear", "cqcc-geometric", "lfcc"]
FEATURE_KINDS = ("cqcc-linear", "cqcc-geometric", "lfcc")

CQCC_STATICS = 30
LFCC_STATICS = 20


@dataclass(frozen=True)
class FeatureMatrix:
    frames: np.ndarray  # (T, 3 * static_count)
    kind: FeatureKind
    static_count: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        # one memory layout everywhere: BLAS rounding depends on it
        frames = np.ascontiguousarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[1] != 3 * self.static_count:
            raise ValueError(
                f"{self.kind} features need {3 * self.static_count} columns, got shape {frames.shape}"
            )
        if not np.all(np.isfinite(frames)):
            raise ValueError("features contain non-finite values")
        object.__setattr__(self, "frames", frames)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


def append_deltas(statics: np.ndarray, width: int = 1) -> np.ndarray:
    """Stack statics with velocity and acceleration from an edge-replicated regression."""
    statics = np.asarray(statics, dtype=np.float64)
    if statics.ndim != 2 or statics.shape[0] < 1:
        raise ValueError("statics must be a (T, S) array with T >= 1")
    delta = _regression(statics, width)
    return np.hstack([statics, delta, _regression(delta, width)])


def _regression(c: np.ndarray, width: int) -> np.ndarray:
    t = c.shape[0]
    padded = np.pad(c, ((width, width), (0, 0)), mode="edge")
    num = np.zeros_like(c)
    for n in range(1, width + 1):
        num += n * (padded[width + n: width + n + t] - padded[width - n: width - n + t])
    return num / (2 * sum(n * n for n in range(1, width + 1)))


# ---------------------------------------------------------------------------
# CQCC
# ---------------------------------------------------------------------------


def cqcc_extract(signal: AudioSignal, params: CqtParams | None = None,
                 scale: Literal["linear", "geometric"] = "linear", num_linear_bins: int | None = None,
                 metadata: dict | None = None) -> FeatureMatrix:
    """CQT -> power -> optional linear resampling -> 30 cepstra -> deltas (90 columns)."""
    if scale not in ("linear", "geometric"):
        raise ValueError(f"scale must be 'linear' or 'geometric', got {scale!r}")
    if params is None:
        params = CqtParams.default(signal.sample_rate)
    power = dsp.power_spectrogram(dsp.cqt(signal, params))
    if scale == "linear":
        power = dsp.resample_to_linear(power, num_linear_bins)
    statics = dsp.cepstra(power, CQCC_STATICS).T
    return FeatureMatrix(append_deltas(statics), f"cqcc-{scale}", CQCC_STATICS, dict(metadata or {}))


# ---------------------------------------------------------------------------
# LFCC
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LfccParams:
    frame_seconds: float = 0.020
    hop_seconds: float = 0.010
    nfft: int = 512
    num_filters: int = 20
    num_coeffs: int = LFCC_STATICS
    window: str = "hann"


def linear_filterbank(num_filters: int, nfft: int, sample_rate: int) -> np.ndarray:
    """Triangular filters with edges evenly spaced over [0, Nyquist]; shape (filters, nfft // 2 + 1)."""
    edges = np.linspace(0.0, sample_rate / 2.0, num_filters + 2)
    freqs = np.fft.rfftfreq(nfft, 1.0 / sample_rate)
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rise = (freqs - lo) / (mid - lo)
    fall = (hi - freqs) / (hi - mid)
    return np.maximum(0.0, np.minimum(rise, fall))


def lfcc_filterbank_energies(signal: AudioSignal, params: LfccParams = LfccParams()) -> np.ndarray:
    """Filter-bank energies per frame, shape (T, num_filters)."""
    dsp._check_signal(signal)
    fs = signal.sample_rate
    size = int(round(params.frame_seconds * fs))
    hop = int(round(params.hop_seconds * fs))
    if size > params.nfft:
        raise ValueError(f"frame of {size} samples exceeds the {params.nfft}-point DFT")
    x = signal.samples
    if len(x) < size:
        raise ValueError(f"utterance of {len(x)} samples is shorter than one {size}-sample frame")
    count = 1 + (len(x) - size) // hop
    idx = np.arange(size)[None, :] + hop * np.arange(count)[:, None]
    frames = x[idx] * scipy.signal.get_window(params.window, size)
    spec = np.abs(scipy.fft.rfft(frames, params.nfft, axis=1)) ** 2
    return spec @ linear_filterbank(params.num_filters, params.nfft, fs).T


def lfcc_from_energies(energies: np.ndarray, num_coeffs: int = LFCC_STATICS) -> np.ndarray:
    """Static LFCCs (T, num_coeffs) from filter-bank energies (T, filters)."""
    return dsp.cepstra(np.asarray(energies).T, num_coeffs).T


def lfcc_extract(signal: AudioSignal, params: LfccParams = LfccParams(),
                 metadata: dict | None = None) -> FeatureMatrix:
    statics = lfcc_from_energies(lfcc_filterbank_energies(signal, params), params.num_coeffs)
    return FeatureMatrix(append_deltas(statics), "lfcc", params.num_coeffs, dict(metadata or {}))


def extract(signal: AudioSignal, kind: FeatureKind, cqt_params: CqtParams | None = None,
            lfcc_params: LfccParams = LfccParams(), metadata: dict | None = None) -> FeatureMatrix:
    if kind == "lfcc":
        return lfcc_extract(signal, lfcc_params, metadata)
    if kind in ("cqcc-linear", "cqcc-geometric"):
        return cqcc_extract(signal, cqt_params, kind.split("-")[1], metadata=metadata)
    raise ValueError(f"unknown front-end {kind!r}; choose from {FEATURE_KINDS}")


# ---------------------------------------------------------------------------
# feature cache file
# ---------------------------------------------------------------------------

_MAGIC = b"SSLF"
_VERSION = 1
_HEADER = struct.Struct("<4sHBII")


def write_features(path, features: FeatureMatrix):
    """Write atomically (temp file + rename) so concurrent writers never expose partial files."""
    path = os.fspath(path)
    header = _HEADER.pack(_MAGIC, _VERSION, FEATURE_KINDS.index(features.kind), *features.frames.shape)
    body = features.frames.astype("<f8").tobytes(order="C")
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".sslf")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header + body)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_features(path) -> FeatureMatrix:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated feature header")
    magic, version, kind, t, d = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported feature file version {version}")
    if kind >= len(FEATURE_KINDS):
        raise FormatError(f"{path}: unknown feature kind code {kind}")
    expected = _HEADER.size + 8 * t * d
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    frames = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(t, d).astype(np.float64)
    return FeatureMatrix(frames, FEATURE_KINDS[kind], d // 3)
