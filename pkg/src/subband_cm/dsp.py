"""Constant-Q analysis, spectral resampling, cepstra and band-pass filtering.

The constant-Q transform evaluates, for every bin ``k`` and analysis instant
``n``, the windowed inner product

    X(k, n) = sum_r x(n + r) g_k(r) exp(-2j pi r f_k / fs) / sum(g_k)

with a zero-centred taper ``g_k`` of odd length ``N_k ~ Q fs / f_k``.  The sum
is computed exactly in the frequency domain: each atom has a closed-form,
real-valued DTFT, so one FFT of the zero-padded utterance followed by a sparse
spectral kernel and a small inverse FFT per bin yields all frames at once.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.fft
import scipy.signal
import scipy.sparse
from scipy.interpolate import CubicSpline

from .errors import ConfigurationError

LOG_FLOOR = 1e-30

# Taper coefficients: g(r) = a0 + a1 cos(2 pi r / (N + 1)), r = -h..h.
_WINDOWS = {"hann": (0.5, 0.5), "hamming": (0.54, 0.46)}


@dataclass(frozen=True)
class AudioSignal:
    """Mono PCM samples in [-1, 1] with their sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"expected 1-D samples, got shape {samples.shape}")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"sample rate must be a positive integer, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def nyquist(self) -> float:
        return self.sample_rate / 2.0

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self):
        return len(self.samples)


def _check_signal(signal: AudioSignal):
    if len(signal.samples) < 1:
        raise ValueError("signal is empty")
    if not np.all(np.isfinite(signal.samples)):
        raise ValueError("signal contains NaN or infinite samples")


@dataclass(frozen=True)
class CqtParams:
    """Geometric filter-bank configuration.

    Bin ``k`` (1-based) is centred at ``f1 * 2 ** ((k - 1) / bins_per_octave)``.
    ``kernel_threshold`` trims the spectral kernel of each atom to the region
    where the taper's DTFT exceeds that fraction of its peak; 0 keeps the full
    kernel and reproduces the direct summation to rounding error.
    """

    f1: float
    bins_per_octave: int
    num_bins: int
    sample_rate: int
    hop: int
    window: str = "hann"
    kernel_threshold: float = 1e-4

    def __post_init__(self):
        if not self.f1 > 0:
            raise ConfigurationError(f"f1 must be positive, got {self.f1}")
        if self.bins_per_octave < 1:
            raise ConfigurationError("bins_per_octave must be >= 1")
        if self.num_bins < 1:
            raise ConfigurationError("num_bins must be >= 1")
        if self.hop < 1:
            raise ConfigurationError("hop must be >= 1")
        if self.sample_rate <= 0:
            raise ConfigurationError("sample_rate must be positive")
        if self.window not in _WINDOWS:
            raise ConfigurationError(f"unknown window {self.window!r}; choose from {sorted(_WINDOWS)}")
        if not 0 <= self.kernel_threshold < 1:
            raise ConfigurationError("kernel_threshold must lie in [0, 1)")
        nyquist = self.sample_rate / 2.0
        freqs = self.center_frequencies
        bad = np.nonzero(freqs >= nyquist)[0]
        if bad.size:
            k = int(bad[0]) + 1
            raise ConfigurationError(
                f"bin k={k} is centred at {freqs[bad[0]]:.3f} Hz, at or above the "
                f"Nyquist frequency {nyquist:g} Hz"
            )

    @classmethod
    def default(cls, sample_rate: int = 16000, octaves: int = 9, bins_per_octave: int = 96,
                hop_seconds: float = 0.016, **kwargs) -> "CqtParams":
        """Reference CQCC layout: ``octaves`` octaves ending just below Nyquist."""
        nyquist = sample_rate / 2.0
        return cls(
            f1=nyquist / 2 ** octaves,
            bins_per_octave=bins_per_octave,
            num_bins=octaves * bins_per_octave,
            sample_rate=sample_rate,
            hop=max(1, int(round(hop_seconds * sample_rate))),
            **kwargs,
        )

    @property
    def q(self) -> float:
        return 1.0 / (2.0 ** (1.0 / self.bins_per_octave) - 1.0)

    @property
    def center_frequencies(self) -> np.ndarray:
        k = np.arange(self.num_bins)
        return self.f1 * 2.0 ** (k / self.bins_per_octave)

    @property
    def bandwidths(self) -> np.ndarray:
        return self.center_frequencies * (2.0 ** (1.0 / self.bins_per_octave) - 1.0)

    @property
    def window_lengths(self) -> np.ndarray:
        """Odd integer taper lengths ``floor(Q fs / f_k)`` (rounded up to odd)."""
        n = np.floor(self.q * self.sample_rate / self.center_frequencies).astype(np.int64)
        n = np.maximum(n, 1)
        return n + (n % 2 == 0)


def cqt_center_frequencies(params: CqtParams) -> np.ndarray:
    return params.center_frequencies


@dataclass(frozen=True)
class CqtSpectrogram:
    values: np.ndarray  # complex, (K, N)
    bin_freqs: np.ndarray
    frame_times: np.ndarray
    params: CqtParams


@dataclass(frozen=True)
class PowerSpectrogram:
    """Nonnegative power on either the native geometric axis or a uniform one."""

    values: np.ndarray  # (bins, frames)
    bin_freqs: np.ndarray
    frame_times: np.ndarray
    scale: Literal["geometric-native", "linear-resampled"]

    @property
    def f_low(self) -> float:
        return float(self.bin_freqs[0])

    @property
    def bin_spacing(self) -> float:
        if self.scale != "linear-resampled":
            raise AttributeError("bin spacing is only uniform on a linear-resampled spectrogram")
        return float(self.bin_freqs[1] - self.bin_freqs[0])


@dataclass(frozen=True)
class BandConfig:
    f_min: float
    f_max: float

    def __post_init__(self):
        if not 0 <= self.f_min < self.f_max:
            raise ValueError(f"invalid band: need 0 <= f_min < f_max, got ({self.f_min}, {self.f_max})")

    def validate(self, sample_rate: int):
        if self.f_max > sample_rate / 2.0:
            raise ValueError(f"band upper edge {self.f_max} Hz exceeds Nyquist {sample_rate / 2.0} Hz")

    def is_full_band(self, sample_rate: int) -> bool:
        return self.f_min == 0 and self.f_max >= sample_rate / 2.0

    @property
    def label(self) -> str:
        return f"{self.f_min:g}-{self.f_max:g}"


# ---------------------------------------------------------------------------
# constant-Q transform
# ---------------------------------------------------------------------------


def _dirichlet(nu: np.ndarray, n: int) -> np.ndarray:
    """sum_{r=-h}^{h} exp(-2j pi r nu) for odd ``n = 2h + 1``; real and 1-periodic."""
    nu = nu - np.round(nu)
    den = np.sin(np.pi * nu)
    small = np.abs(den) < 1e-12
    safe = np.where(small, 1.0, den)
    out = np.sin(np.pi * n * nu) / safe
    return np.where(small, float(n), out)


def taper_dtft(nu: np.ndarray, n: int, window: str = "hann") -> np.ndarray:
    """DTFT of the unit-sum, zero-centred taper of odd length ``n`` at normalized frequency ``nu``."""
    a0, a1 = _WINDOWS[window]
    step = 1.0 / (n + 1)
    total = a0 * n + a1  # sum of the taper: the shifted Dirichlet terms equal 1 at 0
    g = a0 * _dirichlet(nu, n) + 0.5 * a1 * (_dirichlet(nu - step, n) + _dirichlet(nu + step, n))
    return g / total


def taper(n: int, window: str = "hann") -> np.ndarray:
    a0, a1 = _WINDOWS[window]
    r = np.arange(n) - (n - 1) // 2
    return a0 + a1 * np.cos(2 * np.pi * r / (n + 1))


@functools.lru_cache(maxsize=None)
def _kernel_halfwidth(window: str, threshold: float) -> float:
    """Half-width, in units of 1/N, beyond which the taper spectrum stays below ``threshold``."""
    n = 4095
    d = np.linspace(0.0, 4000.0, 400001)
    mag = np.abs(taper_dtft(d / n, n, window))
    above = np.nonzero(mag >= threshold * mag[0])[0]
    return float(d[above[-1]]) + 1.0


@functools.lru_cache(maxsize=16)
def _cqt_operator(params: CqtParams, nfft: int):
    """Sparse map from the length-``nfft`` signal spectrum to hop-folded bin spectra."""
    m = nfft // params.hop
    freqs = params.center_frequencies
    lengths = params.window_lengths
    rows, cols, vals = [], [], []
    for k, (f, n) in enumerate(zip(freqs, lengths)):
        centre = f / params.sample_rate * nfft
        if params.kernel_threshold == 0:
            s = np.arange(nfft)
        else:
            half = _kernel_halfwidth(params.window, params.kernel_threshold) * nfft / n
            half = min(half, nfft / 2 - 1)
            s = np.arange(math.floor(centre - half), math.ceil(centre + half) + 1)
        v = taper_dtft(f / params.sample_rate - s / nfft, int(n), params.window)
        col = np.mod(s, nfft)
        rows.append(k * m + np.mod(col, m))
        cols.append(col)
        vals.append(v)
    shape = (params.num_bins * m, nfft)
    op = scipy.sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape
    )
    op.sum_duplicates()
    return op


def _fft_size(num_samples: int, params: CqtParams) -> int:
    half_max = int(params.window_lengths.max()) // 2
    frames = -(-(num_samples + half_max) // params.hop)
    m = 1 << max(0, (frames - 1).bit_length())
    return params.hop * m


def frame_instants(num_samples: int, hop: int) -> np.ndarray:
    return np.arange(0, num_samples, hop)


def cqt(signal: AudioSignal, params: CqtParams) -> CqtSpectrogram:
    """Constant-Q transform at uniform hop, edges zero-padded."""
    _check_signal(signal)
    if signal.sample_rate != params.sample_rate:
        raise ConfigurationError(
            f"signal rate {signal.sample_rate} Hz does not match params rate {params.sample_rate} Hz"
        )
    x = signal.samples
    nfft = _fft_size(len(x), params)
    m = nfft // params.hop
    spectrum = scipy.fft.fft(x, nfft)
    op = _cqt_operator(params, nfft)
    folded = (op @ spectrum).reshape(params.num_bins, m)
    instants = frame_instants(len(x), params.hop)
    values = scipy.fft.ifft(folded, axis=1)[:, : len(instants)] * (m / nfft)
    return CqtSpectrogram(
        values=values,
        bin_freqs=params.center_frequencies,
        frame_times=instants / params.sample_rate,
        params=params,
    )


def power_spectrogram(spec: CqtSpectrogram) -> PowerSpectrogram:
    v = spec.values
    return PowerSpectrogram(
        values=v.real ** 2 + v.imag ** 2,
        bin_freqs=np.asarray(spec.bin_freqs, dtype=np.float64),
        frame_times=spec.frame_times,
        scale="geometric-native",
    )


def default_linear_bins(bin_freqs: np.ndarray) -> int:
    """Uniform bin count whose spacing matches the top adjacent geometric spacing."""
    f = np.asarray(bin_freqs)
    return int(math.ceil((f[-1] - f[0]) / (f[-1] - f[-2])))


def resample_to_linear(geo: PowerSpectrogram, num_bins: int | None = None) -> PowerSpectrogram:
    """Natural cubic spline through each frame, sampled on a uniform grid over [f_1, f_K]."""
    if geo.scale != "geometric-native":
        raise ValueError("input spectrogram is already on a linear axis")
    if len(geo.bin_freqs) < 4:
        raise ValueError("spline resampling needs at least 4 geometric bins")
    if num_bins is None:
        num_bins = default_linear_bins(geo.bin_freqs)
    if num_bins < 2:
        raise ValueError(f"need at least 2 linear bins, got {num_bins}")
    grid = np.linspace(geo.bin_freqs[0], geo.bin_freqs[-1], num_bins)
    spline = CubicSpline(geo.bin_freqs, geo.values, axis=0, bc_type="natural")
    values = np.maximum(spline(grid), 0.0)
    return PowerSpectrogram(values=values, bin_freqs=grid, frame_times=geo.frame_times,
                            scale="linear-resampled")


def cepstra(power: PowerSpectrogram | np.ndarray, num_coeffs: int, floor: float = LOG_FLOOR) -> np.ndarray:
    """Orthonormal DCT-II of floored log power along the frequency axis, first ``num_coeffs`` rows."""
    values = power.values if isinstance(power, PowerSpectrogram) else np.asarray(power, dtype=np.float64)
    if num_coeffs < 1 or num_coeffs > values.shape[0]:
        raise ValueError(f"num_coeffs must lie in [1, {values.shape[0]}], got {num_coeffs}")
    if np.any(values < 0):
        raise ValueError("power values must be nonnegative")
    logp = np.log(np.maximum(values, floor))
    return scipy.fft.dct(logp, type=2, norm="ortho", axis=0)[:num_coeffs]


def log_power_from_cepstra(coeffs: np.ndarray) -> np.ndarray:
    """Inverse of :func:`cepstra` for a full-length coefficient array."""
    return scipy.fft.idct(np.asarray(coeffs, dtype=np.float64), type=2, norm="ortho", axis=0)


# ---------------------------------------------------------------------------
# band-pass filtering
# ---------------------------------------------------------------------------


def design_bandpass(band: BandConfig, sample_rate: int, stop_atten_db: float = 60.0,
                    transition_hz: float = 100.0) -> np.ndarray | None:
    """Kaiser-window linear-phase FIR taps, or ``None`` when both stages are disabled."""
    band.validate(sample_rate)
    nyquist = sample_rate / 2.0
    low_on = band.f_min > 0
    high_on = band.f_max < nyquist
    if not (low_on or high_on):
        return None
    numtaps, beta = scipy.signal.kaiserord(stop_atten_db, transition_hz / nyquist)
    numtaps |= 1  # odd length: type I, valid for high-pass, integer group delay
    if low_on and high_on:
        cutoff, pass_zero = [band.f_min, band.f_max], "bandpass"
    elif low_on:
        cutoff, pass_zero = band.f_min, "highpass"
    else:
        cutoff, pass_zero = band.f_max, "lowpass"
    return scipy.signal.firwin(numtaps, cutoff, window=("kaiser", beta), pass_zero=pass_zero,
                               fs=sample_rate)


def bandpass(signal: AudioSignal, band: BandConfig, **design_kwargs) -> AudioSignal:
    """Zero-phase-aligned FIR band-pass; the full band returns the input unchanged."""
    _check_signal(signal)
    taps = design_bandpass(band, signal.sample_rate, **design_kwargs)
    if taps is None:
        return AudioSignal(signal.samples.copy(), signal.sample_rate)
    # odd-length taps with mode="same" removes the (numtaps - 1) / 2 group delay
    y = scipy.signal.fftconvolve(signal.samples, taps, mode="same")
    return AudioSignal(y, signal.sample_rate)
