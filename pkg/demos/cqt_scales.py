"""Where the geometric and the linear CQCC scales put their resolution.

A constant-Q bank packs bins densely at low frequency. Cepstra taken straight
from it (geometric scale) therefore describe the low band in detail, while
resampling the power to a uniform axis first (linear scale) spreads the
cepstral budget evenly. The script reconstructs a smoothed log spectrum from
the 30 retained coefficients of each scale and reports, per octave, how many
bins each axis spends there and the rms error of the rebuilt log power.

    python3 demos/cqt_scales.py
"""

import numpy as np

from subband_cm import AudioSignal, CqtParams
from subband_cm import dsp


def smoothed(power, floor, keep=30):
    """Log power rebuilt from the first ``keep`` cepstra."""
    full = dsp.cepstra(power, power.values.shape[0], floor=floor)
    full[keep:] = 0.0
    return dsp.log_power_from_cepstra(full)


def main():
    rng = np.random.default_rng(0)
    fs = 16000
    t = np.arange(fs) / fs
    # harmonic source plus noise, so both ends of the spectrum carry structure
    x = sum(np.sin(2 * np.pi * 150 * h * t) / h for h in range(1, 50)) + 0.05 * rng.standard_normal(fs)
    signal = AudioSignal(0.3 * x / np.max(np.abs(x)), fs)

    params = CqtParams.default(fs)
    geo = dsp.power_spectrogram(dsp.cqt(signal, params))
    lin = dsp.resample_to_linear(geo)
    print(f"{params.num_bins} geometric bins from {params.f1:.2f} Hz, {len(lin.bin_freqs)} linear bins "
          f"spaced {lin.bin_spacing:.2f} Hz")

    # a floor 60 dB under the peak keeps spline undershoots from dominating the error
    floor = 1e-6 * geo.values.max()
    targets = {"geometric": (geo, smoothed(geo, floor)), "linear": (lin, smoothed(lin, floor))}
    print(f"{'octave (Hz)':>16}  {'bins geo':>8}  {'bins lin':>8}  {'err geo':>8}  {'err lin':>8}")
    lo = params.f1
    while lo < fs / 2 - 1:
        hi = 2 * lo
        counts, errors = [], []
        for power, rebuilt in targets.values():
            sel = (power.bin_freqs >= lo) & (power.bin_freqs < hi)
            counts.append(f"{int(sel.sum()):8d}")
            if np.any(sel):
                err = rebuilt[sel] - np.log(np.maximum(power.values[sel], floor))
                errors.append(f"{np.sqrt(np.mean(err ** 2)):8.3f}")
            else:
                errors.append("       -")
        print(f"{lo:7.0f}-{hi:<8.0f}  " + "  ".join(counts + errors))
        lo = hi


if __name__ == "__main__":
    main()
