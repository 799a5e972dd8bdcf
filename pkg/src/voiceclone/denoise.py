"""Stationary spectral-gating noise reduction.

A noise-only clip gives per-bin magnitude statistics.  Bins of the signal
that do not rise above ``mean + k * std`` are attenuated to ``mask_floor``;
the binary mask is box-smoothed over time and frequency before being applied.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from .audio import ComplexSpectrogram, FrameParams, Waveform, check_invertible, istft, stft


class DenoiseError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseProfile:
    mean: np.ndarray
    std: np.ndarray


@dataclass(frozen=True)
class GateParams:
    threshold_k: float = 1.5
    mask_floor: float = 0.1
    time_smoothing: int = 2
    freq_smoothing: int = 1

    def __post_init__(self):
        if not 0.0 <= self.mask_floor <= 1.0:
            raise DenoiseError("mask_floor must lie in [0, 1]")
        if self.time_smoothing < 0 or self.freq_smoothing < 0:
            raise DenoiseError("smoothing half-widths must be nonnegative")


def estimate_noise_profile(noise_clip: Waveform, p: FrameParams) -> NoiseProfile:
    mag = stft(noise_clip, p).magnitude
    if mag.shape[0] == 0:
        raise DenoiseError("noise clip is shorter than one frame")
    return NoiseProfile(mag.mean(axis=0), mag.std(axis=0))


def spectral_gate_mask(spec: ComplexSpectrogram, prof: NoiseProfile, g: GateParams) -> np.ndarray:
    mag = spec.magnitude
    if mag.shape[1] != prof.mean.size:
        raise DenoiseError("noise profile does not match the spectrogram bins")
    threshold = prof.mean + g.threshold_k * prof.std
    mask = np.where(mag > threshold[None, :], 1.0, g.mask_floor)
    if mask.size:
        size = (2 * g.time_smoothing + 1, 2 * g.freq_smoothing + 1)
        mask = uniform_filter(mask, size=size, mode="nearest")
    # box averaging is convex; clip only removes float round-off
    return np.clip(mask, g.mask_floor, 1.0)


def denoise(w: Waveform, noise_clip: Waveform, p: FrameParams | None = None, g: GateParams | None = None) -> Waveform:
    """Gate ``w`` against the noise statistics of ``noise_clip``.

    The signal is padded by one window on each side so that every original
    sample lies in the fully overlapped region; output length equals input.
    """
    p = p or FrameParams(400, 100, 512, "hann")
    g = g or GateParams()
    check_invertible(p)
    if len(w) == 0:
        return Waveform(np.zeros(0), w.sample_rate_hz)
    L, hop = p.window_length_samples, p.hop_samples
    n = len(w)
    tail = L + (-(n + L) % hop)
    padded = np.concatenate([np.zeros(L), w.samples, np.zeros(tail)])
    spec = stft(padded, p)
    mask = spectral_gate_mask(spec, estimate_noise_profile(noise_clip, p), g)
    out = istft(ComplexSpectrogram(spec.frames * mask, p), len(padded), w.sample_rate_hz)
    return Waveform(out.samples[L : L + n], w.sample_rate_hz)
