"""Audio I/O and spectral feature extraction shared by every model."""

from __future__ import annotations

import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft
from scipy import signal

DEFAULT_SAMPLE_RATE = 16000
POWER_FLOOR = 1e-10
FLOOR_DB = -100.0
PCM_SCALE = 32768.0


class AudioError(ValueError):
    """Base class for audio I/O and framing errors."""


class NotAWavError(AudioError):
    pass


class UnsupportedEncodingError(AudioError):
    pass


class MultichannelError(AudioError):
    pass


class NotInvertibleError(AudioError):
    """Raised when frame parameters do not allow overlap-add inversion."""


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise AudioError("waveform must be one-dimensional")
        if self.sample_rate_hz <= 0:
            raise AudioError("sample rate must be positive")
        if not np.all(np.isfinite(x)):
            raise AudioError("waveform contains non-finite samples")
        if x.size and np.max(np.abs(x)) > 1.0:
            raise AudioError("sample out of range [-1, 1]")
        object.__setattr__(self, "samples", x)

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass(frozen=True)
class FrameParams:
    window_length_samples: int = 400
    hop_samples: int = 160
    fft_size: int = 512
    window_kind: str = "hann"

    def __post_init__(self):
        if self.window_length_samples <= 0 or self.hop_samples <= 0:
            raise AudioError("window and hop must be positive")
        if self.hop_samples > self.window_length_samples:
            raise AudioError("hop must not exceed the window length")
        if self.fft_size < self.window_length_samples:
            raise AudioError("fft_size must be >= window length")
        if self.fft_size & (self.fft_size - 1):
            raise AudioError("fft_size must be a power of two")
        if self.window_kind not in ("hann", "rectangular"):
            raise AudioError(f"unknown window kind {self.window_kind!r}")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def window(self) -> np.ndarray:
        if self.window_kind == "hann":
            # periodic Hann: sums to a constant under hop = window/4
            return signal.get_window("hann", self.window_length_samples, fftbins=True)
        return np.ones(self.window_length_samples)


@dataclass(frozen=True)
class ComplexSpectrogram:
    frames: np.ndarray
    params: FrameParams

    def __post_init__(self):
        s = np.asarray(self.frames, dtype=np.complex128)
        if s.ndim != 2 or s.shape[1] != self.params.n_bins:
            raise AudioError("spectrogram must be T x (fft_size/2 + 1)")
        object.__setattr__(self, "frames", s)

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.frames)


@dataclass(frozen=True)
class MelFilterbank:
    weights: np.ndarray
    mel_low_hz: float
    mel_high_hz: float

    @property
    def n_mels(self) -> int:
        return self.weights.shape[0]

    @property
    def fft_size(self) -> int:
        return 2 * (self.weights.shape[1] - 1)


@dataclass(frozen=True)
class MelSpectrogram:
    """Log-compressed mel energies in dB, one row per frame."""

    frames: np.ndarray
    params: FrameParams = field(default_factory=FrameParams)

    def __post_init__(self):
        m = np.asarray(self.frames, dtype=np.float64)
        if m.ndim != 2:
            raise AudioError("mel spectrogram must be a T x K matrix")
        if not np.all(np.isfinite(m)):
            raise AudioError("mel spectrogram contains non-finite entries")
        object.__setattr__(self, "frames", m)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_mels(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class FeatureSequence:
    frames: np.ndarray
    mode: str = "log_mel"

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=np.float64)
        if f.ndim != 2:
            raise AudioError("feature sequence must be a T x D matrix")
        if self.mode not in ("log_mel", "mfcc"):
            raise AudioError(f"unknown feature mode {self.mode!r}")
        object.__setattr__(self, "frames", f)

    def __len__(self):
        return self.frames.shape[0]


# ---------------------------------------------------------------- wav I/O


def load_wav(path) -> Waveform:
    """Read a 16-bit PCM mono RIFF/WAVE file into a float waveform."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wf:
            n_channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except wave.Error as exc:
        msg = str(exc)
        if "unknown format" in msg:
            raise UnsupportedEncodingError(f"{path}: unsupported encoding ({msg})") from exc
        raise NotAWavError(f"{path}: not a wav file ({msg})") from exc
    except EOFError as exc:
        raise NotAWavError(f"{path}: not a wav file (truncated)") from exc
    if n_channels != 1:
        raise MultichannelError(f"{path}: multichannel unsupported ({n_channels} channels)")
    if width != 2:
        raise UnsupportedEncodingError(f"{path}: unsupported encoding ({8 * width}-bit PCM)")
    pcm = np.frombuffer(raw, dtype="<i2")
    return Waveform(pcm.astype(np.float64) / PCM_SCALE, rate)


def write_wav(w: Waveform, path) -> None:
    x = w.samples
    if x.size and np.max(np.abs(x)) > 1.0:
        raise AudioError("sample out of range [-1, 1]")
    pcm = np.clip(np.round(x * PCM_SCALE), -32768, 32767).astype("<i2")
    try:
        with wave.open(str(path), "wb") as wf:
            wf.setnchannels(1)
            wf.setsampwidth(2)
            wf.setframerate(int(w.sample_rate_hz))
            wf.writeframes(pcm.tobytes())
    except OSError as exc:
        raise AudioError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------- framing


def num_frames(n_samples: int, p: FrameParams) -> int:
    if n_samples < p.window_length_samples:
        return 0
    return (n_samples - p.window_length_samples) // p.hop_samples + 1


def frame_signal(w, p: FrameParams) -> np.ndarray:
    """Slice a signal into windowed frames, shape (T, window_length)."""
    x = w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)
    n = num_frames(x.size, p)
    L = p.window_length_samples
    if n == 0:
        return np.zeros((0, L))
    idx = np.arange(L)[None, :] + p.hop_samples * np.arange(n)[:, None]
    return x[idx] * p.window()[None, :]


def stft(w, p: FrameParams) -> ComplexSpectrogram:
    frames = frame_signal(w, p)
    spec = np.fft.rfft(frames, n=p.fft_size, axis=1) if len(frames) else np.zeros((0, p.n_bins), complex)
    return ComplexSpectrogram(spec, p)


def check_invertible(p: FrameParams) -> None:
    win = p.window()
    if not signal.check_NOLA(win, p.window_length_samples, p.window_length_samples - p.hop_samples):
        raise NotInvertibleError(
            f"{p.window_kind} window of {p.window_length_samples} with hop {p.hop_samples} "
            "cannot be inverted by overlap-add"
        )


def overlap_add(s: ComplexSpectrogram, length: int | None = None) -> np.ndarray:
    """Least-squares inverse STFT as a raw (unclipped) sample array.

    Frames are overlap-added and divided by the summed squared window.
    Samples not covered by any frame are zero; ``length`` pads or truncates.
    """
    p = s.params
    check_invertible(p)
    T = s.frames.shape[0]
    L, hop = p.window_length_samples, p.hop_samples
    n_out = (T - 1) * hop + L if T else 0
    win = p.window()
    out = np.zeros(n_out)
    norm = np.zeros(n_out)
    if T:
        frames = np.fft.irfft(s.frames, n=p.fft_size, axis=1)[:, :L] * win[None, :]
        for t in range(T):
            out[t * hop : t * hop + L] += frames[t]
            norm[t * hop : t * hop + L] += win**2
    nz = norm > 1e-10
    out[nz] /= norm[nz]
    if length is not None:
        out = out[:length] if n_out >= length else np.concatenate([out, np.zeros(length - n_out)])
    return out


def istft(s: ComplexSpectrogram, length: int | None = None, sample_rate_hz: int = DEFAULT_SAMPLE_RATE) -> Waveform:
    # spectra that were modified may overlap-add past full scale
    return Waveform(np.clip(overlap_add(s, length), -1.0, 1.0), sample_rate_hz)


# ---------------------------------------------------------------- mel


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def build_mel_filterbank(fft_size: int, sample_rate_hz: int, n_mels: int, low_hz: float, high_hz: float) -> MelFilterbank:
    """Triangular filters with centres equally spaced on the mel scale.

    Each triangle peaks at 1 at its centre frequency and reaches 0 at its
    neighbours' centres, so overlapping filters sum to at most 1.
    """
    if not (0 <= low_hz < high_hz <= sample_rate_hz / 2):
        raise AudioError("need 0 <= low_hz < high_hz <= sample_rate/2")
    edges = mel_to_hz(np.linspace(hz_to_mel(low_hz), hz_to_mel(high_hz), n_mels + 2))
    freqs = np.arange(fft_size // 2 + 1) * sample_rate_hz / fft_size
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lo) / (mid - lo)
    falling = (hi - freqs[None, :]) / (hi - mid)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    peaks = np.argmax(weights, axis=1)
    if np.any(weights.max(axis=1) <= 0) or np.any(np.diff(peaks) <= 0):
        raise AudioError(f"{n_mels} mel channels too many for fft_size {fft_size} (duplicate centres)")
    return MelFilterbank(weights, float(low_hz), float(high_hz))


def mel_spectrogram(w, p: FrameParams, fb: MelFilterbank, floor_db: float = FLOOR_DB) -> MelSpectrogram:
    if fb.fft_size != p.fft_size:
        raise AudioError("filterbank does not match fft size")
    mag = stft(w, p).magnitude
    energy = mag @ fb.weights.T
    db = 20.0 * np.log10(np.maximum(energy, POWER_FLOOR))
    return MelSpectrogram(np.maximum(db, floor_db), p)


def mfcc(m: MelSpectrogram, n_coeffs: int = 13) -> FeatureSequence:
    if n_coeffs > m.n_mels:
        raise AudioError("n_coeffs must not exceed the number of mel channels")
    c = scipy.fft.dct(m.frames, type=2, norm="ortho", axis=1)[:, :n_coeffs]
    return FeatureSequence(c, "mfcc")


def normalize_db(db, floor_db: float = FLOOR_DB):
    """Map dB values so that the floor sits at 0 and 0 dB at 1."""
    return (np.asarray(db) - floor_db) / -floor_db


def denormalize_db(x, floor_db: float = FLOOR_DB):
    return np.asarray(x) * -floor_db + floor_db
