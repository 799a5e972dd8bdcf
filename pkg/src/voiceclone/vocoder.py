"""Autoregressive GRU vocoder with continuous output, plus a Griffin-Lim baseline.

Each output sample is ``tanh(affine(h_t))`` where the GRU state ``h_t`` sees
the previous sample concatenated with a per-sample conditioning vector
projected from the mel spectrogram.  Training is teacher-forced MSE.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import nn
from .audio import (
    ComplexSpectrogram,
    FrameParams,
    MelSpectrogram,
    Waveform,
    overlap_add,
    normalize_db,
    stft,
)
from .synthesizer import N_MELS, SYNTH_FRAME_PARAMS, synth_mel

log = logging.getLogger(__name__)


# float64 tanh rounds to exactly +-1 for inputs past ~19; keep samples strictly inside
SAMPLE_MAX = np.nextafter(1.0, 0.0)


class VocoderError(ValueError):
    pass


@dataclass(frozen=True)
class ConditioningTrack:
    values: np.ndarray  # (L, C)
    hop: int

    def __len__(self):
        return self.values.shape[0]


def init_vocoder_params(rng, cond_size=32, hidden=128, n_layers=1, n_mels=N_MELS) -> dict:
    params = {
        "cond.W": nn.uniform_init(rng, (cond_size, n_mels), n_mels),
        "cond.b": np.zeros(cond_size),
    }
    for layer in range(n_layers):
        nn.init_gru(rng, params, f"gru{layer}", (1 if layer == 0 else hidden) + cond_size, hidden)
    params["out.W"] = nn.uniform_init(rng, (1, hidden), hidden)
    params["out.b"] = np.zeros(1)
    return params


def _n_layers(params) -> int:
    return sum(1 for k in params if k.startswith("gru") and k.endswith(".Wzr"))


def _interp_index(n_frames, hop, mode):
    """Per-sample (lo, hi, frac) so that track = (1-frac)*P[lo] + frac*P[hi]."""
    L = n_frames * hop
    s = np.arange(L)
    if mode == "repeat":
        lo = s // hop
        return lo, lo, np.zeros(L)
    if mode != "linear":
        raise VocoderError(f"unknown upsample mode {mode!r}")
    # frame t is centred on sample t*hop + hop//2
    pos = np.clip((s - hop // 2) / hop, 0, n_frames - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n_frames - 1)
    return lo, hi, pos - lo


def project_mel(params, mel: MelSpectrogram) -> np.ndarray:
    return normalize_db(mel.frames) @ params["cond.W"].T + params["cond.b"]


def upsample_conditioning(mel: MelSpectrogram, params: dict, hop: int = 160, mode="repeat") -> ConditioningTrack:
    if mel.n_frames == 0:
        raise VocoderError("mel spectrogram is empty")
    P = project_mel(params, mel)
    lo, hi, frac = _interp_index(mel.n_frames, hop, mode)
    return ConditioningTrack((1 - frac)[:, None] * P[lo] + frac[:, None] * P[hi], hop)


def _layer(params, layer):
    return tuple(params[f"gru{layer}.{k}"] for k in ("Wzr", "bzr", "Wn", "bn"))


def wavernn_step(params: dict, prev_sample: float, cond, hidden):
    """One autoregressive step.

    ``hidden`` is a list of per-layer state vectors (or None for zeros).
    Returns (prediction, new_hidden).
    """
    n_layers = _n_layers(params)
    H = params["out.W"].shape[1]
    if hidden is None:
        hidden = [np.zeros((1, H)) for _ in range(n_layers)]
    cond = np.asarray(cond, dtype=np.float64).reshape(1, -1)
    x = np.array([[prev_sample]])
    new_hidden = []
    for layer in range(n_layers):
        h, _ = nn.gru_cell(np.hstack([x, cond]), hidden[layer], *_layer(params, layer))
        new_hidden.append(h)
        x = h
    pred = float(np.clip(np.tanh(x @ params["out.W"].T + params["out.b"])[0, 0], -SAMPLE_MAX, SAMPLE_MAX))
    return pred, new_hidden


def generate(params: dict, cond: ConditioningTrack, seed_sample: float = 0.0, sample_rate_hz: int = 16000) -> Waveform:
    """Free-running generation: each prediction is the next step's input."""
    C = cond.values
    if C.shape[0] == 0:
        raise VocoderError("conditioning track is empty")
    n_layers = _n_layers(params)
    H = params["out.W"].shape[1]
    layers = [_layer(params, l) for l in range(n_layers)]
    w_out, b_out = params["out.W"][0], params["out.b"][0]
    hidden = [np.zeros((1, H)) for _ in range(n_layers)]
    out = np.empty(C.shape[0])
    prev = seed_sample
    x0 = np.empty((1, 1 + C.shape[1]))
    for t in range(C.shape[0]):
        x0[0, 0] = prev
        x0[0, 1:] = C[t]
        x = x0
        for layer in range(n_layers):
            if layer:
                x = np.hstack([x, C[t : t + 1]])
            hidden[layer], _ = nn.gru_cell(x, hidden[layer], *layers[layer])
            x = hidden[layer]
        prev = min(max(np.tanh(x[0] @ w_out + b_out), -SAMPLE_MAX), SAMPLE_MAX)
        out[t] = prev
    return Waveform(out, sample_rate_hz)


def vocoder_loss(pred, target) -> float:
    a = pred.samples if isinstance(pred, Waveform) else np.asarray(pred, dtype=np.float64)
    b = target.samples if isinstance(target, Waveform) else np.asarray(target, dtype=np.float64)
    if a.shape != b.shape:
        raise VocoderError(f"length mismatch {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


# ---------------------------------------------------------------- training


def teacher_forced_loss_and_grads(params: dict, mel: MelSpectrogram, target, hop=160, mode="repeat", segment=320, seed_sample=0.0):
    """Teacher-forced MSE and gradients.

    The clip is cut into equal segments that run as one batch, each starting
    from a zero state; the input at sample s is always the true sample s-1.
    ``segment`` must divide the clip length.
    """
    y = np.asarray(target, dtype=np.float64)
    L = y.size
    if L != hop * mel.n_frames:
        raise VocoderError(f"target length {L} != hop * frames ({hop * mel.n_frames})")
    if L % segment:
        raise VocoderError("segment length must divide the clip length")
    n_layers = _n_layers(params)
    layers = [_layer(params, l) for l in range(n_layers)]
    H = params["out.W"].shape[1]
    nmel = normalize_db(mel.frames)
    P = nmel @ params["cond.W"].T + params["cond.b"]
    lo, hi, frac = _interp_index(mel.n_frames, hop, mode)
    track = (1 - frac)[:, None] * P[lo] + frac[:, None] * P[hi]
    prev = np.concatenate([[seed_sample], y[:-1]])

    B, S = L // segment, segment
    X = prev.reshape(B, S)
    Cd = track.reshape(B, S, -1)
    Y = y.reshape(B, S)
    hidden = [np.zeros((B, H)) for _ in range(n_layers)]
    caches = []
    hs_top = np.empty((B, S, H))
    for t in range(S):
        x = X[:, t : t + 1]
        step = []
        for layer in range(n_layers):
            hidden[layer], cache = nn.gru_cell(np.hstack([x, Cd[:, t]]), hidden[layer], *layers[layer])
            step.append(cache)
            x = hidden[layer]
        caches.append(step)
        hs_top[:, t] = x
    pred = np.tanh(hs_top @ params["out.W"][0] + params["out.b"][0])
    diff = pred - Y
    loss = float(np.mean(diff**2))

    da = 2.0 * diff / diff.size * (1.0 - pred**2)
    grads = {
        "out.W": (da.reshape(-1) @ hs_top.reshape(-1, H))[None, :],
        "out.b": np.array([da.sum()]),
    }
    lg = [{"Wzr": np.zeros_like(ly[0]), "bzr": np.zeros_like(ly[1]), "Wn": np.zeros_like(ly[2]), "bn": np.zeros_like(ly[3])} for ly in layers]
    dtrack = np.zeros_like(Cd)
    dh_next = [np.zeros((B, H)) for _ in range(n_layers)]
    C = Cd.shape[2]
    for t in reversed(range(S)):
        dh = da[:, t : t + 1] * params["out.W"][0][None, :] + dh_next[-1]
        for layer in reversed(range(n_layers)):
            if layer < n_layers - 1:
                dh = dh + dh_next[layer]
            dx, dh_prev = nn.gru_cell_backward(dh, caches[t][layer], layers[layer][0], layers[layer][2], lg[layer])
            dh_next[layer] = dh_prev
            in_size = dx.shape[1] - C
            dtrack[:, t] += dx[:, in_size:]
            dh = dx[:, :in_size]
    for layer in range(n_layers):
        for k, v in lg[layer].items():
            grads[f"gru{layer}.{k}"] = v
    dtrack = dtrack.reshape(L, -1)
    dP = np.zeros_like(P)
    np.add.at(dP, lo, (1 - frac)[:, None] * dtrack)
    np.add.at(dP, hi, frac[:, None] * dtrack)
    grads["cond.W"] = dP.T @ nmel
    grads["cond.b"] = dP.sum(axis=0)
    return loss, grads, pred.reshape(-1)


def vocoder_mel(w: Waveform, params: FrameParams = SYNTH_FRAME_PARAMS) -> MelSpectrogram:
    """Mel spectrogram with exactly ``len(w) // hop`` frames.

    The tail is zero-padded so that every hop-sized block of samples has a
    frame starting on it.
    """
    pad = params.window_length_samples - params.hop_samples
    n = (len(w) // params.hop_samples) * params.hop_samples
    return synth_mel(Waveform(np.concatenate([w.samples[:n], np.zeros(pad)]), w.sample_rate_hz), params)


def trim_pair(mel: MelSpectrogram, w, hop=160, segment=320):
    """Cut mel/waveform so that L = hop * T and the segment length divides L."""
    if segment % hop:
        raise VocoderError("segment length must be a multiple of the hop")
    samples = w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)
    frames = min(mel.n_frames, samples.size // hop)
    frames -= frames % (segment // hop)
    if frames == 0:
        raise VocoderError("clip too short for one training segment")
    return MelSpectrogram(mel.frames[:frames], mel.params), samples[: frames * hop]


def train_vocoder(
    pairs,
    *,
    steps=300,
    cond_size=32,
    hidden=128,
    n_layers=1,
    hop=160,
    mode="repeat",
    segment=320,
    crop_frames=None,
    lr=0.1,
    momentum=0.9,
    clip_norm=1.0,
    seed=0,
    log_every=10,
):
    """Teacher-forced SGD over ``(MelSpectrogram, Waveform)`` pairs.

    With ``crop_frames`` each step trains on a random aligned excerpt of
    that many frames; the sample just before the excerpt seeds it.
    Returns ``(params, loss_log)`` with rows ``(step, loss)``.
    """
    data = [trim_pair(m, w, hop, segment) for m, w in pairs]
    if not data:
        raise VocoderError("no training pairs")
    if crop_frames is not None and (crop_frames * hop) % segment:
        raise VocoderError("crop length must be a whole number of segments")
    rng = np.random.default_rng(seed)
    params = init_vocoder_params(rng, cond_size, hidden, n_layers)
    opt = nn.SGD(lr, clip_norm, momentum)
    loss_log = []
    for step in range(steps):
        mel, y = data[rng.integers(len(data))] if len(data) > 1 else data[0]
        seed_sample = 0.0
        if crop_frames is not None and mel.n_frames > crop_frames:
            start = int(rng.integers(0, mel.n_frames - crop_frames + 1))
            seed_sample = y[start * hop - 1] if start else 0.0
            mel = MelSpectrogram(mel.frames[start : start + crop_frames], mel.params)
            y = y[start * hop : (start + crop_frames) * hop]
        loss, grads, _ = teacher_forced_loss_and_grads(params, mel, y, hop, mode, segment, seed_sample)
        opt.step(params, grads)
        if step % log_every == 0 or step == steps - 1:
            loss_log.append((step, loss))
            log.debug("vocoder step %d loss %.6f", step, loss)
    return params, loss_log


# ---------------------------------------------------------------- Griffin-Lim


def griffin_lim(mag, p: FrameParams | None = None, iters: int = 60, seed: int = 0, return_errors: bool = False):
    """Iterative phase reconstruction from a magnitude spectrogram.

    Starts from random phase and alternates between imposing the target
    magnitude and projecting onto consistent spectrograms via the
    least-squares inverse STFT.  With ``return_errors`` also returns the
    consistency error ``|| |stft(x)| - mag ||`` after every iteration.
    """
    p = p or FrameParams()
    mag = np.asarray(mag, dtype=np.float64)
    if np.any(mag < 0):
        raise VocoderError("magnitudes must be nonnegative")
    T = mag.shape[0]
    length = (T - 1) * p.hop_samples + p.window_length_samples if T else 0
    rng = np.random.default_rng(seed)
    phase = np.exp(2j * np.pi * rng.uniform(size=mag.shape))
    errors = []
    x = np.zeros(length)
    for _ in range(iters):
        x = overlap_add(ComplexSpectrogram(mag * phase, p), length)
        spec = stft(x, p).frames
        errors.append(float(np.linalg.norm(np.abs(spec) - mag)))
        phase = np.exp(1j * np.angle(spec))
    w = Waveform(np.clip(x, -1.0, 1.0))
    return (w, errors) if return_errors else w
