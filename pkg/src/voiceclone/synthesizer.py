"""Speaker-conditioned text-to-mel model.

Characters are embedded, passed through a two-layer ReLU pre-net and
mean-pooled into a text summary.  A single-layer LSTM decoder then predicts
mel frames one at a time from the previous frame, the text summary and the
speaker d-vector.  Mel frames are handled internally in normalised units
(floor at 0, 0 dB at 1).
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

import numpy as np

from . import nn
from .audio import (
    FLOOR_DB,
    FrameParams,
    MelSpectrogram,
    Waveform,
    build_mel_filterbank,
    denormalize_db,
    mel_spectrogram,
    normalize_db,
)

log = logging.getLogger(__name__)

N_MELS = 80
SYNTH_FRAME_PARAMS = FrameParams(400, 160, 1024, "hann")

PAD, UNK, SPACE = 0, 1, 2
_PUNCT = ".,?!-:;\"()"
SYMBOLS = ["<pad>", "<unk>", " "] + [chr(c) for c in range(ord("a"), ord("z") + 1)] + ["'"] + list(_PUNCT)
SYMBOL_TO_ID = {s: i for i, s in enumerate(SYMBOLS)}


class SynthesizerError(ValueError):
    pass


@dataclass(frozen=True)
class TextSequence:
    ids: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        if ids.ndim != 1 or np.any(ids < 0) or np.any(ids >= len(SYMBOLS)):
            raise SynthesizerError("symbol id out of range")
        object.__setattr__(self, "ids", ids)

    def __len__(self):
        return self.ids.size


@dataclass(frozen=True)
class MelTargetPair:
    text: TextSequence
    mel: MelSpectrogram
    speaker: np.ndarray


def encode_text(raw: str) -> TextSequence:
    """Lowercase, collapse whitespace and map characters to symbol ids."""
    text = re.sub(r"\s+", " ", raw.lower()).strip()
    if not text:
        raise SynthesizerError("text is empty after normalisation")
    return TextSequence([SYMBOL_TO_ID.get(ch, UNK) for ch in text])


def decode_text(seq: TextSequence) -> str:
    return "".join("?" if i == UNK else SYMBOLS[i] for i in seq.ids if i != PAD)


def synth_mel(w: Waveform, params: FrameParams = SYNTH_FRAME_PARAMS) -> MelSpectrogram:
    """80-channel log-mel spectrogram used as synthesizer target and vocoder input."""
    fb = build_mel_filterbank(params.fft_size, w.sample_rate_hz, N_MELS, 0.0, w.sample_rate_hz / 2)
    return mel_spectrogram(w, params, fb)


def init_synth_params(rng, embedding_size=32, prenet_size=32, speaker_size=32, hidden=128, n_mels=N_MELS) -> dict:
    params = {"embed": rng.normal(0.0, 0.3, size=(len(SYMBOLS), embedding_size))}
    params["prenet1.W"] = nn.uniform_init(rng, (prenet_size, embedding_size), embedding_size)
    params["prenet1.b"] = np.zeros(prenet_size)
    params["prenet2.W"] = nn.uniform_init(rng, (prenet_size, prenet_size), prenet_size)
    params["prenet2.b"] = np.zeros(prenet_size)
    nn.init_lstm(rng, params, "dec0", n_mels + prenet_size + speaker_size, hidden)
    params["out.W"] = nn.uniform_init(rng, (n_mels, hidden), hidden)
    params["out.b"] = np.zeros(n_mels)
    return params


def _text_summary(params, ids):
    emb = params["embed"][ids]
    z1 = emb @ params["prenet1.W"].T + params["prenet1.b"]
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ params["prenet2.W"].T + params["prenet2.b"]
    a2 = np.maximum(z2, 0.0)
    return a2.mean(axis=0), (ids, emb, z1, a1, z2)


def _text_summary_backward(params, dsummary, cache, grads):
    ids, emb, z1, a1, z2 = cache
    S = ids.size
    dz2 = np.tile(dsummary / S, (S, 1)) * (z2 > 0)
    grads["prenet2.W"] = dz2.T @ a1
    grads["prenet2.b"] = dz2.sum(axis=0)
    dz1 = (dz2 @ params["prenet2.W"]) * (z1 > 0)
    grads["prenet1.W"] = dz1.T @ emb
    grads["prenet1.b"] = dz1.sum(axis=0)
    demb = dz1 @ params["prenet1.W"]
    dE = np.zeros_like(params["embed"])
    np.add.at(dE, ids, demb)
    grads["embed"] = dE


def _check_speaker(spk, params):
    spk = np.asarray(spk, dtype=np.float64)
    expected = params["dec0.W"].shape[1] - params["dec0.W"].shape[0] // 4 - N_MELS - params["prenet2.W"].shape[0]
    if spk.shape != (expected,):
        raise SynthesizerError(f"speaker embedding must have {expected} dims")
    return spk


def _teacher_forced(params, text: TextSequence, target_norm, spk):
    T = target_norm.shape[0]
    if T == 0:
        raise SynthesizerError("target mel is empty")
    if target_norm.shape[1] != N_MELS:
        raise SynthesizerError(f"target must have {N_MELS} mel channels")
    summary, tcache = _text_summary(params, text.ids)
    prev = np.vstack([np.zeros((1, N_MELS)), target_norm[:-1]])
    x = np.hstack([prev, np.tile(summary, (T, 1)), np.tile(spk, (T, 1))])
    hs, lcache = nn.lstm_forward(x[None], params["dec0.W"], params["dec0.b"])
    pred = hs[0] @ params["out.W"].T + params["out.b"]
    return pred, (tcache, lcache, hs[0])


def decode_mel_teacher_forced(params: dict, text: TextSequence, target: MelSpectrogram, spk) -> MelSpectrogram:
    """Predict every frame from the previous ground-truth frame (go-frame of zeros first)."""
    spk = _check_speaker(spk, params)
    pred, _ = _teacher_forced(params, text, normalize_db(target.frames), spk)
    return MelSpectrogram(denormalize_db(pred), target.params)


def synth_loss(pred, target) -> float:
    a = pred.frames if isinstance(pred, MelSpectrogram) else np.asarray(pred)
    b = target.frames if isinstance(target, MelSpectrogram) else np.asarray(target)
    if a.shape != b.shape:
        raise SynthesizerError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def synth_loss_and_grads(params: dict, pair: MelTargetPair):
    """Teacher-forced MSE in normalised mel units and its parameter gradients."""
    target = normalize_db(pair.mel.frames)
    spk = _check_speaker(pair.speaker, params)
    pred, (tcache, lcache, hs) = _teacher_forced(params, pair.text, target, spk)
    diff = pred - target
    loss = float(np.mean(diff**2))
    dpred = 2.0 * diff / diff.size
    grads = {"out.W": dpred.T @ hs, "out.b": dpred.sum(axis=0)}
    dhs = dpred @ params["out.W"]
    dx, dW, db = nn.lstm_backward(dhs[None], lcache)
    grads["dec0.W"], grads["dec0.b"] = dW, db
    P = params["prenet2.W"].shape[0]
    dsummary = dx[0, :, N_MELS : N_MELS + P].sum(axis=0)
    _text_summary_backward(params, dsummary, tcache, grads)
    return loss, grads


def infer_mel(params: dict, text: TextSequence, spk, max_frames: int = 400, params_frame: FrameParams = SYNTH_FRAME_PARAMS) -> MelSpectrogram:
    """Free-running decode, feeding each prediction back in, for ``max_frames`` frames."""
    if max_frames < 1:
        raise SynthesizerError("max_frames must be >= 1")
    spk = _check_speaker(spk, params)
    summary, _ = _text_summary(params, text.ids)
    H = params["dec0.W"].shape[0] // 4
    h, c = np.zeros(H), np.zeros(H)
    prev = np.zeros(N_MELS)
    out = np.empty((max_frames, N_MELS))
    for t in range(max_frames):
        h, c = nn.lstm_step(np.concatenate([prev, summary, spk]), h, c, params["dec0.W"], params["dec0.b"])
        prev = h @ params["out.W"].T + params["out.b"]
        out[t] = prev
    return MelSpectrogram(denormalize_db(out), params_frame)


def train_synthesizer(
    pairs,
    *,
    steps=2000,
    embedding_size=32,
    prenet_size=32,
    hidden=128,
    lr=0.1,
    momentum=0.9,
    clip_norm=1.0,
    seed=0,
    log_every=10,
):
    """SGD on teacher-forced loss over ``MelTargetPair``s, one pair per step.

    Speaker embeddings are taken as given; the encoder that produced them is
    not touched.  Returns ``(params, loss_log)`` with rows ``(step, loss)``.
    """
    pairs = list(pairs)
    if not pairs:
        raise SynthesizerError("no training pairs")
    rng = np.random.default_rng(seed)
    spk_size = np.asarray(pairs[0].speaker).size
    params = init_synth_params(rng, embedding_size, prenet_size, spk_size, hidden)
    opt = nn.SGD(lr, clip_norm, momentum)
    loss_log = []
    for step in range(steps):
        pair = pairs[rng.integers(len(pairs))] if len(pairs) > 1 else pairs[0]
        loss, grads = synth_loss_and_grads(params, pair)
        opt.step(params, grads)
        if step % log_every == 0 or step == steps - 1:
            loss_log.append((step, loss))
            log.debug("synth step %d loss %.5f", step, loss)
    return params, loss_log
