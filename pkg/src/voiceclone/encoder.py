"""LSTM speaker encoder trained with the generalized end-to-end (GE2E) loss."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, softmax

from . import nn
from .audio import (
    FeatureSequence,
    FrameParams,
    Waveform,
    build_mel_filterbank,
    mel_spectrogram,
    mfcc,
    normalize_db,
)

log = logging.getLogger(__name__)

W_FLOOR = 1e-4


class EncoderError(ValueError):
    pass


class DegenerateEmbeddingError(EncoderError):
    pass


@dataclass
class SimilarityParams:
    scale_w: float = 10.0
    bias_b: float = -5.0

    def __post_init__(self):
        if not self.scale_w > 0:
            raise EncoderError("similarity scale must be positive")


@dataclass(frozen=True)
class Centroids:
    full: np.ndarray  # (N, E)
    exclusive: np.ndarray  # (N*M, E)


@dataclass(frozen=True)
class SimilarityMatrix:
    entries: np.ndarray  # (N*M, N)
    n_utterances: int
    scale_w: float
    bias_b: float


@dataclass
class GE2EBatch:
    features: np.ndarray  # (N*M, F, D), speaker-major
    n_speakers: int
    n_utterances: int

    def __post_init__(self):
        if self.n_speakers < 2 or self.n_utterances < 2:
            raise EncoderError("a GE2E batch needs N >= 2 and M >= 2")
        if self.features.shape[0] != self.n_speakers * self.n_utterances:
            raise EncoderError("batch must hold exactly N*M sequences")


@dataclass
class EncoderModel:
    params: dict
    sim: SimilarityParams = field(default_factory=SimilarityParams)
    feature_mode: str = "log_mel"

    @property
    def n_layers(self) -> int:
        return sum(1 for k in self.params if k.startswith("lstm") and k.endswith(".W"))

    @property
    def input_size(self) -> int:
        H = self.params["lstm0.W"].shape[0] // 4
        return self.params["lstm0.W"].shape[1] - H

    @property
    def embedding_size(self) -> int:
        return self.params["proj.W"].shape[0]


def init_encoder_params(rng, input_size=40, hidden=64, n_layers=3, embedding_size=32) -> dict:
    params = {}
    for layer in range(n_layers):
        nn.init_lstm(rng, params, f"lstm{layer}", input_size if layer == 0 else hidden, hidden)
    params["proj.W"] = nn.uniform_init(rng, (embedding_size, hidden), hidden)
    params["proj.b"] = np.zeros(embedding_size)
    return params


def _n_layers(params) -> int:
    return sum(1 for k in params if k.startswith("lstm") and k.endswith(".W"))


def extract_features(w: Waveform, mode="log_mel", params: FrameParams | None = None, n_mels=40) -> FeatureSequence:
    """Encoder input features: normalised log-mel frames, or their MFCCs."""
    params = params or FrameParams()
    fb = build_mel_filterbank(params.fft_size, w.sample_rate_hz, n_mels, 0.0, w.sample_rate_hz / 2)
    mel = mel_spectrogram(w, params, fb)
    scaled = normalize_db(mel.frames)
    if mode == "mfcc":
        return mfcc(type(mel)(scaled, params), 13)
    return FeatureSequence(scaled, "log_mel")


def _as_array(x):
    return x.frames if isinstance(x, FeatureSequence) else np.asarray(x, dtype=np.float64)


# ---------------------------------------------------------------- inference


def _forward_batch(params, X):
    """X (B, T, D) -> projection outputs (B, E) and caches."""
    hs, caches = nn.stacked_lstm_forward(params, "lstm", _n_layers(params), X)
    h_last = hs[:, -1]
    u = h_last @ params["proj.W"].T + params["proj.b"]
    return u, (hs.shape, h_last, caches)


def lstm_forward(params: dict, x) -> np.ndarray:
    """Final hidden state of the top LSTM layer for one feature sequence."""
    frames = _as_array(x)
    if frames.shape[0] < 1:
        raise EncoderError("need at least one frame")
    H = params["lstm0.W"].shape[0] // 4
    expected = params["lstm0.W"].shape[1] - H
    if frames.shape[1] != expected:
        raise EncoderError(f"feature width {frames.shape[1]} != encoder input size {expected}")
    hs, _ = nn.stacked_lstm_forward(params, "lstm", _n_layers(params), frames[None])
    return hs[0, -1]


def l2_normalize(u, axis=-1):
    norm = np.linalg.norm(u, axis=axis, keepdims=True)
    if np.any(norm < 1e-12):
        raise DegenerateEmbeddingError("degenerate embedding (zero-norm projection)")
    return u / norm


def embed_frames(params: dict, x) -> np.ndarray:
    h = lstm_forward(params, x)
    return l2_normalize(h @ params["proj.W"].T + params["proj.b"])


def _tile_to(frames, n):
    reps = -(-n // frames.shape[0])
    return np.tile(frames, (reps, 1))[:n]


def embed_utterance(params: dict, features, window_frames=80, stride_frames=40) -> np.ndarray:
    """Average of windowed d-vectors, re-normalised to unit length."""
    frames = _as_array(features)
    if frames.shape[0] == 0:
        raise EncoderError("empty feature sequence")
    if frames.shape[0] < window_frames:
        frames = _tile_to(frames, window_frames)
    starts = range(0, frames.shape[0] - window_frames + 1, stride_frames)
    windows = np.stack([frames[s : s + window_frames] for s in starts])
    u, _ = _forward_batch(params, windows)
    return l2_normalize(l2_normalize(u).mean(axis=0))


def cosine_verify(a, b, threshold=0.75):
    sim = float(np.dot(a, b))
    return sim, sim >= threshold


# ---------------------------------------------------------------- GE2E


def centroids(embeddings, n_speakers: int, n_utterances: int) -> Centroids:
    e = np.asarray(embeddings, dtype=np.float64)
    N, M = n_speakers, n_utterances
    if e.shape[0] != N * M:
        raise EncoderError("embedding count must equal N*M")
    if M < 2:
        raise EncoderError("exclusive centroids need M >= 2")
    sums = e.reshape(N, M, -1).sum(axis=1)
    exclusive = (np.repeat(sums, M, axis=0) - e) / (M - 1)
    return Centroids(sums / M, exclusive)


def _cosines(e, cents: Centroids, n_utterances: int):
    """Cosine of every embedding to every centroid, own centroid exclusive."""
    full, excl = cents.full, cents.exclusive
    ne = np.linalg.norm(e, axis=1)
    nf = np.linalg.norm(full, axis=1)
    nx = np.linalg.norm(excl, axis=1)
    if np.any(nf < 1e-12) or np.any(nx < 1e-12):
        raise EncoderError("zero-norm centroid")
    cos = (e @ full.T) / np.outer(ne, nf)
    own = np.arange(e.shape[0]) // n_utterances
    cos_x = np.sum(e * excl, axis=1) / (ne * nx)
    cos[np.arange(e.shape[0]), own] = cos_x
    return cos, own, (ne, nf, nx, cos_x)


def similarity_matrix(embeddings, cents: Centroids, sp: SimilarityParams) -> SimilarityMatrix:
    e = np.asarray(embeddings, dtype=np.float64)
    M = e.shape[0] // cents.full.shape[0]
    cos, _, _ = _cosines(e, cents, M)
    return SimilarityMatrix(sp.scale_w * cos + sp.bias_b, M, sp.scale_w, sp.bias_b)


def ge2e_loss(S: SimilarityMatrix) -> float:
    """Softmax GE2E loss summed over every utterance in the batch."""
    s = S.entries
    own = np.arange(s.shape[0]) // S.n_utterances
    return float(np.sum(logsumexp(s, axis=1) - s[np.arange(s.shape[0]), own]))


def _ge2e_embedding_grads(u, N, M, sp: SimilarityParams):
    """Loss and gradients w.r.t. raw projection outputs u and (w, b)."""
    nu = np.linalg.norm(u, axis=1)
    e = u / nu[:, None]
    cents = centroids(e, N, M)
    cos, own, (ne, nf, nx, cos_x) = _cosines(e, cents, M)
    S = sp.scale_w * cos + sp.bias_b
    rows = np.arange(N * M)
    loss = float(np.sum(logsumexp(S, axis=1) - S[rows, own]))

    dS = softmax(S, axis=1)
    dS[rows, own] -= 1.0
    dw = float(np.sum(dS * cos))
    db = float(np.sum(dS))
    dcos = sp.scale_w * dS

    full, excl = cents.full, cents.exclusive
    dcos_f = dcos.copy()
    dcos_f[rows, own] = 0.0
    cos_f = cos.copy()
    cos_f[rows, own] = 0.0
    dcos_x = dcos[rows, own]

    # d cos(a, c) / da = c / (|a||c|) - cos * a / |a|^2, symmetric in c
    de = (dcos_f @ (full / nf[:, None])) / ne[:, None]
    de -= np.sum(dcos_f * cos_f, axis=1)[:, None] * e / ne[:, None] ** 2
    dfull = (dcos_f.T @ (e / ne[:, None])) / nf[:, None]
    dfull -= np.sum(dcos_f * cos_f, axis=0)[:, None] * full / nf[:, None] ** 2
    de += dcos_x[:, None] * (excl / (ne * nx)[:, None] - cos_x[:, None] * e / ne[:, None] ** 2)
    dexcl = dcos_x[:, None] * (e / (ne * nx)[:, None] - cos_x[:, None] * excl / nx[:, None] ** 2)

    de += np.repeat(dfull / M, M, axis=0)
    dexcl_sum = dexcl.reshape(N, M, -1).sum(axis=1) / (M - 1)
    de += np.repeat(dexcl_sum, M, axis=0) - dexcl / (M - 1)

    du = (de - np.sum(de * e, axis=1)[:, None] * e) / nu[:, None]
    return loss, du, dw, db


def ge2e_gradients(batch: GE2EBatch, params: dict, sp: SimilarityParams):
    """GE2E loss of a batch and its gradients.

    Returns ``(loss, grads, dw, db)`` where ``grads`` mirrors ``params`` and
    dw, db are the derivatives w.r.t. the similarity scale and bias.
    """
    u, (hs_shape, h_last, caches) = _forward_batch(params, batch.features)
    if np.any(np.linalg.norm(u, axis=1) < 1e-12):
        raise DegenerateEmbeddingError("degenerate embedding (zero-norm projection)")
    loss, du, dw, db = _ge2e_embedding_grads(u, batch.n_speakers, batch.n_utterances, sp)
    grads = {"proj.W": du.T @ h_last, "proj.b": du.sum(axis=0)}
    dhs = np.zeros(hs_shape)
    dhs[:, -1] = du @ params["proj.W"]
    nn.stacked_lstm_backward(grads, "lstm", dhs, caches)
    return loss, grads, dw, db


def ge2e_batch_loss(batch: GE2EBatch, params: dict, sp: SimilarityParams) -> float:
    u, _ = _forward_batch(params, batch.features)
    e = l2_normalize(u)
    cents = centroids(e, batch.n_speakers, batch.n_utterances)
    return ge2e_loss(similarity_matrix(e, cents, sp))


# ---------------------------------------------------------------- training


def sample_batch(rng, utterances: dict, n_speakers: int, n_utterances: int, frames: int) -> GE2EBatch:
    """Draw N speakers, M utterances each, and a random F-frame crop of each."""
    speakers = sorted(utterances)
    chosen = rng.choice(len(speakers), size=n_speakers, replace=False)
    out = []
    for s in chosen:
        utts = utterances[speakers[s]]
        picks = rng.choice(len(utts), size=n_utterances, replace=len(utts) < n_utterances)
        for p in picks:
            x = _as_array(utts[p])
            if x.shape[0] < frames:
                x = _tile_to(x, frames)
            start = rng.integers(0, x.shape[0] - frames + 1)
            out.append(x[start : start + frames])
    return GE2EBatch(np.stack(out), n_speakers, n_utterances)


def train_encoder(
    utterances: dict,
    *,
    steps=2000,
    n_speakers=4,
    n_utterances=5,
    frames=80,
    hidden=64,
    n_layers=3,
    embedding_size=32,
    lr=0.01,
    momentum=0.0,
    clip_norm=3.0,
    w_init=10.0,
    b_init=-5.0,
    feature_mode="log_mel",
    seed=0,
    log_every=10,
):
    """Train a speaker encoder on ``{speaker_id: [FeatureSequence, ...]}``.

    Returns ``(model, loss_log)`` with loss_log rows ``(step, loss, w, b)``.
    """
    eligible = {k: v for k, v in utterances.items() if len(v) >= n_utterances}
    if len(eligible) < n_speakers:
        raise EncoderError(
            f"corpus too small: need {n_speakers} speakers with >= {n_utterances} utterances"
        )
    rng = np.random.default_rng(seed)
    input_size = _as_array(next(iter(eligible.values()))[0]).shape[1]
    params = init_encoder_params(rng, input_size, hidden, n_layers, embedding_size)
    sp = SimilarityParams(w_init, b_init)
    params["sim.w"] = np.array(sp.scale_w)
    params["sim.b"] = np.array(sp.bias_b)
    opt = nn.SGD(lr, clip_norm, momentum)
    loss_log = []
    for step in range(steps):
        batch = sample_batch(rng, eligible, n_speakers, n_utterances, frames)
        sp = SimilarityParams(float(params["sim.w"]), float(params["sim.b"]))
        loss, grads, dw, db = ge2e_gradients(batch, params, sp)
        grads["sim.w"] = np.array(dw)
        grads["sim.b"] = np.array(db)
        opt.step(params, grads)
        params["sim.w"] = np.maximum(params["sim.w"], W_FLOOR)
        if step % log_every == 0 or step == steps - 1:
            loss_log.append((step, loss, float(params["sim.w"]), float(params["sim.b"])))
            log.debug("encoder step %d loss %.4f", step, loss)
    sim = SimilarityParams(float(params.pop("sim.w")), float(params.pop("sim.b")))
    return EncoderModel(params, sim, feature_mode), loss_log


# ---------------------------------------------------------------- evaluation


def compute_eer(same_scores, diff_scores) -> float:
    """Equal error rate from a threshold sweep over all observed scores.

    A trial is accepted when its score is >= the threshold.  The crossing of
    the false-accept and false-reject curves is linearly interpolated.
    """
    same = np.asarray(same_scores, dtype=np.float64)
    diff = np.asarray(diff_scores, dtype=np.float64)
    if same.size == 0 or diff.size == 0:
        raise EncoderError("score lists must be nonempty")
    thresholds = np.concatenate([np.unique(np.concatenate([same, diff])), [np.inf]])
    far = np.array([np.mean(diff >= t) for t in thresholds])
    frr = np.array([np.mean(same < t) for t in thresholds])
    gap = far - frr  # non-increasing in the threshold
    k = int(np.argmax(gap <= 0))
    if gap[k] == 0 or k == 0:
        return float((far[k] + frr[k]) / 2)
    lam = gap[k - 1] / (gap[k - 1] - gap[k])
    return float(far[k - 1] + lam * (far[k] - far[k - 1]))


def project_2d(embeddings) -> np.ndarray:
    """Project onto the top two principal components (PCA)."""
    X = np.asarray(embeddings, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise EncoderError("need at least two embeddings to project")
    Xc = X - X.mean(axis=0)
    _, _, Vt = np.linalg.svd(Xc, full_matrices=False)
    comps = np.zeros((2, X.shape[1]))
    k = min(2, Vt.shape[0])
    comps[:k] = Vt[:k]
    # sign convention: largest-magnitude loading positive
    for c in comps:
        if c.any() and c[np.argmax(np.abs(c))] < 0:
            c *= -1
    return Xc @ comps.T


def speaker_separation(embeddings, labels):
    """Mean intra-speaker cosine minus mean inter-speaker cosine."""
    E = np.asarray(embeddings)
    labels = np.asarray(labels)
    sims = E @ E.T
    same = labels[:, None] == labels[None, :]
    off = ~np.eye(len(labels), dtype=bool)
    return float(sims[same & off].mean() - sims[~same].mean())
