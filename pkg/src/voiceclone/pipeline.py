"""Model persistence, corpus-level training drivers, speaker library and cloning."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import encoder as enc
from . import synthesizer as syn
from . import vocoder as voc
from .audio import Waveform, load_wav, write_wav
from .checkpoint import load_checkpoint, save_checkpoint
from .config import Config
from .corpus import read_manifest
from .denoise import GateParams, denoise

log = logging.getLogger(__name__)

ACCENTS = ("western", "indian")
LIBRARY_INDEX = "index.csv"
LIBRARY_HEADER = ["speaker_id", "accent", "gender"]


class PipelineError(RuntimeError):
    pass


# ---------------------------------------------------------------- model files


def save_encoder(path, model: enc.EncoderModel) -> None:
    tensors = dict(model.params)
    tensors["sim.w"] = np.array(model.sim.scale_w)
    tensors["sim.b"] = np.array(model.sim.bias_b)
    tensors["meta.mfcc"] = np.array(1.0 if model.feature_mode == "mfcc" else 0.0)
    save_checkpoint(path, "encoder", tensors)


def load_encoder(path) -> enc.EncoderModel:
    _, t = load_checkpoint(path, "encoder")
    t = {k: v.astype(np.float64) for k, v in t.items()}
    sim = enc.SimilarityParams(float(t.pop("sim.w")), float(t.pop("sim.b")))
    mode = "mfcc" if float(t.pop("meta.mfcc", 0.0)) else "log_mel"
    return enc.EncoderModel(t, sim, mode)


def save_params(path, kind: str, params: dict) -> None:
    save_checkpoint(path, kind, params)


def load_params(path, kind: str) -> dict:
    _, t = load_checkpoint(path, kind)
    return {k: v.astype(np.float64) for k, v in t.items()}


def save_dvector(path, vec) -> None:
    save_checkpoint(path, "dvector", {"dvector": np.asarray(vec)})


def load_dvector(path) -> np.ndarray:
    _, t = load_checkpoint(path, "dvector")
    v = t["dvector"].astype(np.float64)
    # float32 storage: restore exact unit norm
    return v / np.linalg.norm(v)


def write_loss_log(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


# ---------------------------------------------------------------- features


def _check_rate(w: Waveform, cfg: Config, what="audio"):
    if w.sample_rate_hz != cfg.sample_rate_hz:
        raise PipelineError(f"{what} sample rate {w.sample_rate_hz} Hz != configured {cfg.sample_rate_hz} Hz")


def encoder_features(w: Waveform, cfg: Config, mode: str | None = None):
    _check_rate(w, cfg)
    return enc.extract_features(w, mode or cfg.encoder_feature_mode, cfg.frame_params(), cfg.encoder_mels)


def embed_wave(model: enc.EncoderModel, w: Waveform, cfg: Config) -> np.ndarray:
    feats = encoder_features(w, cfg, model.feature_mode)
    return enc.embed_utterance(model.params, feats, cfg.encoder_window_frames, cfg.encoder_stride_frames)


# ---------------------------------------------------------------- training drivers


def train_encoder_from_manifest(manifest, cfg: Config, seed: int | None = None):
    entries = read_manifest(manifest)
    utterances: dict = {}
    for e in entries:
        utterances.setdefault(e.speaker_id, []).append(encoder_features(load_wav(e.wav_path), cfg))
    return enc.train_encoder(
        utterances,
        steps=cfg.encoder_steps,
        n_speakers=cfg.ge2e_speakers,
        n_utterances=cfg.ge2e_utterances,
        frames=cfg.encoder_window_frames,
        hidden=cfg.encoder_hidden,
        n_layers=cfg.encoder_layers,
        embedding_size=cfg.embedding_size,
        lr=cfg.encoder_lr,
        momentum=cfg.encoder_momentum,
        clip_norm=cfg.encoder_clip_norm,
        w_init=cfg.w_init,
        b_init=cfg.b_init,
        feature_mode=cfg.encoder_feature_mode,
        seed=cfg.seed if seed is None else seed,
        log_every=cfg.log_every,
    )


def synth_pairs(entries, model: enc.EncoderModel, cfg: Config):
    """Text/mel/speaker triples; each utterance is its own speaker reference."""
    pairs = []
    for e in entries:
        w = load_wav(e.wav_path)
        pairs.append(
            syn.MelTargetPair(
                syn.encode_text(e.transcript), syn.synth_mel(w, cfg.synth_frame_params()), embed_wave(model, w, cfg)
            )
        )
    return pairs


def train_synthesizer_from_manifest(manifest, encoder_path, cfg: Config, seed: int | None = None):
    if not Path(encoder_path).exists():
        raise PipelineError(f"missing encoder checkpoint: {encoder_path}")
    model = load_encoder(encoder_path)
    pairs = synth_pairs(read_manifest(manifest), model, cfg)
    return syn.train_synthesizer(
        pairs,
        steps=cfg.synth_steps,
        embedding_size=cfg.synth_embedding,
        prenet_size=cfg.prenet_size,
        hidden=cfg.synth_hidden,
        lr=cfg.synth_lr,
        momentum=cfg.synth_momentum,
        clip_norm=cfg.synth_clip_norm,
        seed=cfg.seed if seed is None else seed,
        log_every=cfg.log_every,
    )


def train_vocoder_from_manifest(manifest, cfg: Config, seed: int | None = None):
    pairs = []
    for e in read_manifest(manifest):
        w = load_wav(e.wav_path)
        pairs.append((voc.vocoder_mel(w, cfg.synth_frame_params()), w))
    return voc.train_vocoder(
        pairs,
        steps=cfg.vocoder_steps,
        cond_size=cfg.vocoder_cond,
        hidden=cfg.vocoder_hidden,
        n_layers=cfg.vocoder_layers,
        hop=cfg.hop_samples,
        mode=cfg.upsample_mode,
        segment=cfg.vocoder_segment,
        crop_frames=cfg.vocoder_crop_frames,
        lr=cfg.vocoder_lr,
        momentum=cfg.vocoder_momentum,
        clip_norm=cfg.vocoder_clip_norm,
        seed=cfg.seed if seed is None else seed,
        log_every=cfg.log_every,
    )


# ---------------------------------------------------------------- speaker library


@dataclass(frozen=True)
class LibraryEntry:
    speaker_id: str
    accent: str
    gender: str


class SpeakerLibrary:
    """Directory of ``<speaker_id>.dvec`` files indexed by ``index.csv``."""

    def __init__(self, root):
        self.root = Path(root)
        self.entries: dict = {}
        index = self.root / LIBRARY_INDEX
        if index.exists():
            with open(index, newline="", encoding="utf-8") as fh:
                for r in csv.DictReader(fh):
                    self.entries[r["speaker_id"]] = LibraryEntry(r["speaker_id"], r["accent"], r["gender"])

    @property
    def ids(self):
        return sorted(self.entries)

    def get(self, speaker_id: str) -> np.ndarray:
        if speaker_id not in self.entries:
            raise PipelineError(
                f"unknown speaker id {speaker_id!r}; available: {', '.join(self.ids) or '(none)'}"
            )
        return load_dvector(self.root / f"{speaker_id}.dvec")

    def add(self, speaker_id: str, vec, accent: str, gender: str) -> None:
        if accent not in ACCENTS:
            raise PipelineError(f"accent must be one of {ACCENTS}")
        self.root.mkdir(parents=True, exist_ok=True)
        save_dvector(self.root / f"{speaker_id}.dvec", vec)
        self.entries[speaker_id] = LibraryEntry(speaker_id, accent, gender)
        self._write_index()

    def _write_index(self):
        with open(self.root / LIBRARY_INDEX, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LIBRARY_HEADER)
            for sid in self.ids:
                e = self.entries[sid]
                w.writerow([e.speaker_id, e.accent, e.gender])


def build_library(manifest, model: enc.EncoderModel, out_dir, cfg: Config) -> SpeakerLibrary:
    """Average utterance d-vectors per speaker; accents alternate by speaker order."""
    manifest = Path(manifest)
    genders = {}
    spk_file = manifest.parent / "speakers.csv"
    if spk_file.exists():
        with open(spk_file, newline="", encoding="utf-8") as fh:
            genders = {r["speaker_id"]: r["gender"] for r in csv.DictReader(fh)}
    by_speaker: dict = {}
    for e in read_manifest(manifest):
        by_speaker.setdefault(e.speaker_id, []).append(embed_wave(model, load_wav(e.wav_path), cfg))
    lib = SpeakerLibrary(out_dir)
    for k, sid in enumerate(sorted(by_speaker)):
        vec = enc.l2_normalize(np.mean(by_speaker[sid], axis=0))
        lib.add(sid, vec, ACCENTS[k % 2], genders.get(sid, "U"))
    return lib


# ---------------------------------------------------------------- cloning


def run_clone_pipeline(
    text: str,
    out_path,
    *,
    encoder_path,
    synth_path,
    vocoder_path,
    cfg: Config | None = None,
    reference=None,
    speaker_id: str | None = None,
    library=None,
    noise_clip=None,
) -> Waveform:
    """Clone a voice onto ``text`` and write a 16-bit mono wav.

    The voice comes either from a reference recording (``reference``) or
    from a stored library speaker (``speaker_id`` + ``library``).  Passing
    ``noise_clip`` enables noise reduction against that clip.
    """
    cfg = cfg or Config()
    for p in (encoder_path, synth_path, vocoder_path):
        if not Path(p).exists():
            raise PipelineError(f"missing checkpoint: {p}")
    if (reference is None) == (speaker_id is None):
        raise PipelineError("give exactly one voice source: a reference wav or a library speaker id")
    if reference is not None:
        try:
            ref = load_wav(reference)
        except (OSError, ValueError) as exc:
            raise PipelineError(f"unreadable reference: {exc}") from exc
        _check_rate(ref, cfg, "reference")
        spk = embed_wave(load_encoder(encoder_path), ref, cfg)
    else:
        if library is None:
            raise PipelineError("a library directory is required with a speaker id")
        spk = SpeakerLibrary(library).get(speaker_id)

    synth_params = load_params(synth_path, "synthesizer")
    voc_params = load_params(vocoder_path, "vocoder")
    mel = syn.infer_mel(synth_params, syn.encode_text(text), spk, cfg.max_frames, cfg.synth_frame_params())
    track = voc.upsample_conditioning(mel, voc_params, cfg.hop_samples, cfg.upsample_mode)
    wave_out = voc.generate(voc_params, track, 0.0, cfg.sample_rate_hz)
    if noise_clip is not None:
        noise = load_wav(noise_clip)
        _check_rate(noise, cfg, "noise clip")
        gate = GateParams(cfg.gate_k, cfg.mask_floor, cfg.gate_time_width, cfg.gate_freq_width)
        wave_out = denoise(wave_out, noise, cfg.denoise_frame_params(), gate)
    write_wav(wave_out, out_path)
    return wave_out
