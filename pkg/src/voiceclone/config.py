"""Flat ``key = value`` configuration files."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .audio import FrameParams


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    # front end
    sample_rate_hz: int = 16000
    window_length_samples: int = 400
    hop_samples: int = 160
    fft_size: int = 512
    synth_fft_size: int = 1024
    window_kind: str = "hann"
    encoder_mels: int = 40
    # encoder
    encoder_feature_mode: str = "log_mel"
    encoder_hidden: int = 64
    encoder_layers: int = 3
    embedding_size: int = 32
    ge2e_speakers: int = 4
    ge2e_utterances: int = 5
    encoder_window_frames: int = 80
    encoder_stride_frames: int = 40
    encoder_steps: int = 600
    encoder_lr: float = 0.01
    encoder_momentum: float = 0.0
    encoder_clip_norm: float = 3.0
    w_init: float = 10.0
    b_init: float = -5.0
    verify_threshold: float = 0.75
    # synthesizer
    synth_embedding: int = 32
    prenet_size: int = 32
    synth_hidden: int = 128
    synth_steps: int = 600
    synth_lr: float = 0.1
    synth_momentum: float = 0.9
    synth_clip_norm: float = 1.0
    max_frames: int = 400
    # vocoder
    vocoder_cond: int = 32
    vocoder_hidden: int = 128
    vocoder_layers: int = 1
    vocoder_steps: int = 300
    vocoder_lr: float = 0.1
    vocoder_momentum: float = 0.9
    vocoder_clip_norm: float = 1.0
    vocoder_segment: int = 320
    vocoder_crop_frames: int = 50
    upsample_mode: str = "repeat"
    # noise reduction
    gate_k: float = 1.5
    mask_floor: float = 0.1
    gate_time_width: int = 2
    gate_freq_width: int = 1
    denoise_hop_samples: int = 100
    # corpus
    corpus_speakers: int = 8
    corpus_utterances: int = 10
    corpus_test_utterances: int = 2
    seed: int = 0
    log_every: int = 10

    def frame_params(self) -> FrameParams:
        return FrameParams(self.window_length_samples, self.hop_samples, self.fft_size, self.window_kind)

    def synth_frame_params(self) -> FrameParams:
        return FrameParams(self.window_length_samples, self.hop_samples, self.synth_fft_size, self.window_kind)

    def denoise_frame_params(self) -> FrameParams:
        return FrameParams(self.window_length_samples, self.denoise_hop_samples, self.fft_size, self.window_kind)

    def replace(self, **changes) -> "Config":
        return dataclasses.replace(self, **changes)


_CHOICES = {
    "window_kind": ("hann", "rectangular"),
    "encoder_feature_mode": ("log_mel", "mfcc"),
    "upsample_mode": ("repeat", "linear"),
}


def _coerce(key, raw, typ):
    try:
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"type mismatch for {key}: expected {typ.__name__}, got {raw!r}") from None
    if key in _CHOICES and raw not in _CHOICES[key]:
        raise ConfigError(f"invalid value for {key}: {raw!r} (choose from {', '.join(_CHOICES[key])})")
    return raw


def parse_config_text(text: str) -> Config:
    types = {f.name: type(f.default) for f in fields(Config)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: malformed line (expected 'key = value')")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if not raw:
            raise ConfigError(f"line {lineno}: missing value for {key}")
        values[key] = _coerce(key, raw, types[key])
    return Config(**values)


def parse_config(path) -> Config:
    if path is None:
        return Config()
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def dump_config(cfg: Config) -> str:
    return "".join(f"{f.name} = {getattr(cfg, f.name)}\n" for f in fields(cfg))
