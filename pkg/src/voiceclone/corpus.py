"""Deterministic synthetic-speaker corpus for desk-scale training runs.

Each "speaker" is a harmonic source with its own fundamental frequency and
two formant-like resonances.  That is enough structure for the encoder to
cluster and for the synthesizer/vocoder to overfit, without any download.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import DEFAULT_SAMPLE_RATE, Waveform, load_wav, write_wav

F0_LOW, F0_HIGH = 90.0, 300.0
MIN_F0_RATIO = 1.15
MANIFEST_HEADER = ["wav_path", "transcript", "speaker_id"]

SENTENCES = [
    "the quick brown fox jumps over the lazy dog",
    "she sells sea shells by the sea shore",
    "a stitch in time saves nine",
    "please call stella and ask her to bring these things",
    "the rain in spain stays mainly in the plain",
    "we will meet again at the old stone bridge",
    "every morning the baker opens his shop early",
    "bright lights shine over the quiet harbour",
    "can you hear the music from the next room",
    "the children played football until it got dark",
    "my grandmother tells the best stories",
    "turn left at the second traffic light",
    "voices carry far across the still lake",
    "he forgot his umbrella on the train again",
    "a cup of tea makes everything better",
    "the library closes at eight on fridays",
    "birds gather on the wire before the storm",
    "our team finished the project ahead of time",
    "the river winds slowly through the valley",
    "thank you for listening to my voice",
]


@dataclass(frozen=True)
class SpeakerSpec:
    speaker_id: str
    base_f0_hz: float
    formants_hz: tuple
    amplitude: float = 0.5

    @property
    def gender(self) -> str:
        return "M" if self.base_f0_hz < 165.0 else "F"


def make_speaker_specs(n_speakers: int, seed: int = 0, sample_rate_hz: int = DEFAULT_SAMPLE_RATE):
    """Speaker specs with fundamentals in [90, 300] Hz, pairwise >= 15% apart."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC0]))
    span = np.log(F0_HIGH / F0_LOW)
    min_gap = np.log(MIN_F0_RATIO)
    slack = span - (n_speakers - 1) * min_gap
    if slack < 0:
        raise ValueError(f"cannot fit {n_speakers} speakers at 15% f0 separation in [90, 300] Hz")
    # distribute the slack over the n+1 gaps (two margins plus n-1 spacings)
    parts = rng.dirichlet(np.ones(n_speakers + 1)) * slack
    log_f0 = np.log(F0_LOW) + parts[0] + np.arange(n_speakers) * min_gap + np.concatenate([[0.0], np.cumsum(parts[1:n_speakers])])
    f0s = np.exp(log_f0)
    order = rng.permutation(n_speakers)
    nyquist = sample_rate_hz / 2
    specs = []
    for idx, k in enumerate(order):
        f1 = rng.uniform(300.0, 900.0)
        f2 = rng.uniform(max(f1 + 400.0, 1000.0), min(2600.0, 0.8 * nyquist))
        specs.append(SpeakerSpec(f"spk{idx:02d}", float(f0s[k]), (float(f1), float(f2))))
    return specs


def _resonance_gain(freqs, formants):
    f1, f2 = formants
    return 1.0 + 8.0 * np.exp(-0.5 * ((freqs - f1) / 90.0) ** 2) + 5.0 * np.exp(-0.5 * ((freqs - f2) / 140.0) ** 2)


def synth_speaker_utterance(spec: SpeakerSpec, duration_s: float, seed: int, sample_rate_hz: int = DEFAULT_SAMPLE_RATE) -> Waveform:
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    rng = np.random.default_rng(np.random.SeedSequence([seed, int(round(spec.base_f0_hz * 1000))]))
    n = int(round(duration_s * sample_rate_hz))
    t = np.arange(n) / sample_rate_hz
    f0 = spec.base_f0_hz * (1.0 + rng.uniform(-0.02, 0.02))
    n_harm = int(0.45 * sample_rate_hz // f0)
    k = np.arange(1, n_harm + 1)
    amps = _resonance_gain(k * f0, spec.formants_hz) / np.sqrt(k)
    phases = rng.uniform(0, 2 * np.pi, n_harm)
    x = np.zeros(n)
    for kk, a, ph in zip(k, amps, phases):
        x += a * np.sin(2 * np.pi * kk * f0 * t + ph)
    rate = rng.uniform(3.0, 5.0)
    env = 0.6 + 0.4 * np.sin(np.pi * rate * t + rng.uniform(0, np.pi)) ** 2
    fade = np.minimum(1.0, np.minimum(t, t[::-1]) / 0.02)
    x *= env * fade
    x /= np.max(np.abs(x)) + 1e-12
    x += 1e-3 * rng.standard_normal(n)
    x *= spec.amplitude / np.max(np.abs(x))
    return Waveform(x, sample_rate_hz)


def utterance_duration(transcript: str) -> float:
    return float(np.clip(0.25 * len(transcript.split()), 1.0, 2.0))


@dataclass(frozen=True)
class CorpusEntry:
    wav_path: Path
    transcript: str
    speaker_id: str


def build_toy_corpus(out_dir, n_speakers=8, utterances_per_speaker=10, seed=0, n_test=2, sample_rate_hz=DEFAULT_SAMPLE_RATE):
    """Write wavs plus manifest/train/test/speakers CSVs under ``out_dir``.

    Returns the path of the full manifest.
    """
    out = Path(out_dir)
    try:
        (out / "wavs").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot write corpus to {out}: {exc}") from exc
    specs = make_speaker_specs(n_speakers, seed, sample_rate_hz)
    rows, train, test = [], [], []
    for j, spec in enumerate(specs):
        for i in range(utterances_per_speaker):
            text = SENTENCES[(3 * j + i) % len(SENTENCES)]
            w = synth_speaker_utterance(spec, utterance_duration(text), seed * 100003 + j * 1009 + i, sample_rate_hz)
            rel = f"wavs/{spec.speaker_id}_{i:02d}.wav"
            write_wav(w, out / rel)
            row = [rel, text, spec.speaker_id]
            rows.append(row)
            (test if i >= utterances_per_speaker - n_test else train).append(row)
    for name, body in (("manifest.csv", rows), ("train.csv", train), ("test.csv", test)):
        _write_csv(out / name, MANIFEST_HEADER, body)
    _write_csv(
        out / "speakers.csv",
        ["speaker_id", "base_f0_hz", "formant1_hz", "formant2_hz", "gender"],
        [[s.speaker_id, f"{s.base_f0_hz:.3f}", f"{s.formants_hz[0]:.3f}", f"{s.formants_hz[1]:.3f}", s.gender] for s in specs],
    )
    return out / "manifest.csv"


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def read_manifest(path) -> list[CorpusEntry]:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != MANIFEST_HEADER:
            raise ValueError(f"{path}: manifest header must be {','.join(MANIFEST_HEADER)}")
        return [
            CorpusEntry(path.parent / r["wav_path"], r["transcript"], r["speaker_id"]) for r in reader
        ]


def load_by_speaker(entries) -> dict:
    """Group manifest entries into ``{speaker_id: [Waveform, ...]}``."""
    out: dict = {}
    for e in entries:
        out.setdefault(e.speaker_id, []).append(load_wav(e.wav_path))
    return out
