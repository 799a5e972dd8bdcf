import numpy as np
import pytest

from voiceclone.audio import Waveform
from voiceclone.config import Config
from voiceclone.corpus import build_toy_corpus

SR = 16000

# lines collected by tests/test_acceptance.py, echoed after the run
CRITERIA: dict = {}


def sine(freq, seconds=1.0, amp=0.5, sr=SR, phase=0.0):
    t = np.arange(int(round(seconds * sr))) / sr
    return Waveform(amp * np.sin(2 * np.pi * freq * t + phase), sr)


def rel_err(a, b, floor=1e-6):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[n])


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    """Default 8 speakers x 10 utterances; returns the corpus directory."""
    root = tmp_path_factory.mktemp("corpus")
    build_toy_corpus(root, 8, 10, seed=0, n_test=2)
    return root


@pytest.fixture(scope="session")
def small_cfg():
    """Tiny model sizes for plumbing tests; quality is irrelevant there."""
    return Config(
        encoder_hidden=16,
        encoder_layers=1,
        embedding_size=8,
        encoder_steps=3,
        ge2e_speakers=2,
        ge2e_utterances=2,
        synth_hidden=16,
        synth_embedding=8,
        prenet_size=8,
        synth_steps=3,
        vocoder_cond=8,
        vocoder_hidden=16,
        vocoder_steps=2,
        vocoder_crop_frames=4,
        max_frames=20,
    )


@pytest.fixture(scope="session")
def small_models(toy_corpus, small_cfg, tmp_path_factory):
    """Checkpoints from a few training steps of each model plus a speaker library."""
    from voiceclone import pipeline as pl

    out = tmp_path_factory.mktemp("models")
    train = toy_corpus / "train.csv"
    model, _ = pl.train_encoder_from_manifest(train, small_cfg)
    pl.save_encoder(out / "enc.ckpt", model)
    params, _ = pl.train_synthesizer_from_manifest(train, out / "enc.ckpt", small_cfg)
    pl.save_params(out / "syn.ckpt", "synthesizer", params)
    vparams, _ = pl.train_vocoder_from_manifest(train, small_cfg)
    pl.save_params(out / "voc.ckpt", "vocoder", vparams)
    pl.build_library(train, model, out / "lib", small_cfg)
    return {
        "encoder": out / "enc.ckpt",
        "synth": out / "syn.ckpt",
        "vocoder": out / "voc.ckpt",
        "library": out / "lib",
        "dir": out,
    }
