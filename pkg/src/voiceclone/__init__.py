"""Few-shot voice cloning on numpy: GE2E speaker encoder, mel synthesizer,
GRU sample vocoder, spectral-gating noise reduction and evaluation metrics."""

from .audio import FrameParams, MelSpectrogram, Waveform, load_wav, write_wav
from .config import Config, parse_config
from .pipeline import SpeakerLibrary, run_clone_pipeline

__all__ = [
    "Config",
    "FrameParams",
    "MelSpectrogram",
    "SpeakerLibrary",
    "Waveform",
    "load_wav",
    "parse_config",
    "run_clone_pipeline",
    "write_wav",
]
__version__ = "0.1.0"
