# Spectral gating on a 1 kHz tone buried in white noise (-10 dB SNR).

import numpy as np

from voiceclone.audio import FrameParams, Waveform
from voiceclone.denoise import GateParams, denoise

sr = 16000
rng = np.random.default_rng(0)
clean = 0.08 * np.sin(2 * np.pi * 1000 * np.arange(sr) / sr)
sigma = np.sqrt(np.mean(clean ** 2) * 10)
noisy = Waveform(clean + sigma * rng.standard_normal(sr))
noise_only = Waveform(sigma * rng.standard_normal(sr))


def snr(est):
    a = est @ clean / (clean @ clean)  # least-squares gain
    return 10 * np.log10(np.sum((a * clean) ** 2) / np.sum((est - a * clean) ** 2))


p = FrameParams(400, 100, 512)
print("input SNR  %.2f dB" % snr(noisy.samples))
for k in (1.0, 1.5, 2.0):
    out = denoise(noisy, noise_only, p, GateParams(threshold_k=k))
    print("k=%.1f  output SNR %.2f dB" % (k, snr(out.samples)))
