# Front end: framing, STFT round trip, mel filterbank and MFCC on a toy signal.

import numpy as np
from scipy.fft import idct

from voiceclone.audio import (FrameParams, Waveform, build_mel_filterbank, istft,
                              mel_spectrogram, mfcc, stft)

sr = 16000
t = np.arange(sr) / sr
x = Waveform(0.3 * np.sin(2 * np.pi * 220 * t) + 0.1 * np.sin(2 * np.pi * 1800 * t))

# 25 ms windows, 10 ms hop
p = FrameParams(400, 160, 512, "hann")
S = stft(x, p)
print("stft frames x bins:", S.frames.shape)

# hop = window/4 gives a clean overlap-add inverse
p4 = FrameParams(400, 100, 512)
y = istft(stft(x, p4), len(x)).samples
mid = slice(400, len(x) - 400)
print("round trip rel error: %.2e" % (np.linalg.norm(y[mid] - x.samples[mid]) / np.linalg.norm(x.samples[mid])))

fb = build_mel_filterbank(512, sr, 40, 0.0, sr / 2)
M = mel_spectrogram(x, p, fb)
print("loudest mel band:", int(np.argmax(M.frames.mean(axis=0))))

# doubling the amplitude adds 20*log10(2) dB everywhere above the floor
M2 = mel_spectrogram(Waveform(2 * x.samples), p, fb)
print("level law: %.4f dB" % np.median(M2.frames - M.frames))

C = mfcc(M, 13)
print("mfcc shape:", C.frames.shape)
full = mfcc(M, 40).frames
print("inverse dct error: %.1e" % np.abs(idct(full, norm="ortho", axis=1) - M.frames).max())
