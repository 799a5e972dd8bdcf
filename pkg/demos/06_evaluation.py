# Pitch tracking, GPE, spectral distortion, MOS and the score report.

import tempfile
from pathlib import Path

import numpy as np

from voiceclone import metrics as m
from voiceclone.audio import Waveform, write_wav

sr = 16000
t = np.arange(sr // 2) / sr
tone = lambda f, a=0.5: Waveform(a * np.sin(2 * np.pi * f * t))  # noqa: E731

for f0 in (100, 200, 300, 400):
    print("%d Hz tracked as %.2f Hz" % (f0, m.median_f0(m.track_pitch(tone(f0)))))

ref = m.track_pitch(tone(200))
print("gpe 200 vs 260:", m.gpe(ref, m.track_pitch(tone(260))))
print("gpe 200 vs 220:", m.gpe(ref, m.track_pitch(tone(220))))

x = Waveform(0.01 * np.random.default_rng(0).standard_normal(sr))
print("sd x vs 2x:  %.3f dB" % m.spectral_distortion(x, Waveform(2 * x.samples)))
print("sd x vs 10x: %.3f dB" % m.spectral_distortion(x, Waveform(10 * x.samples)))

votes = [m.RatingRecord("very_similar")] * 11
print("mos of 11 very-similar votes:", m.aggregate_mos(votes))

d = Path(tempfile.mkdtemp())
write_wav(tone(180, 0.4), d / "ref.wav")
write_wav(tone(185, 0.3), d / "test.wav")
rep = m.score_report([m.ScoreRequest("Indian", "toy", "spk00", "M", d / "ref.wav", d / "test.wav", tuple(votes))])
rep.rows.append(m.ReportRow("Western", "VCTK", "p230", "F", 4.64, 1.95, 3.38))  # formatting fixture
print(rep.to_csv())
