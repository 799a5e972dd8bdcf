# Teacher-forced overfit of the GRU vocoder on a short sine, free-running
# generation, and the Griffin-Lim baseline.

import numpy as np

from voiceclone import vocoder as voc
from voiceclone.audio import FrameParams, Waveform, stft
from voiceclone.metrics import median_f0, track_pitch

sr = 16000
t = np.arange(sr // 2) / sr
clip = Waveform(0.5 * np.sin(2 * np.pi * 200 * t))
mel = voc.vocoder_mel(clip)

params, log = voc.train_vocoder([(mel, clip)], steps=120, log_every=20)
for step, loss in log:
    print("step %4d  mse %.2e" % (step, loss))

track = voc.upsample_conditioning(mel, params, 160)
out = voc.generate(params, track)
print("generated %d samples, peak %.3f, rms %.3f" % (len(out), np.abs(out.samples).max(),
                                                     np.sqrt(np.mean(out.samples ** 2))))

p = FrameParams(400, 100, 512)
gl, errs = voc.griffin_lim(stft(clip, p).magnitude, p, iters=60, return_errors=True)
print("griffin-lim consistency error %.2f -> %.2f" % (errs[0], errs[-1]))
print("griffin-lim pitch %.2f Hz" % median_f0(track_pitch(gl)))
