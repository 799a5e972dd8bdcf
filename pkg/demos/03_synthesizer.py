# Overfit the text-to-mel synthesizer on one utterance and compare
# teacher-forced and free-running decodes.

import numpy as np

from voiceclone import synthesizer as syn
from voiceclone.corpus import make_speaker_specs, synth_speaker_utterance

spec = make_speaker_specs(4, seed=0)[1]
wave = synth_speaker_utterance(spec, 0.5, seed=3)
mel = syn.synth_mel(wave)
print("target mel:", mel.frames.shape)

rng = np.random.default_rng(0)
spk = rng.standard_normal(32)
spk /= np.linalg.norm(spk)  # stand-in d-vector
pair = syn.MelTargetPair(syn.encode_text("hello world"), mel, spk)

params, log = syn.train_synthesizer([pair], steps=300, log_every=50)
for step, loss in log:
    print("step %4d  mse %.5f" % (step, loss))

tf = syn.decode_mel_teacher_forced(params, pair.text, mel, spk)
free = syn.infer_mel(params, pair.text, spk, mel.n_frames)
print("teacher-forced dB rmse %.2f" % np.sqrt(np.mean((tf.frames - mel.frames) ** 2)))
print("free-running   dB rmse %.2f" % np.sqrt(np.mean((free.frames - mel.frames) ** 2)))

# a different speaker vector changes the output
other = np.roll(spk, 3)
d = syn.decode_mel_teacher_forced(params, pair.text, mel, other).frames - tf.frames
print("speaker sensitivity (max |diff| dB): %.3f" % np.abs(d).max())
