# Train a small GE2E speaker encoder on the synthetic corpus, then check
# verification EER on held-out utterances and a 2-D projection.

import tempfile
from pathlib import Path

import numpy as np

from voiceclone import encoder as enc
from voiceclone import pipeline as pl
from voiceclone.config import Config
from voiceclone.corpus import build_toy_corpus, read_manifest

root = Path(tempfile.mkdtemp())
build_toy_corpus(root, n_speakers=8, utterances_per_speaker=10, seed=0)
cfg = Config(encoder_steps=300)

model, log = pl.train_encoder_from_manifest(root / "train.csv", cfg)
for step, loss, w, b in log[::10]:
    print("step %4d  loss %7.3f  w %.3f  b %.3f" % (step, loss, w, b))

# enroll each speaker as the mean of its training d-vectors
def embed(e):
    return pl.embed_wave(model, pl.load_wav(e.wav_path), cfg)

enroll = {}
for e in read_manifest(root / "train.csv"):
    enroll.setdefault(e.speaker_id, []).append(embed(e))
enroll = {k: enc.l2_normalize(np.mean(v, axis=0)) for k, v in enroll.items()}

same, diff, vecs, labels = [], [], [], []
for e in read_manifest(root / "test.csv"):
    v = embed(e)
    vecs.append(v)
    labels.append(e.speaker_id)
    for sid, c in enroll.items():
        (same if sid == e.speaker_id else diff).append(v @ c)

print("held-out EER:", enc.compute_eer(same, diff))
print("intra - inter cosine: %.3f" % enc.speaker_separation(np.array(vecs), labels))

xy = enc.project_2d(np.array(vecs))
for (x, y), sid in zip(xy, labels):
    print("%s  % .3f  % .3f" % (sid, x, y))
