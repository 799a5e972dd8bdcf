# The whole pipeline through the command line: corpus, three models,
# a speaker library and two clones (reference voice and library voice).
# Step counts are small so this runs in a few minutes on one core.

import tempfile
from pathlib import Path

from voiceclone.cli import main

d = Path(tempfile.mkdtemp())
print("working in", d)


def run(*args):
    argv = [str(a) for a in args]
    print("$ voiceclone", " ".join(argv))
    assert main(argv) == 0


run("make-corpus", "--out", d / "corpus")
run("train-encoder", "--manifest", d / "corpus/train.csv", "--out", d / "enc.ckpt", "--log", d / "enc.csv", "--steps", 150)
run("train-synth", "--manifest", d / "corpus/train.csv", "--encoder", d / "enc.ckpt", "--out", d / "syn.ckpt", "--steps", 150)
run("train-vocoder", "--manifest", d / "corpus/train.csv", "--out", d / "voc.ckpt", "--steps", 60)
run("embed", "--encoder", d / "enc.ckpt", "--manifest", d / "corpus/train.csv", "--library", d / "lib")
print((d / "lib/index.csv").read_text())

models = ["--encoder", d / "enc.ckpt", "--synth", d / "syn.ckpt", "--vocoder", d / "voc.ckpt"]
text = "the quick brown fox jumps over the lazy dog twice"
run("clone", "--text", text, "--reference", d / "corpus/wavs/spk02_00.wav", "--out", d / "ref_clone.wav", *models)
run("clone", "--text", text, "--speaker", "spk05", "--library", d / "lib", "--out", d / "lib_clone.wav",
    "--max-frames", 200, *models)
run("verify", "--a", d / "corpus/wavs/spk02_00.wav", "--b", d / "corpus/wavs/spk02_08.wav", "--encoder", d / "enc.ckpt")
run("project", "--manifest", d / "corpus/test.csv", "--encoder", d / "enc.ckpt", "--out", d / "scatter.csv")
