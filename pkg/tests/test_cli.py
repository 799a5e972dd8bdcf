import hashlib
import struct
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from conftest import sine
from voiceclone import checkpoint as ck
from voiceclone import pipeline as pl
from voiceclone.audio import load_wav, write_wav
from voiceclone.cli import main
from voiceclone.config import Config, ConfigError, dump_config, parse_config, parse_config_text


def sha(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


# config


def test_config_defaults_and_override(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text("")
    assert parse_config(f) == Config()
    f.write_text("# frame hop\nhop_samples = 80  # smaller\n")
    assert parse_config(f).hop_samples == 80
    assert parse_config(None) == Config()


@pytest.mark.parametrize(
    "text,msg",
    [
        ("hop_sampels = 160", "unknown key"),
        ("hop_samples 160", "malformed"),
        ("hop_samples = fast", "type mismatch"),
        ("upsample_mode = cubic", "invalid value"),
    ],
)
def test_config_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config_text(text)


def test_config_dump_roundtrip():
    cfg = Config(seed=3, gate_k=2.5, upsample_mode="linear")
    assert parse_config_text(dump_config(cfg)) == cfg


# checkpoint container


@settings(max_examples=25, deadline=None)
@given(
    st.dictionaries(
        st.text(min_size=1, max_size=12),
        arrays(np.float32, array_shapes(min_dims=0, max_dims=3, max_side=5), elements=st.floats(width=32, allow_nan=False)),
        max_size=5,
    )
)
def test_checkpoint_roundtrip_bitwise(tensors):
    kind, out = ck.decode_checkpoint(ck.encode_checkpoint("model", tensors))
    assert kind == "model" and list(out) == list(tensors)
    for k in tensors:
        assert out[k].shape == tensors[k].shape
        assert out[k].tobytes() == tensors[k].tobytes()


def test_checkpoint_corruption_and_errors(tmp_path):
    data = bytearray(ck.encode_checkpoint("enc", {"w": np.arange(6, dtype=np.float32).reshape(2, 3)}))
    data[-8] ^= 0xFF
    with pytest.raises(ck.CRCError):
        ck.decode_checkpoint(bytes(data))
    with pytest.raises(ck.BadMagicError):
        ck.decode_checkpoint(b"XXXXX" + bytes(data[5:]))
    with pytest.raises(ck.CheckpointError, match="duplicate"):
        ck.encode_checkpoint("k", [("a", np.zeros(1)), ("a", np.ones(1))])
    empty = ck.encode_checkpoint("none", {})
    assert struct.unpack("<I", empty[-8:-4])[0] == 0
    assert ck.decode_checkpoint(empty) == ("none", {})
    ck.save_checkpoint(tmp_path / "a.ckpt", "vocoder", {"x": np.zeros(2)})
    with pytest.raises(ck.KindMismatchError):
        ck.load_checkpoint(tmp_path / "a.ckpt", "encoder")
    with pytest.raises(FileNotFoundError):
        ck.load_checkpoint(tmp_path / "missing.ckpt")


def test_dvector_roundtrip_unit_norm(tmp_path):
    v = np.random.default_rng(0).standard_normal(32)
    v /= np.linalg.norm(v)
    pl.save_dvector(tmp_path / "x.dvec", v)
    assert np.linalg.norm(pl.load_dvector(tmp_path / "x.dvec")) == pytest.approx(1, abs=1e-12)


# pipeline


def test_library_index(small_models):
    lib = pl.SpeakerLibrary(small_models["library"])
    assert len(lib.ids) == 8
    assert {e.accent for e in lib.entries.values()} == {"western", "indian"}
    for sid in lib.ids:
        assert (small_models["library"] / f"{sid}.dvec").exists()
        assert np.linalg.norm(lib.get(sid)) == pytest.approx(1, abs=1e-6)
    with pytest.raises(pl.PipelineError, match="available: spk00"):
        lib.get("nobody")


def _clone(small_models, out, cfg, **kw):
    return pl.run_clone_pipeline(
        "a short test sentence",
        out,
        encoder_path=small_models["encoder"],
        synth_path=small_models["synth"],
        vocoder_path=small_models["vocoder"],
        cfg=cfg,
        **kw,
    )


def test_clone_contract(small_models, small_cfg, toy_corpus, tmp_path):
    ref = toy_corpus / "wavs" / "spk03_00.wav"
    w = _clone(small_models, tmp_path / "a.wav", small_cfg, reference=ref)
    back = load_wav(tmp_path / "a.wav")
    assert back.sample_rate_hz == 16000
    assert len(back) == len(w) == small_cfg.hop_samples * small_cfg.max_frames
    _clone(small_models, tmp_path / "b.wav", small_cfg, speaker_id="spk03", library=small_models["library"])
    assert len(load_wav(tmp_path / "b.wav")) == len(back)


def test_clone_denoise_differs(small_models, small_cfg, toy_corpus, tmp_path):
    ref = toy_corpus / "wavs" / "spk01_00.wav"
    noise = tmp_path / "noise.wav"
    write_wav(type(sine(1.0))(0.05 * np.random.default_rng(0).standard_normal(16000)), noise)
    _clone(small_models, tmp_path / "plain.wav", small_cfg, reference=ref)
    _clone(small_models, tmp_path / "clean.wav", small_cfg, reference=ref, noise_clip=noise)
    assert sha(tmp_path / "plain.wav") != sha(tmp_path / "clean.wav")
    assert len(load_wav(tmp_path / "plain.wav")) == len(load_wav(tmp_path / "clean.wav"))


def test_clone_errors(small_models, small_cfg, tmp_path):
    with pytest.raises(pl.PipelineError, match="missing checkpoint"):
        pl.run_clone_pipeline("x", tmp_path / "o.wav", encoder_path=tmp_path / "no", synth_path=small_models["synth"],
                              vocoder_path=small_models["vocoder"], reference=tmp_path / "r.wav")
    (tmp_path / "junk.wav").write_bytes(b"junk")
    with pytest.raises(pl.PipelineError, match="unreadable reference"):
        _clone(small_models, tmp_path / "o.wav", small_cfg, reference=tmp_path / "junk.wav")
    write_wav(type(sine(1.0))(np.zeros(8000), 8000), tmp_path / "r8k.wav")
    with pytest.raises(pl.PipelineError, match="sample rate"):
        _clone(small_models, tmp_path / "o.wav", small_cfg, reference=tmp_path / "r8k.wav")
    with pytest.raises(pl.PipelineError):
        _clone(small_models, tmp_path / "o.wav", small_cfg)


def test_synth_training_leaves_encoder_untouched(small_models, small_cfg, toy_corpus):
    before = sha(small_models["encoder"])
    pl.train_synthesizer_from_manifest(toy_corpus / "test.csv", small_models["encoder"], small_cfg.replace(synth_steps=2))
    assert sha(small_models["encoder"]) == before


def test_synth_training_rejects_wrong_kind(small_models, small_cfg, toy_corpus):
    with pytest.raises(ck.KindMismatchError):
        pl.train_synthesizer_from_manifest(toy_corpus / "test.csv", small_models["vocoder"], small_cfg)


# subcommands


@pytest.fixture(scope="module")
def cfg_file(tmp_path_factory, small_cfg):
    f = tmp_path_factory.mktemp("cfg") / "small.cfg"
    f.write_text(dump_config(small_cfg))
    return f


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_verify_same_file(capsys, small_models, toy_corpus):
    wav = toy_corpus / "wavs" / "spk00_00.wav"
    code, out, _ = run(capsys, "verify", "--a", wav, "--b", wav, "--encoder", small_models["encoder"])
    assert code == 0
    assert out.strip() == "similarity 1.0 accepted"


def test_mos_report(capsys, tmp_path):
    f = tmp_path / "fig.csv"
    f.write_text("label,locale,source\n" + "Very similar,en-IN,p230\n" * 11)
    code, out, _ = run(capsys, "mos-report", "--ratings", f)
    assert code == 0 and out.strip() == "4.5"


def test_score_self(capsys, tmp_path):
    write_wav(sine(180.0, 0.5, 0.4), tmp_path / "a.wav")
    (tmp_path / "rows.csv").write_text("accent,dataset,speaker_id,gender,ref_wav,test_wav\nIndian,toy,spk00,M,a.wav,a.wav\n")
    code, out, _ = run(capsys, "score", "--rows", tmp_path / "rows.csv", "--out", tmp_path / "rep.csv")
    assert code == 0
    assert out.splitlines()[1] == "Indian,toy,spk00,M,,0.00,0.00"
    assert (tmp_path / "rep.csv").read_text() == out


def test_every_subcommand_is_deterministic(capsys, tmp_path, cfg_file, toy_corpus, small_models):
    wav = toy_corpus / "wavs" / "spk02_01.wav"
    enc_ckpt = small_models["encoder"]
    noise = tmp_path / "noise.wav"
    write_wav(type(sine(1.0))(0.02 * np.random.default_rng(1).standard_normal(16000)), noise)
    jobs = {
        "make-corpus": (["--out", "{d}/corpus", "--speakers", 2, "--utterances", 2], "corpus/manifest.csv"),
        "features": (["--wav", wav, "--out", "{d}/f.ckpt"], "f.ckpt"),
        "train-encoder": (["--manifest", toy_corpus / "test.csv", "--out", "{d}/e.ckpt", "--log", "{d}/e.csv"], "e.ckpt"),
        "embed": (["--encoder", enc_ckpt, "--wav", wav, "--out", "{d}/x.dvec"], "x.dvec"),
        "train-synth": (["--manifest", toy_corpus / "test.csv", "--encoder", enc_ckpt, "--out", "{d}/s.ckpt"], "s.ckpt"),
        "train-vocoder": (["--manifest", toy_corpus / "test.csv", "--out", "{d}/v.ckpt", "--log", "{d}/v.csv"], "v.ckpt"),
        "clone": (["--text", "hello there", "--reference", wav, "--encoder", enc_ckpt, "--synth", small_models["synth"],
                   "--vocoder", small_models["vocoder"], "--out", "{d}/c.wav"], "c.wav"),
        "denoise": (["--wav", wav, "--noise-clip", noise, "--out", "{d}/d.wav"], "d.wav"),
        "project": (["--manifest", toy_corpus / "test.csv", "--encoder", enc_ckpt, "--out", "{d}/p.csv"], "p.csv"),
    }
    for name, (args, product) in jobs.items():
        hashes = []
        for rep in ("a", "b"):
            d = tmp_path / name / rep
            d.mkdir(parents=True)
            argv = [str(a).replace("{d}", str(d)) for a in args]
            code, _, err = run(capsys, name, "--config", cfg_file, "--seed", 4, *argv)
            assert code == 0, (name, err)
            hashes.append(sha(d / product))
        assert hashes[0] == hashes[1], name
    enc_log = (tmp_path / "train-encoder" / "a" / "e.csv").read_text().splitlines()
    assert enc_log[0] == "step,loss,w,b"
    assert (tmp_path / "train-vocoder" / "a" / "v.csv").read_text().splitlines()[0] == "step,loss"
    proj = (tmp_path / "project" / "a" / "p.csv").read_text().splitlines()
    assert proj[0] == "x,y,speaker_id" and len(proj) == 17


def test_seed_changes_training(capsys, tmp_path, cfg_file, toy_corpus):
    for seed in (1, 2):
        code, _, _ = run(capsys, "train-vocoder", "--config", cfg_file, "--seed", seed,
                         "--manifest", toy_corpus / "test.csv", "--out", tmp_path / f"v{seed}.ckpt")
        assert code == 0
    assert sha(tmp_path / "v1.ckpt") != sha(tmp_path / "v2.ckpt")


def test_runtime_errors_exit_1(capsys, tmp_path, small_models):
    bad = tmp_path / "bad.cfg"
    bad.write_text("hop_sampels = 160\n")
    code, _, err = run(capsys, "mos-report", "--config", bad, "--ratings", tmp_path / "x.csv")
    assert code == 1 and "unknown key" in err and len(err.strip().splitlines()) == 1
    code, _, err = run(capsys, "clone", "--text", "hi", "--speaker", "zed", "--library", small_models["library"],
                       "--encoder", small_models["encoder"], "--synth", small_models["synth"],
                       "--vocoder", small_models["vocoder"], "--out", tmp_path / "o.wav")
    assert code == 1 and err.startswith("error: unknown speaker id") and "spk00" in err
    code, _, err = run(capsys, "verify", "--a", tmp_path / "none.wav", "--b", tmp_path / "none.wav",
                       "--encoder", small_models["encoder"])
    assert code == 1 and err.startswith("error:")


def test_usage_errors_exit_2():
    for argv in ([], ["bogus"], ["clone", "--text", "x"], ["mos-report", "--ratings"]):
        proc = subprocess.run([sys.executable, "-m", "voiceclone.cli", *argv], capture_output=True, text=True)
        assert proc.returncode == 2, argv
