"""The twelve acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line; the lines are echoed together in the
"acceptance criteria" section at the end of the pytest run.
"""

import hashlib
import time

import numpy as np
import pytest

from conftest import CRITERIA, SR, sine
from test_denoise import band_energy_db, noisy_fixture, snr_db
from voiceclone import encoder as enc
from voiceclone import metrics as m
from voiceclone import pipeline as pl
from voiceclone import synthesizer as syn
from voiceclone import vocoder as voc
from voiceclone.audio import FrameParams, Waveform, build_mel_filterbank, hz_to_mel, istft, mel_spectrogram, stft
from voiceclone.cli import main
from voiceclone.config import Config
from voiceclone.corpus import read_manifest
from voiceclone.denoise import denoise


pytestmark = pytest.mark.slow


def record(n, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n:2d} {title}: {detail}"
    CRITERIA[n] = line
    print(line)
    assert ok, line


def sha(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


# shared trained models (default sizes)


@pytest.fixture(scope="module")
def encoder_run(toy_corpus):
    cfg = Config(encoder_steps=400)
    t0 = time.perf_counter()
    model, log = pl.train_encoder_from_manifest(toy_corpus / "train.csv", cfg)
    return model, log, time.perf_counter() - t0, cfg


@pytest.fixture(scope="module")
def saved_encoder(encoder_run, tmp_path_factory):
    path = tmp_path_factory.mktemp("acc") / "encoder.ckpt"
    pl.save_encoder(path, encoder_run[0])
    return path


@pytest.fixture(scope="module")
def synth_run(toy_corpus, saved_encoder):
    cfg = Config()
    entry = read_manifest(toy_corpus / "train.csv")[0]
    before = sha(saved_encoder)
    model = pl.load_encoder(saved_encoder)
    (pair,) = pl.synth_pairs([entry], model, cfg)
    params, log = syn.train_synthesizer(
        [pair], steps=400, embedding_size=cfg.synth_embedding, prenet_size=cfg.prenet_size,
        hidden=cfg.synth_hidden, lr=cfg.synth_lr, momentum=cfg.synth_momentum,
        clip_norm=cfg.synth_clip_norm, seed=0, log_every=10,
    )
    return params, log, pair, before, sha(saved_encoder), model


@pytest.fixture(scope="module")
def vocoder_run():
    cfg = Config()
    clip = sine(200.0, 0.5, 0.5)
    mel = voc.vocoder_mel(clip, cfg.synth_frame_params())
    t0 = time.perf_counter()
    params, log = voc.train_vocoder(
        [(mel, clip)], steps=200, cond_size=cfg.vocoder_cond, hidden=cfg.vocoder_hidden,
        hop=cfg.hop_samples, segment=cfg.vocoder_segment, lr=cfg.vocoder_lr,
        momentum=cfg.vocoder_momentum, clip_norm=cfg.vocoder_clip_norm, seed=0,
    )
    return params, log, mel, clip, time.perf_counter() - t0


# 1-2: GE2E


def test_c01_ge2e_gradient_check():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    N, M, E, H, D, T = 4, 3, 8, 16, 4, 3
    params = enc.init_encoder_params(rng, D, H, 2, E)
    for k in params:
        params[k] = params[k] + rng.normal(0, 0.3, params[k].shape)
    batch = enc.GE2EBatch(rng.standard_normal((N * M, T, D)), N, M)
    sp = enc.SimilarityParams(10.0, -5.0)
    _, grads, dw, db = enc.ge2e_gradients(batch, params, sp)
    h, worst = 1e-4, 0.0

    def rel(a, n):
        return abs(a - n) / max(abs(a), abs(n), 1e-6)

    for k, v in params.items():
        for idx in np.ndindex(v.shape):
            old = v[idx]
            v[idx] = old + h
            lp = enc.ge2e_batch_loss(batch, params, sp)
            v[idx] = old - h
            lm = enc.ge2e_batch_loss(batch, params, sp)
            v[idx] = old
            worst = max(worst, rel(grads[k][idx], (lp - lm) / (2 * h)))
    for name, g, make in (
        ("w", dw, lambda d: enc.SimilarityParams(10.0 + d, -5.0)),
        ("b", db, lambda d: enc.SimilarityParams(10.0, -5.0 + d)),
    ):
        num = (enc.ge2e_batch_loss(batch, params, make(h)) - enc.ge2e_batch_loss(batch, params, make(-h))) / (2 * h)
        worst = max(worst, rel(g, num))
    elapsed = time.perf_counter() - t0
    record(1, "GE2E gradient check", worst < 1e-4 and elapsed < 10,
           f"max rel err {worst:.2e} (< 1e-4), {elapsed:.1f} s (< 10 s)")


def test_c02_ge2e_closed_form():
    e = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    loss = enc.ge2e_loss(enc.similarity_matrix(e, enc.centroids(e, 2, 2), enc.SimilarityParams(1.0, 0.0)))
    record(2, "GE2E closed form", abs(loss - 1.253046) <= 1e-6, f"loss {loss:.7f} vs 1.253046 +- 1e-6")


# 3: encoder on the toy corpus


def test_c03_encoder_toy_training(encoder_run, toy_corpus):
    model, log, train_s, cfg = encoder_run
    embed = lambda e: pl.embed_wave(model, pl.load_wav(e.wav_path), cfg)  # noqa: E731
    train, test = read_manifest(toy_corpus / "train.csv"), read_manifest(toy_corpus / "test.csv")
    enroll = {}
    for e in train:
        enroll.setdefault(e.speaker_id, []).append(embed(e))
    enroll = {k: enc.l2_normalize(np.mean(v, axis=0)) for k, v in enroll.items()}
    same, diff, vecs, labels = [], [], [], []
    for e in test:
        v = embed(e)
        vecs.append(v)
        labels.append(e.speaker_id)
        for sid, c in enroll.items():
            (same if sid == e.speaker_id else diff).append(float(v @ c))
    eer = enc.compute_eer(same, diff)
    all_vecs = vecs + [embed(e) for e in train]
    sep = enc.speaker_separation(np.array(all_vecs), labels + [e.speaker_id for e in train])
    steps = log[-1][0] + 1
    ok = eer <= 0.05 and sep >= 0.3 and steps <= 2000 and train_s < 300
    record(3, "encoder toy training", ok,
           f"held-out EER {eer:.3f} (<= 0.05), separation {sep:.3f} (>= 0.3), {steps} steps, {train_s:.0f} s")


# 4-7: signal oracles


def test_c04_dsp_oracles():
    p = FrameParams(400, 100, 512)
    x = np.random.default_rng(0).uniform(-0.9, 0.9, SR)
    y = istft(stft(x, p), len(x)).samples
    inner = slice(400, SR - 400)
    err = np.linalg.norm(y[inner] - x[inner]) / np.linalg.norm(x[inner])
    fb = build_mel_filterbank(512, SR, 40, 0.0, 8000.0)
    a = mel_spectrogram(0.2 * x, FrameParams(), fb).frames
    b = mel_spectrogram(0.4 * x, FrameParams(), fb).frames
    live = a > -90
    law = float(np.max(np.abs((b - a)[live] - 6.0206)))
    mel700 = float(hz_to_mel(700.0))
    ok = err < 1e-6 and law <= 1e-3 and abs(mel700 - 781.17) <= 0.01
    record(4, "DSP oracles", ok,
           f"istft rel err {err:.1e}, log law max dev {law:.1e} dB from 6.0206, mel(700) {mel700:.3f}")


def test_c05_pitch_and_gpe():
    devs = {}
    for f0 in (100.0, 200.0, 300.0, 400.0):
        tr = m.track_pitch(sine(f0, 0.5))
        devs[f0] = float(np.max(np.abs(tr.f0_hz[tr.voiced] - f0)) / f0) if tr.voiced.all() else 1.0
    ref = m.track_pitch(sine(200.0, 0.5))
    g_self = m.gpe(ref, ref)
    g_260 = m.gpe(ref, m.track_pitch(sine(260.0, 0.5)))
    g_220 = m.gpe(ref, m.track_pitch(sine(220.0, 0.5)))
    worst = max(devs.values())
    ok = worst < 0.01 and g_self == 0.0 and g_260 == 100.0 and g_220 == 0.0
    record(5, "pitch/GPE oracles", ok,
           f"worst sine deviation {100 * worst:.4f} %, gpe self {g_self}, 200v260 {g_260}, 200v220 {g_220}")


def test_c06_spectral_distortion():
    x = Waveform(0.01 * np.random.default_rng(1).standard_normal(SR))
    sd2 = m.spectral_distortion(x, Waveform(2 * x.samples))
    sd10 = m.spectral_distortion(x, Waveform(10 * x.samples))
    sd1 = m.spectral_distortion(x, x)
    ok = abs(sd2 - 6.02) <= 0.05 and abs(sd10 - 20.0) <= 0.05 and sd1 == 0.0
    record(6, "SD oracles", ok, f"x2 {sd2:.3f} dB, x10 {sd10:.3f} dB, identical {sd1}")


def test_c07_denoise():
    p = FrameParams(400, 100, 512)
    clean, noisy, noise_clip = noisy_fixture(0)
    gain = snr_db(clean, denoise(noisy, noise_clip, p).samples) - snr_db(clean, noisy.samples)
    dither = Waveform(1e-5 * np.random.default_rng(1).standard_normal(SR))
    tone = sine(1000.0, 1.0, 0.5)
    change = band_energy_db(denoise(tone, dither, p).samples) - band_energy_db(tone.samples)
    ok = gain >= 6.0 and abs(change) <= 1.0
    record(7, "denoise fixture", ok, f"SNR gain {gain:.2f} dB (>= 6), passthrough band change {change:+.4f} dB")


# 8-9: synthesizer and vocoder overfit


def test_c08_synthesizer_overfit(synth_run):
    params, log, pair, before, after, model = synth_run
    final = syn.synth_loss_and_grads(params, pair)[0]
    spk_b = np.roll(pair.speaker, 1)  # a second unit vector
    a = syn.decode_mel_teacher_forced(params, pair.text, pair.mel, pair.speaker).frames
    b = syn.decode_mel_teacher_forced(params, pair.text, pair.mel, spk_b).frames
    sens = float(np.max(np.abs(a - b)))
    steps = log[-1][0] + 1
    ok = final < 0.01 and steps <= 2000 and before == after and sens > 0
    record(8, "synthesizer overfit", ok,
           f"teacher-forced MSE {final:.4f} (< 0.01, normalised mel) after {steps} steps, "
           f"encoder hash {'unchanged' if before == after else 'CHANGED'}, conditioning max diff {sens:.3g}")


def test_c09_vocoder_overfit(vocoder_run):
    params, log, mel, clip, train_s = vocoder_run
    mse, _, _ = voc.teacher_forced_loss_and_grads(params, mel, clip.samples, 160, "repeat", 320)
    free = voc.generate(params, voc.upsample_conditioning(mel, params, 160))
    bounded = bool(np.all(np.abs(free.samples) < 1))
    rms = float(np.sqrt(np.mean(free.samples**2)))
    gl = voc.griffin_lim(stft(clip, FrameParams(400, 100, 512)).magnitude, FrameParams(400, 100, 512), iters=60)
    f0 = m.median_f0(m.track_pitch(gl))
    ok = mse < 1e-3 and bounded and rms > 0.01 and abs(f0 - 200) / 200 < 0.01
    record(9, "vocoder overfit", ok,
           f"teacher-forced MSE {mse:.2e} (< 1e-3), free-run bounded {bounded}, RMS {rms:.3f}, "
           f"Griffin-Lim pitch {f0:.2f} Hz")


# 10-12: MOS, determinism, report


def test_c10_mos(tmp_path):
    f = tmp_path / "fig4b.csv"
    f.write_text("label,locale,source\n" + "Very similar,en-IN,p230\n" * 11)
    mos = m.aggregate_mos(m.read_ratings(f))
    bands = (m.mos_band(4.0), m.mos_band(5.0), m.mos_band(3.999), m.mos_band(mos))
    ok = mos == 4.5 and bands[:2] == ("very_similar", "very_similar") and bands[2] == "moderately_similar" \
        and bands[3] == "very_similar"
    record(10, "MOS aggregation", ok, f"MOS {mos} from 11 very-similar rows, band {bands[3]}")


def test_c11_clone_determinism(tmp_path, toy_corpus, saved_encoder, synth_run, vocoder_run, capsys):
    pl.save_params(tmp_path / "syn.ckpt", "synthesizer", synth_run[0])
    pl.save_params(tmp_path / "voc.ckpt", "vocoder", vocoder_run[0])
    text = "the quick brown fox jumps over the lazy dog twice"
    ref = toy_corpus / "wavs" / "spk05_00.wav"
    hashes, times = [], []
    for k in range(2):
        out = tmp_path / f"clone{k}.wav"
        t0 = time.perf_counter()
        code = main(["clone", "--seed", "0", "--text", text, "--reference", str(ref), "--encoder", str(saved_encoder),
                     "--synth", str(tmp_path / "syn.ckpt"), "--vocoder", str(tmp_path / "voc.ckpt"), "--out", str(out)])
        times.append(time.perf_counter() - t0)
        assert code == 0, capsys.readouterr().err
        hashes.append(sha(out))
    ok = len(text.split()) == 10 and hashes[0] == hashes[1] and max(times) < 60
    record(11, "clone determinism", ok,
           f"hashes {'identical' if hashes[0] == hashes[1] else 'DIFFER'} ({hashes[0][:12]}), "
           f"slowest run {max(times):.1f} s (< 60 s)")


def test_c12_report(tmp_path):
    from voiceclone.audio import write_wav

    write_wav(sine(210.0, 0.5, 0.4), tmp_path / "ref.wav")
    rep = m.score_report([m.ScoreRequest("Indian", "toy", "spk00", "M", tmp_path / "ref.wav", tmp_path / "ref.wav")])
    rep.rows.append(m.ReportRow("Western", "VCTK", "p230", "F", 4.64, 1.95, 3.38))
    lines = rep.to_csv().splitlines()
    ok = lines[0] == "accent,dataset,speaker_id,gender,mos,gpe,sd" and lines[-1] == "Western,VCTK,p230,F,4.64,1.95,3.38"
    record(12, "report fidelity", ok, f"header {lines[0]!r}, fixture row {lines[-1]!r}")


# spec examples that reuse the trained fixtures above


def test_overfit_free_run_beats_silence(synth_run):
    params, _, pair, *_ = synth_run
    target = pair.mel.frames
    free = syn.infer_mel(params, pair.text, pair.speaker, target.shape[0]).frames

    def mel_sd(a):
        return float(np.mean(np.sqrt(np.mean((a - target) ** 2, axis=1))))

    assert mel_sd(free) < mel_sd(np.full_like(target, -100.0))


def test_overfit_loss_drops_tenfold(synth_run, vocoder_run):
    s_log, v_log = synth_run[1], vocoder_run[1]
    assert s_log[-1][1] < 0.1 * s_log[0][1]
    assert v_log[-1][1] < v_log[0][1]
