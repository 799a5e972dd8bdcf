import numpy as np
import pytest

from voiceclone import synthesizer as syn
from voiceclone.audio import MelSpectrogram, denormalize_db
from voiceclone.synthesizer import MelTargetPair, N_MELS, SYNTH_FRAME_PARAMS


def _params(seed=0, spk=6, hidden=10, emb=5, pre=4):
    return syn.init_synth_params(np.random.default_rng(seed), emb, pre, spk, hidden)


def _mel(rng, T):
    return MelSpectrogram(rng.uniform(-90, -10, (T, N_MELS)), SYNTH_FRAME_PARAMS)


def _unit(rng, d):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def test_encode_text_examples():
    assert syn.encode_text("ab").ids.tolist() == [3, 4]
    assert syn.encode_text("A  B").ids.tolist() == [3, 2, 4]
    assert syn.encode_text("ζ").ids.tolist() == [1]
    assert syn.decode_text(syn.encode_text("Hello,  World!")) == "hello, world!"
    with pytest.raises(syn.SynthesizerError):
        syn.encode_text("   ")


def test_teacher_forced_shape():
    rng = np.random.default_rng(0)
    p = _params()
    out = syn.decode_mel_teacher_forced(p, syn.encode_text("hi there"), _mel(rng, 13), _unit(rng, 6))
    assert out.frames.shape == (13, N_MELS)


def test_zero_params_predict_output_bias():
    rng = np.random.default_rng(0)
    p = {k: np.zeros_like(v) for k, v in _params().items()}
    p["out.b"] = rng.uniform(-0.5, 0.5, N_MELS)
    out = syn.decode_mel_teacher_forced(p, syn.encode_text("abc"), _mel(rng, 5), _unit(rng, 6))
    np.testing.assert_allclose(out.frames, np.tile(denormalize_db(p["out.b"]), (5, 1)))


def test_speaker_conditioning_sensitivity():
    rng = np.random.default_rng(3)
    p = _params(3)
    text, target = syn.encode_text("conditioning"), _mel(rng, 8)
    a = syn.decode_mel_teacher_forced(p, text, target, _unit(rng, 6)).frames
    b = syn.decode_mel_teacher_forced(p, text, target, _unit(rng, 6)).frames
    assert np.max(np.abs(a - b)) > 0
    fa = syn.infer_mel(p, text, _unit(rng, 6), 5).frames
    fb = syn.infer_mel(p, text, _unit(rng, 6), 5).frames
    assert np.max(np.abs(fa - fb)) > 0


def test_teacher_forcing_is_causal():
    rng = np.random.default_rng(1)
    p = _params(1)
    text, spk = syn.encode_text("causal"), _unit(rng, 6)
    target = _mel(rng, 10)
    base = syn.decode_mel_teacher_forced(p, text, target, spk).frames
    tau = 6
    bumped = target.frames.copy()
    bumped[tau] += 20.0
    out = syn.decode_mel_teacher_forced(p, text, MelSpectrogram(bumped, target.params), spk).frames
    np.testing.assert_array_equal(out[: tau + 1], base[: tau + 1])
    assert np.any(out[tau + 1] != base[tau + 1])


def test_synth_loss_examples():
    t = np.random.default_rng(0).normal(size=(4, 6))
    assert syn.synth_loss(t, t) == 0.0
    assert syn.synth_loss(t + 1, t) == pytest.approx(1.0)
    bump = np.zeros_like(t)
    bump[:, ::2] = 2.0
    assert syn.synth_loss(t + bump, t) == pytest.approx(2.0)
    with pytest.raises(syn.SynthesizerError):
        syn.synth_loss(t, t[:2])


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(5)
    p = _params(5, hidden=6, emb=3, pre=3, spk=4)
    for k in p:
        p[k] = p[k] + rng.normal(0, 0.2, p[k].shape)
    pair = MelTargetPair(syn.encode_text("ab ba"), _mel(rng, 4), _unit(rng, 4))
    _, grads = syn.synth_loss_and_grads(p, pair)
    h = 1e-5
    worst = 0.0
    for k, v in p.items():
        flat = v.reshape(-1)
        # spot-check a fixed subset of coordinates per tensor
        for i in rng.choice(flat.size, size=min(12, flat.size), replace=False):
            old = flat[i]
            flat[i] = old + h
            lp, _ = syn.synth_loss_and_grads(p, pair)
            flat[i] = old - h
            lm, _ = syn.synth_loss_and_grads(p, pair)
            flat[i] = old
            num, ana = (lp - lm) / (2 * h), grads[k].reshape(-1)[i]
            worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1e-7))
    assert worst < 1e-4


def test_infer_mel_length_and_determinism():
    rng = np.random.default_rng(2)
    p = _params(2)
    spk = _unit(rng, 6)
    a = syn.infer_mel(p, syn.encode_text("hello"), spk, 17)
    assert a.frames.shape == (17, N_MELS)
    np.testing.assert_array_equal(a.frames, syn.infer_mel(p, syn.encode_text("hello"), spk, 17).frames)
    with pytest.raises(syn.SynthesizerError):
        syn.infer_mel(p, syn.encode_text("hello"), spk, 0)


def test_wrong_speaker_size():
    p = _params()
    with pytest.raises(syn.SynthesizerError, match="speaker embedding"):
        syn.infer_mel(p, syn.encode_text("x"), np.ones(3) / np.sqrt(3), 3)


def test_training_is_deterministic():
    rng = np.random.default_rng(4)
    pair = MelTargetPair(syn.encode_text("same seed"), _mel(rng, 6), _unit(rng, 6))
    kw = dict(steps=5, embedding_size=4, prenet_size=4, hidden=8, seed=3)
    p1, l1 = syn.train_synthesizer([pair], **kw)
    p2, l2 = syn.train_synthesizer([pair], **kw)
    assert l1 == l2
    for k in p1:
        np.testing.assert_array_equal(p1[k], p2[k])
