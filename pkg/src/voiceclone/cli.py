"""Command-line entry point: ``voiceclone <subcommand> [--key value ...]``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import encoder as enc
from . import metrics
from . import pipeline as pl
from . import synthesizer as syn
from .audio import load_wav, write_wav
from .checkpoint import save_checkpoint
from .config import Config, ConfigError, parse_config
from .corpus import build_toy_corpus, read_manifest
from .denoise import GateParams, denoise

log = logging.getLogger("voiceclone")


def _config(args) -> Config:
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def cmd_make_corpus(args, cfg):
    manifest = build_toy_corpus(
        args.out,
        args.speakers or cfg.corpus_speakers,
        args.utterances or cfg.corpus_utterances,
        cfg.seed,
        cfg.corpus_test_utterances,
        cfg.sample_rate_hz,
    )
    print(manifest)


def cmd_features(args, cfg):
    w = load_wav(args.wav)
    if args.kind == "encoder":
        frames = pl.encoder_features(w, cfg).frames
    else:
        frames = syn.synth_mel(w, cfg.synth_frame_params()).frames
    save_checkpoint(args.out, "features", {"frames": frames})
    print(f"{frames.shape[0]} frames x {frames.shape[1]}")


def cmd_train_encoder(args, cfg):
    if args.steps is not None:
        cfg = cfg.replace(encoder_steps=args.steps)
    model, loss_log = pl.train_encoder_from_manifest(args.manifest, cfg)
    pl.save_encoder(args.out, model)
    if args.log:
        pl.write_loss_log(args.log, ["step", "loss", "w", "b"], loss_log)
    print(f"final loss {loss_log[-1][1]:.6f}")


def cmd_embed(args, cfg):
    model = pl.load_encoder(args.encoder)
    if args.library:
        if not args.manifest:
            raise ValueError("--library needs --manifest")
        lib = pl.build_library(args.manifest, model, args.library, cfg)
        print(f"{len(lib.ids)} speakers in {args.library}")
        return
    if not (args.wav and args.out):
        raise ValueError("embed needs --wav and --out (or --manifest and --library)")
    vec = pl.embed_wave(model, load_wav(args.wav), cfg)
    pl.save_dvector(args.out, vec)
    print(" ".join(f"{v:.6f}" for v in vec))


def cmd_verify(args, cfg):
    model = pl.load_encoder(args.encoder)
    a = pl.embed_wave(model, load_wav(args.a), cfg)
    b = pl.embed_wave(model, load_wav(args.b), cfg)
    threshold = cfg.verify_threshold if args.threshold is None else args.threshold
    sim, ok = enc.cosine_verify(a, b, threshold)
    print(f"similarity {round(sim, 6)} {'accepted' if ok else 'rejected'}")


def cmd_train_synth(args, cfg):
    if args.steps is not None:
        cfg = cfg.replace(synth_steps=args.steps)
    params, loss_log = pl.train_synthesizer_from_manifest(args.manifest, args.encoder, cfg)
    pl.save_params(args.out, "synthesizer", params)
    if args.log:
        pl.write_loss_log(args.log, ["step", "loss"], loss_log)
    print(f"final loss {loss_log[-1][1]:.6f}")


def cmd_train_vocoder(args, cfg):
    if args.steps is not None:
        cfg = cfg.replace(vocoder_steps=args.steps)
    params, loss_log = pl.train_vocoder_from_manifest(args.manifest, cfg)
    pl.save_params(args.out, "vocoder", params)
    if args.log:
        pl.write_loss_log(args.log, ["step", "loss"], loss_log)
    print(f"final loss {loss_log[-1][1]:.6f}")


def _gate_overrides(args, cfg):
    changes = {}
    if args.gate_k is not None:
        changes["gate_k"] = args.gate_k
    if args.mask_floor is not None:
        changes["mask_floor"] = args.mask_floor
    return cfg.replace(**changes)


def cmd_clone(args, cfg):
    cfg = _gate_overrides(args, cfg)
    if args.max_frames is not None:
        cfg = cfg.replace(max_frames=args.max_frames)
    if args.denoise and not args.noise_clip:
        raise ValueError("--denoise needs --noise-clip")
    w = pl.run_clone_pipeline(
        args.text,
        args.out,
        encoder_path=args.encoder,
        synth_path=args.synth,
        vocoder_path=args.vocoder,
        cfg=cfg,
        reference=args.reference,
        speaker_id=args.speaker,
        library=args.library,
        noise_clip=args.noise_clip if args.denoise else None,
    )
    print(f"wrote {args.out} ({len(w)} samples)")


def cmd_denoise(args, cfg):
    cfg = _gate_overrides(args, cfg)
    gate = GateParams(cfg.gate_k, cfg.mask_floor, cfg.gate_time_width, cfg.gate_freq_width)
    out = denoise(load_wav(args.wav), load_wav(args.noise_clip), cfg.denoise_frame_params(), gate)
    write_wav(out, args.out)
    print(f"wrote {args.out}")


def cmd_score(args, cfg):
    report = metrics.score_report(metrics.read_score_requests(args.rows), cfg.frame_params())
    text = report.to_csv()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    for sid, err in report.errors:
        print(f"row {sid}: {err}", file=sys.stderr)


def cmd_mos_report(args, cfg):
    mos = metrics.aggregate_mos(metrics.read_ratings(args.ratings))
    print(f"{round(mos, 4):g}")


def cmd_project(args, cfg):
    model = pl.load_encoder(args.encoder)
    entries = read_manifest(args.manifest)
    vecs = [pl.embed_wave(model, load_wav(e.wav_path), cfg) for e in entries]
    pts = enc.project_2d(np.array(vecs))
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "speaker_id"])
        for (x, y), e in zip(pts, entries):
            w.writerow([f"{x:.6f}", f"{y:.6f}", e.speaker_id])
    print(f"wrote {len(entries)} points to {args.out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="voiceclone", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("-v", "--verbose", action="store_true")
        p.set_defaults(func=func)
        return p

    p = add("make-corpus", cmd_make_corpus, "write the synthetic toy corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--speakers", type=int)
    p.add_argument("--utterances", type=int)

    p = add("features", cmd_features, "dump features of a wav into a checkpoint container")
    p.add_argument("--wav", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=("encoder", "mel"), default="encoder")

    for name, func, what in (
        ("train-encoder", cmd_train_encoder, "speaker encoder"),
        ("train-synth", cmd_train_synth, "synthesizer"),
        ("train-vocoder", cmd_train_vocoder, "vocoder"),
    ):
        p = add(name, func, f"train the {what}")
        p.add_argument("--manifest", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--log", help="loss log CSV")
        p.add_argument("--steps", type=int)
        if name == "train-synth":
            p.add_argument("--encoder", required=True)

    p = add("embed", cmd_embed, "compute d-vectors or build a speaker library")
    p.add_argument("--encoder", required=True)
    p.add_argument("--wav")
    p.add_argument("--out")
    p.add_argument("--manifest")
    p.add_argument("--library")

    p = add("verify", cmd_verify, "compare two recordings")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--encoder", required=True)
    p.add_argument("--threshold", type=float)

    p = add("clone", cmd_clone, "speak text in a reference or library voice")
    p.add_argument("--text", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--encoder", required=True)
    p.add_argument("--synth", required=True)
    p.add_argument("--vocoder", required=True)
    voice = p.add_mutually_exclusive_group(required=True)
    voice.add_argument("--reference")
    voice.add_argument("--speaker")
    p.add_argument("--library")
    p.add_argument("--max-frames", type=int)
    p.add_argument("--denoise", action="store_true")
    p.add_argument("--noise-clip")
    p.add_argument("--gate-k", type=float)
    p.add_argument("--mask-floor", type=float)

    p = add("denoise", cmd_denoise, "spectral-gating noise reduction")
    p.add_argument("--wav", required=True)
    p.add_argument("--noise-clip", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--gate-k", type=float)
    p.add_argument("--mask-floor", type=float)

    p = add("score", cmd_score, "GPE/SD/MOS report over reference/test pairs")
    p.add_argument("--rows", required=True, help="CSV accent,dataset,speaker_id,gender,ref_wav,test_wav[,ratings_csv]")
    p.add_argument("--out")

    p = add("mos-report", cmd_mos_report, "aggregate listener ratings into a MOS")
    p.add_argument("--ratings", required=True)

    p = add("project", cmd_project, "2-D PCA scatter of utterance embeddings")
    p.add_argument("--manifest", required=True)
    p.add_argument("--encoder", required=True)
    p.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = _config(args)
        args.func(args, cfg)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
