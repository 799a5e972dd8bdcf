"""Objective and subjective evaluation: pitch, GPE, spectral distortion, MOS."""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import FrameParams, Waveform, frame_signal, load_wav, stft

REPORT_HEADER = ["accent", "dataset", "speaker_id", "gender", "mos", "gpe", "sd"]
RATINGS_HEADER = ["label", "locale", "source"]

# midpoint of each similarity band on the 1-5 scale
MOS_BANDS = {
    "very_similar": (4.0, 5.0),
    "moderately_similar": (3.0, 4.0),
    "slightly_similar": (2.0, 3.0),
    "not_at_all_similar": (1.0, 2.0),
}
MOS_MIDPOINTS = {k: (lo + hi) / 2 for k, (lo, hi) in MOS_BANDS.items()}


class MetricsError(ValueError):
    pass


class NoJointVoicingWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PitchTrack:
    f0_hz: np.ndarray
    voiced: np.ndarray
    params: FrameParams = field(default_factory=FrameParams)

    def __len__(self):
        return self.f0_hz.size


def _normalized_acf(frame, min_lag, max_lag):
    """Normalised autocorrelation over the overlapping part of each lag."""
    L = frame.size
    r = np.zeros(max_lag + 2)
    for lag in range(min_lag - 1, min(max_lag + 1, L - 1) + 1):
        a, b = frame[: L - lag], frame[lag:]
        denom = np.sqrt(np.dot(a, a) * np.dot(b, b))
        r[lag] = np.dot(a, b) / denom if denom > 0 else 0.0
    return r


def track_pitch(w: Waveform, p: FrameParams | None = None, f_min=50.0, f_max=500.0, voicing_threshold=0.5) -> PitchTrack:
    """Frame-wise autocorrelation pitch tracker.

    The lag search covers [rate/f_max, rate/f_min].  Periodic signals give
    near-equal peaks at every multiple of the period, so the shortest-lag
    local peak within 90% of the strongest one is taken as the period, then
    refined by parabolic interpolation.
    """
    p = p or FrameParams()
    rate = w.sample_rate_hz
    raw = frame_signal(w, FrameParams(p.window_length_samples, p.hop_samples, p.fft_size, "rectangular"))
    min_lag = max(2, int(np.floor(rate / f_max)))
    max_lag = min(int(np.ceil(rate / f_min)), p.window_length_samples - 2)
    f0 = np.zeros(len(raw))
    voiced = np.zeros(len(raw), dtype=bool)
    for t, frame in enumerate(raw):
        frame = frame - frame.mean()
        if np.sqrt(np.mean(frame**2)) <= 1e-4:
            continue
        r = _normalized_acf(frame, min_lag, max_lag)
        seg = r[min_lag : max_lag + 1]
        peak = seg.max()
        if peak <= voicing_threshold:
            continue
        lag = None
        for k in range(min_lag, max_lag + 1):
            if r[k] >= 0.9 * peak and r[k] >= r[k - 1] and (k == max_lag or r[k] >= r[k + 1]):
                lag = float(k)
                if 0 < k < max_lag:
                    den = r[k - 1] - 2 * r[k] + r[k + 1]
                    if den < 0:
                        lag += 0.5 * (r[k - 1] - r[k + 1]) / den
                break
        if lag is None:
            continue
        hz = rate / lag
        if f_min <= hz <= f_max:
            f0[t] = hz
            voiced[t] = True
    return PitchTrack(f0, voiced, p)


def median_f0(track: PitchTrack) -> float:
    if not track.voiced.any():
        return 0.0
    return float(np.median(track.f0_hz[track.voiced]))


def gpe(reference: PitchTrack, test: PitchTrack, deviation=0.20) -> float:
    """Gross pitch error in percent over frames voiced in both tracks.

    The reference pitch is the denominator of the relative deviation.
    Returns 0 and warns when no frame is voiced in both.
    """
    n = min(len(reference), len(test))
    ref_f0, test_f0 = reference.f0_hz[:n], test.f0_hz[:n]
    joint = reference.voiced[:n] & test.voiced[:n]
    if not joint.any():
        warnings.warn("no jointly voiced frames; GPE reported as 0", NoJointVoicingWarning, stacklevel=2)
        return 0.0
    rel = np.abs(test_f0[joint] - ref_f0[joint]) / ref_f0[joint]
    return float(100.0 * np.mean(rel > deviation))


def spectral_distortion(ref: Waveform, test: Waveform, p: FrameParams | None = None, eps=1e-10) -> float:
    """Frame-averaged RMS log-spectral distance in dB."""
    p = p or FrameParams()
    n = min(len(ref), len(test))
    a = stft(ref.samples[:n], p).magnitude
    b = stft(test.samples[:n], p).magnitude
    if a.shape[0] == 0:
        raise MetricsError("signals share no complete frame")
    d = 20.0 * np.log10(a + eps) - 20.0 * np.log10(b + eps)
    return float(np.mean(np.sqrt(np.mean(d**2, axis=1))))


# ---------------------------------------------------------------- MOS


@dataclass(frozen=True)
class RatingRecord:
    label: str
    locale: str = ""
    source: str = ""

    def __post_init__(self):
        if self.label not in MOS_MIDPOINTS:
            raise MetricsError(f"unknown rating label {self.label!r}")


def parse_label(text: str) -> str:
    key = "_".join(text.strip().lower().replace("-", " ").split())
    if key not in MOS_MIDPOINTS:
        raise MetricsError(f"unknown rating label {text!r}")
    return key


def read_ratings(path) -> list[RatingRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if [h.strip().lower() for h in reader.fieldnames or []] != RATINGS_HEADER:
            raise MetricsError(f"{path}: ratings header must be {','.join(RATINGS_HEADER)}")
        return [
            RatingRecord(parse_label(r[reader.fieldnames[0]]), r[reader.fieldnames[1]], r[reader.fieldnames[2]])
            for r in reader
        ]


def aggregate_mos(records) -> float:
    if not records:
        raise MetricsError("no ratings to aggregate")
    return float(np.mean([MOS_MIDPOINTS[r.label] for r in records]))


def mos_band(score: float) -> str:
    """Similarity category whose band contains ``score``."""
    if score >= 4.0:
        return "very_similar"
    if score >= 3.0:
        return "moderately_similar"
    if score >= 2.0:
        return "slightly_similar"
    return "not_at_all_similar"


# ---------------------------------------------------------------- report


@dataclass
class ReportRow:
    accent: str
    dataset: str
    speaker_id: str
    gender: str
    mos: float | None = None
    gpe: float | None = None
    sd: float | None = None
    error: str | None = None

    def cells(self):
        def fmt(v):
            return "" if v is None else f"{v:.2f}"

        return [self.accent, self.dataset, self.speaker_id, self.gender, fmt(self.mos), fmt(self.gpe), fmt(self.sd)]


@dataclass
class ScoreReport:
    rows: list = field(default_factory=list)

    @property
    def errors(self):
        return [(r.speaker_id, r.error) for r in self.rows if r.error]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        for row in self.rows:
            writer.writerow(row.cells())
        return buf.getvalue()

    def write(self, path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")


@dataclass(frozen=True)
class ScoreRequest:
    accent: str
    dataset: str
    speaker_id: str
    gender: str
    ref_wav: Path
    test_wav: Path
    ratings: tuple | None = None


def score_row(req: ScoreRequest, p: FrameParams | None = None) -> ReportRow:
    row = ReportRow(req.accent, req.dataset, req.speaker_id, req.gender)
    if req.ratings:
        row.mos = aggregate_mos(req.ratings)
    try:
        ref, test = load_wav(req.ref_wav), load_wav(req.test_wav)
    except (OSError, ValueError) as exc:
        row.error = str(exc)
        return row
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NoJointVoicingWarning)
        row.gpe = gpe(track_pitch(ref, p), track_pitch(test, p))
    row.sd = spectral_distortion(ref, test, p)
    return row


def score_report(requests, p: FrameParams | None = None) -> ScoreReport:
    return ScoreReport([score_row(r, p) for r in requests])


def read_score_requests(path) -> list[ScoreRequest]:
    """Rows ``accent,dataset,speaker_id,gender,ref_wav,test_wav[,ratings_csv]``."""
    path = Path(path)
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            ratings = None
            if r.get("ratings_csv"):
                ratings = tuple(read_ratings(path.parent / r["ratings_csv"]))
            out.append(
                ScoreRequest(
                    r["accent"], r["dataset"], r["speaker_id"], r["gender"],
                    path.parent / r["ref_wav"], path.parent / r["test_wav"], ratings,
                )
            )
    return out
