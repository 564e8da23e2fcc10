"""Clip sampling: duration-weighted recording choice, uniform start, uniform yaw."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ParseError, ValidationError

DEFAULT_CLIP_LEN_S = 5.0
START_STEP_S = 0.1
DEFAULT_YAW_STEP_DEG = 1.0

INDEX_HEADER = ["recording_id", "duration_s", "audio_path", "frames_dir", "metadata_path"]
MANIFEST_HEADER = ["clip_id", "recording_id", "start_s", "yaw_deg", "seed"]


@dataclass(frozen=True)
class IndexEntry:
    recording_id: str
    duration_s: float
    audio_path: str
    frames_dir: str
    metadata_path: str

    def __post_init__(self):
        if not self.recording_id:
            raise ValidationError("empty recording_id")
        if not self.duration_s > 0:
            raise ValidationError(f"recording {self.recording_id}: duration {self.duration_s} not positive")


class RecordingIndex:
    """Ordered set of source recordings with unique ids."""

    def __init__(self, entries):
        entries = list(entries)
        seen = set()
        for e in entries:
            if e.recording_id in seen:
                raise ValidationError(f"duplicate recording_id {e.recording_id!r}")
            seen.add(e.recording_id)
        self.entries = entries

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def by_id(self, recording_id: str) -> IndexEntry:
        for e in self.entries:
            if e.recording_id == recording_id:
                return e
        raise KeyError(recording_id)

    @property
    def total_duration_s(self) -> float:
        return float(sum(e.duration_s for e in self.entries))


@dataclass(frozen=True)
class ClipSpec:
    recording_id: str
    start_s: float
    yaw_deg: float
    clip_len_s: float = DEFAULT_CLIP_LEN_S

    def __post_init__(self):
        if self.start_s < 0:
            raise ValidationError(f"start {self.start_s} negative")
        if not 0.0 <= self.yaw_deg < 360.0:
            raise ValidationError(f"yaw {self.yaw_deg} outside [0, 360)")
        if not self.clip_len_s > 0:
            raise ValidationError(f"clip length {self.clip_len_s} not positive")


def sample_clips(index: RecordingIndex, n: int, clip_len_s: float = DEFAULT_CLIP_LEN_S,
                 seed: int = 0, yaw_step_deg: float = DEFAULT_YAW_STEP_DEG,
                 start_step_s: float = START_STEP_S) -> list[ClipSpec]:
    """Draw ``n`` clip specs from a recording index.

    Recordings are chosen with probability proportional to duration, the start
    time uniformly on a 100 ms grid within the valid range, and the yaw
    uniformly over [0, 360) on a ``yaw_step_deg`` grid (pass 0 for continuous
    yaw). One seeded generator drives all draws in a fixed per-clip order
    (recording, start, yaw), so a given seed reproduces the same list anywhere.
    Start and yaw are canonicalized to their manifest text form, so writing
    and re-reading a manifest yields the identical specs.
    """
    if n < 0:
        raise ValidationError(f"clip count {n} negative")
    if len(index) == 0:
        raise ConfigError("empty recording index")
    short = [e.recording_id for e in index if e.duration_s < clip_len_s]
    if short:
        raise ConfigError(
            f"recordings shorter than clip length {clip_len_s} s: {', '.join(short)}"
        )
    durations = np.array([e.duration_s for e in index], dtype=np.float64)
    cum = np.cumsum(durations)
    total = cum[-1]
    rng = np.random.default_rng(seed)
    if yaw_step_deg > 0:
        n_yaw = int(round(360.0 / yaw_step_deg))
    specs = []
    for _ in range(n):
        rec_idx = int(np.searchsorted(cum, rng.random() * total, side="right"))
        rec_idx = min(rec_idx, len(index) - 1)
        entry = index[rec_idx]
        # +1e-9 guards the floor against slack-divided-by-step landing a hair low
        n_starts = int(np.floor((entry.duration_s - clip_len_s) / start_step_s + 1e-9)) + 1
        start_s = canonical_value(int(rng.integers(n_starts)) * start_step_s)
        if yaw_step_deg > 0:
            yaw_deg = canonical_value(float(rng.integers(n_yaw)) * yaw_step_deg)
        else:
            yaw_deg = canonical_value(float(rng.uniform(0.0, 360.0)))
        specs.append(ClipSpec(entry.recording_id, start_s, yaw_deg, clip_len_s))
    return specs


def make_clip_id(i: int, prefix: str = "clip") -> str:
    return f"{prefix}{i:06d}"


def _fmt(value: float) -> str:
    return f"{value:g}"


def canonical_value(x: float) -> float:
    """The float as it survives the CSV round trip; 0.1-grid products come back clean."""
    return float(_fmt(x))


def format_index(index: RecordingIndex) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(INDEX_HEADER)
    for e in index:
        w.writerow([e.recording_id, _fmt(e.duration_s), e.audio_path, e.frames_dir, e.metadata_path])
    return buf.getvalue()


def parse_index(text: str) -> RecordingIndex:
    rows = list(csv.reader(io.StringIO(text)))
    rows = [(i + 1, r) for i, r in enumerate(rows) if r]
    if not rows or [c.strip() for c in rows[0][1]] != INDEX_HEADER:
        raise ParseError(f"index header must be {','.join(INDEX_HEADER)}")
    entries = []
    for lineno, row in rows[1:]:
        if len(row) != len(INDEX_HEADER):
            raise ParseError(f"expected {len(INDEX_HEADER)} columns, got {len(row)}", line=lineno)
        rid, dur, audio, frames, meta = (c.strip() for c in row)
        try:
            duration_s = float(dur)
        except ValueError:
            raise ParseError(f"bad duration {dur!r}", line=lineno) from None
        try:
            entries.append(IndexEntry(rid, duration_s, audio, frames, meta))
        except ValidationError as exc:
            raise ParseError(str(exc), line=lineno) from None
    return RecordingIndex(entries)


def write_index(path, index: RecordingIndex) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(format_index(index))


def read_index(path) -> RecordingIndex:
    with open(path) as fh:
        return parse_index(fh.read())


def format_manifest(specs, seed: int, prefix: str = "clip") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MANIFEST_HEADER)
    for i, spec in enumerate(specs):
        w.writerow([make_clip_id(i, prefix), spec.recording_id,
                    _fmt(spec.start_s), _fmt(spec.yaw_deg), seed])
    return buf.getvalue()


def parse_manifest(text: str, clip_len_s: float = DEFAULT_CLIP_LEN_S):
    """Parse a clip manifest; returns (list of (clip_id, ClipSpec), seed)."""
    rows = list(csv.reader(io.StringIO(text)))
    rows = [(i + 1, r) for i, r in enumerate(rows) if r]
    if not rows or [c.strip() for c in rows[0][1]] != MANIFEST_HEADER:
        raise ParseError(f"manifest header must be {','.join(MANIFEST_HEADER)}")
    clips = []
    seed = None
    seen = set()
    for lineno, row in rows[1:]:
        if len(row) != len(MANIFEST_HEADER):
            raise ParseError(f"expected {len(MANIFEST_HEADER)} columns, got {len(row)}", line=lineno)
        cid, rid, start, yaw, row_seed = (c.strip() for c in row)
        if cid in seen:
            raise ParseError(f"duplicate clip_id {cid!r}", line=lineno)
        seen.add(cid)
        try:
            spec = ClipSpec(rid, float(start), float(yaw), clip_len_s)
            row_seed = int(row_seed)
        except ValueError:
            raise ParseError("bad numeric field", line=lineno) from None
        except ValidationError as exc:
            raise ParseError(str(exc), line=lineno) from None
        if seed is None:
            seed = row_seed
        elif row_seed != seed:
            raise ParseError(f"seed {row_seed} differs from {seed}", line=lineno)
        clips.append((cid, spec))
    return clips, seed


def write_manifest(path, specs, seed: int, prefix: str = "clip") -> None:
    with open(path, "w", newline="") as fh:
        fh.write(format_manifest(specs, seed, prefix))


def read_manifest(path, clip_len_s: float = DEFAULT_CLIP_LEN_S):
    with open(path) as fh:
        return parse_manifest(fh.read(), clip_len_s)
