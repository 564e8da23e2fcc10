"""Parametric FOA scene renderer: direct-path encoding of moving dry sources.

Sources are placed by SN3D plane-wave encoding with inverse-distance gain.
Trajectories are sampled at 100 ms block centers and the per-channel gains
crossfade linearly between centers, so static sources render sample-exact and
moving ones avoid zipper noise. Labels are read at the same block centers.
An optional exponential diffuse tail stands in for measured room responses.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from . import kernels
from .audioio import read_wav_mono
from .errors import ParseError, ValidationError
from .foa import DEFAULT_SAMPLE_RATE, FoaClip, sn3d_gains
from .labels import (
    LABEL_FRAME_S,
    NUM_CLASSES,
    EventRecord,
    sort_records,
    wrap_degrees,
)

DISTANCE_FLOOR = 0.1
AMBIENT_AZIMUTHS = tuple(range(0, 360, 45))
DIFFUSE_CHANNEL_GAINS = (1.0, 1.0 / math.sqrt(3.0), 1.0 / math.sqrt(3.0), 1.0 / math.sqrt(3.0))


@dataclass(frozen=True)
class Keyframe:
    time_s: float
    azimuth_deg: float
    elevation_deg: float
    distance: float

    def __post_init__(self):
        if not self.distance > 0:
            raise ValidationError(f"keyframe distance {self.distance} not positive")
        if not -90.0 <= self.elevation_deg <= 90.0:
            raise ValidationError(f"keyframe elevation {self.elevation_deg} outside [-90, 90]")


@dataclass(frozen=True)
class SceneEvent:
    class_id: int
    sample_path: str
    onset_s: float
    keyframes: tuple
    source_id: int | None = None

    def __post_init__(self):
        if not 0 <= self.class_id < NUM_CLASSES:
            raise ValidationError(f"class id {self.class_id} outside [0, {NUM_CLASSES})")
        if self.onset_s < 0:
            raise ValidationError(f"onset {self.onset_s} negative")
        if not self.keyframes:
            raise ValidationError("event has no keyframes")
        object.__setattr__(self, "keyframes", tuple(self.keyframes))
        times = [k.time_s for k in self.keyframes]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValidationError("keyframe times not strictly increasing")


@dataclass(frozen=True)
class ReverbConfig:
    enabled: bool = False
    decay_time_s: float = 0.3
    direct_to_reverb_ratio: float = 4.0

    def __post_init__(self):
        if self.enabled:
            if not self.decay_time_s > 0:
                raise ValidationError(f"reverb decay {self.decay_time_s} not positive")
            if not self.direct_to_reverb_ratio > 0:
                raise ValidationError(
                    f"direct-to-reverb ratio {self.direct_to_reverb_ratio} not positive"
                )


@dataclass(frozen=True)
class SceneSpec:
    duration_s: float
    events: tuple = ()
    ambient_level: float = 0.0
    reverb: ReverbConfig = field(default_factory=ReverbConfig)
    seed: int = 0

    def __post_init__(self):
        if not self.duration_s > 0:
            raise ValidationError(f"scene duration {self.duration_s} not positive")
        if self.ambient_level < 0:
            raise ValidationError(f"ambient level {self.ambient_level} negative")
        object.__setattr__(self, "events", tuple(self.events))


class SampleBank:
    """Directory of mono dry samples with a class-to-file mapping.

    The manifest is a CSV ``class_id,wav_path`` with paths relative to the
    manifest's directory. Loaded samples are cached and validated to be mono
    at the expected rate.
    """

    def __init__(self, root, mapping, sample_rate: int = DEFAULT_SAMPLE_RATE):
        self.root = str(root)
        self.mapping = {int(k): list(v) for k, v in mapping.items()}
        self.sample_rate = sample_rate
        self._cache = {}

    @classmethod
    def from_manifest(cls, manifest_path, sample_rate: int = DEFAULT_SAMPLE_RATE):
        import csv

        with open(manifest_path) as fh:
            rows = [(i + 1, r) for i, r in enumerate(csv.reader(fh)) if r]
        if not rows or [c.strip() for c in rows[0][1]] != ["class_id", "wav_path"]:
            raise ParseError("sample manifest header must be class_id,wav_path")
        mapping = {}
        for lineno, row in rows[1:]:
            if len(row) != 2:
                raise ParseError(f"expected 2 columns, got {len(row)}", line=lineno)
            try:
                cid = int(row[0].strip())
            except ValueError:
                raise ParseError(f"bad class id {row[0]!r}", line=lineno) from None
            if not 0 <= cid < NUM_CLASSES:
                raise ParseError(f"class id {cid} outside [0, {NUM_CLASSES})", line=lineno)
            mapping.setdefault(cid, []).append(row[1].strip())
        return cls(os.path.dirname(os.path.abspath(manifest_path)), mapping, sample_rate)

    def classes(self):
        return sorted(cid for cid, paths in self.mapping.items() if paths)

    def paths_for(self, class_id: int):
        return list(self.mapping.get(class_id, []))

    def load(self, sample_path: str) -> np.ndarray:
        if sample_path in self._cache:
            return self._cache[sample_path]
        path = sample_path if os.path.isabs(sample_path) else os.path.join(self.root, sample_path)
        if not os.path.exists(path):
            raise ValidationError(f"missing sample {sample_path!r}")
        samples, _ = read_wav_mono(path, expect_rate=self.sample_rate)
        self._cache[sample_path] = samples
        return samples


def _trajectory_arrays(event: SceneEvent):
    t = np.array([k.time_s for k in event.keyframes], dtype=np.float64)
    az = np.array([k.azimuth_deg for k in event.keyframes], dtype=np.float64)
    el = np.array([k.elevation_deg for k in event.keyframes], dtype=np.float64)
    dist = np.array([k.distance for k in event.keyframes], dtype=np.float64)
    return t, az, el, dist


def trajectory_at(event: SceneEvent, times) -> tuple:
    """Linearly interpolated (azimuth, elevation, distance) at scene times.

    Times outside the keyframe span clamp to the nearest keyframe. Azimuth is
    interpolated on the raw keyframe values, so authors write continuous
    angle tracks; wrapping to [-180, 180) happens at label emission.
    """
    t, az, el, dist = _trajectory_arrays(event)
    times = np.asarray(times, dtype=np.float64)
    return np.interp(times, t, az), np.interp(times, t, el), np.interp(times, t, dist)


def _num_blocks(num_samples: int, sample_rate: int) -> int:
    block_len = int(round(LABEL_FRAME_S * sample_rate))
    return max(1, math.ceil(num_samples / block_len)), block_len


def _event_frames(event: SceneEvent, sample_len: int, duration_s: float,
                  sample_rate: int) -> range:
    active_s = min(sample_len / sample_rate, duration_s - event.onset_s)
    if active_s <= 0:
        return range(0)
    first = int(math.floor(event.onset_s / LABEL_FRAME_S + 1e-9))
    count = int(math.ceil(active_s / LABEL_FRAME_S - 1e-9))
    last_frame = int(math.ceil(duration_s / LABEL_FRAME_S - 1e-9)) - 1
    return range(first, min(first + count - 1, last_frame) + 1)


def render_event(event: SceneEvent, dry: np.ndarray, duration_s: float,
                 sample_rate: int = DEFAULT_SAMPLE_RATE,
                 backend: str | None = None) -> np.ndarray:
    """Render one event's direct path into a (4, n) buffer."""
    n = int(round(duration_s * sample_rate))
    nb, block_len = _num_blocks(n, sample_rate)
    centers = (np.arange(nb) + 0.5) * LABEL_FRAME_S
    az, el, dist = trajectory_at(event, centers)
    gains = np.empty((nb, 4), dtype=np.float64)
    for k in range(nb):
        gains[k] = sn3d_gains(az[k], el[k]) / max(dist[k], DISTANCE_FLOOR)
    start = int(round(event.onset_s * sample_rate))
    padded = np.zeros(n, dtype=np.float64)
    take = min(len(dry), n - start)
    if take > 0:
        padded[start:start + take] = dry[:take]
    return kernels.gain_ramp_mix(padded, gains, block_len, backend=backend)


def _reverb_tail(direct: np.ndarray, padded_dry: np.ndarray, reverb: ReverbConfig,
                 sample_rate: int, rng: np.random.Generator) -> np.ndarray:
    ir_len = max(1, int(round(reverb.decay_time_s * sample_rate)))
    # amplitude falls 60 dB over the decay time
    env = np.power(10.0, -3.0 * np.arange(ir_len) / (reverb.decay_time_s * sample_rate))
    tail = np.empty_like(direct)
    for ch in range(4):
        ir = rng.standard_normal(ir_len) * env * DIFFUSE_CHANNEL_GAINS[ch]
        tail[ch] = fftconvolve(padded_dry, ir)[: direct.shape[1]]
    direct_energy = float(np.sum(direct * direct))
    tail_energy = float(np.sum(tail * tail))
    if tail_energy > 0 and direct_energy > 0:
        tail *= math.sqrt(direct_energy / (reverb.direct_to_reverb_ratio * tail_energy))
    else:
        tail[:] = 0.0
    return tail


def make_ambient(duration_s: float, level: float, seed: int,
                 sample_rate: int = DEFAULT_SAMPLE_RATE) -> FoaClip:
    """Ambience bed: 8 uncorrelated noise plane waves every 45 degrees at el 0.

    Per-wave gain is level / sqrt(8), which puts the W-channel RMS at
    ``level`` for unit-variance noise.
    """
    if level < 0:
        raise ValidationError(f"ambient level {level} negative")
    n = int(round(duration_s * sample_rate))
    out = np.zeros((4, n), dtype=np.float64)
    if level > 0:
        rng = np.random.default_rng(seed)
        per_wave = level / math.sqrt(len(AMBIENT_AZIMUTHS))
        for az in AMBIENT_AZIMUTHS:
            gains = sn3d_gains(wrap_degrees(az), 0.0) * per_wave
            noise = rng.standard_normal(n)
            out += gains[:, None] * noise[None, :]
    return FoaClip(out, sample_rate)


def render_scene(spec: SceneSpec, bank: SampleBank,
                 backend: str | None = None) -> tuple:
    """Render a scene to (FoaClip, ground-truth EventRecord list).

    Events are summed over a shared buffer; each event's optional diffuse
    tail and the ambience bed draw from generators derived from the scene
    seed and the event index, so renders are deterministic however the
    per-event work is ordered.
    """
    sr = bank.sample_rate
    n = int(round(spec.duration_s * sr))
    out = np.zeros((4, n), dtype=np.float64)
    records = []
    seen = {}
    for idx, event in enumerate(spec.events):
        if event.onset_s >= spec.duration_s:
            raise ValidationError(f"event {idx}: onset {event.onset_s} beyond scene end")
        if event.keyframes[0].time_s < 0 or event.keyframes[-1].time_s > spec.duration_s:
            raise ValidationError(f"event {idx}: keyframes leave [0, {spec.duration_s}]")
        dry = bank.load(event.sample_path)
        source_id = event.source_id if event.source_id is not None else idx
        frames = _event_frames(event, len(dry), spec.duration_s, sr)
        for frame in frames:
            key = (frame, event.class_id, source_id)
            if key in seen:
                raise ValidationError(
                    f"events {seen[key]} and {idx}: class {event.class_id} source {source_id} "
                    f"collide at frame {frame}"
                )
            seen[key] = idx
        direct = render_event(event, dry, spec.duration_s, sr, backend=backend)
        out += direct
        if spec.reverb.enabled:
            start = int(round(event.onset_s * sr))
            padded = np.zeros(n, dtype=np.float64)
            take = min(len(dry), n - start)
            if take > 0:
                padded[start:start + take] = dry[:take]
            rng = np.random.default_rng([spec.seed, idx])
            out += _reverb_tail(direct, padded, spec.reverb, sr, rng)
        centers = (np.asarray(frames, dtype=np.float64) + 0.5) * LABEL_FRAME_S
        az, el, dist = trajectory_at(event, centers)
        for frame, a, e, d in zip(frames, az, el, dist):
            records.append(EventRecord(
                frame=frame,
                class_id=event.class_id,
                source_id=source_id,
                azimuth_deg=float(wrap_degrees(a)),
                distance=float(d),
                elevation_deg=float(e),
            ))
    if spec.ambient_level > 0:
        out += make_ambient(spec.duration_s, spec.ambient_level, spec.seed, sr).samples
    return FoaClip(out, sr), sort_records(records)


def make_random_scene(duration_s: float, seed: int, bank: SampleBank,
                      min_events: int = 1, max_events: int = 4,
                      ambient_level: float = 0.0,
                      reverb: ReverbConfig | None = None,
                      moving_fraction: float = 0.5) -> SceneSpec:
    """Draw a random scene over the bank's classes; deterministic per seed.

    Drawn values are canonicalized to their scene-file text form, so writing
    the scene out and parsing it back yields an equal spec.
    """
    classes = bank.classes()
    if not classes:
        raise ValidationError("sample bank has no classes")
    if not 0 <= min_events <= max_events:
        raise ValidationError(f"bad event count range [{min_events}, {max_events}]")
    rng = np.random.default_rng(seed)
    count = int(rng.integers(min_events, max_events + 1))
    t_end = _canon(duration_s - LABEL_FRAME_S)
    events = []
    for _ in range(count):
        cid = int(classes[rng.integers(len(classes))])
        paths = bank.paths_for(cid)
        path = paths[int(rng.integers(len(paths)))]
        onset = _canon(int(rng.integers(int(round(t_end / LABEL_FRAME_S)))) * LABEL_FRAME_S)
        az0 = _canon(rng.uniform(-180.0, 180.0))
        el0 = _canon(rng.uniform(-45.0, 45.0))
        dist0 = _canon(rng.uniform(0.5, 3.0))
        if rng.random() < moving_fraction:
            az1 = _canon(az0 + rng.uniform(-90.0, 90.0))
            kfs = (Keyframe(0.0, az0, el0, dist0),
                   Keyframe(t_end, az1, el0, dist0))
        else:
            kfs = (Keyframe(0.0, az0, el0, dist0),)
        events.append(SceneEvent(cid, path, onset, kfs))
    return SceneSpec(duration_s, tuple(events), ambient_level,
                     reverb if reverb is not None else ReverbConfig(), seed)


def _fmt(value: float) -> str:
    return f"{value:g}"


def _canon(value: float) -> float:
    # the float as it survives the scene-file round trip
    return float(_fmt(float(value)))


def format_scene(spec: SceneSpec) -> str:
    """Serialize a scene to the text form parse_scene reads."""
    lines = [
        f"duration = {_fmt(spec.duration_s)}",
        f"seed = {spec.seed}",
        f"ambient_level = {_fmt(spec.ambient_level)}",
        f"reverb = {'on' if spec.reverb.enabled else 'off'}",
    ]
    if spec.reverb.enabled:
        lines.append(f"reverb_decay = {_fmt(spec.reverb.decay_time_s)}")
        lines.append(f"direct_to_reverb = {_fmt(spec.reverb.direct_to_reverb_ratio)}")
    for event in spec.events:
        lines.append("")
        head = f"event class={event.class_id} sample={event.sample_path} onset={_fmt(event.onset_s)}"
        if event.source_id is not None:
            head += f" source={event.source_id}"
        lines.append(head)
        for k in event.keyframes:
            lines.append(f"at {_fmt(k.time_s)} {_fmt(k.azimuth_deg)} "
                         f"{_fmt(k.elevation_deg)} {_fmt(k.distance)}")
    return "\n".join(lines) + "\n"


def parse_scene(text: str) -> SceneSpec:
    """Parse the scene text format.

    Header lines are ``key = value`` (duration, seed, ambient_level, reverb,
    reverb_decay, direct_to_reverb). Each ``event`` line opens an event with
    ``key=value`` fields (class, sample, onset, optional source) followed by
    its ``at <time> <azimuth> <elevation> <distance>`` keyframe lines.
    """
    header = {}
    events = []
    current = None

    def close_current():
        nonlocal current
        if current is None:
            return
        fields, kfs, lineno = current
        if not kfs:
            raise ParseError("event has no keyframes", line=lineno)
        try:
            events.append(SceneEvent(fields["class"], fields["sample"], fields["onset"],
                                     tuple(kfs), fields.get("source")))
        except ValidationError as exc:
            raise ParseError(str(exc), line=lineno) from None
        current = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("event "):
            close_current()
            fields = {}
            for tok in line.split()[1:]:
                if "=" not in tok:
                    raise ParseError(f"bad event field {tok!r}", line=lineno)
                key, val = tok.split("=", 1)
                if key == "sample":
                    fields[key] = val
                elif key in ("class", "source"):
                    try:
                        fields[key] = int(val)
                    except ValueError:
                        raise ParseError(f"bad integer {val!r} for {key}", line=lineno) from None
                elif key == "onset":
                    try:
                        fields[key] = float(val)
                    except ValueError:
                        raise ParseError(f"bad number {val!r} for onset", line=lineno) from None
                else:
                    raise ParseError(f"unknown event field {key!r}", line=lineno)
            missing = [k for k in ("class", "sample", "onset") if k not in fields]
            if missing:
                raise ParseError(f"event missing {', '.join(missing)}", line=lineno)
            current = (fields, [], lineno)
        elif line.startswith("at ") or line == "at":
            if current is None:
                raise ParseError("keyframe outside an event", line=lineno)
            parts = line.split()[1:]
            if len(parts) != 4:
                raise ParseError(f"keyframe needs 4 values, got {len(parts)}", line=lineno)
            try:
                values = [float(p) for p in parts]
            except ValueError:
                raise ParseError("bad keyframe number", line=lineno) from None
            try:
                current[1].append(Keyframe(*values))
            except ValidationError as exc:
                raise ParseError(str(exc), line=lineno) from None
        elif "=" in line:
            if current is not None:
                raise ParseError("header line after events began", line=lineno)
            key, val = (s.strip() for s in line.split("=", 1))
            if key in header:
                raise ParseError(f"duplicate key {key!r}", line=lineno)
            if key == "reverb":
                if val not in ("on", "off"):
                    raise ParseError(f"reverb must be on or off, got {val!r}", line=lineno)
                header[key] = val == "on"
            elif key == "seed":
                try:
                    header[key] = int(val)
                except ValueError:
                    raise ParseError(f"bad integer {val!r}", line=lineno) from None
            elif key in ("duration", "ambient_level", "reverb_decay", "direct_to_reverb"):
                try:
                    header[key] = float(val)
                except ValueError:
                    raise ParseError(f"bad number {val!r}", line=lineno) from None
            else:
                raise ParseError(f"unknown key {key!r}", line=lineno)
        else:
            raise ParseError(f"cannot parse line {raw.strip()!r}", line=lineno)
    close_current()
    if "duration" not in header:
        raise ParseError("scene missing duration")
    reverb = ReverbConfig(
        enabled=header.get("reverb", False),
        decay_time_s=header.get("reverb_decay", ReverbConfig.decay_time_s),
        direct_to_reverb_ratio=header.get("direct_to_reverb",
                                          ReverbConfig.direct_to_reverb_ratio),
    )
    try:
        return SceneSpec(header["duration"], tuple(events),
                         header.get("ambient_level", 0.0), reverb, header.get("seed", 0))
    except ValidationError as exc:
        raise ParseError(str(exc)) from None


def read_scene(path) -> SceneSpec:
    with open(path) as fh:
        return parse_scene(fh.read())


def write_scene(path, spec: SceneSpec) -> None:
    with open(path, "w") as fh:
        fh.write(format_scene(spec))
