"""Frame-level localization-dependent scoring for stereo SELD outputs.

Detections are grouped per (frame, class). Within each cell, predictions and
references are paired by a minimum-cost assignment on absolute azimuth
difference. A matched pair is a true positive only when it passes the
azimuth and relative-distance gates (and, in the onscreen-gated variant,
carries an equal onscreen flag); a pair failing a gate costs one false
positive and one false negative. Localization errors average over all
class-matched pairs whether or not they pass the gates.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from itertools import combinations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ConfigError, ParseError, ValidationError
from .labels import CLASS_NAMES, NUM_CLASSES, EventRecord, fold_front_back

MAX_POLYPHONY = 3
MERGE_THRESHOLD_DEG = 15.0

# sentinel values reported when there is activity but no class-matched pair
NO_PAIR_DOA_ERROR_DEG = 180.0
NO_PAIR_REL_DIST_ERROR = 1.0


@dataclass(frozen=True)
class Detection:
    azimuth_deg: float
    distance: float
    onscreen: bool | None = None
    source_id: int = 0

    def __post_init__(self):
        if not -90.0 <= self.azimuth_deg <= 90.0:
            raise ValidationError(f"azimuth {self.azimuth_deg} outside folded range [-90, 90]")
        if not self.distance > 0:
            raise ValidationError(f"distance {self.distance} not positive")


class LabelSet:
    """Mapping (frame, class) -> detections, bounded by the polyphony cap."""

    def __init__(self, max_polyphony: int = MAX_POLYPHONY):
        if max_polyphony < 1:
            raise ValidationError(f"max polyphony {max_polyphony} < 1")
        self.max_polyphony = max_polyphony
        self._cells = {}

    @classmethod
    def from_records(cls, records, max_polyphony: int = MAX_POLYPHONY) -> "LabelSet":
        out = cls(max_polyphony)
        for r in records:
            out.add(r.frame, r.class_id, Detection(
                azimuth_deg=r.azimuth_deg,
                distance=r.distance,
                onscreen=r.onscreen,
                source_id=r.source_id,
            ))
        return out

    def add(self, frame: int, class_id: int, det: Detection) -> None:
        if not 0 <= class_id < NUM_CLASSES:
            raise ValidationError(f"class id {class_id} outside [0, {NUM_CLASSES})")
        if frame < 0:
            raise ValidationError(f"frame {frame} negative")
        cell = self._cells.setdefault((frame, class_id), [])
        if len(cell) >= self.max_polyphony:
            raise ValidationError(
                f"frame {frame} class {class_id}: more than {self.max_polyphony} detections"
            )
        cell.append(det)

    def cells(self):
        return sorted(self._cells.items())

    def get(self, frame: int, class_id: int):
        return list(self._cells.get((frame, class_id), ()))

    def keys(self):
        return set(self._cells)

    @property
    def num_detections(self) -> int:
        return sum(len(v) for v in self._cells.values())

    @property
    def all_flagged(self) -> bool:
        """True when every detection carries an onscreen flag (vacuously for empty)."""
        return all(d.onscreen is not None for v in self._cells.values() for d in v)

    def classes_present(self):
        return sorted({cid for (_, cid), v in self._cells.items() if v})

    def to_records(self) -> list:
        records = []
        for (frame, cid), dets in self.cells():
            for d in dets:
                records.append(EventRecord(
                    frame=frame, class_id=cid, source_id=d.source_id,
                    azimuth_deg=d.azimuth_deg, distance=d.distance, onscreen=d.onscreen,
                ))
        return records

    def map_detections(self, fn) -> "LabelSet":
        out = LabelSet(self.max_polyphony)
        for (frame, cid), dets in self.cells():
            for d in dets:
                out.add(frame, cid, fn(frame, cid, d))
        return out


@dataclass(frozen=True)
class MetricsConfig:
    doa_threshold_deg: float = 20.0
    rde_threshold: float = 1.0
    require_onscreen_match: bool = False
    class_count: int = NUM_CLASSES

    def __post_init__(self):
        if not self.doa_threshold_deg > 0:
            raise ValidationError(f"DOA threshold {self.doa_threshold_deg} not positive")
        if not self.rde_threshold > 0:
            raise ValidationError(f"distance threshold {self.rde_threshold} not positive")
        if self.class_count < 1:
            raise ValidationError(f"class count {self.class_count} < 1")


@dataclass
class ClassCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def support(self) -> int:
        return self.tp + self.fp + self.fn

    @property
    def f_score(self) -> float | None:
        if self.support == 0:
            return None
        return 2.0 * self.tp / (2.0 * self.tp + self.fp + self.fn)


@dataclass
class MetricsReport:
    """Headline metrics plus per-class counts behind the headline F."""

    macro_f: float
    doa_error_deg: float
    rel_dist_error: float
    matched_pairs: int
    macro_f_onoff: float | None = None
    onscreen_accuracy: float | None = None
    per_class: dict = field(default_factory=dict)

    def to_text(self) -> str:
        def pct(v):
            return "   n/a" if v is None else f"{100.0 * v:6.2f}"

        lines = [
            f"macro F (spatial gates)    {pct(self.macro_f)} %",
            f"macro F (+onscreen gate)   {pct(self.macro_f_onoff)} %",
            f"DOA error                  {self.doa_error_deg:6.2f} deg",
            f"relative distance error    {self.rel_dist_error:6.3f}",
            f"onscreen accuracy          {pct(self.onscreen_accuracy)} %",
            f"matched pairs              {self.matched_pairs:6d}",
            "",
            f"{'class':<32}{'TP':>6}{'FP':>6}{'FN':>6}{'F %':>8}",
        ]
        for cid in sorted(self.per_class):
            c = self.per_class[cid]
            name = CLASS_NAMES[cid] if cid < len(CLASS_NAMES) else str(cid)
            f_str = "   n/a" if c.f_score is None else f"{100.0 * c.f_score:6.2f}"
            lines.append(f"{name:<32}{c.tp:>6}{c.fp:>6}{c.fn:>6}{f_str:>8}")
        return "\n".join(lines) + "\n"

    def to_kv(self) -> str:
        lines = [
            f"macro_f = {self.macro_f!r}",
            f"doa_error_deg = {self.doa_error_deg!r}",
            f"rel_dist_error = {self.rel_dist_error!r}",
            f"matched_pairs = {self.matched_pairs}",
        ]
        if self.macro_f_onoff is not None:
            lines.append(f"macro_f_onoff = {self.macro_f_onoff!r}")
        if self.onscreen_accuracy is not None:
            lines.append(f"onscreen_accuracy = {self.onscreen_accuracy!r}")
        for cid in sorted(self.per_class):
            c = self.per_class[cid]
            lines.append(f"class_{cid} = {c.tp} {c.fp} {c.fn}")
        return "\n".join(lines) + "\n"


def parse_report_kv(text: str) -> MetricsReport:
    scalars = {}
    per_class = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"bad report line {raw!r}", line=lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        m = re.fullmatch(r"class_(\d+)", key)
        try:
            if m:
                tp, fp, fn = (int(t) for t in val.split())
                per_class[int(m.group(1))] = ClassCounts(tp, fp, fn)
            elif key == "matched_pairs":
                scalars[key] = int(val)
            else:
                scalars[key] = float(val)
        except ValueError:
            raise ParseError(f"bad value {val!r} for {key}", line=lineno) from None
    for req in ("macro_f", "doa_error_deg", "rel_dist_error", "matched_pairs"):
        if req not in scalars:
            raise ParseError(f"report missing {req}")
    return MetricsReport(
        macro_f=scalars["macro_f"],
        doa_error_deg=scalars["doa_error_deg"],
        rel_dist_error=scalars["rel_dist_error"],
        matched_pairs=scalars["matched_pairs"],
        macro_f_onoff=scalars.get("macro_f_onoff"),
        onscreen_accuracy=scalars.get("onscreen_accuracy"),
        per_class=per_class,
    )


def _binomial(m: int, k: int) -> int:
    return math.comb(m, k)


# cells this large never arise under the polyphony cap; beyond it the
# canonical subset enumeration would blow up, so fall back to a plain solver
_ENUM_LIMIT = 1000


def match_frame(preds, refs) -> list:
    """Minimum-cost pairing of one cell's detections on |azimuth difference|.

    Returns (pred_idx, ref_idx) pairs sorted by reference index; the smaller
    side is matched completely. Azimuths live in [-90, 90], so the absolute
    difference needs no wrap handling.

    The pairing is canonical, not merely cost-minimal: both sides are sorted
    by azimuth and aligned monotonically, and when the sides differ in size
    the larger side's participating subset is the cheapest one, first in
    index order on ties. Several assignments can share the minimum cost
    (e.g. two predictions on the same side of two references), and a generic
    assignment solver picks among them arbitrarily; the canonical rule makes
    the scorer's error averages reproducible. Sorted-monotone alignment is
    always cost-minimal for absolute differences on a line, so the total
    cost still matches any assignment solver. Oversized cells fall back to
    such a solver.
    """
    if not preds or not refs:
        return []
    p_az = [p.azimuth_deg for p in preds]
    r_az = [r.azimuth_deg for r in refs]
    k, m = min(len(p_az), len(r_az)), max(len(p_az), len(r_az))
    if _binomial(m, k) > _ENUM_LIMIT:
        cost = np.empty((len(p_az), len(r_az)), dtype=np.float64)
        for i, pa in enumerate(p_az):
            for j, ra in enumerate(r_az):
                cost[i, j] = abs(pa - ra)
        rows, cols = linear_sum_assignment(cost)
        return sorted(zip(rows.tolist(), cols.tolist()), key=lambda pr: pr[1])
    p_ord = sorted(range(len(p_az)), key=lambda i: (p_az[i], i))
    r_ord = sorted(range(len(r_az)), key=lambda j: (r_az[j], j))
    preds_small = len(p_az) <= len(r_az)
    if preds_small:
        small = [p_az[i] for i in p_ord]
        big = [r_az[j] for j in r_ord]
    else:
        small = [r_az[j] for j in r_ord]
        big = [p_az[i] for i in p_ord]
    best_pos = None
    best_cost = math.inf
    for pos in combinations(range(m), k):
        total = 0.0
        for a, t in zip(small, pos):
            total += abs(a - big[t])
        if total < best_cost:
            best_cost = total
            best_pos = pos
    if preds_small:
        pairs = [(p_ord[i], r_ord[best_pos[i]]) for i in range(k)]
    else:
        pairs = [(p_ord[best_pos[j]], r_ord[j]) for j in range(k)]
    return sorted(pairs, key=lambda pr: pr[1])


def score(preds: LabelSet, refs: LabelSet, cfg: MetricsConfig = MetricsConfig()) -> MetricsReport:
    """Score predictions against references.

    The spatial-gate F uses the azimuth and relative-distance thresholds; the
    onscreen-gated F additionally requires equal flags and is reported
    whenever both sets carry flags everywhere. With require_onscreen_match
    the onscreen-gated counts become the headline F and missing flags are a
    configuration error. Localization errors and onscreen accuracy average
    over all class-matched pairs; with activity but no matched pair they fall
    back to 180 degrees and 1.0 respectively.
    """
    flags_available = preds.all_flagged and refs.all_flagged
    if cfg.require_onscreen_match and not flags_available:
        raise ConfigError("onscreen matching requires onscreen flags on every detection")
    spatial = {cid: ClassCounts() for cid in range(cfg.class_count)}
    onoff = {cid: ClassCounts() for cid in range(cfg.class_count)} if flags_available else None
    doa_sum = 0.0
    rde_sum = 0.0
    pairs = 0
    flag_hits = 0
    for key in sorted(preds.keys() | refs.keys()):
        frame, cid = key
        if cid >= cfg.class_count:
            raise ValidationError(f"class id {cid} outside configured {cfg.class_count} classes")
        p_list = preds.get(frame, cid)
        r_list = refs.get(frame, cid)
        matched = match_frame(p_list, r_list)
        for pi, ri in matched:
            p, r = p_list[pi], r_list[ri]
            daz = abs(p.azimuth_deg - r.azimuth_deg)
            rde = abs(p.distance - r.distance) / r.distance
            doa_sum += daz
            rde_sum += rde
            pairs += 1
            ok = daz <= cfg.doa_threshold_deg and rde <= cfg.rde_threshold
            if ok:
                spatial[cid].tp += 1
            else:
                spatial[cid].fp += 1
                spatial[cid].fn += 1
            if onoff is not None:
                eq = p.onscreen == r.onscreen
                flag_hits += eq
                if ok and eq:
                    onoff[cid].tp += 1
                else:
                    onoff[cid].fp += 1
                    onoff[cid].fn += 1
        unmatched_p = len(p_list) - len(matched)
        unmatched_r = len(r_list) - len(matched)
        spatial[cid].fp += unmatched_p
        spatial[cid].fn += unmatched_r
        if onoff is not None:
            onoff[cid].fp += unmatched_p
            onoff[cid].fn += unmatched_r

    def macro(counts):
        scores = [c.f_score for c in counts.values() if c.support > 0]
        return float(np.mean(scores)) if scores else 1.0

    activity = preds.num_detections > 0 or refs.num_detections > 0
    if pairs > 0:
        doa = doa_sum / pairs
        rde = rde_sum / pairs
        acc = flag_hits / pairs if flags_available else None
    else:
        doa = NO_PAIR_DOA_ERROR_DEG if activity else 0.0
        rde = NO_PAIR_REL_DIST_ERROR if activity else 0.0
        acc = (0.0 if activity else 1.0) if flags_available else None
    primary = onoff if cfg.require_onscreen_match else spatial
    return MetricsReport(
        macro_f=macro(primary),
        doa_error_deg=doa,
        rel_dist_error=rde,
        matched_pairs=pairs,
        macro_f_onoff=macro(onoff) if onoff is not None else None,
        onscreen_accuracy=acc,
        per_class=primary,
    )


NUM_TRACKS = 3
ACCDOA_FIELDS = 4  # x, y, distance, onscreen score


def decode_multi_accdoa(frames, activity_threshold: float = 0.5,
                        max_polyphony: int = MAX_POLYPHONY) -> LabelSet:
    """Decode per-frame track activity arrays into a LabelSet.

    Each frame is a (3, 13, 4) array of (x, y, distance, onscreen score) per
    track and class. A slot is active when hypot(x, y) exceeds the activity
    threshold; its azimuth is atan2(y, x) folded into [-90, 90] and its flag
    is score > 0.5. Same-class tracks closer than 15 degrees merge, keeping
    the higher-magnitude one.
    """
    if not 0.0 < activity_threshold < 1.0:
        raise ValidationError(f"activity threshold {activity_threshold} outside (0, 1)")
    out = LabelSet(max_polyphony)
    for frame_idx, frame in enumerate(frames):
        arr = np.asarray(frame, dtype=np.float64)
        if arr.shape != (NUM_TRACKS, NUM_CLASSES, ACCDOA_FIELDS):
            raise ValidationError(
                f"frame {frame_idx}: expected shape {(NUM_TRACKS, NUM_CLASSES, ACCDOA_FIELDS)}, "
                f"got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f"frame {frame_idx}: non-finite values")
        for cid in range(NUM_CLASSES):
            active = []
            for track in range(NUM_TRACKS):
                x, y, dist, flag_score = arr[track, cid]
                mag = math.hypot(x, y)
                if mag > activity_threshold:
                    az = fold_front_back(math.degrees(math.atan2(y, x)))
                    active.append((mag, track, az, float(dist), bool(flag_score > 0.5)))
            active.sort(key=lambda t: -t[0])
            kept = []
            for mag, track, az, dist, flag in active:
                if any(abs(az - k[2]) < MERGE_THRESHOLD_DEG for k in kept):
                    continue
                kept.append((mag, track, az, dist, flag))
            for _, track, az, dist, flag in sorted(kept, key=lambda t: t[1]):
                out.add(frame_idx, cid, Detection(az, dist, flag, source_id=track))
    return out


def encode_multi_accdoa(labels: LabelSet, num_frames: int) -> list:
    """Inverse of decode_multi_accdoa for flagged label sets: unit activity vectors."""
    frames = [np.zeros((NUM_TRACKS, NUM_CLASSES, ACCDOA_FIELDS)) for _ in range(num_frames)]
    for (frame, cid), dets in labels.cells():
        if frame >= num_frames:
            raise ValidationError(f"frame {frame} beyond {num_frames} frames")
        if len(dets) > NUM_TRACKS:
            raise ValidationError(f"frame {frame} class {cid}: more than {NUM_TRACKS} tracks")
        for track, d in enumerate(dets):
            az = math.radians(d.azimuth_deg)
            frames[frame][track, cid] = (
                math.cos(az), math.sin(az), d.distance,
                1.0 if d.onscreen else 0.0,
            )
    return frames


def class_mean_distance(refs: LabelSet) -> dict:
    """Per-class mean labeled distance; classes with no labels are absent from the result."""
    sums = {}
    counts = {}
    for (_, cid), dets in refs.cells():
        for d in dets:
            sums[cid] = sums.get(cid, 0.0) + d.distance
            counts[cid] = counts.get(cid, 0) + 1
    return {cid: sums[cid] / counts[cid] for cid in sums}


def apply_distance_bias(preds: LabelSet, means: dict) -> LabelSet:
    """Replace every predicted distance by its class mean; other fields untouched."""
    missing = sorted(set(preds.classes_present()) - set(means))
    if missing:
        raise ValidationError(f"no class mean for classes: {', '.join(map(str, missing))}")
    return preds.map_detections(lambda f, cid, d: replace(d, distance=means[cid]))


def rank_systems(named_reports) -> list:
    """Order (name, report) pairs by headline macro F, best first; ties keep input order."""
    items = list(named_reports)
    items.sort(key=lambda nr: -nr[1].macro_f)
    return items
