"""Event metadata: CSV parsing, azimuth rotation, front-back folding, onscreen flagging."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace

from .errors import ParseError, ValidationError

LABEL_FRAME_S = 0.1

# STARSS23 target classes, id order fixed by the source dataset
CLASS_NAMES = (
    "Female speech, woman speaking",
    "Male speech, man speaking",
    "Clapping",
    "Telephone",
    "Laughter",
    "Domestic sounds",
    "Walk, footsteps",
    "Door, open or close",
    "Music",
    "Musical instrument",
    "Water tap, faucet",
    "Bell",
    "Knock",
)
NUM_CLASSES = len(CLASS_NAMES)
_NAME_TO_ID = {name: i for i, name in enumerate(CLASS_NAMES)}


def class_name(class_id: int) -> str:
    if not 0 <= class_id < NUM_CLASSES:
        raise ValidationError(f"class id {class_id} outside [0, {NUM_CLASSES - 1}]")
    return CLASS_NAMES[class_id]


def class_id(name: str) -> int:
    try:
        return _NAME_TO_ID[name]
    except KeyError:
        raise ValidationError(f"unknown class name {name!r}") from None


@dataclass(frozen=True)
class FovConfig:
    """Field of view used for onscreen flagging.

    ``vertical_fov_deg`` is None by default: the onscreen test is azimuth-only.
    """

    horizontal_fov_deg: float = 100.0
    vertical_fov_deg: float | None = None

    def __post_init__(self):
        if not 0.0 < self.horizontal_fov_deg < 360.0:
            raise ValidationError(f"horizontal FOV {self.horizontal_fov_deg} outside (0, 360)")
        if self.vertical_fov_deg is not None and not 0.0 < self.vertical_fov_deg < 180.0:
            raise ValidationError(f"vertical FOV {self.vertical_fov_deg} outside (0, 180)")


@dataclass(frozen=True)
class EventRecord:
    """One labeled sound-event frame.

    Source records (from the full-sphere recordings) carry elevation and no
    onscreen flag; stereo records carry an onscreen flag and no elevation.
    Frame indices are on the 100 ms label grid.
    """

    frame: int
    class_id: int
    source_id: int
    azimuth_deg: float
    distance: float
    elevation_deg: float | None = None
    onscreen: bool | None = None


def _check_common(rec: EventRecord) -> None:
    if rec.frame < 0:
        raise ValidationError(f"frame {rec.frame} negative")
    if not 0 <= rec.class_id < NUM_CLASSES:
        raise ValidationError(f"class id {rec.class_id} outside [0, {NUM_CLASSES - 1}]")
    if rec.source_id < 0:
        raise ValidationError(f"source id {rec.source_id} negative")
    if not rec.distance > 0:
        raise ValidationError(f"distance {rec.distance} not positive")


def validate_source_record(rec: EventRecord) -> None:
    _check_common(rec)
    if not -180.0 <= rec.azimuth_deg < 180.0:
        raise ValidationError(f"source azimuth {rec.azimuth_deg} outside [-180, 180)")
    if rec.elevation_deg is not None and not -90.0 <= rec.elevation_deg <= 90.0:
        raise ValidationError(f"elevation {rec.elevation_deg} outside [-90, 90]")
    if rec.onscreen is not None:
        raise ValidationError("source records must not carry an onscreen flag")


def validate_stereo_record(rec: EventRecord) -> None:
    _check_common(rec)
    if not -90.0 <= rec.azimuth_deg <= 90.0:
        raise ValidationError(f"stereo azimuth {rec.azimuth_deg} outside [-90, 90]")
    if rec.elevation_deg is not None:
        raise ValidationError("stereo records must not carry elevation")
    if rec.onscreen is None:
        raise ValidationError("stereo records must carry an onscreen flag")


def wrap_degrees(angle_deg: float) -> float:
    """Wrap an angle into [-180, 180)."""
    return (angle_deg + 180.0) % 360.0 - 180.0


def rotate_azimuth(azimuth_deg: float, yaw_deg: float) -> float:
    """Azimuth relative to a new front at ``yaw_deg``: wrap(azimuth - yaw)."""
    return wrap_degrees(azimuth_deg - yaw_deg)


def fold_front_back(azimuth_deg: float) -> float:
    """Reflect rear-hemisphere azimuths across the left-right axis into [-90, 90].

    sin(fold(a)) == sin(a), so the stereo inter-channel relation is unchanged.
    """
    if azimuth_deg > 90.0:
        return 180.0 - azimuth_deg
    if azimuth_deg < -90.0:
        return -180.0 - azimuth_deg
    return azimuth_deg


def onscreen_flag(azimuth_deg: float, fov: FovConfig | float = FovConfig(),
                  elevation_deg: float | None = None) -> bool:
    """Whether a rotated, UNFOLDED azimuth lies inside the horizontal FOV.

    Must be evaluated before front-back folding: a rear source folded into
    [-90, 90] stays offscreen. The FOV boundary is inclusive. When the config
    carries a vertical FOV and elevation is given, the vertical interval is
    tested as well.
    """
    if not isinstance(fov, FovConfig):
        fov = FovConfig(horizontal_fov_deg=float(fov))
    half = fov.horizontal_fov_deg / 2.0
    inside = abs(azimuth_deg) <= half
    if inside and fov.vertical_fov_deg is not None and elevation_deg is not None:
        inside = abs(elevation_deg) <= fov.vertical_fov_deg / 2.0
    return inside


def transform_clip_labels(records, yaw_deg: float, fov: FovConfig = FovConfig()) -> list[EventRecord]:
    """Convert source-schema records to stereo-schema records for a viewing yaw.

    Rotates azimuths to the new front, flags onscreen from the pre-fold
    azimuth, folds back-hemisphere azimuths to the front, drops elevation,
    and keeps distance unchanged.
    """
    out = []
    for rec in records:
        validate_source_record(rec)
        rotated = rotate_azimuth(rec.azimuth_deg, yaw_deg)
        flag = onscreen_flag(rotated, fov, rec.elevation_deg)
        out.append(
            EventRecord(
                frame=rec.frame,
                class_id=rec.class_id,
                source_id=rec.source_id,
                azimuth_deg=fold_front_back(rotated),
                distance=rec.distance,
                onscreen=flag,
            )
        )
    return sort_records(out)


def slice_frames(records, start_frame: int, num_frames: int) -> list[EventRecord]:
    """Keep records in [start_frame, start_frame + num_frames), rebased to frame 0."""
    out = [
        replace(rec, frame=rec.frame - start_frame)
        for rec in records
        if start_frame <= rec.frame < start_frame + num_frames
    ]
    return sort_records(out)


def sort_records(records) -> list[EventRecord]:
    return sorted(records, key=lambda r: (r.frame, r.class_id, r.source_id))


# CSV schemas: column layouts of the metadata files this toolkit reads and writes.
# "source"     frame,class,source,azimuth,elevation,distance   (full-sphere metadata)
# "stereo"     frame,class,source,azimuth,distance,onscreen    (this toolkit's output)
# "prediction" frame,class,source,azimuth,distance[,onscreen]  (system outputs)
SCHEMAS = ("source", "stereo", "prediction")


def _parse_float(text: str, what: str, line: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"bad {what} value {text!r}", line) from None


def _parse_int(text: str, what: str, line: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"bad {what} value {text!r}", line) from None


def parse_metadata(text: str, schema: str = "source") -> list[EventRecord]:
    """Parse metadata CSV text (no header row) into sorted, validated records.

    Raises ParseError with the offending line number for malformed rows and
    ValidationError for out-of-range values.
    """
    if schema not in SCHEMAS:
        raise ValidationError(f"unknown schema {schema!r}, expected one of {SCHEMAS}")
    records = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        width = len(row)
        if schema == "source" and width != 6:
            raise ParseError(f"expected 6 columns, got {width}", lineno)
        if schema == "stereo" and width != 6:
            raise ParseError(f"expected 6 columns, got {width}", lineno)
        if schema == "prediction" and width not in (5, 6):
            raise ParseError(f"expected 5 or 6 columns, got {width}", lineno)
        frame = _parse_int(row[0].strip(), "frame", lineno)
        cls = _parse_int(row[1].strip(), "class", lineno)
        src = _parse_int(row[2].strip(), "source", lineno)
        azimuth = _parse_float(row[3].strip(), "azimuth", lineno)
        if schema == "source":
            elevation = _parse_float(row[4].strip(), "elevation", lineno)
            distance = _parse_float(row[5].strip(), "distance", lineno)
            rec = EventRecord(frame, cls, src, azimuth, distance, elevation_deg=elevation)
        else:
            distance = _parse_float(row[4].strip(), "distance", lineno)
            onscreen = None
            if width == 6:
                flag = row[5].strip()
                if flag not in ("0", "1"):
                    raise ParseError(f"onscreen flag must be 0 or 1, got {flag!r}", lineno)
                onscreen = flag == "1"
            rec = EventRecord(frame, cls, src, azimuth, distance, onscreen=onscreen)
        try:
            if schema == "source":
                validate_source_record(rec)
            elif schema == "stereo":
                validate_stereo_record(rec)
            else:
                _check_common(rec)
                if not -90.0 <= rec.azimuth_deg <= 90.0:
                    raise ValidationError(f"azimuth {rec.azimuth_deg} outside [-90, 90]")
        except ValidationError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from None
        records.append(rec)
    return sort_records(records)


def _fmt_num(value: float) -> str:
    return f"{value:g}"


def format_metadata(records, schema: str = "stereo") -> str:
    """Serialize records as CSV text in the given schema, sorted, no header."""
    if schema not in SCHEMAS:
        raise ValidationError(f"unknown schema {schema!r}, expected one of {SCHEMAS}")
    lines = []
    for rec in sort_records(records):
        head = f"{rec.frame},{rec.class_id},{rec.source_id},{_fmt_num(rec.azimuth_deg)}"
        if schema == "source":
            elevation = 0.0 if rec.elevation_deg is None else rec.elevation_deg
            lines.append(f"{head},{_fmt_num(elevation)},{_fmt_num(rec.distance)}")
        elif schema == "stereo":
            if rec.onscreen is None:
                raise ValidationError("stereo schema requires an onscreen flag on every record")
            lines.append(f"{head},{_fmt_num(rec.distance)},{int(rec.onscreen)}")
        else:
            tail = f",{int(rec.onscreen)}" if rec.onscreen is not None else ""
            lines.append(f"{head},{_fmt_num(rec.distance)}{tail}")
    return "\n".join(lines) + ("\n" if lines else "")


def read_metadata_file(path, schema: str = "source") -> list[EventRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_metadata(fh.read(), schema)


def write_metadata_file(path, records, schema: str = "stereo") -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_metadata(records, schema))
