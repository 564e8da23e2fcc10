"""Pipeline configuration: defaults, key = value files, flag overrides."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .errors import ConfigError, ParseError

INTERPOLATIONS = ("bilinear", "nearest")
BIT_DEPTHS = ("int16", "float32")


@dataclass(frozen=True)
class PipelineConfig:
    sample_rate: int = 24000
    clip_len_s: float = 5.0
    label_frame_s: float = 0.1
    hfov_deg: float = 100.0
    out_width: int = 640
    out_height: int = 360
    fps: float = 29.97
    doa_threshold_deg: float = 20.0
    rde_threshold: float = 1.0
    activity_threshold: float = 0.5
    yaw_step_deg: float = 1.0
    interpolation: str = "bilinear"
    wav_bit_depth: str = "int16"
    seed: int = 0
    jobs: int = 0

    def __post_init__(self):
        for name in ("sample_rate", "clip_len_s", "label_frame_s", "hfov_deg",
                     "out_width", "out_height", "fps", "doa_threshold_deg", "rde_threshold"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 < self.activity_threshold < 1.0:
            raise ConfigError(f"activity_threshold {self.activity_threshold} outside (0, 1)")
        if self.yaw_step_deg < 0:
            raise ConfigError(f"yaw_step_deg {self.yaw_step_deg} negative")
        if self.interpolation not in INTERPOLATIONS:
            raise ConfigError(f"interpolation must be one of {INTERPOLATIONS}")
        if self.wav_bit_depth not in BIT_DEPTHS:
            raise ConfigError(f"wav_bit_depth must be one of {BIT_DEPTHS}")
        if self.jobs < 0:
            raise ConfigError(f"jobs {self.jobs} negative")


_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _convert(key: str, raw: str):
    ftype = _FIELD_TYPES[key]
    try:
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {key}") from None


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; # starts a comment, blank lines skipped."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected key = value, got {raw.strip()!r}", line=lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ParseError(f"unknown config key {key!r}", line=lineno)
        if key in out:
            raise ParseError(f"duplicate config key {key!r}", line=lineno)
        out[key] = _convert(key, val)
    return out


def format_config(cfg: PipelineConfig) -> str:
    lines = []
    for f in fields(PipelineConfig):
        value = getattr(cfg, f.name)
        lines.append(f"{f.name} = {value:g}" if isinstance(value, float) else f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Defaults, then config-file keys, then explicit overrides."""
    values = {}
    if path is not None:
        with open(path) as fh:
            values.update(parse_config_text(fh.read()))
    if overrides:
        for key, val in overrides.items():
            if key not in _FIELD_TYPES:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = _convert(key, val) if isinstance(val, str) else val
    return PipelineConfig(**values)


def with_overrides(cfg: PipelineConfig, **kwargs) -> PipelineConfig:
    return replace(cfg, **kwargs)
