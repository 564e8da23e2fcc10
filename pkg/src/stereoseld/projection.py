"""Equirectangular 360 frames to perspective pinhole views at a fixed yaw."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

from . import kernels
from .errors import ValidationError
from .labels import wrap_degrees

VIDEO_FPS = 29.97
DEFAULT_OUT_W = 640
DEFAULT_OUT_H = 360
DEFAULT_HFOV_DEG = 100.0


@dataclass(frozen=True)
class ProjectionMap:
    """Precomputed per-output-pixel fractional source coordinates into an equirect grid.

    Longitude is left-positive in [-180, 180) so image position and label
    azimuth share a sign convention; latitude is up-positive. Source columns
    wrap horizontally, source rows clamp vertically.
    """

    src_cols: np.ndarray
    src_rows: np.ndarray
    out_w: int
    out_h: int
    yaw_deg: float
    hfov_deg: float
    eq_w: int
    eq_h: int
    focal_px: float


def focal_length_px(hfov_deg: float, out_w: int) -> float:
    return (out_w / 2.0) / math.tan(math.radians(hfov_deg / 2.0))


def implied_vfov_deg(hfov_deg: float, out_w: int, out_h: int) -> float:
    """Vertical FOV implied by the pinhole model and the output aspect ratio."""
    return 2.0 * math.degrees(math.atan(math.tan(math.radians(hfov_deg / 2.0)) * out_h / out_w))


def pixel_to_lonlat(col, row, yaw_deg: float, hfov_deg: float = DEFAULT_HFOV_DEG,
                    out_w: int = DEFAULT_OUT_W, out_h: int = DEFAULT_OUT_H):
    """Longitude/latitude seen by output pixel (col, row); the optical axis is (out_w/2, out_h/2)."""
    f = focal_length_px(hfov_deg, out_w)
    u = np.asarray(col, dtype=np.float64) - out_w / 2.0
    v = np.asarray(row, dtype=np.float64) - out_h / 2.0
    lon = wrap_degrees(yaw_deg + np.degrees(np.arctan2(-u, f)))
    lat = np.degrees(np.arctan2(-v, np.hypot(f, u)))
    return lon, lat


def lonlat_to_pixel(lon_deg, lat_deg, yaw_deg: float, hfov_deg: float = DEFAULT_HFOV_DEG,
                    out_w: int = DEFAULT_OUT_W, out_h: int = DEFAULT_OUT_H):
    """Inverse pinhole: output pixel coordinates at which (lon, lat) appears.

    Directions behind the camera map to NaN.
    """
    f = focal_length_px(hfov_deg, out_w)
    dlon = np.radians(np.asarray(lon_deg, dtype=np.float64) - yaw_deg)
    lat = np.radians(np.asarray(lat_deg, dtype=np.float64))
    fwd = np.cos(lat) * np.cos(dlon)
    left = np.cos(lat) * np.sin(dlon)
    up = np.sin(lat)
    with np.errstate(divide="ignore", invalid="ignore"):
        col = np.where(fwd > 0, out_w / 2.0 - f * left / fwd, np.nan)
        row = np.where(fwd > 0, out_h / 2.0 - f * up / fwd, np.nan)
    return col, row


def lonlat_to_equirect(lon_deg, lat_deg, eq_w: int, eq_h: int):
    """Fractional equirect sampling coordinates (col, row) with pixel centers at integers."""
    lon = np.asarray(lon_deg, dtype=np.float64)
    lat = np.asarray(lat_deg, dtype=np.float64)
    src_col = ((180.0 - lon) % 360.0) / 360.0 * eq_w - 0.5
    src_row = (90.0 - lat) / 180.0 * eq_h - 0.5
    return src_col, src_row


def equirect_col_center_lon(col: int, eq_w: int) -> float:
    """Longitude at the center of an equirect pixel column."""
    return wrap_degrees(180.0 - (col + 0.5) / eq_w * 360.0)


def build_map(yaw_deg: float, hfov_deg: float = DEFAULT_HFOV_DEG,
              out_w: int = DEFAULT_OUT_W, out_h: int = DEFAULT_OUT_H,
              eq_w: int = 0, eq_h: int = 0) -> ProjectionMap:
    """Build the per-pixel sampling map for a perspective view at ``yaw_deg``.

    Args:
        yaw_deg: Viewing azimuth; the output center column looks at this longitude.
        hfov_deg: Horizontal field of view; must be in (0, 180).
        out_w, out_h: Output dimensions.
        eq_w, eq_h: Source equirect dimensions; eq_w must equal 2 * eq_h.

    Returns:
        ProjectionMap with fractional source coordinates for every output pixel.
    """
    if not 0.0 < hfov_deg < 180.0:
        raise ValidationError(f"horizontal FOV {hfov_deg} outside (0, 180)")
    if out_w <= 0 or out_h <= 0:
        raise ValidationError(f"bad output dims {out_w}x{out_h}")
    if eq_w <= 0 or eq_h <= 0 or eq_w != 2 * eq_h:
        raise ValidationError(f"equirect dims must satisfy width == 2 * height, got {eq_w}x{eq_h}")
    cols = np.arange(out_w, dtype=np.float64)
    rows = np.arange(out_h, dtype=np.float64)
    cgrid, rgrid = np.meshgrid(cols, rows)
    lon, lat = pixel_to_lonlat(cgrid, rgrid, yaw_deg, hfov_deg, out_w, out_h)
    src_cols, src_rows = lonlat_to_equirect(lon, lat, eq_w, eq_h)
    return ProjectionMap(
        src_cols=src_cols,
        src_rows=src_rows,
        out_w=out_w,
        out_h=out_h,
        yaw_deg=yaw_deg,
        hfov_deg=hfov_deg,
        eq_w=eq_w,
        eq_h=eq_h,
        focal_px=focal_length_px(hfov_deg, out_w),
    )


def project(frame: np.ndarray, pmap: ProjectionMap, interpolation: str = "bilinear",
            backend: str | None = None) -> np.ndarray:
    """Render one perspective frame from an equirect frame through a sampling map.

    ``interpolation`` is "bilinear" (default) or "nearest". uint8 input yields
    uint8 output; float input stays float64.
    """
    arr = np.asarray(frame)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValidationError(f"expected (H, W, C) frame, got shape {frame.shape}")
    if arr.shape[0] != pmap.eq_h or arr.shape[1] != pmap.eq_w:
        raise ValidationError(
            f"frame dims {arr.shape[1]}x{arr.shape[0]} do not match map {pmap.eq_w}x{pmap.eq_h}"
        )
    was_uint8 = arr.dtype == np.uint8
    img = np.ascontiguousarray(arr, dtype=np.float64)
    if interpolation == "bilinear":
        out = kernels.remap_bilinear(img, pmap.src_cols, pmap.src_rows, backend=backend)
    elif interpolation == "nearest":
        out = kernels.remap_nearest(img, pmap.src_cols, pmap.src_rows, backend=backend)
    else:
        raise ValidationError(f"unknown interpolation {interpolation!r}")
    if frame.ndim == 2:
        out = out[:, :, 0]
    if was_uint8:
        out = np.clip(np.round(out), 0, 255).astype(np.uint8)
    return out


def frames_per_clip(clip_len_s: float, fps: float = VIDEO_FPS) -> int:
    """Number of video frames written per clip: floor(len * fps) + 1 (frame 0 included)."""
    return int(math.floor(clip_len_s * fps)) + 1


def frame_index_for_time(t_s: float, fps: float = VIDEO_FPS) -> int:
    """Nearest frame index for a time; frame i sits at i / fps seconds."""
    return int(round(t_s * fps))


def time_for_frame(index: int, fps: float = VIDEO_FPS) -> float:
    return index / fps


def frame_filename(index: int) -> str:
    return f"{index:06d}.png"


def load_frame(path) -> np.ndarray:
    """Read a PNG frame as an (H, W, 3) uint8 RGB array."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def save_frame(path, frame: np.ndarray) -> None:
    arr = np.asarray(frame)
    if arr.dtype != np.uint8:
        arr = np.clip(np.round(arr), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)
