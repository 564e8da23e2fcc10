"""First-order Ambisonics signals: plane-wave encoding, yaw rotation, M/S stereo downmix."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

DEFAULT_SAMPLE_RATE = 24000

# ACN channel order for order-1 SN3D material
CH_W, CH_Y, CH_Z, CH_X = 0, 1, 2, 3


@dataclass(frozen=True)
class SphericalDirection:
    """A direction on the sphere.

    Azimuth is counterclockwise-positive (left = +90 degrees) in [-180, 180),
    elevation is up-positive in [-90, 90].
    """

    azimuth_deg: float
    elevation_deg: float = 0.0

    def __post_init__(self):
        if not -180.0 <= self.azimuth_deg < 180.0:
            raise ValidationError(f"azimuth {self.azimuth_deg} outside [-180, 180)")
        if not -90.0 <= self.elevation_deg <= 90.0:
            raise ValidationError(f"elevation {self.elevation_deg} outside [-90, 90]")


@dataclass(frozen=True)
class FoaClip:
    """4-channel first-order Ambisonics buffer, ACN order [W, Y, Z, X], SN3D normalization."""

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != 4:
            raise ValidationError(f"FOA buffer must have shape (4, n), got {arr.shape}")
        if self.sample_rate <= 0:
            raise ValidationError(f"sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", arr)

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.num_samples / self.sample_rate

    @property
    def w(self) -> np.ndarray:
        return self.samples[CH_W]

    @property
    def y(self) -> np.ndarray:
        return self.samples[CH_Y]

    @property
    def z(self) -> np.ndarray:
        return self.samples[CH_Z]

    @property
    def x(self) -> np.ndarray:
        return self.samples[CH_X]


@dataclass(frozen=True)
class StereoClip:
    """2-channel [L, R] buffer."""

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != 2:
            raise ValidationError(f"stereo buffer must have shape (2, n), got {arr.shape}")
        if self.sample_rate <= 0:
            raise ValidationError(f"sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", arr)

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def left(self) -> np.ndarray:
        return self.samples[0]

    @property
    def right(self) -> np.ndarray:
        return self.samples[1]


def sn3d_gains(azimuth_deg: float, elevation_deg: float = 0.0) -> np.ndarray:
    """Order-1 SN3D channel gains [W, Y, Z, X] for a plane wave from the given direction."""
    az = math.radians(azimuth_deg)
    el = math.radians(elevation_deg)
    return np.array(
        [
            1.0,
            math.sin(az) * math.cos(el),
            math.sin(el),
            math.cos(az) * math.cos(el),
        ]
    )


def encode_plane_wave(
    signal: np.ndarray,
    direction: SphericalDirection,
    gain: float = 1.0,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> FoaClip:
    """Encode a mono signal as an FOA plane wave arriving from ``direction``.

    Args:
        signal: Mono sample buffer, shape (n,).
        direction: Arrival direction.
        gain: Scalar gain applied to every channel.
        sample_rate: Sample rate of the result.

    Returns:
        FoaClip with channels [g*s, g*sin(az)cos(el)*s, g*sin(el)*s, g*cos(az)cos(el)*s].
    """
    sig = np.asarray(signal, dtype=np.float64)
    if sig.ndim != 1:
        raise ValidationError(f"signal must be 1-D, got shape {sig.shape}")
    if sig.size == 0:
        raise ValidationError("signal is empty")
    gains = gain * sn3d_gains(direction.azimuth_deg, direction.elevation_deg)
    return FoaClip(gains[:, None] * sig[None, :], sample_rate)


def rotate_yaw(foa: FoaClip, yaw_deg: float, pitch_deg: float = 0.0, roll_deg: float = 0.0) -> FoaClip:
    """Rotate the sound field so the direction at azimuth ``yaw_deg`` becomes the new front.

    Satisfies rotate_yaw(encode_plane_wave(s, az), yaw) == encode_plane_wave(s, az - yaw).
    W and Z are unaffected by a pure yaw rotation. Pitch and roll are unsupported
    because the conversion pipeline fixes the vertical viewing angle at 0 degrees.
    """
    if pitch_deg != 0.0 or roll_deg != 0.0:
        raise ValidationError("pitch/roll rotation is unsupported; only yaw is available")
    if yaw_deg == 0.0:
        return FoaClip(foa.samples.copy(), foa.sample_rate)
    yaw = math.radians(yaw_deg)
    c, s = math.cos(yaw), math.sin(yaw)
    out = np.empty_like(foa.samples)
    out[CH_W] = foa.samples[CH_W]
    out[CH_Z] = foa.samples[CH_Z]
    out[CH_X] = c * foa.samples[CH_X] + s * foa.samples[CH_Y]
    out[CH_Y] = -s * foa.samples[CH_X] + c * foa.samples[CH_Y]
    return FoaClip(out, foa.sample_rate)


def foa_to_stereo(foa: FoaClip) -> StereoClip:
    """Downmix FOA to coincident M/S stereo: L = W + Y, R = W - Y.

    Equivalent to cardioid microphones pointing at +90 (left) and -90 (right)
    degrees. The Z and X channels are discarded.
    """
    left = foa.samples[CH_W] + foa.samples[CH_Y]
    right = foa.samples[CH_W] - foa.samples[CH_Y]
    return StereoClip(np.stack([left, right]), foa.sample_rate)
