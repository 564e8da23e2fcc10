"""Hot numeric kernels, each with a numba-jitted and a pure-numpy implementation.

The jitted path is used when numba imports cleanly; set STEREOSELD_NO_NUMBA=1
to force the numpy path (benchmarks/bench_kernels.py compares the two).
Both paths compute identical arithmetic so results match bit for bit.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import ValidationError

NUMBA_DISABLED = os.environ.get("STEREOSELD_NO_NUMBA", "") not in ("", "0")
HAVE_NUMBA = False
if not NUMBA_DISABLED:
    try:
        from numba import njit, prange

        HAVE_NUMBA = True
    except ImportError:
        pass

DEFAULT_BACKEND = "numba" if HAVE_NUMBA else "numpy"


def _resolve_backend(backend):
    if backend is None:
        return DEFAULT_BACKEND
    if backend not in ("numba", "numpy"):
        raise ValidationError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise ValidationError("numba backend requested but numba is unavailable or disabled")
    return backend


# ---------------------------------------------------------------------------
# Image remapping: gather source pixels at fractional coordinates with
# horizontal wrap-around and vertical clamping.

def _remap_bilinear_numpy(img, src_cols, src_rows):
    eq_h, eq_w = img.shape[0], img.shape[1]
    j0 = np.floor(src_cols).astype(np.int64)
    a = src_cols - j0
    j0w = j0 % eq_w
    j1w = (j0 + 1) % eq_w
    r0 = np.floor(src_rows).astype(np.int64)
    b = src_rows - r0
    r0c = np.clip(r0, 0, eq_h - 1)
    r1c = np.clip(r0 + 1, 0, eq_h - 1)
    a = a[..., None]
    b = b[..., None]
    top = (1.0 - a) * img[r0c, j0w] + a * img[r0c, j1w]
    bot = (1.0 - a) * img[r1c, j0w] + a * img[r1c, j1w]
    return (1.0 - b) * top + b * bot


def _remap_nearest_numpy(img, src_cols, src_rows):
    eq_h, eq_w = img.shape[0], img.shape[1]
    j = np.floor(src_cols + 0.5).astype(np.int64) % eq_w
    r = np.clip(np.floor(src_rows + 0.5).astype(np.int64), 0, eq_h - 1)
    return img[r, j].copy()


if HAVE_NUMBA:

    @njit(cache=True, parallel=True)
    def _remap_bilinear_jit(img, src_cols, src_rows, out):
        eq_h, eq_w, nch = img.shape
        out_h, out_w = src_cols.shape
        for i in prange(out_h):
            for j in range(out_w):
                c = src_cols[i, j]
                r = src_rows[i, j]
                j0 = int(np.floor(c))
                a = c - j0
                j0w = j0 % eq_w
                j1w = (j0 + 1) % eq_w
                r0 = int(np.floor(r))
                b = r - r0
                r0c = min(max(r0, 0), eq_h - 1)
                r1c = min(max(r0 + 1, 0), eq_h - 1)
                for ch in range(nch):
                    top = (1.0 - a) * img[r0c, j0w, ch] + a * img[r0c, j1w, ch]
                    bot = (1.0 - a) * img[r1c, j0w, ch] + a * img[r1c, j1w, ch]
                    out[i, j, ch] = (1.0 - b) * top + b * bot

    @njit(cache=True, parallel=True)
    def _remap_nearest_jit(img, src_cols, src_rows, out):
        eq_h, eq_w, nch = img.shape
        out_h, out_w = src_cols.shape
        for i in prange(out_h):
            for j in range(out_w):
                jj = int(np.floor(src_cols[i, j] + 0.5)) % eq_w
                rr = min(max(int(np.floor(src_rows[i, j] + 0.5)), 0), eq_h - 1)
                for ch in range(nch):
                    out[i, j, ch] = img[rr, jj, ch]


def remap_bilinear(img: np.ndarray, src_cols: np.ndarray, src_rows: np.ndarray,
                   backend: str | None = None) -> np.ndarray:
    """Sample ``img`` (H, W, C) float64 at fractional (row, col) coordinates.

    Columns wrap around the horizontal seam, rows clamp at the poles.
    """
    backend = _resolve_backend(backend)
    if backend == "numpy":
        return _remap_bilinear_numpy(img, src_cols, src_rows)
    out = np.empty(src_cols.shape + (img.shape[2],), dtype=np.float64)
    _remap_bilinear_jit(img, src_cols, src_rows, out)
    return out


def remap_nearest(img: np.ndarray, src_cols: np.ndarray, src_rows: np.ndarray,
                  backend: str | None = None) -> np.ndarray:
    backend = _resolve_backend(backend)
    if backend == "numpy":
        return _remap_nearest_numpy(img, src_cols, src_rows)
    out = np.empty(src_cols.shape + (img.shape[2],), dtype=np.float64)
    _remap_nearest_jit(img, src_cols, src_rows, out)
    return out


# ---------------------------------------------------------------------------
# Per-sample gain ramps: channel gains given at 100 ms block centers are
# linearly interpolated per sample and applied to a mono signal. Equivalent
# to crossfading consecutive static block renders, so moving sources render
# without zipper noise.

def _gain_ramp_numpy(signal, block_gains, block_len):
    n = signal.shape[0]
    nb, nch = block_gains.shape
    out = np.empty((nch, n), dtype=np.float64)
    if nb == 1:
        for ch in range(nch):
            out[ch] = block_gains[0, ch] * signal
        return out
    t = np.arange(n, dtype=np.float64) / block_len - 0.5
    k0 = np.floor(t).astype(np.int64)
    f = t - k0
    f = np.where(k0 < 0, 0.0, np.where(k0 > nb - 2, 1.0, f))
    k0 = np.clip(k0, 0, nb - 2)
    for ch in range(nch):
        g = block_gains[k0, ch] + (block_gains[k0 + 1, ch] - block_gains[k0, ch]) * f
        out[ch] = g * signal
    return out


if HAVE_NUMBA:

    @njit(cache=True)
    def _gain_ramp_jit(signal, block_gains, block_len, out):
        n = signal.shape[0]
        nb, nch = block_gains.shape
        if nb == 1:
            for ch in range(nch):
                for p in range(n):
                    out[ch, p] = block_gains[0, ch] * signal[p]
            return
        for p in range(n):
            t = p / block_len - 0.5
            k0 = int(np.floor(t))
            if k0 < 0:
                k0 = 0
                f = 0.0
            elif k0 > nb - 2:
                k0 = nb - 2
                f = 1.0
            else:
                f = t - k0
            for ch in range(nch):
                g = block_gains[k0, ch] + (block_gains[k0 + 1, ch] - block_gains[k0, ch]) * f
                out[ch, p] = g * signal[p]


def gain_ramp_mix(signal: np.ndarray, block_gains: np.ndarray, block_len: int,
                  backend: str | None = None) -> np.ndarray:
    """Apply per-block channel gains to a mono signal with per-sample interpolation.

    Args:
        signal: Mono samples, shape (n,).
        block_gains: Gains at block centers, shape (num_blocks, channels).
        block_len: Samples per block; block k's center sits at (k + 0.5) * block_len.

    Returns:
        (channels, n) array; gains clamp to the first/last block value outside
        the span of block centers.
    """
    signal = np.ascontiguousarray(signal, dtype=np.float64)
    block_gains = np.ascontiguousarray(block_gains, dtype=np.float64)
    if block_gains.ndim != 2 or block_gains.shape[0] == 0:
        raise ValidationError(f"block gains must be (num_blocks, channels), got {block_gains.shape}")
    if block_len <= 0:
        raise ValidationError(f"block length must be positive, got {block_len}")
    backend = _resolve_backend(backend)
    if backend == "numpy":
        return _gain_ramp_numpy(signal, block_gains, block_len)
    out = np.empty((block_gains.shape[1], signal.shape[0]), dtype=np.float64)
    _gain_ramp_jit(signal, block_gains, block_len, out)
    return out
