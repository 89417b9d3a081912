"""Per-patch resampling signature: Laplacian, predictor residue, Radon, FFT.

A 64x64 patch becomes a 320-vector: prediction-error mass is projected along
10 angles, each projection is Fourier-transformed, and each angle's spectrum
is normalized to unit peak. Periodic correlations from interpolation show up
as dominant spectral peaks.
"""

from __future__ import annotations

import struct
from functools import lru_cache

import numpy as np
from scipy import sparse

from .errors import PatchSizeError
from .image import GrayImage

PATCH_SIZE = 64
PROJECTION_ANGLES = tuple(float(a) for a in range(0, 180, 18))
SPECTRUM_BINS = 32
FEATURE_LENGTH = len(PROJECTION_ANGLES) * SPECTRUM_BINS

# Fixed second-difference-style predictor for the Laplacian plane.
PREDICTOR = np.array(
    [[-0.25, 0.5, -0.25], [0.5, 0.0, 0.5], [-0.25, 0.5, -0.25]], np.float64
)

_FEATURE_MAGIC = b"FSFV1"


def _as_patch_batch(patches) -> np.ndarray:
    arr = np.asarray(patches, np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1] != PATCH_SIZE or arr.shape[2] != PATCH_SIZE:
        raise PatchSizeError(f"expected {PATCH_SIZE}x{PATCH_SIZE} patches, got {arr.shape}")
    return arr


def _batch_laplacian(batch: np.ndarray) -> np.ndarray:
    p = np.pad(batch, ((0, 0), (1, 1), (1, 1)), mode="edge")
    return (
        p[:, :-2, 1:-1] + p[:, 2:, 1:-1] + p[:, 1:-1, :-2] + p[:, 1:-1, 2:] - 4.0 * batch
    )


def batch_predictor_residue(patches) -> np.ndarray:
    """Magnitude of the linear prediction error of the Laplacian plane.

    The border ring cannot be predicted from in-bounds neighbours and is
    set to zero.
    """
    batch = _as_patch_batch(patches)
    lap = _batch_laplacian(batch)
    pred = np.zeros_like(lap[:, 1:-1, 1:-1])
    for dy in range(3):
        for dx in range(3):
            coeff = PREDICTOR[dy, dx]
            if coeff == 0.0:
                continue
            pred += coeff * lap[:, dy : dy + PATCH_SIZE - 2, dx : dx + PATCH_SIZE - 2]
    res = np.zeros_like(lap)
    res[:, 1:-1, 1:-1] = np.abs(lap[:, 1:-1, 1:-1] - pred)
    return res


def predictor_residue(patch) -> np.ndarray:
    if isinstance(patch, GrayImage):
        patch = patch.pixels
    arr = np.asarray(patch, np.float64)
    if arr.shape != (PATCH_SIZE, PATCH_SIZE):
        raise PatchSizeError(f"expected {PATCH_SIZE}x{PATCH_SIZE} patch, got {arr.shape}")
    return batch_predictor_residue(arr[None])[0]


@lru_cache(maxsize=64)
def _splat_matrix(angle: float) -> sparse.csr_matrix:
    """Sparse operator taking a flattened residue to its 64-bin projection.

    Pixel mass is pushed onto the rotated x-axis with linear weights, so each
    pixel's contribution sums to exactly 1 when it lands inside the bins;
    mass rotating past either end is dropped.
    """
    n = PATCH_SIZE
    c = (n - 1) / 2.0
    theta = np.deg2rad(angle)
    ys, xs = np.mgrid[0:n, 0:n].astype(np.float64)
    xr = (np.cos(theta) * (xs - c) + np.sin(theta) * (ys - c) + c).ravel()
    i0 = np.floor(xr).astype(np.int64)
    frac = xr - i0
    pix = np.arange(n * n)

    rows, cols, vals = [], [], []
    for bins, weights in ((i0, 1.0 - frac), (i0 + 1, frac)):
        ok = (bins >= 0) & (bins < n)
        rows.append(bins[ok])
        cols.append(pix[ok])
        vals.append(weights[ok])
    mat = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n * n),
    )
    return mat.tocsr()


@lru_cache(maxsize=1)
def _splat_all_angles() -> sparse.csr_matrix:
    return sparse.vstack(
        [_splat_matrix(a) for a in PROJECTION_ANGLES], format="csr"
    )


def radon_project(residue: np.ndarray, angle: float) -> np.ndarray:
    """Accumulate residue mass along the direction at `angle` degrees."""
    if not 0.0 <= angle < 180.0:
        raise ValueError(f"angle must be in [0, 180), got {angle}")
    arr = np.asarray(residue, np.float64)
    if arr.shape != (PATCH_SIZE, PATCH_SIZE):
        raise PatchSizeError(f"expected {PATCH_SIZE}x{PATCH_SIZE} residue, got {arr.shape}")
    return _splat_matrix(float(angle)) @ arr.ravel()


def fft_periodicity(projection: np.ndarray) -> np.ndarray:
    """Magnitude spectrum of the mean-removed projection, bins 1..32."""
    v = np.asarray(projection, np.float64)
    if v.shape != (PATCH_SIZE,):
        raise ValueError(f"projection must have length {PATCH_SIZE}, got {v.shape}")
    v = v - v.mean()
    return np.abs(np.fft.rfft(v))[1 : SPECTRUM_BINS + 1]


def batch_patch_features(patches) -> np.ndarray:
    """Feature matrix (n, 320) for a stack of 64x64 patches.

    Per-patch output is independent of batch composition, so any split or
    permutation of the batch reproduces identical rows.
    """
    batch = _as_patch_batch(patches)
    n = batch.shape[0]
    res = batch_predictor_residue(batch).reshape(n, -1)
    proj = (_splat_all_angles() @ res.T).T.reshape(n, len(PROJECTION_ANGLES), PATCH_SIZE)
    spec = np.abs(np.fft.rfft(proj - proj.mean(axis=2, keepdims=True), axis=2))
    spec = spec[:, :, 1 : SPECTRUM_BINS + 1]
    peak = spec.max(axis=2, keepdims=True)
    np.divide(spec, peak, out=spec, where=peak > 0.0)
    return spec.reshape(n, FEATURE_LENGTH)


def patch_features(patch) -> np.ndarray:
    """320-float resampling signature of one 64x64 patch."""
    if isinstance(patch, GrayImage):
        patch = patch.pixels
    return batch_patch_features(np.asarray(patch, np.float64)[None])[0]


def write_features(path, features: np.ndarray) -> None:
    """Feature dump: 16-byte header (magic + row count), float32 LE rows."""
    arr = np.asarray(features, np.float64)
    if arr.ndim != 2 or arr.shape[1] != FEATURE_LENGTH:
        raise ValueError(f"expected (n, {FEATURE_LENGTH}) features, got {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(_FEATURE_MAGIC + b"\x00\x00\x00" + struct.pack("<Q", arr.shape[0]))
        fh.write(arr.astype("<f4").tobytes())


def read_features(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:5] != _FEATURE_MAGIC:
            raise ValueError("bad feature dump header")
        (count,) = struct.unpack("<Q", header[8:])
        raw = fh.read()
    expect = count * FEATURE_LENGTH * 4
    if len(raw) != expect:
        raise ValueError(f"feature dump payload: expected {expect} bytes, got {len(raw)}")
    return np.frombuffer(raw, "<f4").reshape(count, FEATURE_LENGTH).astype(np.float64)
