"""Dense-field copy-move detection.

Every pixel whose radius-8 disk fits in the image gets a 12-vector of Zernike
moment magnitudes (rotation invariant), PatchMatch builds an approximate
nearest-neighbour offset field over those features, and a consistency /
mirror / morphology chain turns coherent offset regions into a clone mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np
from scipy import ndimage
from scipy.fft import fft2, ifft2, next_fast_len

from . import _kernels
from .errors import ImageTooSmall, InsufficientTexture
from .image import BinaryMask, GrayImage

DISK_RADIUS = 8
MIN_OFFSET = 16
PM_ITERATIONS = 8
FLAT_STD = 0.02

# (n, m) with n <= 5, m >= 0, n - m even
ZERNIKE_ORDERS = (
    (0, 0), (1, 1), (2, 0), (2, 2), (3, 1), (3, 3),
    (4, 0), (4, 2), (4, 4), (5, 1), (5, 3), (5, 5),
)

_CONSISTENCY_RADIUS = 3  # 7x7 neighbourhood
_OFFSET_TOL = 2
_OPEN_RADIUS = 2
_MIN_COMPONENT = 200
AREA_SCALE = 0.01
FLAG_THRESHOLD = 0.5


def _radial_poly(n: int, m: int, rho: np.ndarray) -> np.ndarray:
    out = np.zeros_like(rho)
    for s in range((n - m) // 2 + 1):
        coeff = (
            (-1) ** s
            * math.factorial(n - s)
            / (
                math.factorial(s)
                * math.factorial((n + m) // 2 - s)
                * math.factorial((n - m) // 2 - s)
            )
        )
        out += coeff * rho ** (n - 2 * s)
    return out


@lru_cache(maxsize=1)
def _disk_and_kernels():
    """Disk mask plus the 12 complex moment kernels.

    Kernels with n >= 1 have their disk mean subtracted so a constant block
    yields exactly zero response; discrete sampling would otherwise leave a
    small bias for the m=0 and m=4 kernels. The mean shift is rotation-safe
    for this order set (e^{-im pi/2} is 1 for every corrected kernel).
    """
    r = DISK_RADIUS
    ax = np.arange(-r, r + 1, dtype=np.float64)
    dy, dx = np.meshgrid(ax, ax, indexing="ij")
    rho = np.sqrt(dx * dx + dy * dy) / r
    disk = rho <= 1.0
    phi = np.arctan2(dy, dx)
    count = int(disk.sum())

    kernels = np.zeros((len(ZERNIKE_ORDERS), 2 * r + 1, 2 * r + 1), np.complex128)
    for i, (n, m) in enumerate(ZERNIKE_ORDERS):
        k = np.where(disk, _radial_poly(n, m, rho) * np.exp(-1j * m * phi), 0.0) / count
        if n >= 1:
            k[disk] -= k[disk].mean()
        kernels[i] = k
    return disk.astype(np.float64), count, kernels


@lru_cache(maxsize=8)
def _kernel_ffts(shape: tuple) -> np.ndarray:
    disk, _, kernels = _disk_and_kernels()
    out = np.empty((len(kernels) + 1, *shape), np.complex128)
    for i, k in enumerate(kernels):
        out[i] = np.conj(fft2(k, shape))
    out[-1] = np.conj(fft2(disk, shape))
    return out


@dataclass
class FeatureRaster:
    """Per-pixel moment magnitudes over the valid (fully inside) region."""

    magnitudes: np.ndarray  # (h', w', 12) float64
    valid: np.ndarray  # (h', w') bool, textured pixels only
    margin: int
    image_shape: tuple


def zernike_features(img: GrayImage) -> FeatureRaster:
    """Zernike moment magnitudes for every pixel whose disk fits the image.

    Pixels whose disk has standard deviation below 0.02 are marked invalid;
    flat regions would otherwise flood the matcher with zero-cost pairs.
    """
    size = 2 * DISK_RADIUS + 1
    if img.height < size or img.width < size:
        raise ImageTooSmall(f"need at least {size}x{size}, got {img.height}x{img.width}")
    h, w = img.height, img.width
    oh, ow = h - 2 * DISK_RADIUS, w - 2 * DISK_RADIUS
    shape = (next_fast_len(h + size - 1), next_fast_len(w + size - 1))

    disk, count, _ = _disk_and_kernels()
    kf = _kernel_ffts(shape)
    fimg = fft2(img.pixels, shape)
    fsq = fft2(img.pixels * img.pixels, shape)

    mags = np.empty((oh, ow, len(ZERNIKE_ORDERS)), np.float64)
    for i in range(len(ZERNIKE_ORDERS)):
        corr = ifft2(fimg * kf[i])[:oh, :ow]
        mags[..., i] = np.abs(corr)

    mean = ifft2(fimg * kf[-1]).real[:oh, :ow] / count
    meansq = ifft2(fsq * kf[-1]).real[:oh, :ow] / count
    std = np.sqrt(np.maximum(meansq - mean * mean, 0.0))
    return FeatureRaster(
        magnitudes=mags,
        valid=std >= FLAT_STD,
        margin=DISK_RADIUS,
        image_shape=(h, w),
    )


@dataclass
class OffsetField:
    """Best-match displacement per valid pixel, with its feature-space cost."""

    dx: np.ndarray  # int32
    dy: np.ndarray  # int32
    cost: np.ndarray  # float32
    valid: np.ndarray  # bool, pixels that hold a match
    d_min: int
    margin: int
    image_shape: tuple
    cost_history: list = dc_field(default_factory=list)


def _random_init(feat32, valid, rng, d_min):
    h, w, _ = feat32.shape
    coords = np.argwhere(valid)  # (m, 2) as (y, x)
    m = coords.shape[0]
    dx = np.zeros((h, w), np.int32)
    dy = np.zeros((h, w), np.int32)
    matched = valid.copy()

    py, px = coords[:, 0], coords[:, 1]
    need = np.arange(m)
    tgt = np.zeros((m, 2), np.int64)
    for _ in range(64):
        if need.size == 0:
            break
        draw = rng.integers(0, m, need.size)
        cand = coords[draw]
        ddx = cand[:, 1] - px[need]
        ddy = cand[:, 0] - py[need]
        ok = ddx * ddx + ddy * ddy >= d_min * d_min
        tgt[need[ok]] = cand[ok]
        need = need[~ok]
    for i in need:  # deterministic fallback for awkward geometry
        ddx = coords[:, 1] - px[i]
        ddy = coords[:, 0] - py[i]
        legal = np.nonzero(ddx * ddx + ddy * ddy >= d_min * d_min)[0]
        if legal.size == 0:
            matched[py[i], px[i]] = False
        else:
            tgt[i] = coords[legal[0]]

    keep = matched[py, px]
    ky, kx = py[keep], px[keep]
    ty, tx = tgt[keep, 0], tgt[keep, 1]
    dx[ky, kx] = (tx - kx).astype(np.int32)
    dy[ky, kx] = (ty - ky).astype(np.int32)
    cost = np.full((h, w), np.float32(np.inf), np.float32)
    diff = feat32[ky, kx] - feat32[ty, tx]
    cost[ky, kx] = (diff * diff).sum(axis=1)
    return dx, dy, cost, matched


_SEARCH_REPEATS = 4  # probes at each of the largest radii
_SEARCH_WIDE_LEVELS = 4


def _search_radii(h: int, w: int) -> np.ndarray:
    """Radius schedule: halving from the diagonal down to 1 px.

    The largest radii carry the burden of discovering distant clones, so the
    top levels are probed several times per visit; refinement radii once.
    """
    radii = []
    level = 0
    r = math.hypot(h, w)
    while r >= 1.0:
        radii.extend([r] * (_SEARCH_REPEATS if level < _SEARCH_WIDE_LEVELS else 1))
        r *= 0.5
        level += 1
    return np.array(radii)


def patchmatch(
    features: FeatureRaster,
    seed: int,
    iters: int,
    d_min: int = MIN_OFFSET,
    track_history: bool = False,
) -> OffsetField:
    """Approximate nearest-neighbour offset field over the feature raster.

    Seeded random init (offsets >= d_min), then per iteration a raster-order
    sweep (reversed on odd iterations) interleaving neighbour propagation with
    random search whose radius halves from the image diagonal down to 1 px,
    each window clamped to the raster. Costs are squared euclidean distances
    in feature space and never increase.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    feat32 = np.ascontiguousarray(features.magnitudes, np.float32)
    valid = features.valid
    if int(valid.sum()) < 2:
        raise InsufficientTexture("fewer than 2 textured pixels to match")

    h, w, _ = feat32.shape
    rng = np.random.default_rng(seed)
    dx, dy, cost, matched = _random_init(feat32, valid, rng, d_min)
    if int(matched.sum()) < 2:
        raise InsufficientTexture("no legal match targets at minimum offset")

    radii = _search_radii(h, w)
    history = []
    for it in range(iters):
        rand_block = rng.random((len(radii), h, w, 2), np.float32)
        _kernels.patchmatch_sweep(
            feat32,
            matched,
            dx,
            dy,
            cost,
            rand_block,
            radii,
            np.float32(d_min * d_min),
            it % 2 == 1,
        )
        if track_history:
            history.append(cost.copy())

    return OffsetField(
        dx=dx,
        dy=dy,
        cost=cost,
        valid=matched,
        d_min=d_min,
        margin=features.margin,
        image_shape=features.image_shape,
        cost_history=history,
    )


def _windowed_median(values: np.ndarray, valid: np.ndarray, radius: int) -> np.ndarray:
    """Median over the (2r+1)^2 window counting only valid entries."""
    h, w = values.shape
    n = 2 * radius + 1
    pv = np.pad(values.astype(np.float32), radius, constant_values=0.0)
    pm = np.pad(valid, radius, constant_values=False)
    stack = np.empty((n * n, h, w), np.float32)
    k = 0
    for oy in range(n):
        for ox in range(n):
            win = pv[oy : oy + h, ox : ox + w]
            ok = pm[oy : oy + h, ox : ox + w]
            stack[k] = np.where(ok, win, np.float32(np.inf))
            k += 1
    counts = np.zeros((h, w), np.int64)
    for oy in range(n):
        for ox in range(n):
            counts += pm[oy : oy + h, ox : ox + w]
    stack.sort(axis=0)
    safe = np.maximum(counts, 1)
    lo = np.take_along_axis(stack, ((safe - 1) // 2)[None], axis=0)[0]
    hi = np.take_along_axis(stack, (safe // 2)[None], axis=0)[0]
    med = (lo + hi) / 2.0
    med[counts == 0] = np.inf
    return med


def postprocess(field: OffsetField) -> tuple[BinaryMask, list[dict]]:
    """Filter the raw field down to coherent, mutual clone regions.

    Keeps pixels whose offset agrees with the 7x7 neighbourhood median within
    2 px and whose target points back within 2 px, opens with radius 2, drops
    8-connected components under 200 px, then paints survivors plus their
    targets dilated by the feature disk (each match testifies for its whole
    support) into an image-sized mask.
    """
    h, w = field.dx.shape
    med_dx = _windowed_median(field.dx, field.valid, _CONSISTENCY_RADIUS)
    med_dy = _windowed_median(field.dy, field.valid, _CONSISTENCY_RADIUS)
    keep = (
        field.valid
        & (np.abs(field.dx - med_dx) <= _OFFSET_TOL)
        & (np.abs(field.dy - med_dy) <= _OFFSET_TOL)
    )

    ys, xs = np.nonzero(keep)
    ty = ys + field.dy[ys, xs]
    tx = xs + field.dx[ys, xs]
    back_x = tx + field.dx[ty, tx]
    back_y = ty + field.dy[ty, tx]
    mutual = (
        field.valid[ty, tx]
        & (np.abs(back_x - xs) <= _OFFSET_TOL)
        & (np.abs(back_y - ys) <= _OFFSET_TOL)
    )
    keep = np.zeros_like(keep)
    keep[ys[mutual], xs[mutual]] = True

    se = np.ones((2 * _OPEN_RADIUS + 1, 2 * _OPEN_RADIUS + 1), bool)
    keep = ndimage.binary_dilation(ndimage.binary_erosion(keep, se), se)

    labels, count = ndimage.label(keep, structure=np.ones((3, 3), int))
    ih, iw = field.image_shape
    margin = field.margin
    raster_mask = np.zeros((h, w), bool)
    pairs = []
    for cid in range(1, count + 1):
        comp = labels == cid
        area = int(comp.sum())
        if area < _MIN_COMPONENT:
            continue
        cy, cx = np.nonzero(comp)
        gy = cy + field.dy[cy, cx]
        gx = cx + field.dx[cy, cx]
        raster_mask[cy, cx] = True
        raster_mask[gy, gx] = True
        grow = margin
        pairs.append(
            {
                "area": area,
                "source_bbox": _grown_bbox(cx, cy, margin, grow, iw, ih),
                "target_bbox": _grown_bbox(gx, gy, margin, grow, iw, ih),
            }
        )

    mask = np.zeros((ih, iw), bool)
    if raster_mask.any():
        disk, _, _ = _disk_and_kernels()
        grown = ndimage.binary_dilation(raster_mask, structure=disk.astype(bool))
        mask[margin : margin + h, margin : margin + w] = grown
    return BinaryMask(mask), pairs


def _grown_bbox(xs, ys, margin, grow, iw, ih):
    x0 = max(int(xs.min()) + margin - grow, 0)
    y0 = max(int(ys.min()) + margin - grow, 0)
    x1 = min(int(xs.max()) + margin + grow + 1, iw)
    y1 = min(int(ys.max()) + margin + grow + 1, ih)
    return [x0, y0, x1 - x0, y1 - y0]


@dataclass
class CopyMoveReport:
    mask: BinaryMask
    flagged: bool
    confidence: float
    pairs: list
    note: str | None = None


def detect_copymove(img: GrayImage, seed: int = 0) -> CopyMoveReport:
    """Full clone detection: features, PatchMatch, post-filtering, confidence.

    Confidence saturates at 1 when the clone mask reaches 1% of the image;
    the image is flagged at confidence >= 0.5. Untextured images come back
    unflagged with a note instead of raising.
    """
    if img.height < 64 or img.width < 64:
        raise ImageTooSmall(f"need at least 64x64, got {img.height}x{img.width}")
    empty = BinaryMask(np.zeros((img.height, img.width), bool))
    try:
        feats = zernike_features(img)
        field = patchmatch(feats, seed=seed, iters=PM_ITERATIONS)
    except InsufficientTexture as exc:
        return CopyMoveReport(
            mask=empty, flagged=False, confidence=0.0, pairs=[], note=str(exc)
        )
    mask, pairs = postprocess(field)
    confidence = min(1.0, mask.area / (AREA_SCALE * img.width * img.height))
    return CopyMoveReport(
        mask=mask,
        flagged=confidence >= FLAG_THRESHOLD,
        confidence=confidence,
        pairs=pairs,
    )
