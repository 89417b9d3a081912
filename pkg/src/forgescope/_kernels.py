"""Numba kernels for the two hot loops: bilateral filtering and PatchMatch.

Both kernels are single-threaded and consume pre-generated random numbers,
so results are bit-reproducible for a given seed on a given platform.
"""

import numpy as np
from numba import njit

RANGE_TABLE_BINS = 65536


def range_weight_table(sigma_range: float) -> np.ndarray:
    """Piecewise-linear table of exp(-u / (2 sigma^2)) for u = (value diff)^2 in [0, 1].

    Stored as (bins+1, 2) float32 pairs (value, delta to next) so one fused
    gather serves the interpolation. Lerp error is below float32 resolution
    for sigma_range >= 0.05.
    """
    u = np.linspace(0.0, 1.0, RANGE_TABLE_BINS + 1)
    t = np.exp(-u / (2.0 * sigma_range * sigma_range)).astype(np.float32)
    pair = np.empty((RANGE_TABLE_BINS + 1, 2), np.float32)
    pair[:, 0] = t
    pair[:-1, 1] = t[1:] - t[:-1]
    pair[-1, 1] = 0.0
    return pair


@njit(cache=True, fastmath=True)
def bilateral_kernel(padded, h, w, rad, spatial, pair, bins):
    # Accumulates relative to the center value so constant neighbourhoods
    # come back bit-exact (sum of w*(v-c) is exactly zero there).
    out = np.empty((h, w), np.float32)
    n = 2 * rad + 1
    for y in range(h):
        crow = padded[y + rad]
        for x in range(w):
            c = crow[x + rad]
            acc = np.float32(0.0)
            wsum = np.float32(0.0)
            for dy in range(n):
                prow = padded[y + dy]
                srow = spatial[dy]
                for dx in range(n):
                    v = prow[x + dx]
                    d = v - c
                    t = d * d * bins
                    i = np.int64(t)
                    fr = t - np.float32(i)
                    rw = pair[i, 0] + pair[i, 1] * fr
                    wgt = srow[dx] * rw
                    acc += wgt * d
                    wsum += wgt
            out[y, x] = c + acc / wsum
    return out


@njit(cache=True, fastmath=True)
def patchmatch_sweep(feat, valid, off_x, off_y, cost, rand_block, radii, d_min2, reverse):
    """One PatchMatch iteration: raster-order propagation + random search.

    feat        (h, w, k) float32 feature raster
    valid       (h, w) bool
    off_x/off_y (h, w) int32 current offsets, updated in place
    cost        (h, w) float32 current match cost, updated in place
    rand_block  (len(radii), h, w, 2) float32 in [0, 1)
    radii       search radius schedule, non-increasing
    d_min2      squared minimum offset length
    reverse     scan bottom-right to top-left and take right/down neighbours
    """
    h, w, k = feat.shape
    levels = radii.shape[0]
    step = -1 if reverse else 1
    y0 = h - 1 if reverse else 0
    x0 = w - 1 if reverse else 0
    for yi in range(h):
        y = y0 + step * yi
        for xi in range(w):
            x = x0 + step * xi
            if not valid[y, x]:
                continue
            bc = cost[y, x]
            if bc <= np.float32(0.0):  # exact match, nothing can improve
                continue
            bx = off_x[y, x]
            by = off_y[y, x]
            fp = feat[y, x]

            # propagate each scanned neighbour's offset and its 4 diagonal
            # perturbations: matches of a 90-degree rotated clone drift by
            # (+-1, -+1) per step, so exact-cost chains need the perturbed
            # candidates to flood the region
            for n in range(10):
                if n < 5:
                    ny = y
                    nx = x - step
                else:
                    ny = y - step
                    nx = x
                if ny < 0 or ny >= h or nx < 0 or nx >= w:
                    continue
                if not valid[ny, nx]:
                    continue
                p = n % 5
                if p == 0:
                    pdx = 0
                    pdy = 0
                else:
                    pdx = 1 if p < 3 else -1
                    pdy = 1 if p % 2 else -1
                cx = off_x[ny, nx] + pdx
                cy = off_y[ny, nx] + pdy
                if cx * cx + cy * cy < d_min2:
                    continue
                tx = x + cx
                ty = y + cy
                if tx < 0 or tx >= w or ty < 0 or ty >= h:
                    continue
                if not valid[ty, tx]:
                    continue
                ft = feat[ty, tx]
                c = np.float32(0.0)
                for i in range(k):
                    d = fp[i] - ft[i]
                    c += d * d
                    if c >= bc:
                        break
                if c < bc:
                    bc = c
                    bx = cx
                    by = cy

            for lv in range(levels):
                r = radii[lv]
                # search window around the current target, clamped to the raster
                wx0 = max(0.0, x + bx - r)
                wx1 = min(np.float64(w - 1), x + bx + r)
                wy0 = max(0.0, y + by - r)
                wy1 = min(np.float64(h - 1), y + by + r)
                u = np.float64(rand_block[lv, y, x, 0])
                v = np.float64(rand_block[lv, y, x, 1])
                tx = np.int64(wx0 + u * (wx1 - wx0) + 0.5)
                ty = np.int64(wy0 + v * (wy1 - wy0) + 0.5)
                cx = np.int32(tx - x)
                cy = np.int32(ty - y)
                if cx * cx + cy * cy < d_min2:
                    continue
                if not valid[ty, tx]:
                    continue
                ft = feat[ty, tx]
                c = np.float32(0.0)
                for i in range(k):
                    d = fp[i] - ft[i]
                    c += d * d
                    if c >= bc:
                        break
                if c < bc:
                    bc = c
                    bx = cx
                    by = cy

            cost[y, x] = bc
            off_x[y, x] = bx
            off_y[y, x] = by
