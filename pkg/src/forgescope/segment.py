"""Thresholding, random-walker segmentation, and binary-mask morphology."""

from __future__ import annotations

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse.linalg import cg

from .errors import DegenerateHistogram, MissingSeeds, SeedConflict
from .image import BinaryMask, Heatmap, median_filter

OTSU_BINS = 256

_WALKER_BETA = 90.0
_SEED_BAND = 0.1
_CG_TOL = 1e-8


def quantize_scores(scores: np.ndarray) -> np.ndarray:
    """Map [0, 1] scores onto 256 integer bins (1.0 shares the top bin)."""
    return np.minimum((scores * OTSU_BINS).astype(np.int64), OTSU_BINS - 1)


def otsu_threshold(hmap: Heatmap) -> float:
    """256-bin threshold maximizing between-class variance, ties to the lower bin.

    Returns the bin boundary as a real in [0, 1]; pixels >= the returned value
    fall in the upper class.
    """
    bins = quantize_scores(hmap.scores)
    hist = np.bincount(bins.ravel(), minlength=OTSU_BINS).astype(np.float64)
    if np.count_nonzero(hist) < 2:
        raise DegenerateHistogram("heatmap quantizes to a single level")
    idx = np.arange(OTSU_BINS, dtype=np.float64)
    total = hist.sum()
    c0 = np.cumsum(hist)
    s0 = np.cumsum(hist * idx)
    best_var = -1.0
    best_k = 0
    for k in range(OTSU_BINS - 1):
        n0 = c0[k]
        n1 = total - n0
        if n0 == 0.0 or n1 == 0.0:
            continue
        mu0 = s0[k] / n0
        mu1 = (s0[-1] - s0[k]) / n1
        var = (n0 / total) * (n1 / total) * (mu0 - mu1) ** 2
        if var > best_var:
            best_var = var
            best_k = k
    return (best_k + 1) / OTSU_BINS


def random_walker(
    hmap: Heatmap,
    fg_seeds: np.ndarray,
    bg_seeds: np.ndarray,
    beta: float,
) -> Heatmap:
    """Foreground probability from the combinatorial Dirichlet problem.

    4-connected pixel graph with edge weights exp(-beta * (gi - gj)^2);
    foreground seeds pinned to 1, background seeds to 0. Solved with
    conjugate gradient on the reduced Laplacian (tol 1e-8, max 10 N iters).
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    g = hmap.scores
    h, w = g.shape
    fg = np.asarray(fg_seeds, bool)
    bg = np.asarray(bg_seeds, bool)
    if fg.shape != g.shape or bg.shape != g.shape:
        raise ValueError("seed masks must match heatmap dimensions")
    if not fg.any() or not bg.any():
        raise MissingSeeds("both seed sets must be non-empty")
    if (fg & bg).any():
        raise SeedConflict("foreground and background seeds overlap")

    n = h * w
    flat = np.arange(n).reshape(h, w)
    # horizontal and vertical edges with their weights
    ei = np.concatenate([flat[:, :-1].ravel(), flat[:-1, :].ravel()])
    ej = np.concatenate([flat[:, 1:].ravel(), flat[1:, :].ravel()])
    diff = np.concatenate(
        [(g[:, :-1] - g[:, 1:]).ravel(), (g[:-1, :] - g[1:, :]).ravel()]
    )
    wgt = np.exp(-beta * diff * diff)

    lap = sparse.coo_matrix(
        (
            np.concatenate([-wgt, -wgt, wgt, wgt]),
            (
                np.concatenate([ei, ej, ei, ej]),
                np.concatenate([ej, ei, ei, ej]),
            ),
        ),
        shape=(n, n),
    ).tocsr()

    seeded = (fg | bg).ravel()
    x = np.zeros(n)
    x[fg.ravel()] = 1.0
    unknown = ~seeded
    nu = int(unknown.sum())
    if nu > 0:
        luu = lap[unknown][:, unknown]
        lus = lap[unknown][:, seeded]
        rhs = -lus @ x[seeded]
        precond = sparse.diags(1.0 / luu.diagonal())
        sol, _ = cg(luu, rhs, rtol=_CG_TOL, atol=0.0, maxiter=10 * nu, M=precond)
        x[unknown] = np.clip(sol, 0.0, 1.0)
    return Heatmap(x.reshape(h, w))


def mask_from_heatmap(hmap: Heatmap) -> tuple[BinaryMask, bool]:
    """Localization pipeline: median filter, Otsu seed bands, random walker.

    Returns (mask, degenerate). Degenerate heatmaps (single quantization
    level, or no pixels outside the seed exclusion band) give an all-false
    mask with the flag set instead of raising, so pristine images flow
    through scoring.
    """
    filtered = median_filter(hmap, 2)
    empty = BinaryMask(np.zeros(hmap.scores.shape, bool))
    try:
        t = otsu_threshold(filtered)
    except DegenerateHistogram:
        return empty, True
    fg = filtered.scores >= min(1.0, t + _SEED_BAND)
    bg = filtered.scores <= max(0.0, t - _SEED_BAND)
    if not fg.any() or not bg.any():
        return empty, True
    prob = random_walker(filtered, fg, bg, beta=_WALKER_BETA)
    return BinaryMask(prob.scores >= 0.5), False


def morph_open(mask: BinaryMask, radius: int) -> BinaryMask:
    """Opening with a square (2r+1) structuring element."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    se = np.ones((2 * radius + 1, 2 * radius + 1), bool)
    eroded = ndimage.binary_erosion(mask.bits, structure=se)
    return BinaryMask(ndimage.binary_dilation(eroded, structure=se))


def connected_components(mask: BinaryMask) -> list[dict]:
    """8-connected components as rows {id, area, bbox: [x, y, w, h]}."""
    labels, count = ndimage.label(mask.bits, structure=np.ones((3, 3), int))
    rows = []
    for cid, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None:
            continue
        area = int((labels[sl] == cid).sum())
        ys, xs = sl
        rows.append(
            {
                "id": cid,
                "area": area,
                "bbox": [xs.start, ys.start, xs.stop - xs.start, ys.stop - ys.start],
            }
        )
    return rows
