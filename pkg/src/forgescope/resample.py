"""Sweep the six classifiers across an image: heatmaps, score, mask."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ImageTooSmall, MissingModel
from .features import PATCH_SIZE, batch_patch_features
from .image import (
    BinaryMask,
    GrayImage,
    Heatmap,
    bilateral_filter,
    extract_patches,
    patch_stack,
    write_heatmap_float,
    write_heatmap_png,
    write_mask_png,
)
from .mlp import TASK_ORDER, TaskKind, forward
from .segment import mask_from_heatmap

PATCH_STRIDE = 32
SMOOTH_SIGMA_SPATIAL = 8.0
SMOOTH_SIGMA_RANGE = 0.15

REPORT_SCHEMA = "fs-resample-report/1"


@dataclass
class ResampleReport:
    heatmaps: dict  # TaskKind -> smoothed Heatmap at image size
    task_scores: dict  # TaskKind -> median score
    overall: float  # max over tasks
    argmax_task: TaskKind
    mask: BinaryMask | None
    degenerate: bool


def _upsample_grid(grid_scores: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear patch-grid to image-size map; grid nodes sit at patch centers."""
    ny, nx = grid_scores.shape
    center = (PATCH_SIZE - 1) / 2.0

    def axis_coords(size, n):
        g = (np.arange(size, dtype=np.float64) - center) / PATCH_STRIDE
        g = np.clip(g, 0.0, n - 1.0)
        i0 = np.minimum(g.astype(np.int64), n - 1 if n == 1 else n - 2)
        return i0, g - i0

    ix0, fx = axis_coords(width, nx)
    iy0, fy = axis_coords(height, ny)
    ix1 = np.minimum(ix0 + 1, nx - 1)
    iy1 = np.minimum(iy0 + 1, ny - 1)
    top = grid_scores[np.ix_(iy0, ix0)] * (1 - fx) + grid_scores[np.ix_(iy0, ix1)] * fx
    bot = grid_scores[np.ix_(iy1, ix0)] * (1 - fx) + grid_scores[np.ix_(iy1, ix1)] * fx
    return top * (1 - fy[:, None]) + bot * fy[:, None]


def detect_resampling(
    img: GrayImage, models: dict, compute_mask: bool = True
) -> ResampleReport:
    """Per-task heatmaps, image-level score, and (optionally) a mask.

    Patch scores on the 64/32 grid are bilinearly upsampled to image size and
    bilateral-smoothed (sigma 8 px / 0.15). Each task scores the median of its
    smoothed map; the image score is the max over tasks, and the mask is
    segmented from the strongest task's map.
    """
    if img.height < PATCH_SIZE or img.width < PATCH_SIZE:
        raise ImageTooSmall(
            f"need at least {PATCH_SIZE}x{PATCH_SIZE}, got {img.height}x{img.width}"
        )
    for task in TASK_ORDER:
        if task not in models:
            raise MissingModel(task)

    grid = extract_patches(img, PATCH_SIZE, PATCH_STRIDE)
    feats = batch_patch_features(patch_stack(img, grid))

    heatmaps: dict = {}
    task_scores: dict = {}
    for task in TASK_ORDER:
        scores = forward(models[task], feats).reshape(grid.ny, grid.nx)
        raw = _upsample_grid(scores, img.height, img.width)
        smooth = bilateral_filter(
            Heatmap(np.clip(raw, 0.0, 1.0)), SMOOTH_SIGMA_SPATIAL, SMOOTH_SIGMA_RANGE
        )
        heatmaps[task] = smooth
        task_scores[task] = float(np.median(smooth.scores))

    overall = max(task_scores.values())
    argmax_task = next(t for t in TASK_ORDER if task_scores[t] == overall)

    mask = None
    degenerate = False
    if compute_mask:
        mask, degenerate = mask_from_heatmap(heatmaps[argmax_task])
    return ResampleReport(
        heatmaps=heatmaps,
        task_scores=task_scores,
        overall=overall,
        argmax_task=argmax_task,
        mask=mask,
        degenerate=degenerate,
    )


def heatmap_export(report: ResampleReport, basename) -> list:
    """Write six heatmap PNGs + float sidecars, the mask PNG, and a JSON summary.

    Returns the list of paths written (6 + 6 + 1 + 1 files).
    """
    if report.mask is None:
        raise ValueError("report carries no mask; run detect_resampling(compute_mask=True)")
    base = Path(basename)
    base.parent.mkdir(parents=True, exist_ok=True)
    written = []
    for task in TASK_ORDER:
        hm = report.heatmaps[task]
        png = base.with_name(f"{base.name}_{task.value}.png")
        raw = base.with_name(f"{base.name}_{task.value}.f32")
        write_heatmap_png(hm, png)
        write_heatmap_float(hm, raw)
        written += [png, raw]
    mask_path = base.with_name(f"{base.name}_mask.png")
    write_mask_png(report.mask, mask_path)
    written.append(mask_path)
    summary = {
        "schema": REPORT_SCHEMA,
        "per_task_scores": {t.value: report.task_scores[t] for t in TASK_ORDER},
        "overall": report.overall,
        "argmax_task": report.argmax_task.value,
        "degenerate": report.degenerate,
    }
    json_path = base.with_name(f"{base.name}.json")
    with open(json_path, "w", encoding="ascii") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    written.append(json_path)
    return written
