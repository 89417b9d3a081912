"""Cascade fusion of the two detectors, ROC/AUC evaluation, error breakdown.

The copy-move detector runs first; images it flags are scored 0.5 + 0.5 c and
never reach the resampling detector, so every pre-filter hit outranks every
pass-through image (which scores 0.5 r from the resampling detector). That
minimal total order is what the fused ROC measures.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .copymove import detect_copymove
from .errors import SingleClassError
from .image import load_image
from .resample import detect_resampling
from .synth import CorpusManifest

EVAL_SCHEMA = "fs-eval/1"


@dataclass
class DetectionScore:
    image_id: str
    cm_confidence: float
    cm_flagged: bool
    resample_score: float | None
    fused: float


def fuse_score(cm_confidence: float, cm_flagged: bool, resample_score) -> float:
    if cm_flagged:
        return 0.5 + 0.5 * cm_confidence
    return 0.5 * resample_score


def cascade_score(img, models, image_id: str = "", cm_seed: int = 0) -> DetectionScore:
    """Score one image through the cascade.

    The resampling detector is only consulted when the copy-move pre-filter
    does not flag the image.
    """
    cm = detect_copymove(img, seed=cm_seed)
    r = None
    if not cm.flagged:
        r = detect_resampling(img, models, compute_mask=False).overall
    return DetectionScore(
        image_id=image_id,
        cm_confidence=cm.confidence,
        cm_flagged=cm.flagged,
        resample_score=r,
        fused=fuse_score(cm.confidence, cm.flagged, r),
    )


@dataclass
class RocCurve:
    points: list  # (fpr, tpr), from (0, 0) to (1, 1)
    thresholds: list  # aligned; score >= threshold is called positive
    auc: float


def roc_auc(scored: list) -> RocCurve:
    """ROC by threshold sweep over distinct scores; AUC by trapezoid.

    `scored` holds (score, label) pairs with labels in {0, 1}. Ties get the
    trapezoid's half credit, so the AUC equals the Mann-Whitney pair statistic.
    """
    scores = np.array([s for s, _ in scored], np.float64)
    labels = np.array([int(l) for _, l in scored])
    pos = int((labels == 1).sum())
    neg = int((labels == 0).sum())
    if pos == 0 or neg == 0:
        raise SingleClassError("ROC needs both labels present")

    order = np.argsort(-scores, kind="stable")
    points = [(0.0, 0.0)]
    thresholds = [float("inf")]
    tp = fp = 0
    auc = 0.0
    i = 0
    n = len(scores)
    while i < n:
        t = scores[order[i]]
        while i < n and scores[order[i]] == t:
            if labels[order[i]] == 1:
                tp += 1
            else:
                fp += 1
            i += 1
        fpr, tpr = fp / neg, tp / pos
        auc += (fpr - points[-1][0]) * (tpr + points[-1][1]) / 2.0
        points.append((fpr, tpr))
        thresholds.append(float(t))
    return RocCurve(points=points, thresholds=thresholds, auc=auc)


def choose_threshold(curve: RocCurve) -> float:
    """Threshold maximizing Youden's J = TPR - FPR; ties go to the lower one."""
    best_j = -np.inf
    best_t = curve.thresholds[0]
    for (fpr, tpr), t in zip(curve.points, curve.thresholds):
        j = tpr - fpr
        if j >= best_j:
            best_j = j
            best_t = t
    return best_t


@dataclass
class EvalReport:
    auc: dict  # {"copymove", "resample", "fused"}
    breakdown: dict  # {"manipulated", "cm_caught", "cm_missed", "resamp_caught_of_missed"}
    threshold: float
    curves: dict  # name -> RocCurve
    scores: list  # DetectionScore per image, manifest order
    labels: list  # 1 = manipulated, aligned with scores
    runtime: dict  # stage -> seconds (written to a separate timing file)
    out_dir: Path | None = None


_WORKER_CTX: dict = {}


def _score_one(args):
    index, image_path = args
    img = load_image(image_path)
    cm = detect_copymove(img, seed=_WORKER_CTX["cm_seed"])
    r = detect_resampling(img, _WORKER_CTX["models"], compute_mask=False).overall
    return index, cm.confidence, cm.flagged, r


def evaluate(
    manifest: CorpusManifest,
    models: dict,
    out_dir,
    threads: int = 1,
    cm_seed: int = 0,
) -> EvalReport:
    """Score every manifest image with both detectors and write the report.

    The resampling score is computed for all images (not just cascade
    pass-throughs) so the three ROC curves are comparable. Evaluation is
    all-or-nothing: any missing file aborts before scoring starts. Output
    files are byte-identical across reruns and thread counts; wall-clock
    timings go to a separate timing.json.
    """
    missing = [
        str(manifest.image_path(rec))
        for rec in manifest.records
        if not manifest.image_path(rec).exists()
    ]
    if missing:
        raise FileNotFoundError(f"{len(missing)} corpus files missing: {missing[:5]} ...")

    t0 = time.perf_counter()
    tasks = [(i, manifest.image_path(rec)) for i, rec in enumerate(manifest.records)]
    results = [None] * len(tasks)
    _WORKER_CTX.update({"models": models, "cm_seed": cm_seed})
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for index, c, flagged, r in pool.map(_score_one, tasks, chunksize=4):
                results[index] = (c, flagged, r)
    else:
        for args in tasks:
            index, c, flagged, r = _score_one(args)
            results[index] = (c, flagged, r)
    scoring_seconds = time.perf_counter() - t0

    scores = []
    labels = []
    for rec, (c, flagged, r) in zip(manifest.records, results):
        scores.append(
            DetectionScore(
                image_id=rec.image,
                cm_confidence=c,
                cm_flagged=flagged,
                resample_score=r,
                fused=fuse_score(c, flagged, r),
            )
        )
        labels.append(1 if rec.label == "manipulated" else 0)

    curves = {
        "copymove": roc_auc([(s.cm_confidence, l) for s, l in zip(scores, labels)]),
        "resample": roc_auc([(s.resample_score, l) for s, l in zip(scores, labels)]),
        "fused": roc_auc([(s.fused, l) for s, l in zip(scores, labels)]),
    }
    threshold = choose_threshold(curves["resample"])

    manip = sum(labels)
    cm_caught = sum(1 for s, l in zip(scores, labels) if l and s.cm_flagged)
    cm_missed = manip - cm_caught
    resamp_caught = sum(
        1
        for s, l in zip(scores, labels)
        if l and not s.cm_flagged and s.resample_score >= threshold
    )
    breakdown = {
        "manipulated": manip,
        "cm_caught": cm_caught,
        "cm_missed": cm_missed,
        "resamp_caught_of_missed": resamp_caught,
    }

    report = EvalReport(
        auc={name: curves[name].auc for name in ("copymove", "resample", "fused")},
        breakdown=breakdown,
        threshold=threshold,
        curves=curves,
        scores=scores,
        labels=labels,
        runtime={"scoring_seconds": scoring_seconds, "images": len(tasks)},
        out_dir=Path(out_dir) if out_dir is not None else None,
    )
    if out_dir is not None:
        _write_report(report)
    return report


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_report(report: EvalReport) -> None:
    out = report.out_dir
    out.mkdir(parents=True, exist_ok=True)
    curve_files = {}
    for name, curve in report.curves.items():
        rel = f"roc_{name}.csv"
        curve_files[name] = rel
        with open(out / rel, "w", encoding="ascii") as fh:
            fh.write("fpr,tpr,threshold\n")
            for (fpr, tpr), t in zip(curve.points, curve.thresholds):
                fh.write(f"{_fmt(fpr)},{_fmt(tpr)},{_fmt(t)}\n")
    with open(out / "scores.csv", "w", encoding="ascii") as fh:
        fh.write("image,label_manipulated,cm_confidence,cm_flagged,resample_score,fused\n")
        for s, label in zip(report.scores, report.labels):
            fh.write(
                f"{s.image_id},{label},{_fmt(s.cm_confidence)},"
                f"{int(s.cm_flagged)},{_fmt(s.resample_score)},{_fmt(s.fused)}\n"
            )
    payload = {
        "schema": EVAL_SCHEMA,
        "auc": {k: report.auc[k] for k in sorted(report.auc)},
        "breakdown": report.breakdown,
        "threshold": report.threshold,
        "curves": curve_files,
        "scores": "scores.csv",
    }
    with open(out / "report.json", "w", encoding="ascii") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    with open(out / "timing.json", "w", encoding="ascii") as fh:
        json.dump(report.runtime, fh, sort_keys=True, indent=2)
        fh.write("\n")
