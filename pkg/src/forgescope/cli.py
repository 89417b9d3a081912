"""Command-line interface: synth, train, detect, evaluate.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .copymove import detect_copymove
from .errors import ForgescopeError
from .fusion import evaluate
from .image import load_image, write_mask_png
from .mlp import TASK_ORDER, TrainConfig, forward, load_model, save_model, train
from .resample import detect_resampling, heatmap_export
from .synth import (
    ForgeryKind,
    generate_corpus,
    load_manifest,
    make_patch_dataset,
    standard_corpus_counts,
    synth_pristine,
)

MODEL_SUFFIX = ".fsmlp"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="forgescope", description=__doc__)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--models-dir", type=Path, default=None)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--threads", type=int, default=1)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic corpus with ground truth")
    sp.add_argument("--pristine", type=int, default=150, help="pristine image count")
    sp.add_argument("--per-kind", type=int, default=25, help="images per manipulation kind")
    sp.add_argument("--image-size", type=int, default=512)
    sp.add_argument("--sources", type=int, default=60, help="procedural source pool size")
    sp.add_argument("--pristine-dir", type=Path, default=None)

    tp = sub.add_parser("train", help="train the six resampling classifiers")
    tp.add_argument("--patches-per-task", type=int, default=10000)
    tp.add_argument("--sources", type=int, default=20)
    tp.add_argument("--pristine-dir", type=Path, default=None)
    tp.add_argument("--epochs", type=int, default=250)
    tp.add_argument("--learning-rate", type=float, default=0.05)

    dp = sub.add_parser("detect", help="score a single image")
    dp.add_argument("image", type=Path)
    dp.add_argument(
        "--method", choices=("cascade", "copymove", "resample"), default="cascade"
    )

    ep = sub.add_parser("evaluate", help="evaluate detectors over a corpus manifest")
    ep.add_argument("manifest", type=Path)
    return p


def _task_seed(seed: int, index: int, salt: int = 0) -> int:
    return int(np.random.SeedSequence((seed, index, salt)).generate_state(1)[0])


def load_models(models_dir: Path) -> dict:
    if models_dir is None:
        raise FileNotFoundError("no --models-dir given")
    models = {}
    for task in TASK_ORDER:
        path = models_dir / f"{task.value}{MODEL_SUFFIX}"
        if not path.exists():
            raise FileNotFoundError(
                f"missing model {path}; run `forgescope train --models-dir {models_dir}`"
            )
        models[task] = load_model(path)
    return models


def _source_pool(pristine_dir, n_sources: int, seed: int, size: int = 512):
    if pristine_dir is not None:
        paths = sorted(Path(pristine_dir).glob("*.png"))
        if not paths:
            raise FileNotFoundError(f"no PNG sources in {pristine_dir}")
        return [load_image(p) for p in paths]
    return [synth_pristine((seed, 7_000_019 + i), size) for i in range(n_sources)]


def _cmd_synth(args) -> int:
    if args.out is None:
        raise _UsageError("synth requires --out")
    counts = {ForgeryKind.PRISTINE: args.pristine}
    for kind in standard_corpus_counts():
        if kind is not ForgeryKind.PRISTINE:
            counts[kind] = args.per_kind
    manifest = generate_corpus(
        args.out,
        counts,
        seed=args.seed,
        pristine_dir=args.pristine_dir,
        image_size=args.image_size,
        n_sources=args.sources,
    )
    print(json.dumps({"manifest": str(manifest.root / "manifest.jsonl"),
                      "images": len(manifest.records)}))
    return 0


def train_task_models(
    sources,
    patches_per_task: int = 10000,
    seed: int = 42,
    epochs: int = 250,
    learning_rate: float = 0.05,
):
    """Train the six classifiers from a pristine source pool.

    Returns ({task: model}, {task: holdout accuracy}). Deterministic given
    (sources, seed); the held-out fifth never touches training.
    """
    models = {}
    accuracies = {}
    for index, task in enumerate(TASK_ORDER):
        x, y = make_patch_dataset(sources, task, patches_per_task, seed=(seed, index))
        rng = np.random.default_rng(_task_seed(seed, index, salt=1))
        perm = rng.permutation(len(y))
        cut = int(0.8 * len(y))
        tr, ho = perm[:cut], perm[cut:]
        cfg = TrainConfig(
            learning_rate=learning_rate,
            batch_size=32,
            epochs=epochs,
            seed=_task_seed(seed, index, salt=2),
            l2=1e-4,
        )
        model = train(x[tr], y[tr], cfg, task=task)
        models[task] = model
        accuracies[task] = float(np.mean((forward(model, x[ho]) >= 0.5) == (y[ho] == 1)))
    return models, accuracies


def _cmd_train(args) -> int:
    if args.models_dir is None:
        raise _UsageError("train requires --models-dir")
    args.models_dir.mkdir(parents=True, exist_ok=True)
    sources = _source_pool(args.pristine_dir, args.sources, args.seed)
    models, accuracies = train_task_models(
        sources,
        patches_per_task=args.patches_per_task,
        seed=args.seed,
        epochs=args.epochs,
        learning_rate=args.learning_rate,
    )
    summary = {}
    for task in TASK_ORDER:
        save_model(models[task], args.models_dir / f"{task.value}{MODEL_SUFFIX}")
        summary[task.value] = {"holdout_accuracy": accuracies[task]}
        print(f"{task.value}: holdout accuracy {accuracies[task]:.3f}")
    with open(args.models_dir / "training_report.json", "w", encoding="ascii") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return 0


def _cmd_detect(args) -> int:
    img = load_image(args.image)
    out = args.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    stem = args.image.stem

    if args.method == "copymove":
        report = detect_copymove(img, seed=args.seed)
        write_mask_png(report.mask, out / f"{stem}_copymove_mask.png")
        payload = {
            "method": "copymove",
            "flagged": report.flagged,
            "confidence": report.confidence,
            "components": report.pairs,
            "note": report.note,
        }
    elif args.method == "resample":
        models = load_models(args.models_dir)
        report = detect_resampling(img, models)
        heatmap_export(report, out / f"{stem}_resample")
        payload = {
            "method": "resample",
            "overall": report.overall,
            "per_task_scores": {t.value: s for t, s in report.task_scores.items()},
            "degenerate": report.degenerate,
        }
    else:
        models = load_models(args.models_dir)
        cm = detect_copymove(img, seed=args.seed)
        write_mask_png(cm.mask, out / f"{stem}_copymove_mask.png")
        resample_score = None
        if not cm.flagged:
            rs = detect_resampling(img, models)
            heatmap_export(rs, out / f"{stem}_resample")
            resample_score = rs.overall
        from .fusion import fuse_score

        payload = {
            "method": "cascade",
            "fused_score": fuse_score(cm.confidence, cm.flagged, resample_score),
            "cm_confidence": cm.confidence,
            "cm_flagged": cm.flagged,
            "resample_score": resample_score,
        }
    print(json.dumps(payload, sort_keys=True))
    return 0


def _cmd_evaluate(args) -> int:
    if args.out is None:
        raise _UsageError("evaluate requires --out")
    models = load_models(args.models_dir)
    manifest = load_manifest(args.manifest)
    report = evaluate(
        manifest, models, args.out, threads=args.threads, cm_seed=args.seed
    )
    print(
        json.dumps(
            {
                "auc": report.auc,
                "breakdown": report.breakdown,
                "threshold": report.threshold,
                "report": str(Path(args.out) / "report.json"),
            },
            sort_keys=True,
        )
    )
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "detect": _cmd_detect,
    "evaluate": _cmd_evaluate,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ForgescopeError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
