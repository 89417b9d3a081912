"""Shared fixtures.

The trained-model and corpus fixtures are expensive (minutes). They are
deterministic functions of fixed seeds, so setting FORGESCOPE_TEST_CACHE to a
directory lets repeated runs reuse the artifacts byte-identically; unset, every
run rebuilds from scratch.
"""

import os
from pathlib import Path

import numpy as np
import pytest

from forgescope.cli import MODEL_SUFFIX, _source_pool, train_task_models
from forgescope.fusion import evaluate
from forgescope.mlp import TASK_ORDER, load_model, save_model
from forgescope.synth import generate_corpus, load_manifest, standard_corpus_counts

TRAIN_SEED = 42
CORPUS_SEED = 42


def _cache_dir() -> Path | None:
    value = os.environ.get("FORGESCOPE_TEST_CACHE")
    if not value:
        return None
    path = Path(value)
    path.mkdir(parents=True, exist_ok=True)
    return path


@pytest.fixture(scope="session")
def pristine_pool():
    return _source_pool(None, 20, TRAIN_SEED)


@pytest.fixture(scope="session")
def trained_models(pristine_pool):
    """The six canonical task classifiers plus their held-out accuracies."""
    cache = _cache_dir()
    if cache is not None:
        model_dir = cache / "models"
        acc_file = model_dir / "accuracies.npy"
        if acc_file.exists():
            models = {
                task: load_model(model_dir / f"{task.value}{MODEL_SUFFIX}")
                for task in TASK_ORDER
            }
            accs = np.load(acc_file)
            return models, {task: float(a) for task, a in zip(TASK_ORDER, accs)}
    models, accuracies = train_task_models(pristine_pool, seed=TRAIN_SEED)
    if cache is not None:
        model_dir = cache / "models"
        model_dir.mkdir(parents=True, exist_ok=True)
        for task in TASK_ORDER:
            save_model(models[task], model_dir / f"{task.value}{MODEL_SUFFIX}")
        np.save(model_dir / "accuracies.npy",
                np.array([accuracies[t] for t in TASK_ORDER]))
    return models, accuracies


@pytest.fixture(scope="session")
def standard_corpus(tmp_path_factory):
    """Seed-42 corpus: 150 pristine + 150 manipulated at 512x512."""
    cache = _cache_dir()
    root = (cache / "corpus") if cache is not None else tmp_path_factory.mktemp("corpus")
    manifest_path = root / "manifest.jsonl"
    if not manifest_path.exists():
        generate_corpus(root, standard_corpus_counts(), seed=CORPUS_SEED)
    return load_manifest(manifest_path)


@pytest.fixture(scope="session")
def standard_eval(standard_corpus, trained_models, tmp_path_factory):
    """Full single-threaded evaluation over the standard corpus."""
    import pickle
    import time

    models, _ = trained_models
    cache = _cache_dir()
    out = (cache / "eval") if cache is not None else tmp_path_factory.mktemp("eval")
    pkl = (cache / "eval_report.pkl") if cache is not None else None
    if pkl is not None and pkl.exists():
        with open(pkl, "rb") as fh:
            return pickle.load(fh)
    t0 = time.perf_counter()
    report = evaluate(standard_corpus, models, out, threads=1)
    report.runtime["fixture_wall_seconds"] = time.perf_counter() - t0
    if pkl is not None:
        with open(pkl, "wb") as fh:
            pickle.dump(report, fh)
    return report
