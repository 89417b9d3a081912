"""forgescope: image manipulation detection by cascading two complementary
detectors, a dense-field copy-move matcher and a resampling-artifact
classifier bank, with ROC/AUC evaluation over synthetic corpora."""

from .copymove import CopyMoveReport, OffsetField, detect_copymove, patchmatch, zernike_features
from .errors import ForgescopeError
from .features import patch_features
from .fusion import EvalReport, RocCurve, cascade_score, choose_threshold, evaluate, roc_auc
from .image import BinaryMask, GrayImage, Heatmap, decode_image, jpeg_roundtrip, load_image
from .mlp import Mlp, TaskKind, TrainConfig, forward, gradient_check, load_model, save_model, train
from .resample import ResampleReport, detect_resampling
from .segment import mask_from_heatmap, otsu_threshold, random_walker
from .synth import ForgeryKind, generate_corpus, load_manifest, make_copy_move, synth_pristine

__version__ = "0.1.0"

__all__ = [
    "BinaryMask",
    "CopyMoveReport",
    "EvalReport",
    "ForgeryKind",
    "ForgescopeError",
    "GrayImage",
    "Heatmap",
    "Mlp",
    "OffsetField",
    "ResampleReport",
    "RocCurve",
    "TaskKind",
    "TrainConfig",
    "cascade_score",
    "choose_threshold",
    "decode_image",
    "detect_copymove",
    "detect_resampling",
    "evaluate",
    "forward",
    "generate_corpus",
    "gradient_check",
    "jpeg_roundtrip",
    "load_image",
    "load_manifest",
    "load_model",
    "make_copy_move",
    "mask_from_heatmap",
    "otsu_threshold",
    "patch_features",
    "patchmatch",
    "random_walker",
    "roc_auc",
    "save_model",
    "synth_pristine",
    "train",
    "zernike_features",
]
