"""Synthetic forgery and training-data generation with ground truth.

All generation is a pure function of (inputs, seed): every image derives a
sub-seed from (corpus seed, index), so corpora are byte-reproducible and
independent of scheduling.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ImageTooSmall, InsufficientTexture, ParamRange
from .features import batch_patch_features
from .image import BinaryMask, GrayImage, encode_png, jpeg_roundtrip, write_mask_png
from .mlp import TaskKind

MANIFEST_SCHEMA = "fs-corpus/1"

PARAM_RANGES = {
    TaskKind.UPSAMPLE: ("scale", 1.1, 2.0),
    TaskKind.DOWNSAMPLE: ("scale", 0.5, 0.9),
    TaskKind.ROTATE_CW: ("angle", -45.0, -2.0),
    TaskKind.ROTATE_CCW: ("angle", 2.0, 45.0),
    TaskKind.SHEAR: ("shear", 0.05, 0.3),
    TaskKind.JPEG_BELOW_85: ("qf", 40, 84),
}

PATCH_CONTEXT = 160  # large enough that a 0.5x downscale still fills 64x64
_GUARD_QF = (98, 100)  # high-quality roundtrip so compression alone is no shortcut
_SPLICE_SIDE = (384, 480)  # majority of pixels must flip for a median score to move
_CONTEXT_STD = 0.05  # flat patches carry no resampling evidence for any task


class ForgeryKind(enum.Enum):
    COPY_MOVE = "CopyMove"
    SPLICE_UPSAMPLE = "SpliceUpsample"
    SPLICE_DOWNSAMPLE = "SpliceDownsample"
    SPLICE_ROTATE_CW = "SpliceRotateCW"
    SPLICE_ROTATE_CCW = "SpliceRotateCCW"
    SPLICE_SHEAR = "SpliceShear"
    RECOMPRESS_BELOW_85 = "RecompressBelow85"
    PRISTINE = "Pristine"


SPLICE_TASK = {
    ForgeryKind.SPLICE_UPSAMPLE: TaskKind.UPSAMPLE,
    ForgeryKind.SPLICE_DOWNSAMPLE: TaskKind.DOWNSAMPLE,
    ForgeryKind.SPLICE_ROTATE_CW: TaskKind.ROTATE_CW,
    ForgeryKind.SPLICE_ROTATE_CCW: TaskKind.ROTATE_CCW,
    ForgeryKind.SPLICE_SHEAR: TaskKind.SHEAR,
}


@dataclass
class GroundTruth:
    label: str  # "pristine" | "manipulated"
    mask: BinaryMask | None
    kind: ForgeryKind
    params: dict


# ---------------------------------------------------------------------------
# geometry


def _affine_matrix(task: TaskKind, params: dict) -> np.ndarray:
    """Forward 2x2 matrix in (x, y) coordinates for the affine tasks."""
    if task in (TaskKind.UPSAMPLE, TaskKind.DOWNSAMPLE):
        s = params["scale"]
        return np.array([[s, 0.0], [0.0, s]])
    if task in (TaskKind.ROTATE_CW, TaskKind.ROTATE_CCW):
        t = np.deg2rad(params["angle"])
        return np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
    if task is TaskKind.SHEAR:
        k = params["shear"]
        return np.array([[1.0, k], [0.0, 1.0]])
    raise ValueError(f"{task} has no affine form")


def bilinear_sample(arr: np.ndarray, sx: np.ndarray, sy: np.ndarray, fill: float = 0.0):
    """Sample arr at fractional (sx, sy); taps outside read `fill`."""
    h, w = arr.shape
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0
    out = np.zeros(sx.shape, np.float64)
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            xs = x0 + dx
            ys = y0 + dy
            inside = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
            vals = np.where(inside, arr[ys.clip(0, h - 1), xs.clip(0, w - 1)], fill)
            out += wy * wx * vals
    return out


def affine_bilinear(arr: np.ndarray, matrix: np.ndarray, fill: float = 0.0) -> np.ndarray:
    """Apply a forward affine about the array center; output keeps the shape."""
    h, w = arr.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    inv = np.linalg.inv(matrix)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    sx = inv[0, 0] * (xs - cx) + inv[0, 1] * (ys - cy) + cx
    sy = inv[1, 0] * (xs - cx) + inv[1, 1] * (ys - cy) + cy
    return bilinear_sample(arr, sx, sy, fill)


def apply_transform(img: GrayImage, task: TaskKind, params: dict) -> GrayImage:
    """One documented transform; affine kinds resample about the image center.

    Parameter ranges are enforced strictly (identity values are out of range
    by design), so every transformed image genuinely differs from its source.
    """
    name, lo, hi = PARAM_RANGES[task]
    if name not in params:
        raise ParamRange(f"{task.value} requires parameter {name!r}")
    value = params[name]
    if not lo <= value <= hi:
        raise ParamRange(f"{task.value} {name}={value} outside [{lo}, {hi}]")
    if task is TaskKind.JPEG_BELOW_85:
        return jpeg_roundtrip(img, int(value))
    out = affine_bilinear(img.pixels, _affine_matrix(task, params))
    return GrayImage(np.clip(out, 0.0, 1.0))


def sample_params(task: TaskKind, rng: np.random.Generator) -> dict:
    name, lo, hi = PARAM_RANGES[task]
    if name == "qf":
        return {name: int(rng.integers(lo, hi + 1))}
    return {name: float(rng.uniform(lo, hi))}


# ---------------------------------------------------------------------------
# pristine sources

# The band mix balances the two detectors. Mid bands (4-25 px) dominate so the
# moment-feature field varies smoothly at the matching-disk scale, giving
# clone matches an attraction basin; the 1.5 px band and the dense enveloped
# gratings keep interpolation artifacts above the 8-bit quantization floor,
# which is where the resampling classifiers read their signal. Gratings are
# narrowband, so disk integration averages them out and the basins survive.
_NOISE_BANDS = ((1.5, 0.6), (4.0, 1.5), (10.0, 1.5), (25.0, 1.5), (50.0, 1.2))


def synth_pristine(seed, size: int = 512) -> GrayImage:
    """Procedural stand-in for a pristine photo.

    Bandpassed noise, a gradient, and oriented localized gratings (periodic
    micro-structure, as fabrics or railings would give). Smoothing white
    noise leaves no interpolation periodicity, so these behave like camera
    content for the resampling features. The output is snapped to the 8-bit
    grid exactly like any stored photograph.
    """
    rng = np.random.default_rng(seed)
    img = np.zeros((size, size))
    for sigma, amp in _NOISE_BANDS:
        img += amp * rng.uniform(0.5, 1.0) * gaussian_filter(
            rng.standard_normal((size, size)), sigma
        )
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    gx, gy = rng.uniform(-1, 1, 2)
    img += 0.4 * (gx * xs + gy * ys) / size
    for _ in range(int(rng.integers(10, 17))):
        freq = rng.uniform(0.05, 0.42)
        phi = rng.uniform(0, np.pi)
        phase = rng.uniform(0, 2 * np.pi)
        cy, cx = rng.uniform(0, size, 2)
        sig = rng.uniform(40, 120)
        envelope = np.exp(-(((ys - cy) ** 2 + (xs - cx) ** 2) / (2 * sig * sig)))
        carrier = np.sin(2 * np.pi * freq * (np.cos(phi) * xs + np.sin(phi) * ys) + phase)
        img += rng.uniform(0.08, 0.22) * envelope * carrier
    lo, hi = np.percentile(img, [0.5, 99.5])
    img = 0.05 + 0.9 * (img - lo) / max(hi - lo, 1e-9)
    return GrayImage(np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0)


# ---------------------------------------------------------------------------
# forgeries


def make_copy_move(img: GrayImage, rng: np.random.Generator):
    """Clone a textured block to a non-overlapping destination >= 32 px away.

    The ground-truth mask marks the destination region only.
    """
    if img.height < 128 or img.width < 128:
        raise ImageTooSmall("copy-move synthesis needs at least 128x128")
    px = img.pixels
    for _ in range(200):
        side = int(rng.integers(32, 65))
        sx = int(rng.integers(0, img.width - side + 1))
        sy = int(rng.integers(0, img.height - side + 1))
        block = px[sy : sy + side, sx : sx + side]
        if block.std() < 0.05:
            continue
        dx = int(rng.integers(0, img.width - side + 1))
        dy = int(rng.integers(0, img.height - side + 1))
        dist = np.hypot(dx - sx, dy - sy)
        overlap = abs(dx - sx) < side and abs(dy - sy) < side
        if dist < 32 or overlap:
            continue
        out = px.copy()
        out[dy : dy + side, dx : dx + side] = block
        mask = np.zeros(px.shape, bool)
        mask[dy : dy + side, dx : dx + side] = True
        truth = GroundTruth(
            label="manipulated",
            mask=BinaryMask(mask),
            kind=ForgeryKind.COPY_MOVE,
            params={
                "side": side,
                "source": [sx, sy],
                "destination": [dx, dy],
                "offset": [dx - sx, dy - sy],
            },
        )
        return GrayImage(out), truth
    raise InsufficientTexture("no textured non-overlapping block placement found")


def make_splice(base: GrayImage, donor: GrayImage, kind: ForgeryKind, rng):
    """Paste a hard-edged square of resampled donor content onto the base.

    The pasted square is sampled through the inverse transform about the
    donor center. The donor must be large enough to cover the inverse-mapped
    square (a 0.5x downscale of a 480 px square reads a 960 px extent);
    undersized donors fall back to reflected extension, which self-duplicates
    content, so corpus generation always supplies oversized donors.
    """
    task = SPLICE_TASK[kind]
    params = sample_params(task, rng)
    side = int(rng.integers(_SPLICE_SIDE[0], min(_SPLICE_SIDE[1], base.width, base.height) + 1))
    x0 = int(rng.integers(0, base.width - side + 1))
    y0 = int(rng.integers(0, base.height - side + 1))

    inv = np.linalg.inv(_affine_matrix(task, params))
    ys, xs = np.mgrid[0:side, 0:side].astype(np.float64)
    half = (side - 1) / 2.0
    sx = inv[0, 0] * (xs - half) + inv[0, 1] * (ys - half)
    sy = inv[1, 0] * (xs - half) + inv[1, 1] * (ys - half)
    reach = max(np.abs(sx).max(), np.abs(sy).max()) + 1.0
    if 2 * reach <= min(donor.width, donor.height):
        cx = (donor.width - 1) / 2.0
        cy = (donor.height - 1) / 2.0
        region = np.clip(bilinear_sample(donor.pixels, sx + cx, sy + cy), 0.0, 1.0)
    else:
        pad = donor.width
        padded = np.pad(donor.pixels, pad, mode="reflect")
        cx = pad + (donor.width - 1) / 2.0
        cy = pad + (donor.height - 1) / 2.0
        region = np.clip(bilinear_sample(padded, sx + cx, sy + cy), 0.0, 1.0)

    out = base.pixels.copy()
    out[y0 : y0 + side, x0 : x0 + side] = region
    mask = np.zeros(base.pixels.shape, bool)
    mask[y0 : y0 + side, x0 : x0 + side] = True
    truth = GroundTruth(
        label="manipulated",
        mask=BinaryMask(mask),
        kind=kind,
        params={**params, "side": side, "position": [x0, y0]},
    )
    return GrayImage(out), truth


# ---------------------------------------------------------------------------
# training patches

_OTHER_TRANSFORM_PROB = 0.5


def _random_context(sources, rng) -> np.ndarray:
    for _ in range(60):
        src = sources[int(rng.integers(0, len(sources)))]
        x = int(rng.integers(0, src.width - PATCH_CONTEXT + 1))
        y = int(rng.integers(0, src.height - PATCH_CONTEXT + 1))
        ctx = src.pixels[y : y + PATCH_CONTEXT, x : x + PATCH_CONTEXT]
        if ctx.std() >= _CONTEXT_STD:
            return ctx
    return ctx


def _center_crop(arr: np.ndarray, size: int = 64) -> np.ndarray:
    h, w = arr.shape
    y0 = (h - size) // 2
    x0 = (w - size) // 2
    return arr[y0 : y0 + size, x0 : x0 + size]


def _transformed_patch(ctx: np.ndarray, task: TaskKind, params: dict) -> np.ndarray:
    if task is TaskKind.JPEG_BELOW_85:
        patch = GrayImage(_center_crop(ctx))
        return jpeg_roundtrip(patch, int(params["qf"])).pixels
    warped = affine_bilinear(ctx, _affine_matrix(task, params))
    return np.clip(_center_crop(warped), 0.0, 1.0)


# Opposite-direction rotations are mirror images in magnitude spectra and
# near-indistinguishable by construction; keeping them out of each other's
# negative pool avoids label noise. The cascade is unaffected: the image
# score is a max over tasks, so direction confusion never hides a forgery.
_MIRROR_TASK = {
    TaskKind.ROTATE_CW: TaskKind.ROTATE_CCW,
    TaskKind.ROTATE_CCW: TaskKind.ROTATE_CW,
}


def make_patch_dataset(sources, task: TaskKind, n: int, seed):
    """Balanced labelled features for one task: n/2 positive, n/2 negative.

    Positives carry the task transform. Negatives are clean half the time and
    otherwise carry some other (non-mirror) transform; classifiers are
    trained one-vs-rest over overlapping manipulations, so negatives must not
    be trivially clean. For the JPEG task the confusable negative is a
    high-quality (>= 85) recompression. Every patch ends with the same
    high-quality JPEG guard the corpus generator applies, so training and
    evaluation distributions match.
    """
    if n % 2:
        raise ValueError("n must be even")
    if not sources:
        raise ValueError("no source images")
    rng = np.random.default_rng(seed)
    others = [t for t in TaskKind if t is not task and t is not _MIRROR_TASK.get(task)]
    patches = np.empty((n, 64, 64), np.float64)
    labels = np.zeros(n, np.int8)
    labels[: n // 2] = 1
    for i in range(n):
        ctx = _random_context(sources, rng)
        if labels[i]:
            patches[i] = _transformed_patch(ctx, task, sample_params(task, rng))
        elif rng.random() < _OTHER_TRANSFORM_PROB:
            if task is TaskKind.JPEG_BELOW_85 and rng.random() < 0.5:
                qf = int(rng.integers(85, 101))
                patches[i] = jpeg_roundtrip(GrayImage(_center_crop(ctx)), qf).pixels
            else:
                other = others[int(rng.integers(0, len(others)))]
                if other is TaskKind.JPEG_BELOW_85:
                    qf = int(rng.integers(85, 101))
                    patches[i] = jpeg_roundtrip(GrayImage(_center_crop(ctx)), qf).pixels
                else:
                    patches[i] = _transformed_patch(ctx, other, sample_params(other, rng))
        else:
            patches[i] = _center_crop(ctx)
        guard_qf = int(rng.integers(_GUARD_QF[0], _GUARD_QF[1] + 1))
        patches[i] = jpeg_roundtrip(GrayImage(patches[i]), guard_qf).pixels
    features = batch_patch_features(patches)
    return features, labels


# ---------------------------------------------------------------------------
# corpus


def standard_corpus_counts() -> dict:
    counts = {ForgeryKind.PRISTINE: 150}
    for kind in (
        ForgeryKind.COPY_MOVE,
        ForgeryKind.SPLICE_UPSAMPLE,
        ForgeryKind.SPLICE_DOWNSAMPLE,
        ForgeryKind.SPLICE_ROTATE_CW,
        ForgeryKind.SPLICE_ROTATE_CCW,
        ForgeryKind.SPLICE_SHEAR,
    ):
        counts[kind] = 25
    return counts


@dataclass
class ManifestRecord:
    image: str
    mask: str | None
    label: str
    kind: str
    params: dict
    seed: int


@dataclass
class CorpusManifest:
    root: Path
    header: dict
    records: list

    def image_path(self, rec: ManifestRecord) -> Path:
        return self.root / rec.image

    def mask_path(self, rec: ManifestRecord) -> Path | None:
        return None if rec.mask is None else self.root / rec.mask


def _guard_roundtrip(img: GrayImage, rng) -> tuple[GrayImage, int]:
    qf = int(rng.integers(_GUARD_QF[0], _GUARD_QF[1] + 1))
    return jpeg_roundtrip(img, qf), qf


def _make_corpus_image(kind: ForgeryKind, sources, donors, rng):
    """One corpus image of the given kind, plus its ground truth."""
    pick = int(rng.integers(0, len(sources)))
    base = sources[pick]
    if kind is ForgeryKind.PRISTINE:
        img, qf = _guard_roundtrip(base, rng)
        return img, GroundTruth("pristine", None, kind, {"guard_qf": qf})
    if kind is ForgeryKind.COPY_MOVE:
        img, truth = make_copy_move(base, rng)
        img, qf = _guard_roundtrip(img, rng)
        truth.params["guard_qf"] = qf
        return img, truth
    if kind is ForgeryKind.RECOMPRESS_BELOW_85:
        guarded, gqf = _guard_roundtrip(base, rng)
        qf = int(rng.integers(40, 85))
        img = jpeg_roundtrip(guarded, qf)
        mask = BinaryMask(np.ones(base.pixels.shape, bool))
        return img, GroundTruth(
            "manipulated", mask, kind, {"qf": qf, "guard_qf": gqf}
        )
    donor = donors[int(rng.integers(0, len(donors)))]
    img, truth = make_splice(base, donor, kind, rng)
    img, qf = _guard_roundtrip(img, rng)
    truth.params["guard_qf"] = qf
    return img, truth


def generate_corpus(
    out_dir,
    counts: dict,
    seed: int,
    pristine_dir=None,
    image_size: int = 512,
    n_sources: int = 60,
) -> CorpusManifest:
    """Write images, masks, README, and a JSON-Lines manifest.

    Sources come from `pristine_dir` (PNG files, lexicographic order) when
    given, otherwise from the procedural generator. Regeneration with the
    same arguments is byte-identical.
    """
    root = Path(out_dir)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)

    if pristine_dir is not None:
        from .image import load_image

        paths = sorted(Path(pristine_dir).glob("*.png"))
        if len(paths) < 2:
            raise ValueError(f"need at least 2 pristine images in {pristine_dir}")
        sources = [load_image(p) for p in paths]
        donors = sources
    else:
        sources = [
            synth_pristine((seed, 1_000_003 + i), image_size) for i in range(n_sources)
        ]
        # oversized donors keep splice sampling inside real content
        donors = [
            synth_pristine((seed, 2_000_003 + i), 2 * image_size) for i in range(10)
        ]

    plan = []
    for kind in ForgeryKind:
        plan.extend([kind] * counts.get(kind, 0))

    records = []
    for index, kind in enumerate(plan):
        rng = np.random.default_rng((seed, index))
        img, truth = _make_corpus_image(kind, sources, donors, rng)
        name = f"img_{index:05d}"
        img_rel = f"images/{name}.png"
        with open(root / img_rel, "wb") as fh:
            fh.write(encode_png(img))
        mask_rel = None
        if truth.mask is not None:
            mask_rel = f"masks/{name}.png"
            write_mask_png(truth.mask, root / mask_rel)
        records.append(
            ManifestRecord(
                image=img_rel,
                mask=mask_rel,
                label=truth.label,
                kind=truth.kind.value,
                params=truth.params,
                seed=index,
            )
        )

    header = {
        "schema": MANIFEST_SCHEMA,
        "seed": seed,
        "image_size": image_size,
        "counts": {k.value: v for k, v in counts.items() if v},
        "sources": "procedural" if pristine_dir is None else str(pristine_dir),
        "n_sources": len(sources),
    }
    with open(root / "manifest.jsonl", "w", encoding="ascii") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "image": rec.image,
                        "mask": rec.mask,
                        "label": rec.label,
                        "kind": rec.kind,
                        "params": rec.params,
                        "seed": rec.seed,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    with open(root / "README.txt", "w", encoding="ascii") as fh:
        fh.write(
            "Synthetic forgery evaluation corpus\n"
            f"schema: {MANIFEST_SCHEMA}\nseed: {seed}\nimage size: {image_size}\n"
            f"counts: {header['counts']}\n"
            f"sources: {header['sources']} ({len(sources)})\n"
            "Every image passes a quality 90-95 JPEG roundtrip so that\n"
            "compression alone cannot separate the classes.\n"
        )
    return CorpusManifest(root=root, header=header, records=records)


def load_manifest(path) -> CorpusManifest:
    path = Path(path)
    with open(path, encoding="ascii") as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines or lines[0].get("schema") != MANIFEST_SCHEMA:
        raise ValueError(f"not a {MANIFEST_SCHEMA} manifest: {path}")
    records = [ManifestRecord(**rec) for rec in lines[1:]]
    return CorpusManifest(root=path.parent, header=lines[0], records=records)
