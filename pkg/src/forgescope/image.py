"""Pixel containers, codecs, patch extraction, and the small shared filters.

Everything downstream works on luminance rasters in [0, 1]. Color is reduced
to luminance at decode time with BT.601 weights and never comes back.
"""

from __future__ import annotations

import io
import math
import zlib
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError

from . import _kernels
from .errors import DecodeError, ImageTooSmall, UnsupportedFormatError

BT601 = (0.299, 0.587, 0.114)

_PNG_SIG = b"\x89PNG\r\n\x1a\n"
_HEATMAP_MAGIC = b"FSHM1\n"


def _validate_unit_raster(arr: np.ndarray, what: str) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{what} must be a 2-D array, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{what} must have positive dimensions")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{what} values must lie in [0, 1]")
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GrayImage:
    """Immutable luminance raster, row-major, values in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pixels", _validate_unit_raster(self.pixels, "image"))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class Heatmap:
    """Per-pixel manipulation-evidence scores in [0, 1]."""

    scores: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "scores", _validate_unit_raster(self.scores, "heatmap"))

    @property
    def height(self) -> int:
        return self.scores.shape[0]

    @property
    def width(self) -> int:
        return self.scores.shape[1]


@dataclass(frozen=True)
class BinaryMask:
    """Per-pixel boolean mask; True marks manipulated pixels."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits)
        if arr.dtype != np.bool_:
            raise ValueError("mask bits must be boolean")
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"mask must be a 2-D array, got shape {arr.shape}")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def area(self) -> int:
        return int(self.bits.sum())


# ---------------------------------------------------------------------------
# codecs


def _scan_png(data: bytes) -> None:
    """Walk the chunk structure, raising DecodeError at the first bad offset."""
    if not data.startswith(_PNG_SIG):
        raise DecodeError("bad PNG signature", 0)
    pos = 8
    saw_ihdr = False
    while True:
        if pos + 8 > len(data):
            raise DecodeError("truncated chunk header", pos)
        length = int.from_bytes(data[pos : pos + 4], "big")
        ctype = data[pos + 4 : pos + 8]
        if not all(65 <= b <= 90 or 97 <= b <= 122 for b in ctype):
            raise DecodeError(f"invalid chunk type {ctype!r}", pos + 4)
        end = pos + 8 + length + 4
        if end > len(data):
            raise DecodeError("truncated chunk payload", pos + 8)
        payload = data[pos + 8 : pos + 8 + length]
        crc = int.from_bytes(data[pos + 8 + length : end], "big")
        if zlib.crc32(ctype + payload) & 0xFFFFFFFF != crc:
            raise DecodeError(f"CRC mismatch in {ctype.decode()} chunk", pos + 8 + length)
        if not saw_ihdr:
            if ctype != b"IHDR":
                raise DecodeError("first chunk is not IHDR", pos + 4)
            bit_depth, color_type = payload[8], payload[9]
            if bit_depth != 8 or color_type not in (0, 2):
                raise UnsupportedFormatError(
                    f"only 8-bit grayscale or RGB PNG supported "
                    f"(bit depth {bit_depth}, color type {color_type})"
                )
            saw_ihdr = True
        if ctype == b"IEND":
            return
        pos = end


_JPEG_SOF = {0xC0, 0xC1, 0xC2, 0xC3, 0xC5, 0xC6, 0xC7, 0xC9, 0xCA, 0xCB, 0xCD, 0xCE, 0xCF}


def _scan_jpeg(data: bytes) -> None:
    """Walk marker segments; reject non-baseline encodings."""
    if len(data) < 2 or data[0] != 0xFF or data[1] != 0xD8:
        raise DecodeError("missing SOI marker", 0)
    pos = 2
    sof = None
    while pos < len(data):
        if data[pos] != 0xFF:
            raise DecodeError("expected marker byte 0xFF", pos)
        while pos < len(data) and data[pos] == 0xFF:
            pos += 1
        if pos >= len(data):
            raise DecodeError("dangling marker prefix", pos - 1)
        marker = data[pos]
        pos += 1
        if marker == 0xD9:  # EOI
            if sof is None:
                raise DecodeError("no frame header before EOI", pos - 2)
            if sof != 0xC0:
                raise UnsupportedFormatError(
                    "only baseline JPEG supported"
                    + (" (progressive input)" if sof == 0xC2 else "")
                )
            return
        if 0xD0 <= marker <= 0xD7 or marker == 0x01:
            continue
        if pos + 2 > len(data):
            raise DecodeError("truncated segment length", pos)
        seglen = int.from_bytes(data[pos : pos + 2], "big")
        if seglen < 2 or pos + seglen > len(data):
            raise DecodeError("bad segment length", pos)
        if marker in _JPEG_SOF:
            sof = marker
        if marker == 0xDA:  # SOS: skip entropy-coded data up to next real marker
            scan = pos + seglen
            while scan + 1 < len(data):
                if data[scan] == 0xFF and data[scan + 1] != 0x00 and not (
                    0xD0 <= data[scan + 1] <= 0xD7
                ):
                    break
                scan += 1
            else:
                raise DecodeError("entropy-coded data runs past end of file", len(data))
            pos = scan
            continue
        pos += seglen
    raise DecodeError("missing EOI marker", len(data))


def decode_image(data: bytes) -> GrayImage:
    """Decode PNG or baseline JPEG bytes to a luminance raster.

    Color inputs are reduced with BT.601 weights (0.299, 0.587, 0.114).
    Malformed files raise DecodeError with the byte offset of the first bad
    structure; unsupported formats raise UnsupportedFormatError.
    """
    if data.startswith(_PNG_SIG):
        _scan_png(data)
    elif data[:2] == b"\xff\xd8":
        _scan_jpeg(data)
    else:
        raise UnsupportedFormatError("not a PNG or JPEG file")
    try:
        with Image.open(io.BytesIO(data)) as im:
            im.load()
            mode = im.mode
            if mode not in ("L", "RGB"):
                raise UnsupportedFormatError(f"unsupported pixel mode {mode}")
            arr = np.asarray(im, dtype=np.float64)
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeError(f"decoder rejected file: {exc}", 0) from exc
    if arr.ndim == 3:
        arr = arr[..., 0] * BT601[0] + arr[..., 1] * BT601[1] + arr[..., 2] * BT601[2]
    return GrayImage(arr / 255.0)


def load_image(path) -> GrayImage:
    with open(path, "rb") as fh:
        return decode_image(fh.read())


def _to_u8(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(values * 255.0), 0, 255).astype(np.uint8)


def encode_png(img: GrayImage) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(_to_u8(img.pixels), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def write_heatmap_png(hmap: Heatmap, path) -> None:
    Image.fromarray(_to_u8(hmap.scores), mode="L").save(path, format="PNG")


def write_mask_png(mask: BinaryMask, path) -> None:
    arr = np.where(mask.bits, 255, 0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path, format="PNG")


def read_mask_png(path) -> BinaryMask:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return BinaryMask(arr >= 128)


def jpeg_roundtrip(img: GrayImage, qf: int) -> GrayImage:
    """Baseline JPEG encode at quality qf, then decode. Dimensions preserved."""
    if not 1 <= qf <= 100:
        raise ValueError(f"quality factor must be in [1, 100], got {qf}")
    buf = io.BytesIO()
    Image.fromarray(_to_u8(img.pixels), mode="L").save(buf, format="JPEG", quality=qf)
    with Image.open(buf) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float64)
    return GrayImage(arr / 255.0)


def write_heatmap_float(hmap: Heatmap, path) -> None:
    """Raw float sidecar: magic line, "W H" line, little-endian float32 rows."""
    with open(path, "wb") as fh:
        fh.write(_HEATMAP_MAGIC)
        fh.write(f"{hmap.width} {hmap.height}\n".encode("ascii"))
        fh.write(hmap.scores.astype("<f4").tobytes())


def read_heatmap_float(path) -> Heatmap:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(_HEATMAP_MAGIC):
        raise DecodeError("bad heatmap sidecar magic", 0)
    nl = data.index(b"\n", len(_HEATMAP_MAGIC))
    w, h = (int(tok) for tok in data[len(_HEATMAP_MAGIC) : nl].split())
    raw = data[nl + 1 :]
    if len(raw) != 4 * w * h:
        raise DecodeError("heatmap sidecar payload size mismatch", nl + 1)
    arr = np.frombuffer(raw, dtype="<f4").reshape(h, w).astype(np.float64)
    return Heatmap(arr)


# ---------------------------------------------------------------------------
# patch extraction


@dataclass(frozen=True)
class PatchGrid:
    """Regular grid of fully-contained patch origins, row-major."""

    patch_size: int
    stride: int
    nx: int
    ny: int
    origins: list = field(default_factory=list)

    def __len__(self):
        return len(self.origins)


def extract_patches(img: GrayImage, size: int, stride: int) -> PatchGrid:
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if size < 1:
        raise ValueError("patch size must be >= 1")
    if size > img.width or size > img.height:
        raise ImageTooSmall(
            f"image {img.width}x{img.height} smaller than patch size {size}"
        )
    nx = (img.width - size) // stride + 1
    ny = (img.height - size) // stride + 1
    origins = [(ix * stride, iy * stride) for iy in range(ny) for ix in range(nx)]
    return PatchGrid(patch_size=size, stride=stride, nx=nx, ny=ny, origins=origins)


def patch_stack(img: GrayImage, grid: PatchGrid) -> np.ndarray:
    """Materialize all grid patches as one (n, size, size) array."""
    s = grid.patch_size
    out = np.empty((len(grid), s, s), np.float64)
    for i, (x, y) in enumerate(grid.origins):
        out[i] = img.pixels[y : y + s, x : x + s]
    return out


# ---------------------------------------------------------------------------
# filters


_LAPLACIAN_MIN = 3


def laplacian3x3(img) -> np.ndarray:
    """Convolve with [[0,1,0],[1,-4,1],[0,1,0]], edge-replicated border.

    Accepts a GrayImage or a bare 2-D array; returns a signed float array
    (the residue is deliberately left unclamped).
    """
    arr = img.pixels if isinstance(img, GrayImage) else np.asarray(img, np.float64)
    if arr.shape[0] < _LAPLACIAN_MIN or arr.shape[1] < _LAPLACIAN_MIN:
        raise ImageTooSmall(f"laplacian needs at least 3x3, got {arr.shape}")
    p = np.pad(arr, 1, mode="edge")
    return p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:] - 4.0 * arr


def bilateral_filter(hmap: Heatmap, sigma_spatial: float, sigma_range: float) -> Heatmap:
    """Edge-preserving smoothing with Gaussian spatial and range weights.

    Window radius is ceil(3 * sigma_spatial); borders are edge-replicated.
    """
    if sigma_spatial <= 0 or sigma_range <= 0:
        raise ValueError("sigmas must be positive")
    rad = int(math.ceil(3.0 * sigma_spatial))
    scores = hmap.scores.astype(np.float32)
    padded = np.pad(scores, rad, mode="edge")
    ax = np.arange(-rad, rad + 1, dtype=np.float64)
    spatial = np.exp(
        -(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * sigma_spatial * sigma_spatial)
    ).astype(np.float32)
    pair = _kernels.range_weight_table(sigma_range)
    out = _kernels.bilateral_kernel(
        padded,
        hmap.height,
        hmap.width,
        rad,
        spatial,
        pair,
        np.float32(_kernels.RANGE_TABLE_BINS),
    )
    # where smoothing left the single-precision value untouched (constant
    # neighbourhoods), keep the caller's exact double-precision value
    result = np.where(out == scores, hmap.scores, out.astype(np.float64))
    return Heatmap(np.clip(result, 0.0, 1.0))


def median_filter(hmap: Heatmap, radius: int) -> Heatmap:
    """Per-pixel median over the (2r+1)^2 edge-replicated window."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    h, w = hmap.scores.shape
    p = np.pad(hmap.scores, radius, mode="edge")
    n = 2 * radius + 1
    stack = np.empty((n * n, h, w), np.float64)
    k = 0
    for dy in range(n):
        for dx in range(n):
            stack[k] = p[dy : dy + h, dx : dx + w]
            k += 1
    return Heatmap(np.median(stack, axis=0))
