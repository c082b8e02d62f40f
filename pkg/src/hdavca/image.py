"""Grayscale image containers, file IO and resampling shared by all feature extractors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError

# ITU-R BT.601 luma weights used when collapsing RGB to a single channel.
BT601_WEIGHTS = (0.299, 0.587, 0.114)

# Minimum side length for images entering feature extraction (patch window size).
MIN_FEATURE_DIM = 33


@dataclass(frozen=True)
class GrayImage:
    """2-D luminance raster with real-valued intensities in [0, 255]."""

    pixels: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"GrayImage expects a 2-D array, got shape {arr.shape}")
        if arr.size == 0:
            raise ValueError("zero-sized image")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class StereoPair:
    """Left/right luminance views of equal dimensions."""

    left: GrayImage
    right: GrayImage

    def __post_init__(self):
        if (self.left.width, self.left.height) != (self.right.width, self.right.height):
            raise ValueError(
                "stereo views differ in size: "
                f"{self.left.width}x{self.left.height} vs {self.right.width}x{self.right.height}"
            )

    @property
    def width(self) -> int:
        return self.left.width

    @property
    def height(self) -> int:
        return self.left.height


def require_feature_size(img: GrayImage) -> None:
    """Reject images too small for the 33x33 patch machinery."""
    if img.width < MIN_FEATURE_DIM or img.height < MIN_FEATURE_DIM:
        raise ValueError(
            f"image {img.width}x{img.height} too small for feature extraction "
            f"(needs at least {MIN_FEATURE_DIM}x{MIN_FEATURE_DIM})"
        )


def load_image(path) -> GrayImage:
    """Load a PNG or binary 8-bit PGM file as a luminance raster.

    RGB(A) inputs are collapsed with BT.601 weights; grayscale data passes
    through untouched so 8-bit PGM round-trips bit-exactly.
    """
    path = str(path)
    try:
        with open(path, "rb") as fh:
            magic = fh.read(2)
    except OSError as exc:
        raise ValueError(f"unreadable file: {path}") from exc

    if magic == b"P5":
        return _load_pgm(path)
    if magic == b"\x89P":
        return _load_png(path)
    raise ValueError(f"unsupported format: {path}")


def _load_png(path: str) -> GrayImage:
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("RGB", "RGBA", "P"):
                rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
                wr, wg, wb = BT601_WEIGHTS
                gray = wr * rgb[:, :, 0] + wg * rgb[:, :, 1] + wb * rgb[:, :, 2]
            elif im.mode in ("L", "I", "I;16", "1"):
                gray = np.asarray(im.convert("L"), dtype=np.float64)
            else:
                raise ValueError(f"unsupported format: PNG mode {im.mode}")
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ValueError(f"unreadable file: {path}") from exc
    if gray.size == 0:
        raise ValueError("zero-sized image")
    return GrayImage(gray)


def _load_pgm(path: str) -> GrayImage:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    # Header: magic, width, height, maxval; '#' starts a comment to end of line.
    while len(tokens) < 4 and pos < len(data):
        ch = data[pos : pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
        else:
            end = pos
            while end < len(data) and not data[end : end + 1].isspace():
                end += 1
            tokens.append(data[pos:end])
            pos = end
    if len(tokens) < 4 or tokens[0] != b"P5":
        raise ValueError(f"unreadable file: {path}")
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as exc:
        raise ValueError(f"unreadable file: {path}") from exc
    if width == 0 or height == 0:
        raise ValueError("zero-sized image")
    if not 0 < maxval < 256:
        raise ValueError(f"unsupported format: PGM maxval {maxval} (8-bit only)")
    pos += 1  # single whitespace byte after maxval
    raster = data[pos : pos + width * height]
    if len(raster) < width * height:
        raise ValueError(f"unreadable file: {path}")
    arr = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return GrayImage(arr.astype(np.float64))


def save_pgm(img: GrayImage, path) -> None:
    """Write an 8-bit binary PGM (debug/exchange format)."""
    arr = np.clip(np.rint(img.pixels), 0, 255).astype(np.uint8)
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    with open(str(path), "wb") as fh:
        fh.write(header)
        fh.write(arr.tobytes())


def resize_bilinear(img: GrayImage, new_w: int, new_h: int) -> GrayImage:
    """Bilinear resample with half-pixel center alignment."""
    if new_w < 1 or new_h < 1:
        raise ValueError(f"target size must be at least 1x1, got {new_w}x{new_h}")
    out = resample_bilinear(img.pixels, new_w, new_h)
    return GrayImage(out)


def resample_bilinear(arr: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    """resize_bilinear on a bare 2-D array (used for real-valued maps too)."""
    arr = np.asarray(arr, dtype=np.float64)
    h, w = arr.shape
    if (new_h, new_w) == (h, w):
        return arr.copy()
    # Output pixel centers mapped back into source coordinates.
    sx = (np.arange(new_w) + 0.5) * (w / new_w) - 0.5
    sy = (np.arange(new_h) + 0.5) * (h / new_h) - 0.5
    x0 = np.clip(np.floor(sx), 0, w - 1).astype(np.int64)
    y0 = np.clip(np.floor(sy), 0, h - 1).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = np.clip(sx - x0, 0.0, 1.0)
    fy = np.clip(sy - y0, 0.0, 1.0)

    top = arr[y0][:, x0] * (1 - fx) + arr[y0][:, x1] * fx
    bot = arr[y1][:, x0] * (1 - fx) + arr[y1][:, x1] * fx
    return top * (1 - fy[:, None]) + bot * fy[:, None]


def gaussian_kernel_2d(size: int, sigma: float) -> np.ndarray:
    """Odd-sized 2-D Gaussian kernel normalized to unit sum."""
    if size % 2 == 0 or size < 1:
        raise ValueError(f"kernel size must be odd and positive, got {size}")
    half = size // 2
    coords = np.arange(size) - half
    g1 = np.exp(-(coords**2) / (2.0 * sigma * sigma))
    k = np.outer(g1, g1)
    return k / k.sum()
