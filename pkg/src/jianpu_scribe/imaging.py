"""Grayscale raster type, PNG/PGM I/O, and shared filters.

Every image in the toolkit uses an ink-bright convention: foreground ink
is near 1.0 and paper background near 0.0. Loading inverts the usual
paper-white byte encoding (pixel = 1 - value/255), so background mass
integrates over low intensities and foreground sums count ink directly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import ndimage


class ImageFormatError(ValueError):
    """Unreadable file or unsupported pixel format."""


@dataclass(frozen=True)
class BoundingBox:
    """Pixel box, inclusive (x0, y0), exclusive (x1, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"degenerate box ({self.x0},{self.y0},{self.x1},{self.y1})")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)

    def iou(self, other: "BoundingBox") -> float:
        ix = min(self.x1, other.x1) - max(self.x0, other.x0)
        iy = min(self.y1, other.y1) - max(self.y0, other.y0)
        if ix <= 0 or iy <= 0:
            return 0.0
        inter = ix * iy
        return inter / float(self.area + other.area - inter)

    def to_list(self) -> list[int]:
        return [self.x0, self.y0, self.x1, self.y1]


class GrayImage:
    """2-D grayscale raster with intensities in [0, 1], ink bright.

    Pixels are stored as a read-only float64 array; instances are safe to
    share across threads.
    """

    __slots__ = ("pixels",)

    def __init__(self, pixels):
        arr = np.asarray(pixels, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must be 2-D with positive dimensions")
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("intensities must lie in [0, 1]")
        arr = arr.copy()
        arr.setflags(write=False)
        self.pixels = arr

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    def __eq__(self, other):
        return isinstance(other, GrayImage) and np.array_equal(self.pixels, other.pixels)

    def __repr__(self):
        return f"GrayImage({self.height}x{self.width})"


@dataclass(frozen=True)
class Histogram:
    """Equal-width intensity histogram over [0, 1], top bin closed."""

    bins: np.ndarray
    total: int

    @property
    def nbins(self) -> int:
        return len(self.bins)

    def pdf(self) -> np.ndarray:
        return self.bins / float(self.total)

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.bins) / float(self.total)

    def cdf_at(self, v: float) -> float:
        """Fraction of pixels in bins up to and including the one holding v."""
        b = min(int(np.floor(v * self.nbins)), self.nbins - 1)
        return float(np.sum(self.bins[: b + 1])) / self.total

    def quantile(self, q: float) -> float:
        """Smallest bin upper edge whose CDF reaches q."""
        if not 0.0 <= q <= 1.0:
            raise ValueError("quantile must be in [0, 1]")
        cum = np.cumsum(self.bins)
        b = int(np.searchsorted(cum, q * self.total))
        b = min(b, self.nbins - 1)
        return (b + 1) / self.nbins


def _read_pgm(path: Path) -> GrayImage:
    data = path.read_bytes()
    if not data.startswith(b"P5"):
        raise ImageFormatError(f"{path}: not a binary PGM (P5) file")
    # header: magic, width, height, maxval; '#' comments allowed
    tokens = []
    i = 2
    while len(tokens) < 3:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if i < len(data) and data[i : i + 1] == b"#":
            while i < len(data) and data[i] != 0x0A:
                i += 1
            continue
        j = i
        while j < len(data) and not data[j : j + 1].isspace():
            j += 1
        if j == i:
            raise ImageFormatError(f"{path}: truncated PGM header")
        tokens.append(data[i:j])
        i = j
    i += 1  # single whitespace after maxval
    w, h, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise ImageFormatError(f"{path}: unsupported PGM bit depth (maxval {maxval})")
    raw = data[i : i + w * h]
    if len(raw) != w * h:
        raise ImageFormatError(f"{path}: truncated PGM pixel data")
    vals = np.frombuffer(raw, dtype=np.uint8).reshape(h, w)
    return GrayImage(1.0 - vals / 255.0)


def _write_pgm(img: GrayImage, path: Path) -> None:
    vals = np.rint((1.0 - img.pixels) * 255.0).astype(np.uint8)
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    path.write_bytes(header + vals.tobytes())


def load_image(path) -> GrayImage:
    """Read a PNG or PGM file into an ink-bright GrayImage.

    8-bit grayscale is used directly; RGB is converted by luma. The result
    is inverted so ink is bright (1 - value/255).
    """
    path = Path(path)
    if not path.exists():
        raise ImageFormatError(f"{path}: file not found")
    if path.suffix.lower() in (".pgm",) or path.read_bytes()[:2] == b"P5":
        return _read_pgm(path)
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as im:
            if im.mode == "L":
                arr = np.asarray(im, dtype=np.uint8)
            elif im.mode in ("RGB", "RGBA"):
                arr = np.asarray(im.convert("L"), dtype=np.uint8)
            else:
                raise ImageFormatError(f"{path}: unsupported pixel mode {im.mode!r}")
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"{path}: unreadable image ({exc})") from exc
    return GrayImage(1.0 - arr / 255.0)


def save_image(img: GrayImage, path) -> None:
    """Write a GrayImage as PNG or PGM (paper-white byte convention)."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        _write_pgm(img, path)
        return
    if path.suffix.lower() == ".png":
        from PIL import Image

        vals = np.rint((1.0 - img.pixels) * 255.0).astype(np.uint8)
        Image.fromarray(vals, mode="L").save(path)
        return
    raise ImageFormatError(f"{path}: unsupported output format {path.suffix!r}")


def histogram(img: GrayImage, bins: int = 256) -> Histogram:
    """Bin intensities into `bins` equal-width bins; the top bin is closed."""
    if bins < 2:
        raise ValueError("need at least 2 bins")
    idx = np.minimum((img.pixels * bins).astype(np.int64), bins - 1)
    counts = np.bincount(idx.ravel(), minlength=bins)
    return Histogram(bins=counts, total=int(img.pixels.size))


@lru_cache(maxsize=32)
def _log_kernels(sigma: float):
    """Sampled Gaussian and its second derivative, zero-sum enforced.

    Subtracting the derivative kernel's mean removes the DC leak of the
    truncated sampling, so a constant image maps to exactly zero.
    """
    radius = int(np.ceil(4.0 * sigma))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(xs * xs) / (2.0 * sigma * sigma))
    g /= g.sum()
    d2 = (xs * xs / sigma ** 4 - 1.0 / sigma ** 2) * g
    d2 -= d2.mean()
    g.setflags(write=False)
    d2.setflags(write=False)
    return g, d2


def log_response(arr: np.ndarray, sigma: float, mode: str = "reflect") -> np.ndarray:
    """Separable LoG convolution: Gxx (x) Gy + Gx (x) Gyy."""
    g, d2 = _log_kernels(sigma)
    rows = ndimage.correlate1d(ndimage.correlate1d(arr, d2, axis=1, mode=mode),
                               g, axis=0, mode=mode)
    cols = ndimage.correlate1d(ndimage.correlate1d(arr, d2, axis=0, mode=mode),
                               g, axis=1, mode=mode)
    return rows + cols


def log_filter(img: GrayImage, sigma: float) -> np.ndarray:
    """Laplacian-of-Gaussian response with reflect padding (signed raster)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if sigma > min(img.height, img.width) / 2:
        raise ValueError("sigma too large for image")
    return log_response(img.pixels, sigma, mode="reflect")


def pyramid_reduce(img: GrayImage, levels: int) -> list[GrayImage]:
    """Gaussian pyramid: level 0 is the input, each next level blurred
    (sigma 1.0) and 2x downsampled by block averaging.

    Truncates with a warning instead of producing sub-16-px levels.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    out = [img]
    cur = img.pixels
    for _ in range(levels - 1):
        if cur.shape[0] // 2 < 16 or cur.shape[1] // 2 < 16:
            warnings.warn("pyramid truncated: next level would be smaller than 16 px")
            break
        blurred = ndimage.gaussian_filter(cur, sigma=1.0, mode="reflect")
        h2, w2 = blurred.shape[0] // 2, blurred.shape[1] // 2
        blk = blurred[: 2 * h2, : 2 * w2].reshape(h2, 2, w2, 2).mean(axis=(1, 3))
        cur = np.clip(blk, 0.0, 1.0)
        out.append(GrayImage(cur))
    return out


def crop(img: GrayImage, box: BoundingBox) -> GrayImage:
    """Exact copy of the pixels inside `box`."""
    if box.x0 < 0 or box.y0 < 0 or box.x1 > img.width or box.y1 > img.height:
        raise ValueError(f"box {box} out of bounds for {img!r}")
    return GrayImage(img.pixels[box.y0 : box.y1, box.x0 : box.x1])


@lru_cache(maxsize=512)
def _resample_grid(ih: int, iw: int, oh: int, ow: int):
    ys = (np.arange(oh) + 0.5) * (ih / oh) - 0.5
    xs = (np.arange(ow) + 0.5) * (iw / ow) - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    yy.setflags(write=False)
    xx.setflags(write=False)
    return yy, xx


def _resize_array(arr: np.ndarray, out_shape: tuple[int, int]) -> np.ndarray:
    """Bilinear resample of a raw array to `out_shape` (area-aligned grid)."""
    oh, ow = out_shape
    ih, iw = arr.shape
    yy, xx = _resample_grid(ih, iw, oh, ow)
    return ndimage.map_coordinates(arr, [yy, xx], order=1, mode="nearest")


def resize(img: GrayImage, scale: float) -> GrayImage:
    """Bilinear resize; output dims are round(dim * scale)."""
    if not 0.25 <= scale <= 4.0:
        raise ValueError("scale must be within [0.25, 4]")
    oh = max(1, int(round(img.height * scale)))
    ow = max(1, int(round(img.width * scale)))
    if (oh, ow) == img.shape:
        return GrayImage(img.pixels)
    return GrayImage(np.clip(_resize_array(img.pixels, (oh, ow)), 0.0, 1.0))


def resize_to(img: GrayImage, shape: tuple[int, int]) -> GrayImage:
    """Bilinear resize to an explicit (height, width)."""
    if shape == img.shape:
        return GrayImage(img.pixels)
    return GrayImage(np.clip(_resize_array(img.pixels, shape), 0.0, 1.0))
