"""Adaptive lighting correction and rotation correction.

Lighting: estimate mean background/foreground intensities from the
intensity histogram (background by quantile cutoff, foreground by Otsu
cutoff), then normalize both to fixed targets with a dual gamma
transform f' = 1 - (1 - f^g1)^g2.

Rotation: find the angle minimizing the normalized Shannon entropy of
the horizontal projection profile, via golden-section search accelerated
on a Gaussian pyramid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imaging import GrayImage, Histogram, histogram, pyramid_reduce


class LightingError(ValueError):
    """Degenerate page: lighting statistics cannot be estimated."""


@dataclass(frozen=True)
class LightingProfile:
    v_bg: float
    v_fg: float
    v_bg_cut: float
    v_fg_cut: float
    alpha: float
    v_bgt: float
    v_fgt: float
    gamma1: float
    gamma2: float

    def __post_init__(self):
        if not (0.0 < self.v_bg < self.v_fg < 1.0):
            raise LightingError(
                f"need 0 < v_bg < v_fg < 1, got v_bg={self.v_bg:.4f} v_fg={self.v_fg:.4f}"
            )
        if not (0.0 < self.v_bgt < self.v_fgt < 1.0):
            raise ValueError("targets must satisfy 0 < v_bgt < v_fgt < 1")
        if self.gamma1 <= 0 or self.gamma2 <= 0:
            raise ValueError("gammas must be positive")


@dataclass(frozen=True)
class ProjectionProfile:
    theta: float
    b: np.ndarray
    p: np.ndarray
    entropy: float


def otsu_threshold(hist: Histogram) -> float:
    """Cut intensity maximizing between-class variance; ties go low.

    The returned value is a bin boundary t/B: class 0 holds bins below it,
    class 1 the rest.
    """
    counts = np.asarray(hist.bins, dtype=np.float64)
    if np.count_nonzero(counts) < 2:
        raise LightingError("histogram has fewer than 2 populated bins")
    B = len(counts)
    centers = (np.arange(B) + 0.5) / B
    total = counts.sum()
    w0 = np.cumsum(counts)[:-1]  # class 0 = bins [0, t), cut t = 1..B-1
    w1 = total - w0
    m0 = np.cumsum(counts * centers)[:-1]
    m1 = (counts * centers).sum() - m0
    valid = (w0 > 0) & (w1 > 0)
    var_b = np.zeros(B - 1)
    var_b[valid] = w0[valid] * w1[valid] * (m0[valid] / w0[valid] - m1[valid] / w1[valid]) ** 2
    t = int(np.argmax(var_b)) + 1  # argmax returns the first (lowest) maximizer
    return t / B


def estimate_lighting(
    img: GrayImage,
    alpha: float = 0.75,
    v_bgt: float = 0.01,
    v_fgt: float = 0.9,
    bins: int = 256,
) -> LightingProfile:
    """Estimate background/foreground intensities and the dual-gamma exponents.

    Background mean is taken over intensities up to the alpha-quantile;
    foreground mean over intensities above the Otsu cutoff.
    """
    px = img.pixels
    hist = histogram(img, bins)
    if np.count_nonzero(hist.bins) < 2:
        raise LightingError("degenerate image: single intensity level")
    v_bg_cut = hist.quantile(alpha)
    v_fg_cut = otsu_threshold(hist)
    bg_sel = px[px <= v_bg_cut]
    fg_sel = px[px >= v_fg_cut]
    if bg_sel.size == 0 or fg_sel.size == 0:
        raise LightingError("empty background or foreground class")
    v_bg = float(bg_sel.mean())
    v_fg = float(fg_sel.mean())
    if not (0.0 < v_bg < v_fg < 1.0):
        raise LightingError(
            f"inverted or blank page: v_bg={v_bg:.4f}, v_fg={v_fg:.4f}"
        )
    gamma1 = math.log(v_bgt) / math.log(v_bg)
    gamma2 = math.log(1.0 - v_fgt) / math.log(1.0 - v_fg)
    return LightingProfile(
        v_bg=v_bg,
        v_fg=v_fg,
        v_bg_cut=v_bg_cut,
        v_fg_cut=v_fg_cut,
        alpha=alpha,
        v_bgt=v_bgt,
        v_fgt=v_fgt,
        gamma1=gamma1,
        gamma2=gamma2,
    )


def dual_gamma(img: GrayImage, profile: LightingProfile) -> GrayImage:
    """Apply f' = 1 - (1 - f^g1)^g2 per pixel, clamped to [0, 1]."""
    f = img.pixels
    out = 1.0 - (1.0 - np.power(f, profile.gamma1)) ** profile.gamma2
    return GrayImage(np.clip(out, 0.0, 1.0))


def rotate(img: GrayImage, degrees: float) -> GrayImage:
    """Bilinear rotation about the image center, zero fill outside."""
    if degrees == 0.0:
        return GrayImage(img.pixels)
    out = ndimage.rotate(
        img.pixels, degrees, reshape=False, order=1, mode="constant", cval=0.0,
        prefilter=False,
    )
    return GrayImage(np.clip(out, 0.0, 1.0))


def projection_entropy(img: GrayImage, theta: float) -> ProjectionProfile:
    """Row-projection profile and its normalized Shannon entropy at `theta`.

    Entropy of an all-zero projection is defined as 1.0 so blank regions
    never win a minimization.
    """
    if abs(theta) > 45.0:
        raise ValueError("|theta| must be <= 45 degrees")
    rotated = rotate(img, theta)
    b = rotated.pixels.sum(axis=1)
    total = b.sum()
    n = len(b)
    if total <= 0.0:
        return ProjectionProfile(theta=theta, b=b, p=np.zeros_like(b), entropy=1.0)
    p = b / total
    nz = p[p > 0]
    raw = -np.sum(nz * np.log2(nz))
    entropy = 0.0 if n == 1 else float(raw / np.log2(n))
    return ProjectionProfile(theta=theta, b=b, p=p, entropy=entropy)


def golden_section_minimize(fn, lo: float, hi: float, tol: float) -> float:
    """Golden-section search for the argmin of a unimodal scalar function.

    Uses at most ceil(log((hi-lo)/tol)/log(1/rho)) + 2 evaluations,
    rho = golden ratio - 1. Non-unimodal input yields a local minimum.
    """
    if not lo < hi:
        raise ValueError("need lo < hi")
    if tol <= 0:
        raise ValueError("tol must be positive")
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - invphi * (hi - lo)
    x2 = lo + invphi * (hi - lo)
    f1, f2 = fn(x1), fn(x2)
    while hi - lo > tol:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - invphi * (hi - lo)
            f1 = fn(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + invphi * (hi - lo)
            f2 = fn(x2)
    return (lo + hi) / 2.0


@dataclass(frozen=True)
class DeskewResult:
    angle: float
    image: GrayImage
    blank_page: bool
    entropy: float


def deskew(
    img: GrayImage,
    search_range: float = 5.0,
    tol: float = 0.02,
    levels: int = 3,
    grid_step: float = 0.5,
) -> DeskewResult:
    """Estimate and apply the rotation that minimizes projection entropy.

    The search runs coarse-to-fine over a Gaussian pyramid: a grid scan at
    `grid_step` degrees brackets the minimum on the coarsest level (guards
    against non-unimodal profiles), golden-section refines there, and each
    finer level re-searches a window of 4x the previous level's tolerance
    around the running argmin.
    """
    if search_range > 10.0:
        raise ValueError("search range capped at 10 degrees")
    if img.pixels.sum() <= 0.0:
        return DeskewResult(angle=0.0, image=GrayImage(img.pixels),
                            blank_page=True, entropy=1.0)
    pyr = pyramid_reduce(img, levels)
    n_levels = len(pyr)

    best = 0.0
    for k, level in enumerate(reversed(pyr)):  # coarsest first
        depth = n_levels - 1 - k  # pyramid index of this level
        level_tol = tol * (4.0 ** depth)
        fn = lambda th: projection_entropy(level, th).entropy  # noqa: E731
        if k == 0:
            grid = np.arange(-search_range, search_range + 1e-9, grid_step)
            ent = [fn(t) for t in grid]
            g = float(grid[int(np.argmin(ent))])
            lo = max(-search_range, g - grid_step)
            hi = min(search_range, g + grid_step)
        else:
            prev_tol = tol * (4.0 ** (depth + 1))
            lo = max(-search_range, best - 2.0 * prev_tol)
            hi = min(search_range, best + 2.0 * prev_tol)
        if hi - lo > level_tol:
            best = golden_section_minimize(fn, lo, hi, level_tol)
        else:
            best = (lo + hi) / 2.0

    corrected = rotate(img, best)
    final_entropy = projection_entropy(corrected, 0.0).entropy
    return DeskewResult(angle=best, image=corrected, blank_page=False,
                        entropy=final_entropy)
