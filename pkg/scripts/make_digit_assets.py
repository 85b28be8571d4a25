#!/usr/bin/env python3
"""Regenerate the committed digit glyph assets and accent masks.

Digits 0-7 are rasterized once from DejaVu Sans (bundled with
matplotlib), tight-cropped with a 6 px margin, and written as
paper-white PNGs under src/jianpu_scribe/assets/digits/. Accent masks
start at zero (gray 128); see docs/accent_masks.md for the authoring
convention if a publication needs hand-tuned accents.

Run from the repo root: python scripts/make_digit_assets.py
"""

import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
ASSETS = ROOT / "src" / "jianpu_scribe" / "assets"


def render_digit(ch: str, size: int = 36, margin: int = 6) -> np.ndarray:
    import matplotlib
    from PIL import Image, ImageDraw, ImageFont

    ttf = Path(matplotlib.get_data_path()) / "fonts" / "ttf" / "DejaVuSans.ttf"
    font = ImageFont.truetype(str(ttf), size)
    canvas = Image.new("L", (3 * size, 3 * size), 255)
    ImageDraw.Draw(canvas).text((size, size // 2), ch, font=font, fill=0)
    arr = 255 - np.asarray(canvas)
    ys, xs = np.nonzero(arr > 32)
    y0, y1 = ys.min() - margin, ys.max() + 1 + margin
    x0, x1 = xs.min() - margin, xs.max() + 1 + margin
    return 255 - arr[y0:y1, x0:x1]  # back to paper-white bytes


def make_accent(glyph_bytes: np.ndarray, digit: int, sigma: float = 1.4,
                strength: float = 0.8) -> np.ndarray:
    """Emphasis accent: boost the digit's discriminative region.

    Digits 1 and 7 are near-degenerate with generic page strokes (stems,
    dashes); their accents re-weight the LoG response toward the flag of
    the 1 and the diagonal of the 7 so straight bars score lower. All
    other digits keep zero accents.
    """
    from jianpu_scribe.imaging import log_response

    h, w = glyph_bytes.shape
    accent = np.zeros((h, w))
    if digit not in (1, 7):
        return accent
    ink = 1.0 - glyph_bytes / 255.0
    pad = int(np.ceil(4 * sigma)) + 1
    resp = log_response(np.pad(ink, pad), sigma, mode="constant")[pad:-pad, pad:-pad]
    region = np.zeros((h, w), dtype=bool)
    if digit == 1:
        region[: int(0.45 * h), :] = True  # the flag
    else:
        region[int(0.42 * h):, :] = True  # the diagonal
    accent[region] = strength * resp[region]
    return accent


def main() -> int:
    from PIL import Image

    digits_dir = ASSETS / "digits"
    accents_dir = ASSETS / "accents"
    digits_dir.mkdir(parents=True, exist_ok=True)
    accents_dir.mkdir(parents=True, exist_ok=True)
    for d in range(8):
        glyph = render_digit(str(d))
        Image.fromarray(glyph.astype(np.uint8), mode="L").save(digits_dir / f"d{d}.png")
        accent = make_accent(glyph, d)
        # PNG convention (docs/accent_masks.md): byte v maps to v/255 - 0.5
        v = np.clip(np.round((accent + 0.5) * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(v, mode="L").save(accents_dir / f"d{d}.png")
        tag = " (accented)" if np.abs(accent).max() > 0 else ""
        print(f"d{d}: {glyph.shape[1]}x{glyph.shape[0]}{tag}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
