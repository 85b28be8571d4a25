"""Stochastic augmentations producing positive pairs.

Each training step draws two independent views of every patch: a random
similarity transform (scale and rotation in one resample), brightness
and contrast jitter, and optional random erasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F


@dataclass(frozen=True)
class AugmentationPolicy:
    scale_range: tuple = (0.85, 1.15)
    rotation_deg: float = 5.0
    jitter_strength: float = 0.2
    erase_prob: float = 0.5
    erase_area: tuple = (0.05, 0.2)


def _rand(gen, lo, hi):
    return lo + (hi - lo) * torch.rand(1, generator=gen).item()


def augment_view(patch: torch.Tensor, policy: AugmentationPolicy,
                 gen: torch.Generator) -> torch.Tensor:
    """One augmented view of a (1, H, W) patch in [0, 1]."""
    _, h, w = patch.shape
    scale = _rand(gen, *policy.scale_range)
    theta_deg = _rand(gen, -policy.rotation_deg, policy.rotation_deg)
    rad = math.radians(theta_deg)
    cos, sin = math.cos(rad) / scale, math.sin(rad) / scale
    theta = torch.tensor([[cos, -sin, 0.0], [sin, cos, 0.0]],
                         dtype=patch.dtype).unsqueeze(0)
    grid = F.affine_grid(theta, (1, 1, h, w), align_corners=False)
    out = F.grid_sample(patch.unsqueeze(0), grid, align_corners=False,
                        padding_mode="zeros").squeeze(0)

    a = _rand(gen, 1.0 - policy.jitter_strength, 1.0 + policy.jitter_strength)
    b = _rand(gen, -policy.jitter_strength / 2, policy.jitter_strength / 2)
    out = torch.clamp(a * out + b, 0.0, 1.0)

    if torch.rand(1, generator=gen).item() < policy.erase_prob:
        area = _rand(gen, *policy.erase_area) * h * w
        eh = max(1, int(round(math.sqrt(area * _rand(gen, 0.5, 2.0)))))
        ew = max(1, int(round(area / eh)))
        eh, ew = min(eh, h), min(ew, w)
        y0 = int(_rand(gen, 0, h - eh))
        x0 = int(_rand(gen, 0, w - ew))
        out[:, y0 : y0 + eh, x0 : x0 + ew] = 0.0
    return out


def positive_pair(patch: torch.Tensor, policy: AugmentationPolicy,
                  gen: torch.Generator):
    """Two independent augmented views of the same patch."""
    return augment_view(patch, policy, gen), augment_view(patch, policy, gen)
