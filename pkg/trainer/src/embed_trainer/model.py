"""Desk-scale encoder: three conv blocks plus a projection head.

Patches enter as 1x48x48 grayscale; the projection head maps to a
128-dimensional vector which is L2-normalized, so embeddings live on the
unit hypersphere and cosine similarity is a dot product.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

PATCH_SIZE = 48


class PatchEncoder(nn.Module):
    def __init__(self, projection_dim: int = 128):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(1, 16, 3, padding=1), nn.BatchNorm2d(16), nn.ReLU(),
            nn.MaxPool2d(2),  # 24
            nn.Conv2d(16, 32, 3, padding=1), nn.BatchNorm2d(32), nn.ReLU(),
            nn.MaxPool2d(2),  # 12
            nn.Conv2d(32, 64, 3, padding=1), nn.BatchNorm2d(64), nn.ReLU(),
            nn.AdaptiveAvgPool2d(4),
        )
        self.projection = nn.Sequential(
            nn.Flatten(),
            nn.Linear(64 * 4 * 4, 256), nn.ReLU(),
            nn.Linear(256, projection_dim),
        )
        self.projection_dim = projection_dim

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.normalize(self.projection(self.features(x)), dim=1)
