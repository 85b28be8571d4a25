"""Seeded, deterministic training loop and table export."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .augment import AugmentationPolicy, positive_pair
from .emb_format import write_emb1
from .loss import nt_xent
from .model import PATCH_SIZE, PatchEncoder

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    projection_dim: int = 128
    tau: float = 0.5
    batch_size: int = 64
    epochs: int = 10
    lr: float = 1e-3
    seed: int = 0
    policy: AugmentationPolicy = field(default_factory=AugmentationPolicy)

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("temperature must be positive")


def _deterministic(seed: int):
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True)
    torch.set_num_threads(1)


def load_patch(path) -> torch.Tensor:
    """PNG to a (1, S, S) ink-bright tensor in [0, 1]."""
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float32)
    t = torch.from_numpy(1.0 - arr / 255.0).unsqueeze(0)
    if t.shape[1:] != (PATCH_SIZE, PATCH_SIZE):
        t = torch.nn.functional.interpolate(
            t.unsqueeze(0), size=(PATCH_SIZE, PATCH_SIZE), mode="bilinear",
            align_corners=False).squeeze(0)
    return t


def load_patch_dir(directory) -> tuple[list, torch.Tensor]:
    """All PNGs in a directory, sorted by name; ids are file stems."""
    paths = sorted(Path(directory).glob("*.png"))
    if not paths:
        raise ValueError(f"no .png patches under {directory}")
    ids = [p.stem for p in paths]
    patches = torch.stack([load_patch(p) for p in paths])
    return ids, patches


def train(patches: torch.Tensor, cfg: TrainConfig) -> dict:
    """Contrastive training over a (n, 1, S, S) patch tensor.

    Returns a checkpoint dict with the model state and the per-epoch
    mean losses; the final epoch must improve on the first.
    """
    if len(patches) < 2 * 2:
        raise ValueError("need at least 4 patches")
    _deterministic(cfg.seed)
    gen = torch.Generator().manual_seed(cfg.seed)
    model = PatchEncoder(cfg.projection_dim)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    model.train()
    epoch_losses = []
    n = len(patches)
    for epoch in range(cfg.epochs):
        order = torch.randperm(n, generator=gen)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if len(idx) < 2:
                continue
            views = []
            for i in idx:
                a, b = positive_pair(patches[i], cfg.policy, gen)
                views.extend((a, b))
            batch = torch.stack(views)
            loss = nt_xent(model(batch), cfg.tau)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
        epoch_losses.append(float(np.mean(losses)))
        log.info("epoch %d: mean loss %.4f", epoch, epoch_losses[-1])
    assert epoch_losses[-1] < epoch_losses[0], "training failed to improve"
    return {
        "model_state": model.state_dict(),
        "projection_dim": cfg.projection_dim,
        "tau": cfg.tau,
        "seed": cfg.seed,
        "epoch_losses": epoch_losses,
    }


def save_checkpoint(ckpt: dict, path) -> None:
    torch.save(ckpt, path)


def load_checkpoint(path) -> tuple[PatchEncoder, dict]:
    ckpt = torch.load(path, weights_only=True)
    model = PatchEncoder(ckpt["projection_dim"])
    model.load_state_dict(ckpt["model_state"])
    model.eval()
    return model, ckpt


def embed(model: PatchEncoder, patches: torch.Tensor,
          batch_size: int = 128) -> np.ndarray:
    """Unit-norm float32 embeddings, deterministic, no augmentation."""
    torch.set_num_threads(1)
    model.eval()
    out = []
    with torch.no_grad():
        for start in range(0, len(patches), batch_size):
            out.append(model(patches[start : start + batch_size]))
    return torch.cat(out).numpy().astype("<f4")


def export_table(model: PatchEncoder, ids: list, patches: torch.Tensor,
                 out_path) -> int:
    """Embed patches and write the EMB1 table; returns the record count."""
    vectors = embed(model, patches)
    norms = np.linalg.norm(vectors.astype(np.float64), axis=1, keepdims=True)
    vectors = (vectors / norms).astype("<f4")
    write_emb1(out_path, ids, vectors)
    return len(ids)
