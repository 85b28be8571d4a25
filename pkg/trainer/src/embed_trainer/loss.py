"""NT-Xent: normalized-temperature cross entropy over cosine similarities."""

from __future__ import annotations

import torch
import torch.nn.functional as F


def nt_xent(embeddings: torch.Tensor, tau: float = 0.5) -> torch.Tensor:
    """Contrastive loss over a batch of 2N embeddings, pairs (2k, 2k+1).

    Rows are L2-normalized internally, so cosine similarity is a dot
    product. Each row's positive is its pair partner; all other rows in
    the batch are negatives; self-similarity is excluded from the
    softmax. Returns the mean loss per sample.
    """
    if embeddings.dim() != 2 or embeddings.shape[0] % 2 or embeddings.shape[0] < 4:
        raise ValueError("need a (2N, d) batch with N >= 2")
    if tau <= 0:
        raise ValueError("temperature must be positive")
    z = F.normalize(embeddings, dim=1)
    sim = z @ z.T / tau
    n = z.shape[0]
    sim.fill_diagonal_(float("-inf"))
    targets = torch.arange(n, device=z.device) ^ 1  # 2k <-> 2k+1
    return F.cross_entropy(sim, targets)
