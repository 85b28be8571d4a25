"""embed-trainer: SimCLR-style contrastive training for character patches.

Trains a small convolutional encoder with a projection head on unlabeled
patch images (two augmented views per patch, NT-Xent loss on the unit
hypersphere) and exports an id -> unit-vector table in the EMB1 binary
format consumed by the recognition pipeline.
"""

__version__ = "0.1.0"

from .loss import nt_xent  # noqa: F401
from .emb_format import read_emb1, write_emb1  # noqa: F401
