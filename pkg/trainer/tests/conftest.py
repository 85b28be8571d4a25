import numpy as np
import pytest
import torch


@pytest.fixture(scope="session")
def patch_corpus(tmp_path_factory):
    """500 glyph patch PNGs rendered by the primary's synthesizer.

    The trainer consumes plain PNG files; using the pipeline's glyph
    generator here just gives the corpus realistic structure.
    """
    from jianpu_scribe.fixtures import default_charset_path, synthesize_hanzi_glyph
    from jianpu_scribe.imaging import save_image
    from jianpu_scribe.lyricocr import load_charset

    out = tmp_path_factory.mktemp("patches")
    chars = load_charset(default_charset_path())[:500]
    for i, ch in enumerate(chars):
        save_image(synthesize_hanzi_glyph(ch, 48), out / f"patch_{i:04d}.png")
    return out, chars


@pytest.fixture(scope="session")
def trained_checkpoint(patch_corpus):
    from embed_trainer.train import TrainConfig, load_patch_dir, train

    patch_dir, _ = patch_corpus
    _, patches = load_patch_dir(patch_dir)
    cfg = TrainConfig(seed=3, epochs=10, batch_size=64)
    return train(patches, cfg), cfg
