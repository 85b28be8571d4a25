"""jianpu-scribe: batch OMR for printed numbered-notation scores.

Library layout mirrors the pipeline: imaging (rasters and filters),
preprocess (lighting and deskew), morphoskel (morphology and skeleton
chains), symboldetect (glyph detection), anisoindex (anisotropic
nearest-neighbor search), semantics (score assembly), scorexport
(MusicXML/MIDI/JSON), charsim (patch similarity metrics), lyricocr
(character-level lyric recognition), evalkit (metrics), pipeline + cli
(batch orchestration), fixtures (synthetic test corpus).
"""

__version__ = "0.1.0"

from .imaging import BoundingBox, GrayImage, load_image, save_image  # noqa: F401
