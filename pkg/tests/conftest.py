import numpy as np
import pytest

from jianpu_scribe import fixtures, lyricocr, pipeline
from jianpu_scribe.config import PipelineConfig


@pytest.fixture(scope="session")
def digit_glyphs():
    return fixtures.load_digit_glyphs()


@pytest.fixture(scope="session")
def default_config():
    return PipelineConfig()


@pytest.fixture(scope="session")
def melody_assets(default_config):
    return pipeline.load_assets(default_config)


@pytest.fixture(scope="session")
def charset_1000():
    return lyricocr.load_charset(fixtures.default_charset_path())[:1000]


@pytest.fixture(scope="session")
def atlas_dir(tmp_path_factory, charset_1000):
    out = tmp_path_factory.mktemp("atlas")
    fixtures.write_glyph_atlas(charset_1000, out)
    return out


@pytest.fixture(scope="session")
def atlas(atlas_dir):
    return fixtures.GlyphAtlas(atlas_dir)


@pytest.fixture(scope="session")
def table_1000(charset_1000, atlas):
    return lyricocr.build_template_table(charset_1000, atlas, size=32)


def render_melody_page(seed, digit_glyphs, **plan_kwargs):
    rng = np.random.default_rng(seed)
    plan = fixtures.generate_page_plan(
        rng, glyph_dims=(digit_glyphs[1].width, digit_glyphs[1].height),
        **plan_kwargs)
    img = fixtures.render_page(plan, digit_glyphs, rng=rng)
    return plan, img
