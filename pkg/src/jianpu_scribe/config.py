"""Pipeline configuration: one JSON document, validated on load.

Unknown keys are rejected; every default is documented in
docs/config.md. Dotted-path overrides (``--set detect.corr_threshold=0.6``)
coerce the value to the type of the default it replaces.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    """Malformed configuration document or override."""


@dataclass
class LightingConfig:
    alpha: float = 0.75
    v_bgt: float = 0.01
    v_fgt: float = 0.9


@dataclass
class DeskewConfig:
    range_deg: float = 5.0
    tol_deg: float = 0.02
    levels: int = 3
    grid_step_deg: float = 0.5


@dataclass
class DetectConfig:
    log_sigma: float = 1.4
    corr_threshold: float = 0.55
    nms_factor: float = 0.6
    iou_suppress: float = 0.3
    verify_iou: float = 0.5
    binarize_threshold: float = 0.5


@dataclass
class ArcConfig:
    close_radius: int = 2
    open_radius: int = 1
    smooth_window: int = 7
    min_span_factor: float = 1.2
    flatness_min: float = 0.08
    flatness_max: float = 0.5


@dataclass
class RelationConfig:
    octave_rx: float = 0.4
    octave_ry: float = 1.2
    augmentation_rx: float = 1.2
    augmentation_ry: float = 0.35
    underline_rx: float = 0.6
    underline_ry: float = 1.0
    dash_rx: float = 5.0
    dash_ry: float = 0.4
    lyric_rx: float = 0.5
    lyric_ry: float = 2.0
    tie_rx: float = 0.6
    tie_ry: float = 1.6
    cutoff: float = 1.0


@dataclass
class FusionConfig:
    w_phase: float = 0.3
    w_iou: float = 0.25
    w_skeleton: float = 0.3
    w_embedding: float = 0.15
    g_phase: float = 1.0
    g_iou: float = 1.0
    g_skeleton: float = 1.0
    g_embedding: float = 1.0
    lam: float = 12.0


@dataclass
class OcrConfig:
    thresholds: list = field(default_factory=lambda: [0.3, 0.5, 0.7])
    merge_iou: float = 0.4
    merge_center_em: float = 0.5
    aspect_min: float = 0.6
    aspect_max: float = 1.6
    size_min_em: float = 0.6
    size_max_em: float = 1.4
    density_min: float = 0.05
    density_max: float = 0.6
    k1: int = 64
    rank_prior_r0: float = 3000.0
    accept_threshold: float = 0.45
    fast: bool = False


@dataclass
class ScoreConfig:
    key_root: int = 0
    base_octave: int = 4
    beats_per_measure: int = 4
    divisions: int = 480
    tempo_bpm: float = 100.0
    part_name: str = "Jianpu melody"


@dataclass
class AssetConfig:
    digit_glyph_dir: str = ""  # empty means packaged assets
    accent_dir: str = ""
    charset_path: str = ""
    atlas_dir: str = ""
    embedding_table: str = ""


@dataclass
class PipelineConfig:
    lighting: LightingConfig = field(default_factory=LightingConfig)
    deskew: DeskewConfig = field(default_factory=DeskewConfig)
    detect: DetectConfig = field(default_factory=DetectConfig)
    arcs: ArcConfig = field(default_factory=ArcConfig)
    relations: RelationConfig = field(default_factory=RelationConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    ocr: OcrConfig = field(default_factory=OcrConfig)
    score: ScoreConfig = field(default_factory=ScoreConfig)
    assets: AssetConfig = field(default_factory=AssetConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def fusion_weights(self, with_embedding: bool) -> dict:
        w = {
            "phase": self.fusion.w_phase,
            "iou": self.fusion.w_iou,
            "skeleton": self.fusion.w_skeleton,
        }
        if with_embedding:
            w["embedding"] = self.fusion.w_embedding
        return w

    def fusion_gammas(self) -> dict:
        return {
            "phase": self.fusion.g_phase,
            "iou": self.fusion.g_iou,
            "skeleton": self.fusion.g_skeleton,
            "embedding": self.fusion.g_embedding,
        }

    def relation_metrics(self):
        from .semantics import RelationMetrics

        r = self.relations
        return RelationMetrics(
            octave=(r.octave_rx, r.octave_ry),
            augmentation=(r.augmentation_rx, r.augmentation_ry),
            underline=(r.underline_rx, r.underline_ry),
            dash=(r.dash_rx, r.dash_ry),
            lyric=(r.lyric_rx, r.lyric_ry),
            tie_endpoint=(r.tie_rx, r.tie_ry),
            cutoff=r.cutoff,
        )


def _apply_dict(obj, data: dict, path: str) -> None:
    fields = {f.name: f for f in dataclasses.fields(obj)}
    for key, value in data.items():
        if key not in fields:
            raise ConfigError(f"unknown config key {path}{key!r}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            if not isinstance(value, dict):
                raise ConfigError(f"{path}{key}: expected an object")
            _apply_dict(current, value, f"{path}{key}.")
        else:
            setattr(obj, key, _coerce(current, value, f"{path}{key}"))


def _coerce(current, value, path: str):
    if isinstance(current, bool):
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise ConfigError(f"{path}: expected a boolean, got {value!r}")
    if isinstance(current, int) and not isinstance(current, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float, str)):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        try:
            f = float(value)
        except ValueError:
            raise ConfigError(f"{path}: expected an integer, got {value!r}") from None
        if f != int(f):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return int(f)
    if isinstance(current, float):
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{path}: expected a number, got {value!r}") from None
    if isinstance(current, str):
        return str(value)
    if isinstance(current, list):
        if isinstance(value, str):
            value = [v for v in value.split(",") if v]
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        return [float(v) for v in value]
    raise ConfigError(f"{path}: unsupported value type")


def load_config(path=None, overrides=None) -> PipelineConfig:
    """Build a config from defaults, an optional JSON file, and
    ``key.path=value`` override strings, in that order."""
    cfg = PipelineConfig()
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
        _apply_dict(cfg, data, "")
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key.path=value")
        key, _, raw = item.partition("=")
        parts = key.strip().split(".")
        node = cfg
        for p in parts[:-1]:
            if not hasattr(node, p) or not dataclasses.is_dataclass(getattr(node, p)):
                raise ConfigError(f"unknown config section {key!r}")
            node = getattr(node, p)
        leaf = parts[-1]
        if not hasattr(node, leaf):
            raise ConfigError(f"unknown config key {key!r}")
        current = getattr(node, leaf)
        if dataclasses.is_dataclass(current):
            raise ConfigError(f"{key!r} is a section, not a value")
        try:
            parsed = json.loads(raw)
        except json.JSONDecodeError:
            parsed = raw
        setattr(node, leaf, _coerce(current, parsed, key))
    return cfg
