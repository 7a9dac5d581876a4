"""Cooperative active/passive OFDM sensing between two asynchronous base stations."""

from .scenario import C, SceneConfig, Target, TruthParams, derive_truth, resolutions, validate_config
from .scenefile import Scene, default_scene, load_scene
from .synth import OffsetModel, OffsetTrack, SymbolGrid

__version__ = "0.1.0"

__all__ = [
    "C", "SceneConfig", "Target", "TruthParams", "derive_truth", "resolutions", "validate_config",
    "Scene", "default_scene", "load_scene", "OffsetModel", "OffsetTrack", "SymbolGrid",
]
