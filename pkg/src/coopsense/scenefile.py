"""Scene files: a YAML key-value document holding config, targets and offsets.

Schema::

    config:                  # any SceneConfig field; omitted fields keep defaults
      n_subcarriers: 1024
      snr_active: 0.0
      ...
    targets:                 # either polar (relative to SBS1) or Cartesian entries
      - {range: 70, angle_deg: 25, radial_velocity: 15}
      - {position: [86.6, 50.0], velocity: [21.65, 12.5], alpha_active: [1, 0]}
    offsets:
      model: constant        # constant | gaussian
      to_mean_ns: 100
      to_spread_ns: 0        # standard deviation
      cfo_mean_df: 0.2       # fraction of the subcarrier spacing
      cfo_spread_df: 0.01    # standard deviation, fraction of the subcarrier spacing
      cfo_phase: jitter      # jitter | ramp

Complex reflectivities are written as ``[re, im]`` pairs.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import yaml

from .scenario import SceneConfig, Target, table_targets
from .synth import OffsetModel


class ConfigError(ValueError):
    pass


@dataclass
class Scene:
    config: SceneConfig = field(default_factory=SceneConfig)
    targets: list = field(default_factory=table_targets)
    offsets: OffsetModel = field(default_factory=OffsetModel)

    def with_config(self, **kw) -> "Scene":
        return replace(self, config=replace(self.config, **kw))


def default_scene() -> Scene:
    return Scene()


def _complex(v, name):
    if v is None:
        return 1.0 + 0j
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    raise ConfigError(f"{name} must be a number or [re, im]")


def _target(d, origin) -> Target:
    if not isinstance(d, dict):
        raise ConfigError("each target must be a mapping")
    a1 = _complex(d.get("alpha_active"), "alpha_active")
    a2 = _complex(d.get("alpha_passive"), "alpha_passive")
    if "position" in d:
        pos = d["position"]
        vel = d.get("velocity", [0.0, 0.0])
        if len(pos) != 2 or len(vel) != 2:
            raise ConfigError("position and velocity must have two components")
        return Target(tuple(map(float, pos)), tuple(map(float, vel)), a1, a2)
    try:
        return Target.from_polar(float(d["range"]), float(d["angle_deg"]), float(d.get("radial_velocity", 0.0)),
                                 origin=origin, alpha_active=a1, alpha_passive=a2)
    except KeyError as exc:
        raise ConfigError(f"target needs 'position' or 'range'/'angle_deg' (missing {exc})") from None


_CONFIG_FIELDS = set(SceneConfig.field_names())
_OFFSET_KEYS = {"model", "to_mean_ns", "to_spread_ns", "cfo_mean_df", "cfo_spread_df", "cfo_phase"}


def scene_from_dict(doc: dict) -> Scene:
    if not isinstance(doc, dict):
        raise ConfigError("scene file must be a mapping")
    unknown = set(doc) - {"config", "targets", "offsets"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    cdoc = dict(doc.get("config") or {})
    bad = set(cdoc) - _CONFIG_FIELDS
    if bad:
        raise ConfigError(f"unknown config keys: {sorted(bad)}")
    for k, v in list(cdoc.items()):
        if isinstance(v, str) and v.strip().lower() in ("inf", "+inf", "-inf"):
            cdoc[k] = float(v)
    if "sbs1_position" in cdoc:
        cdoc["sbs1_position"] = tuple(cdoc["sbs1_position"])
    try:
        cfg = SceneConfig(**cdoc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    tdoc = doc.get("targets")
    targets = table_targets(cfg.sbs1_position) if tdoc is None else [_target(t, cfg.sbs1_position) for t in tdoc]
    odoc = dict(doc.get("offsets") or {})
    bad = set(odoc) - _OFFSET_KEYS
    if bad:
        raise ConfigError(f"unknown offset keys: {sorted(bad)}")
    try:
        off = OffsetModel.from_units(
            kind=odoc.get("model", "constant"),
            to_mean_ns=float(odoc.get("to_mean_ns", 0.0)),
            to_spread_ns=float(odoc.get("to_spread_ns", 0.0)),
            cfo_mean_df=float(odoc.get("cfo_mean_df", 0.0)),
            cfo_spread_df=float(odoc.get("cfo_spread_df", 0.0)),
            subcarrier_spacing=cfg.subcarrier_spacing,
            cfo_phase=odoc.get("cfo_phase", "jitter"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return Scene(cfg, targets, off)


def load_scene(path) -> Scene:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        doc = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return scene_from_dict(doc)


def scene_to_dict(scene: Scene) -> dict:
    cfg = asdict(scene.config)
    cfg["sbs1_position"] = list(cfg["sbs1_position"])
    for k, v in cfg.items():
        if isinstance(v, float) and math.isinf(v):
            cfg[k] = str(v)
    targets = [{
        "position": [float(x) for x in t.position],
        "velocity": [float(x) for x in t.velocity],
        "alpha_active": [complex(t.alpha_active).real, complex(t.alpha_active).imag],
        "alpha_passive": [complex(t.alpha_passive).real, complex(t.alpha_passive).imag],
    } for t in scene.targets]
    o = scene.offsets
    df = scene.config.subcarrier_spacing
    offsets = {"model": o.kind, "to_mean_ns": o.to_mean * 1e9, "to_spread_ns": o.to_spread * 1e9,
               "cfo_mean_df": o.cfo_mean / df, "cfo_spread_df": o.cfo_spread / df, "cfo_phase": o.cfo_phase}
    return {"config": cfg, "targets": targets, "offsets": offsets}


def dump_scene(scene: Scene, path) -> None:
    Path(path).write_text(yaml.safe_dump(scene_to_dict(scene), sort_keys=False))
