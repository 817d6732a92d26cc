"""Experiment configuration: INI files with units in key names.

Sections: ``[experiment] [scene] [camera] [render] [ga] [training] [tasks]
[lambdas] [noise] [catalog]`` and one ``[params.<name>]`` per searched
parameter. Illumination and gain come from the scenario preset.
"""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from camforge.camera import CameraDesign, fov_to_focal
from camforge.catalog import load_catalog
from camforge.errors import ConfigError
from camforge.noise import REFERENCE_MODEL, load_model
from camforge.optimize.experiment import MonoTask, RenderSettings, StereoDepthTask, TrainSettings, select_frames
from camforge.optimize.fitness import Lambdas
from camforge.optimize.ga import GAConfig
from camforge.optimize.space import CategoricalSensor, Continuous, Discrete, ParamSpace, Scheme
from camforge.scene import DAY_LUX, NIGHT_LUX, SceneKind, SceneSpec, generate_scene, plan_path

EXPERIMENTS = ("stereo_depth", "mono_mr")
SCENARIOS = {"day": (DAY_LUX, 5.0), "night": (NIGHT_LUX, 15.0)}  # lux, gain dB


@dataclass(frozen=True)
class SceneSettings:
    kind: str = "indoor"
    extent_x_m: float = 15.0
    extent_z_m: float = 15.0
    height_m: float = 3.0
    min_room_length_m: float = 5.0
    object_class_count: int = 10
    obstacle_height_m: float = 0.12
    texture_freq_per_m: float = 8.0
    door_width_m: float = 1.0
    seed: int | None = None
    path_steps: int = 300
    step_m: float = 0.2


@dataclass(frozen=True)
class CameraSettings:
    height_m: float = 1.5
    pitch_deg: float = 0.0
    focal_mm: float = 3.6
    sensor_w_mm: float = 6.2
    sensor_h_mm: float = 4.65
    pixel_um: float = 1.55
    exposure_ms: float = 30.0
    baseline_m: float = 0.0
    n_cameras: int = 1


@dataclass(frozen=True)
class RenderConfig:
    scale: float = 0.04
    max_width_px: int = 160
    max_height_px: int = 120


@dataclass(frozen=True)
class TaskSettings:
    block_window: int = 5
    d_max_native_px: float = 192.0
    max_depth_m: float = 1000.0
    inlier_px: float = 2.0
    ransac_iters: int = 500
    ratio_test: float = 0.8
    max_features: int = 2000
    min_obstacle_px: int = 25


@dataclass(frozen=True)
class ParamConfig:
    name: str
    kind: str  # continuous | discrete | sensor
    lo: float = 0.0
    hi: float = 0.0
    add_range: float = 0.0
    values: tuple = ()
    scheme: str = "quantized"
    normalized: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "mono_mr"
    scenario: str = "day"
    master_seed: int = 0
    output_dir: str = "runs/out"
    workers: int = 1
    frozen: bool = False
    scene: SceneSettings = SceneSettings()
    camera: CameraSettings = CameraSettings()
    render: RenderConfig = RenderConfig()
    ga: GAConfig = GAConfig()
    training: TrainSettings = TrainSettings()
    tasks: TaskSettings = TaskSettings()
    lambdas: Lambdas = Lambdas()
    params: tuple = field(default_factory=tuple)
    noise_model_path: str = ""
    catalog_path: str = ""

    @property
    def illuminance_lux(self) -> float:
        return SCENARIOS[self.scenario][0]

    @property
    def gain_db(self) -> float:
        return SCENARIOS[self.scenario][1]


# ---------------------------------------------------------------- presets


def stereo_preset(master_seed: int = 0) -> ExperimentConfig:
    return ExperimentConfig(
        experiment="stereo_depth", scenario="day", master_seed=master_seed, output_dir="runs/stereo",
        scene=SceneSettings(kind="outdoor_strip", extent_x_m=160.0, extent_z_m=420.0, height_m=70.0, path_steps=200),
        camera=CameraSettings(height_m=2.0, sensor_w_mm=1.536, sensor_h_mm=0.768, pixel_um=1.55,
                              focal_mm=fov_to_focal(90.0, 1.536), baseline_m=0.1, n_cameras=2),
        render=RenderConfig(scale=0.16),
        ga=GAConfig(pop_size=5, n_elites=2, n_parents=3, n_generations=10, master_seed=master_seed,
                    frames_per_eval=4),
        params=(ParamConfig("hfov_deg", "continuous", 50.0, 120.0, 5.0),
                ParamConfig("baseline_m", "continuous", 0.01, 3.0, 0.2)),
    )


def mono_preset(scenario: str = "day", master_seed: int = 0, scheme: str = "quantized") -> ExperimentConfig:
    return ExperimentConfig(
        experiment="mono_mr", scenario=scenario, master_seed=master_seed, output_dir=f"runs/mono_{scenario}",
        scene=SceneSettings(kind="indoor", path_steps=300),
        # the cap sits above every catalog sensor at this scale, so pixel size trades resolution against noise
        render=RenderConfig(scale=0.06, max_width_px=480, max_height_px=360),
        ga=GAConfig(pop_size=6, n_elites=2, n_parents=3, n_generations=10, master_seed=master_seed,
                    frames_per_eval=6),
        params=(ParamConfig("pitch_deg", "continuous", -30.0, 30.0, 3.0),
                ParamConfig("focal_mm", "continuous", 1.0, 20.0, 3.0),
                ParamConfig("sensor", "sensor", add_range=3.0, scheme=scheme)),
    )


# ---------------------------------------------------------------- validation


def validate(cfg: ExperimentConfig, check_files: bool = True) -> None:
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {cfg.experiment!r}")
    if cfg.scenario not in SCENARIOS:
        raise ConfigError(f"scenario must be one of {tuple(SCENARIOS)}, got {cfg.scenario!r}")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    if cfg.scene.kind not in ("indoor", "outdoor_strip"):
        raise ConfigError(f"scene kind must be indoor or outdoor_strip, got {cfg.scene.kind!r}")
    if cfg.scene.path_steps < 2:
        raise ConfigError("scene path_steps must be >= 2")
    if not cfg.params:
        raise ConfigError("no [params.*] sections: nothing to optimize")
    for p in cfg.params:
        if p.kind not in ("continuous", "discrete", "sensor"):
            raise ConfigError(f"params.{p.name}: unknown kind {p.kind!r}")
        if p.kind == "sensor" and p.scheme not in ("discrete", "quantized"):
            raise ConfigError(f"params.{p.name}: scheme must be discrete or quantized")
    if cfg.experiment == "stereo_depth" and cfg.camera.n_cameras != 2:
        raise ConfigError("stereo_depth needs camera n_cameras = 2")
    if check_files:
        for label, path in (("noise model", cfg.noise_model_path), ("catalog", cfg.catalog_path)):
            if path and not Path(path).is_file():
                raise ConfigError(f"{label} file not found: {path}")
    try:
        build_space(cfg) if check_files else None
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------- INI


def _parse_value(text: str, typ):
    text = text.strip()
    if typ is bool:
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if typ is int:
        return int(text)
    if typ is float:
        return float(text)
    return text


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


_TYPES = {"int": int, "float": float, "bool": bool, "str": str}


def _field_type(f) -> type:
    t = f.type if isinstance(f.type, str) else f.type.__name__
    t = t.replace(" | None", "")
    return _TYPES.get(t, str)


def _section_to(cls, section, name: str, skip=()):
    """Dataclass from an INI section; unknown keys are errors."""
    known = {f.name: f for f in fields(cls) if f.name not in skip}
    kw = {}
    for key, text in section.items():
        if key not in known:
            raise ConfigError(f"[{name}] unknown key {key!r}")
        f = known[key]
        try:
            if f.name == "mutate_factor_range":
                lo, hi = (float(x) for x in text.split(","))
                kw[key] = (lo, hi)
            elif f.name == "seed" and text.strip().lower() in ("", "auto"):
                kw[key] = None
            else:
                kw[key] = _parse_value(text, _field_type(f))
        except ValueError as exc:
            raise ConfigError(f"[{name}] bad value for {key}: {exc}") from None
    try:
        return cls(**kw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[{name}] {exc}") from None


_SECTIONS = {
    "scene": ("scene", SceneSettings),
    "camera": ("camera", CameraSettings),
    "render": ("render", RenderConfig),
    "ga": ("ga", GAConfig),
    "training": ("training", TrainSettings),
    "tasks": ("tasks", TaskSettings),
    "lambdas": ("lambdas", Lambdas),
}


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    kw = {}
    if cp.has_section("experiment"):
        top = {f.name: f for f in fields(ExperimentConfig)}
        for key, val in cp["experiment"].items():
            if key not in ("experiment", "scenario", "master_seed", "output_dir", "workers", "frozen"):
                raise ConfigError(f"[experiment] unknown key {key!r}")
            try:
                kw[key] = _parse_value(val, _field_type(top[key]))
            except ValueError as exc:
                raise ConfigError(f"[experiment] bad value for {key}: {exc}") from None
    for sec, (attr, cls) in _SECTIONS.items():
        if cp.has_section(sec):
            skip = ("master_seed",) if cls is GAConfig else ()
            kw[attr] = _section_to(cls, cp[sec], sec, skip)
    for sec, key, attr in (("noise", "model_path", "noise_model_path"), ("catalog", "path", "catalog_path")):
        if cp.has_section(sec):
            extra = set(cp[sec]) - {key}
            if extra:
                raise ConfigError(f"[{sec}] unknown keys {sorted(extra)}")
            kw[attr] = cp[sec].get(key, "").strip()
    params = []
    for sec in cp.sections():
        if sec.startswith("params."):
            name = sec[len("params."):]
            s = dict(cp[sec])
            if "values" in s:
                s["values"] = tuple(float(x) for x in s["values"].split(",") if x.strip())
            pk = {}
            for key, val in s.items():
                ptypes = {"kind": str, "lo": float, "hi": float, "add_range": float, "scheme": str,
                          "normalized": bool}
                if key == "values":
                    pk[key] = val
                elif key in ptypes:
                    try:
                        pk[key] = _parse_value(val, ptypes[key])
                    except ValueError as exc:
                        raise ConfigError(f"[{sec}] bad value for {key}: {exc}") from None
                else:
                    raise ConfigError(f"[{sec}] unknown key {key!r}")
            if "kind" not in pk:
                raise ConfigError(f"[{sec}] missing kind")
            params.append(ParamConfig(name, **pk))
        elif sec not in _SECTIONS and sec not in ("experiment", "noise", "catalog"):
            raise ConfigError(f"unknown section [{sec}]")
    kw["params"] = tuple(params)
    cfg = ExperimentConfig(**kw)
    return replace(cfg, ga=replace(cfg.ga, master_seed=cfg.master_seed))


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(p.read_text(), str(path))


def emit_config(cfg: ExperimentConfig) -> str:
    """Fully resolved INI text; ``parse_config(emit_config(c)) == c``."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["experiment"] = {k: _fmt(getattr(cfg, k)) for k in
                        ("experiment", "scenario", "master_seed", "output_dir", "workers", "frozen")}
    for sec, (attr, _) in _SECTIONS.items():
        obj = getattr(cfg, attr)
        vals = {}
        for f in fields(obj):
            if f.name == "master_seed":
                continue
            v = getattr(obj, f.name)
            vals[f.name] = "auto" if v is None else _fmt(v)
        cp[sec] = vals
    cp["noise"] = {"model_path": cfg.noise_model_path}
    cp["catalog"] = {"path": cfg.catalog_path}
    for p in cfg.params:
        d = {"kind": p.kind, "add_range": _fmt(p.add_range)}
        if p.kind == "continuous":
            d.update(lo=_fmt(p.lo), hi=_fmt(p.hi))
        elif p.kind == "discrete":
            d["values"] = _fmt(tuple(float(v) for v in p.values))
        else:
            d.update(scheme=p.scheme, normalized=_fmt(p.normalized))
        cp[f"params.{p.name}"] = d
    buf = io.StringIO()
    buf.write(f"# scenario {cfg.scenario}: {cfg.illuminance_lux:g} lux, gain {cfg.gain_db:g} dB\n")
    cp.write(buf)
    return buf.getvalue()


# ---------------------------------------------------------------- building


def base_design(cfg: ExperimentConfig) -> CameraDesign:
    c = cfg.camera
    return CameraDesign(pitch_deg=c.pitch_deg, height_m=c.height_m, focal_mm=c.focal_mm, sensor_w_mm=c.sensor_w_mm,
                        sensor_h_mm=c.sensor_h_mm, pixel_um=c.pixel_um, exposure_ms=c.exposure_ms,
                        gain_db=cfg.gain_db, baseline_m=c.baseline_m, n_cameras=c.n_cameras)


def build_space(cfg: ExperimentConfig, scheme: str | None = None) -> ParamSpace:
    params = []
    for p in cfg.params:
        if p.kind == "continuous":
            params.append(Continuous(p.name, p.lo, p.hi, p.add_range))
        elif p.kind == "discrete":
            params.append(Discrete(p.name, tuple(p.values), p.add_range))
        else:
            catalog = load_catalog(cfg.catalog_path or None)
            params.append(CategoricalSensor(catalog, Scheme(scheme or p.scheme), p.add_range, p.normalized, p.name))
    return ParamSpace(tuple(params), base_design(cfg))


def scene_spec(cfg: ExperimentConfig) -> SceneSpec:
    s = cfg.scene
    return SceneSpec(
        kind=SceneKind.INDOOR if s.kind == "indoor" else SceneKind.OUTDOOR_STRIP,
        extent_m=(s.extent_x_m, s.extent_z_m, s.height_m), min_room_length_m=s.min_room_length_m,
        object_class_count=s.object_class_count, obstacle_height_m=s.obstacle_height_m,
        seed=cfg.master_seed if s.seed is None else s.seed, illuminance_lux=cfg.illuminance_lux,
        texture_freq=s.texture_freq_per_m, door_width_m=s.door_width_m,
    )


def build_task(cfg: ExperimentConfig):
    spec = scene_spec(cfg)
    scene = generate_scene(spec)
    path = plan_path(scene, cfg.scene.path_steps, spec.seed, cfg.scene.step_m)
    frames = select_frames(len(path), cfg.ga.frames_per_eval)
    render = RenderSettings(cfg.render.scale, (cfg.render.max_width_px, cfg.render.max_height_px))
    noise = load_model(cfg.noise_model_path) if cfg.noise_model_path else REFERENCE_MODEL
    t = cfg.tasks
    if cfg.experiment == "stereo_depth":
        return StereoDepthTask(scene, path, frames, render, noise, t.d_max_native_px, t.block_window, t.max_depth_m)
    return MonoTask(scene, path, frames, render, noise, cfg.lambdas, t.inlier_px, t.ransac_iters, t.ratio_test,
                    t.max_features, t.min_obstacle_px)
