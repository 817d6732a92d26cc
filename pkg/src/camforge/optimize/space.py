"""Mixed continuous / discrete / sensor-catalog parameter spaces and GA operators."""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from camforge.camera import CameraDesign, fov_to_focal
from camforge.catalog import SensorCatalog, snap_index


class Scheme(enum.Enum):
    FULLY_DISCRETE = "discrete"
    QUANTIZED = "quantized"


@dataclass(frozen=True)
class Continuous:
    name: str
    lo: float
    hi: float
    add_range: float = 0.0

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"{self.name}: need lo < hi, got [{self.lo}, {self.hi}]")
        if self.add_range < 0:
            raise ValueError(f"{self.name}: add_range must be >= 0")


@dataclass(frozen=True)
class Discrete:
    name: str
    values: tuple
    add_range: float = 0.0

    def __post_init__(self):
        if not self.values:
            raise ValueError(f"{self.name}: value list is empty")
        if self.add_range < 0:
            raise ValueError(f"{self.name}: add_range must be >= 0")


@dataclass(frozen=True)
class CategoricalSensor:
    catalog: SensorCatalog
    scheme: Scheme = Scheme.QUANTIZED
    add_range: float = 0.0
    normalized: bool = False
    name: str = "sensor"

    def __post_init__(self):
        if self.add_range < 0:
            raise ValueError("sensor add_range must be >= 0")


@dataclass(frozen=True)
class SensorGene:
    """Catalog index plus, under the quantized scheme, the free latent triplet."""
    index: int
    latent: tuple[float, float, float] | None = None


@dataclass(frozen=True)
class ParamSpace:
    params: tuple
    base: CameraDesign = CameraDesign()

    def __post_init__(self):
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate parameter names: {names}")

    @property
    def names(self):
        return tuple(p.name for p in self.params)

    def sensor_param(self) -> CategoricalSensor | None:
        for p in self.params:
            if isinstance(p, CategoricalSensor):
                return p
        return None


@dataclass(frozen=True)
class Genome:
    values: tuple

    def value(self, space: ParamSpace, name: str):
        return self.values[space.names.index(name)]


# ---------------------------------------------------------------- decoding

_DESIGN_FIELDS = {"pitch_deg", "height_m", "focal_mm", "exposure_ms", "gain_db", "baseline_m", "aperture_f"}


def decode(genome: Genome, space: ParamSpace) -> CameraDesign:
    """Camera design for a genome. ``hfov_deg`` sets the focal length for the
    design's sensor width; every other name maps to a design field."""
    d = space.base
    hfov = None
    for p, v in zip(space.params, genome.values):
        if isinstance(p, CategoricalSensor):
            e = p.catalog[v.index]
            d = replace(d, sensor_w_mm=e.sensor_w_mm, sensor_h_mm=e.sensor_h_mm, pixel_um=e.pixel_um)
        elif p.name == "hfov_deg":
            hfov = float(v)
        elif p.name in _DESIGN_FIELDS:
            d = replace(d, **{p.name: float(v)})
        else:
            raise ValueError(f"unknown design parameter {p.name!r}")
    if hfov is not None:
        d = replace(d, focal_mm=fov_to_focal(hfov, d.sensor_w_mm))
    return d


def within_bounds(genome: Genome, space: ParamSpace) -> bool:
    for p, v in zip(space.params, genome.values):
        if isinstance(p, Continuous):
            if not p.lo <= v <= p.hi:
                return False
        elif isinstance(p, Discrete):
            if v not in p.values:
                return False
        else:
            if not 0 <= v.index < len(p.catalog):
                return False
            if p.scheme is Scheme.QUANTIZED:
                if v.latent is None or v.index != snap_index(p.catalog, *v.latent, normalized=p.normalized):
                    return False
    return True


def genome_fields(genome: Genome, space: ParamSpace) -> dict:
    """Flat name -> value mapping for CSV and key-value files."""
    out = {}
    for p, v in zip(space.params, genome.values):
        if isinstance(p, CategoricalSensor):
            e = p.catalog[v.index]
            out["sensor_id"] = e.id
            out["sensor_w_mm"] = e.sensor_w_mm
            out["sensor_h_mm"] = e.sensor_h_mm
            out["pixel_um"] = e.pixel_um
            if v.latent is not None:
                out["latent_w_mm"], out["latent_h_mm"], out["latent_pixel_um"] = v.latent
        else:
            out[p.name] = v
    return out


def genome_from_fields(fields: dict, space: ParamSpace) -> Genome:
    vals = []
    for p in space.params:
        if isinstance(p, CategoricalSensor):
            idx = p.catalog.index_of(str(fields["sensor_id"]))
            latent = None
            if p.scheme is Scheme.QUANTIZED:
                if "latent_w_mm" in fields:
                    latent = tuple(float(fields[k]) for k in ("latent_w_mm", "latent_h_mm", "latent_pixel_um"))
                else:
                    latent = p.catalog[idx].triplet
            vals.append(SensorGene(idx, latent))
        elif isinstance(p, Discrete):
            raw = fields[p.name]
            vals.append(min(p.values, key=lambda x: abs(float(x) - float(raw))))
        else:
            vals.append(float(fields[p.name]))
    return Genome(tuple(vals))


# ---------------------------------------------------------------- operators


def _sensor_gene(p: CategoricalSensor, latent) -> SensorGene:
    latent = tuple(float(x) for x in latent)
    return SensorGene(snap_index(p.catalog, *latent, normalized=p.normalized), latent)


def sample_genome(space: ParamSpace, rng: np.random.Generator, preset: str = "random") -> Genome:
    """Uniform draw within bounds, or the all-min / all-max corner."""
    if preset not in ("random", "all_min", "all_max"):
        raise ValueError(f"unknown init preset {preset!r}")
    vals = []
    for p in space.params:
        if isinstance(p, Continuous):
            v = {"random": lambda: float(rng.uniform(p.lo, p.hi)),
                 "all_min": lambda: float(p.lo), "all_max": lambda: float(p.hi)}[preset]()
        elif isinstance(p, Discrete):
            order = sorted(p.values)
            v = {"random": lambda: p.values[int(rng.integers(len(p.values)))],
                 "all_min": lambda: order[0], "all_max": lambda: order[-1]}[preset]()
        else:
            n = len(p.catalog)
            if p.scheme is Scheme.FULLY_DISCRETE:
                idx = {"random": lambda: int(rng.integers(n)), "all_min": lambda: 0, "all_max": lambda: n - 1}[preset]()
                v = SensorGene(idx)
            else:
                rg = p.catalog.ranges
                latent = {"random": lambda: [float(rng.uniform(lo, hi)) for lo, hi in rg],
                          "all_min": lambda: [lo for lo, _ in rg],
                          "all_max": lambda: [hi for _, hi in rg]}[preset]()
                v = _sensor_gene(p, latent)
        vals.append(v)
    return Genome(tuple(vals))


def init_population(space: ParamSpace, size: int, rng: np.random.Generator, preset: str = "random"):
    return [sample_genome(space, rng, preset) for _ in range(size)]


def _clamp(x, lo, hi):
    return min(max(x, lo), hi)


def mutate(genome: Genome, space: ParamSpace, rng: np.random.Generator, factor_range=(0.8, 1.2)) -> Genome:
    """``x' = clamp(x * u + a)`` per parameter with ``u ~ U(factor_range)`` and
    ``a ~ U(-add_range, add_range)``.

    Discrete lists mutate their value and snap to the nearest member; the fully
    discrete sensor mutates its catalog index; the quantized sensor mutates its
    latent triplet component-wise and snaps to the catalog.
    """
    flo, fhi = factor_range
    vals = []
    for p, v in zip(space.params, genome.values):
        if isinstance(p, Continuous):
            x = v * rng.uniform(flo, fhi) + rng.uniform(-p.add_range, p.add_range)
            vals.append(float(_clamp(x, p.lo, p.hi)))
        elif isinstance(p, Discrete):
            x = float(v) * rng.uniform(flo, fhi) + rng.uniform(-p.add_range, p.add_range)
            vals.append(min(p.values, key=lambda y: (abs(float(y) - x), float(y))))
        elif p.scheme is Scheme.FULLY_DISCRETE:
            x = v.index * rng.uniform(flo, fhi) + rng.uniform(-p.add_range, p.add_range)
            vals.append(SensorGene(int(_clamp(round(x), 0, len(p.catalog) - 1))))
        else:
            latent = v.latent if v.latent is not None else p.catalog[v.index].triplet
            new = []
            for x, (lo, hi) in zip(latent, p.catalog.ranges):
                y = x * rng.uniform(flo, fhi) + rng.uniform(-p.add_range, p.add_range)
                new.append(_clamp(y, lo, hi))
            vals.append(_sensor_gene(p, new))
    return Genome(tuple(vals))


def crossover_uniform(parents, rng: np.random.Generator) -> Genome:
    """Each gene copied from a uniformly chosen parent; the sensor gene moves whole."""
    if len(parents) < 2:
        raise ValueError("crossover needs at least two parents")
    n = len(parents[0].values)
    picks = rng.integers(len(parents), size=n)
    return Genome(tuple(parents[int(k)].values[i] for i, k in enumerate(picks)))


def stereo_space(hfov=(50.0, 120.0), baseline=(0.01, 3.0), hfov_add=5.0, baseline_add=0.2,
                 base: CameraDesign | None = None) -> ParamSpace:
    base = base or CameraDesign(height_m=2.0, sensor_w_mm=1.536, sensor_h_mm=0.768, pixel_um=1.55,
                                focal_mm=fov_to_focal(90.0, 1.536), baseline_m=0.1, n_cameras=2,
                                gain_db=5.0)
    return ParamSpace((Continuous("hfov_deg", *hfov, hfov_add), Continuous("baseline_m", *baseline, baseline_add)), base)


def mono_space(catalog: SensorCatalog, scheme: Scheme = Scheme.QUANTIZED, pitch=(-30.0, 30.0),
               focal=(1.0, 20.0), add_range: float = 3.0, base: CameraDesign | None = None,
               normalized: bool = False) -> ParamSpace:
    base = base or CameraDesign()
    return ParamSpace((
        Continuous("pitch_deg", *pitch, add_range),
        Continuous("focal_mm", *focal, add_range),
        CategoricalSensor(catalog, scheme, add_range, normalized),
    ), base)
