"""Image-sensor catalog and nearest-entry snapping."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np

from camforge.errors import EmptyCatalog, InvariantViolation, ParseError

HEADER = ["id", "manufacturer", "sensor_w_mm", "sensor_h_mm", "pixel_um"]


@dataclass(frozen=True)
class SensorEntry:
    id: str
    manufacturer: str
    sensor_w_mm: float
    sensor_h_mm: float
    pixel_um: float

    @property
    def triplet(self):
        return (self.sensor_w_mm, self.sensor_h_mm, self.pixel_um)

    def problems(self):
        out = []
        if min(self.triplet) <= 0:
            out.append("non-positive dimension")
        elif self.pixel_um > 1000.0 * min(self.sensor_w_mm, self.sensor_h_mm):
            out.append("pixel larger than the sensor")
        return out


@dataclass(frozen=True)
class SensorCatalog:
    entries: tuple[SensorEntry, ...]

    def __post_init__(self):
        if not self.entries:
            raise EmptyCatalog("catalog has no entries")
        ids = [e.id for e in self.entries]
        dup = sorted({i for i in ids if ids.count(i) > 1})
        if dup:
            raise InvariantViolation(f"duplicate sensor ids: {dup}", dup)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, k) -> SensorEntry:
        return self.entries[k]

    @cached_property
    def table(self) -> np.ndarray:
        return np.array([e.triplet for e in self.entries], dtype=np.float64)

    @cached_property
    def ranges(self):
        """(min, max) per component (w_mm, h_mm, pixel_um)."""
        t = self.table
        return tuple((float(t[:, j].min()), float(t[:, j].max())) for j in range(3))

    def index_of(self, sensor_id: str) -> int:
        for i, e in enumerate(self.entries):
            if e.id == sensor_id:
                return i
        raise KeyError(sensor_id)


def parse_catalog(text: str, source: str = "<catalog>") -> SensorCatalog:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.reader(io.StringIO("\n".join(lines)))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != HEADER:
        raise ParseError(f"{source}: expected header {','.join(HEADER)}", 1)
    entries, bad = [], []
    for row_no, row in enumerate(reader, 2):
        if len(row) != 5:
            raise ParseError(f"{source}: expected 5 fields, got {len(row)}", row_no)
        try:
            e = SensorEntry(row[0].strip(), row[1].strip(), float(row[2]), float(row[3]), float(row[4]))
        except ValueError:
            raise ParseError(f"{source}: non-numeric dimension in {row!r}", row_no) from None
        if e.problems():
            bad.append(e.id)
        entries.append(e)
    if bad:
        raise InvariantViolation(f"{source}: invalid sensor entries {bad}", bad)
    return SensorCatalog(tuple(entries))


def load_catalog(path=None) -> SensorCatalog:
    """Load a catalog CSV; ``None`` loads the bundled 43-sensor catalog."""
    if path is None:
        text = resources.files("camforge.data").joinpath("sensors.csv").read_text()
        return parse_catalog(text, "sensors.csv")
    return parse_catalog(Path(path).read_text(), str(path))


def snap_index(catalog: SensorCatalog, w_mm: float, h_mm: float, pixel_um: float,
               normalized: bool = False) -> int:
    """Index of the entry nearest to (w, h, p) in squared distance.

    With ``normalized`` each component is divided by the catalog's range for
    it first. Ties go to the lowest index.
    """
    if len(catalog) == 0:
        raise EmptyCatalog("cannot snap against an empty catalog")
    q = np.array([w_mm, h_mm, pixel_um], dtype=np.float64)
    t = catalog.table
    if normalized:
        span = np.array([hi - lo for lo, hi in catalog.ranges])
        span[span == 0] = 1.0
        q = q / span
        t = t / span
    d = ((t - q) ** 2).sum(axis=1)
    return int(np.argmin(d))  # argmin returns the first minimum


def snap(catalog: SensorCatalog, w_mm: float, h_mm: float, pixel_um: float,
         normalized: bool = False) -> SensorEntry:
    return catalog[snap_index(catalog, w_mm, h_mm, pixel_um, normalized)]


def format_catalog(catalog: SensorCatalog) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for e in catalog.entries:
        w.writerow([e.id, e.manufacturer, f"{e.sensor_w_mm:g}", f"{e.sensor_h_mm:g}", f"{e.pixel_um:g}"])
    return buf.getvalue()
