"""Star catalogue ingestion, synthetic desk catalogues and FOV queries."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .geometry import CameraModel, radec_to_unit

CSV_HEADER = ("id", "ra_deg", "dec_deg", "mag")
TWO_PI = 2.0 * math.pi


class CatalogError(ValueError):
    pass


class MalformedRowError(CatalogError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class EmptyCatalogError(CatalogError):
    pass


@dataclass(frozen=True)
class StarRecord:
    id: str
    right_ascension: float
    declination: float
    magnitude: float

    def __post_init__(self):
        if not 0.0 <= self.right_ascension < TWO_PI:
            raise CatalogError(f"right ascension out of range for star {self.id}")
        if not -math.pi / 2 <= self.declination <= math.pi / 2:
            raise CatalogError(f"declination out of range for star {self.id}")
        if not math.isfinite(self.magnitude):
            raise CatalogError(f"non-finite magnitude for star {self.id}")


@dataclass(frozen=True)
class StarCatalog:
    stars: tuple[StarRecord, ...]
    source_name: str = "catalog"

    def __post_init__(self):
        object.__setattr__(self, "stars", tuple(self.stars))
        ids = [s.id for s in self.stars]
        if len(set(ids)) != len(ids):
            raise CatalogError("duplicate star ids")

    def __len__(self) -> int:
        return len(self.stars)

    def __iter__(self):
        return iter(self.stars)

    @cached_property
    def right_ascension(self) -> np.ndarray:
        return np.array([s.right_ascension for s in self.stars], dtype=float)

    @cached_property
    def declination(self) -> np.ndarray:
        return np.array([s.declination for s in self.stars], dtype=float)

    @cached_property
    def magnitude(self) -> np.ndarray:
        return np.array([s.magnitude for s in self.stars], dtype=float)

    @cached_property
    def vectors(self) -> np.ndarray:
        """(n, 3) inertial unit vectors."""
        if not self.stars:
            return np.zeros((0, 3))
        return radec_to_unit(self.right_ascension, self.declination)

    def brighter_than(self, magnitude_cutoff: float) -> "StarCatalog":
        return StarCatalog(
            tuple(s for s in self.stars if s.magnitude <= magnitude_cutoff), self.source_name
        )


def star_unit_vector(record: StarRecord) -> np.ndarray:
    return radec_to_unit(record.right_ascension, record.declination)


def parse_catalog(path, magnitude_cutoff: float = math.inf, source_name: str | None = None) -> StarCatalog:
    """Load a catalogue CSV (``id,ra_deg,dec_deg,mag``) keeping stars with
    ``mag <= magnitude_cutoff``. Right ascension is wrapped into [0, 360)."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"catalog file not found: {path}")
    stars: list[StarRecord] = []
    seen: set[str] = set()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise MalformedRowError(1, f"expected header {','.join(CSV_HEADER)}")
        for row in reader:
            line = reader.line_num
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 4:
                raise MalformedRowError(line, f"expected 4 fields, got {len(row)}")
            sid = row[0].strip()
            if not sid:
                raise MalformedRowError(line, "empty id")
            try:
                ra, dec, mag = (float(v) for v in row[1:])
            except ValueError as exc:
                raise MalformedRowError(line, str(exc)) from None
            if not all(math.isfinite(v) for v in (ra, dec, mag)):
                raise MalformedRowError(line, "non-finite value")
            if not -90.0 <= dec <= 90.0:
                raise MalformedRowError(line, f"declination {dec} outside [-90, 90]")
            if sid in seen:
                raise MalformedRowError(line, f"duplicate id {sid!r}")
            seen.add(sid)
            if mag > magnitude_cutoff:
                continue
            ra_rad = math.radians(ra % 360.0) % TWO_PI
            stars.append(StarRecord(sid, ra_rad, math.radians(dec), mag))
    if not stars:
        raise EmptyCatalogError(f"no stars with magnitude <= {magnitude_cutoff} in {path}")
    return StarCatalog(tuple(stars), source_name or path.stem)


def write_catalog(catalog: StarCatalog, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for s in catalog.stars:
            w.writerow([s.id, repr(math.degrees(s.right_ascension)), repr(math.degrees(s.declination)), repr(s.magnitude)])


def generate_desk_catalog(
    n_stars: int = 5000,
    seed: int = 0,
    mag_min: float = -1.0,
    mag_max: float = 6.5,
    slope: float = 0.45,
) -> StarCatalog:
    """Uniform random stars on the sphere.

    Magnitudes follow the cumulative count law N(<m) ~ 10**(slope*m) on
    [mag_min, mag_max], roughly what the real sky does for bright stars.
    """
    rng = np.random.default_rng(seed)
    ra = rng.uniform(0.0, TWO_PI, n_stars)
    dec = np.arcsin(rng.uniform(-1.0, 1.0, n_stars))
    lo, hi = 10.0 ** (slope * mag_min), 10.0 ** (slope * mag_max)
    mag = np.log10(lo + rng.uniform(0.0, 1.0, n_stars) * (hi - lo)) / slope
    width = len(str(n_stars))
    stars = tuple(
        StarRecord(f"DSK{i:0{width}d}", float(a) % TWO_PI, float(d), float(m))
        for i, (a, d, m) in enumerate(zip(ra, dec, mag))
    )
    return StarCatalog(stars, f"desk-{n_stars}-seed{seed}")


def query_fov(catalog: StarCatalog, attitude, camera: CameraModel) -> list[tuple[StarRecord, np.ndarray]]:
    """Stars in front of the camera, projecting on the sensor and at least as
    bright as ``camera.limit_magnitude``, in catalogue order."""
    idx, v_cam = fov_indices(catalog, attitude, camera)
    return [(catalog.stars[i], v_cam[j]) for j, i in enumerate(idx)]


def fov_indices(catalog: StarCatalog, attitude, camera: CameraModel, margin: float = 0.0):
    """Vectorised core of :func:`query_fov`: indices and camera vectors."""
    if len(catalog) == 0:
        return np.zeros(0, dtype=int), np.zeros((0, 3))
    v_cam = catalog.vectors @ np.asarray(attitude, dtype=float).T
    z = v_cam[:, 2]
    keep = (z > 0) & (catalog.magnitude <= camera.limit_magnitude)
    safe_z = np.where(keep, z, 1.0)
    x = camera.focal_length * v_cam[:, 0] / safe_z
    y = camera.focal_length * v_cam[:, 1] / safe_z
    keep &= camera.on_sensor(x, y, margin)
    idx = np.flatnonzero(keep)
    return idx, v_cam[idx]
