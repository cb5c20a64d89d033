"""Multi-resolution bisquare basis functions and land-use interactions."""
import csv
import warnings
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .exceptions import ParameterError

DEFAULT_RESOLUTIONS = ((3, 2), (10, 7))


class Landuse(IntEnum):
    """Land-use categories; integer codes match the raster format."""

    NA = -1
    C = 0
    F = 1
    W = 2
    OTH = 3


CATEGORIES = (Landuse.C, Landuse.F, Landuse.W, Landuse.OTH)
CATEGORY_NAMES = ("C", "F", "W", "Oth")


def parse_landuse(values):
    """Map labels (``C``/``F``/``W``/``Oth``/``NA``) or integer codes to codes."""
    lookup = {"C": 0, "F": 1, "W": 2, "OTH": 3, "NA": -1, "": -1}
    out = []
    for v in np.atleast_1d(values):
        if isinstance(v, str):
            key = v.strip().upper()
            if key in lookup:
                out.append(lookup[key])
                continue
            try:
                v = int(key)
            except ValueError:
                raise ParameterError(f"unknown land-use label {v!r}") from None
        code = int(v)
        if code not in (-1, 0, 1, 2, 3):
            raise ParameterError(f"unknown land-use code {code}")
        out.append(code)
    return np.asarray(out, dtype=int)


@dataclass(frozen=True)
class Knot:
    lon: float
    lat: float
    R: float

    def __post_init__(self):
        if not self.R > 0:
            raise ParameterError("knot range R must be positive")


@dataclass(frozen=True)
class BasisSet:
    """Ordered knots with their resolution index."""

    knots: tuple
    resolution_ids: tuple

    def __post_init__(self):
        if len(self.knots) == 0:
            raise ParameterError("a basis needs at least one knot")
        if len(self.knots) != len(self.resolution_ids):
            raise ParameterError("one resolution id per knot required")

    def __len__(self):
        return len(self.knots)

    @property
    def centers(self):
        return np.array([[k.lon, k.lat] for k in self.knots])

    @property
    def ranges(self):
        return np.array([k.R for k in self.knots])

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["lon", "lat", "R", "resolution_id"])
            for k, res in zip(self.knots, self.resolution_ids):
                writer.writerow([repr(k.lon), repr(k.lat), repr(k.R), res])

    @classmethod
    def from_csv(cls, path):
        knots, res = [], []
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                knots.append(Knot(float(row["lon"]), float(row["lat"]), float(row["R"])))
                res.append(int(row["resolution_id"]))
        return cls(tuple(knots), tuple(res))


def _axis(lo, hi, m):
    if m == 1:
        return np.array([(lo + hi) / 2.0]), hi - lo
    return np.linspace(lo, hi, m), (hi - lo) / (m - 1)


def generate_knots(bbox, resolutions=DEFAULT_RESOLUTIONS):
    """Regular knot grids over `bbox`, one per resolution.

    Each resolution ``(nx, ny)`` places ``nx`` knots along longitude and ``ny``
    along latitude (row-major, latitude outer). The range of every knot in a
    resolution is 1.5 times the larger grid spacing; a single-point axis uses
    the full extent as its spacing.
    """
    lon_min, lat_min, lon_max, lat_max = map(float, bbox)
    if not (lon_max > lon_min and lat_max > lat_min):
        raise ParameterError(f"degenerate bounding box {bbox}")
    if len(resolutions) == 0:
        raise ParameterError("at least one resolution is required")
    knots, ids = [], []
    for rid, (nx, ny) in enumerate(resolutions):
        if nx < 1 or ny < 1:
            raise ParameterError(f"grid dimensions must be >= 1, got {(nx, ny)}")
        xs, dx = _axis(lon_min, lon_max, int(nx))
        ys, dy = _axis(lat_min, lat_max, int(ny))
        R = 1.5 * max(dx, dy)
        for y in ys:
            for x in xs:
                knots.append(Knot(float(x), float(y), R))
                ids.append(rid)
    return BasisSet(tuple(knots), tuple(ids))


def bisquare(s, knot):
    d = float(np.hypot(s[0] - knot.lon, s[1] - knot.lat))
    if d >= knot.R:
        return 0.0
    return (1.0 - (d / knot.R) ** 2) ** 2


def basis_matrix(sites, basis, warn_empty=False):
    """Evaluate all bisquare functions at all sites (``n x J``)."""
    sites = np.atleast_2d(np.asarray(sites, dtype=float))
    if sites.size == 0:
        return np.zeros((0, len(basis)))
    c = basis.centers
    d = np.hypot(sites[:, :1] - c[:, 0], sites[:, 1:2] - c[:, 1])
    u = d / basis.ranges
    Phi = np.where(u < 1.0, (1.0 - u**2) ** 2, 0.0)
    if warn_empty:
        empty = int(np.sum(~Phi.any(axis=1)))
        if empty:
            warnings.warn(f"{empty} site(s) lie outside every basis kernel", RuntimeWarning)
    return Phi


def interaction_basis(Phi, landuse):
    """Block-expand `Phi` by land-use category (block order C, F, W, Oth)."""
    Phi = np.asarray(Phi, dtype=float)
    landuse = np.asarray(landuse, dtype=int)
    n, J = Phi.shape
    if landuse.shape != (n,):
        raise ParameterError("one land-use code per row required")
    if np.any(landuse == Landuse.NA) or np.any((landuse < 0) | (landuse > 3)):
        raise ParameterError("interaction basis requires an applicable land-use code")
    out = np.zeros((n, 4 * J))
    for code in range(4):
        rows = landuse == code
        out[rows, code * J:(code + 1) * J] = Phi[rows]
    return out
