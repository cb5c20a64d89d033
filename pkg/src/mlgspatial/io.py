"""CSV/plain-text readers and writers; all outputs are written atomically."""
import contextlib
import json
import os
import tempfile

import numpy as np
import pandas as pd

from .basis import CATEGORY_NAMES, BasisSet, parse_landuse
from .design import SiteTable
from .exceptions import DataError
from .prediction import LanduseRaster
from .spectra import SpectralBasis

FLOAT_FORMAT = "%.17g"


@contextlib.contextmanager
def atomic_open(path, mode="w"):
    """Write to a temp file in the target directory, then rename over `path`."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, mode, encoding="utf-8", newline="") as fh:
            yield fh
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def write_frame(df, path):
    with atomic_open(path) as fh:
        df.to_csv(fh, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def _read_csv(path, required, **kwargs):
    try:
        df = pd.read_csv(path, float_precision="round_trip", **kwargs)
    except FileNotFoundError:
        raise DataError(f"{path}: file not found") from None
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: {exc}") from None
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
    return df


def _check_numeric(df, cols, path, allow_nan=()):
    for col in cols:
        values = pd.to_numeric(df[col], errors="coerce")
        bad = values.isna() & ~(df[col].isna() & (col in allow_nan))
        if bad.any():
            line = int(np.flatnonzero(bad.to_numpy())[0]) + 2  # header is line 1
            raise DataError(f"{path}:{line}: non-numeric value in column {col!r}")
        df[col] = values
    return df


# ---------------------------------------------------------------------------
# sites / coefficients / spectra


def read_sites(path):
    """Sites CSV ``site_id, lon, lat, landuse, y`` (blank y allowed)."""
    # "NA" is a land-use label, so only y gets pandas' missing-value parsing
    df = _read_csv(
        path,
        ["site_id", "lon", "lat", "landuse"],
        keep_default_na=False,
        na_values={"y": ["", "NA", "NaN", "nan"]},
        dtype={"landuse": str},
    )
    if "y" not in df.columns:
        df["y"] = np.nan
    df = _check_numeric(df, ["site_id", "lon", "lat", "y"], path, allow_nan=("y",))
    try:
        landuse = parse_landuse(df["landuse"].to_numpy())
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    try:
        return SiteTable(df["site_id"].to_numpy(dtype=int), df["lon"], df["lat"], landuse, df["y"])
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_sites(sites, path):
    df = pd.DataFrame(
        {
            "site_id": sites.ids,
            "lon": sites.lon,
            "lat": sites.lat,
            "landuse": [CATEGORY_NAMES[c] for c in sites.landuse],
            "y": sites.y,
        }
    )
    write_frame(df, path)


def read_coeffs(path):
    """Coefficient CSV ``site_id, v1..vK``; returns ``(ids, coeffs)``."""
    df = _read_csv(path, ["site_id"])
    cols = [c for c in df.columns if c != "site_id"]
    if not cols:
        raise DataError(f"{path}: no coefficient columns")
    df = _check_numeric(df, ["site_id"] + cols, path)
    return df["site_id"].to_numpy(dtype=int), df[cols].to_numpy(dtype=float)


def write_coeffs(ids, coeffs, path):
    coeffs = np.asarray(coeffs, dtype=float)
    df = pd.DataFrame(coeffs, columns=[f"v{k + 1}" for k in range(coeffs.shape[1])])
    df.insert(0, "site_id", np.asarray(ids, dtype=int))
    write_frame(df, path)


def attach_coeffs(sites, ids, coeffs):
    """Align coefficient rows to `sites` by id; sites without a row get NaN."""
    lookup = {int(i): r for r, i in enumerate(ids)}
    out = np.full((len(sites), coeffs.shape[1]), np.nan)
    for row, sid in enumerate(sites.ids):
        r = lookup.get(int(sid))
        if r is not None:
            out[row] = coeffs[r]
    return sites.with_coeffs(out)


def read_spectra(path):
    """Spectra CSV ``site_id, r350, r351, ...``; returns ``(ids, wavelengths, matrix)``."""
    df = _read_csv(path, ["site_id"])
    cols = [c for c in df.columns if c != "site_id"]
    try:
        wavelengths = np.array([int(c.lstrip("rR")) for c in cols])
    except ValueError:
        raise DataError(f"{path}: spectral columns must be named r<wavelength>") from None
    if wavelengths.size == 0:
        raise DataError(f"{path}: no spectral columns")
    df = _check_numeric(df, ["site_id"] + cols, path)
    return df["site_id"].to_numpy(dtype=int), wavelengths, df[cols].to_numpy(dtype=float)


def write_spectra(ids, wavelengths, spectra, path):
    df = pd.DataFrame(np.asarray(spectra, dtype=float), columns=[f"r{int(w)}" for w in wavelengths])
    df.insert(0, "site_id", np.asarray(ids, dtype=int))
    write_frame(df, path)


def write_spectral_basis(basis, path):
    """Header ``W K w_min w_max``, then the mean spectrum, then K loading rows.

    A final row carries the explained-variance ratios (K values).
    """
    W, K = basis.mean_spectrum.size, basis.n_components
    w = basis.wavelengths
    with atomic_open(path) as fh:
        fh.write(f"{W} {K} {int(w[0])} {int(w[-1])}\n")
        rows = [basis.mean_spectrum, *basis.loadings, basis.explained_variance_ratio]
        for row in rows:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_spectral_basis(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        try:
            W, K, w_min, w_max = (int(v) for v in header)
        except ValueError:
            raise DataError(f"{path}:1: expected header 'W K w_min w_max'") from None
        rows = [np.array(line.split(), dtype=float) for line in fh if line.strip()]
    if len(rows) != K + 2 or any(r.size != W for r in rows[:-1]) or rows[-1].size != K:
        raise DataError(f"{path}: body does not match header {W} x {K}")
    step = (w_max - w_min) // (W - 1) if W > 1 else 1
    wavelengths = w_min + step * np.arange(W)
    return SpectralBasis(wavelengths, rows[0], np.vstack(rows[1:-1]), rows[-1])


# ---------------------------------------------------------------------------
# rasters, basis, JSON


def read_raster(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return LanduseRaster.from_asc(fh)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_raster(raster, path):
    with atomic_open(path) as fh:
        raster.to_asc(fh)


def write_basis(basis, path):
    with atomic_open(path) as fh:
        fh.write("lon,lat,R,resolution_id\n")
        for k, res in zip(basis.knots, basis.resolution_ids):
            fh.write(f"{k.lon!r},{k.lat!r},{k.R!r},{res}\n")


def read_basis(path):
    try:
        return BasisSet.from_csv(path)
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: malformed basis file ({exc})") from None


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (set, frozenset)):
        return sorted(_jsonable(v) for v in obj)
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_json(obj, path):
    with atomic_open(path) as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
