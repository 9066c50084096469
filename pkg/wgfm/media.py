"""
wgfm - Media
Reading and writing run artifacts: lattice data sets, far-field matrices, image
fields (CSV and 8-bit PGM rasters), key-value metric files and the run manifest.

Floats are written with repr(), the shortest string that round-trips exactly.
"""
import csv
import hashlib
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from PIL import Image

from .imaging import ImageField
from .mfop import FarFieldMatrix, OperatorKind
from .modal import BoundaryKind, Waveguide
from .synth import DataSet, FrequencyGrid, MeasurementConfig, NoiseSpec, Side

logger = logging.getLogger("wgfm.media")

PathLike = Union[str, Path]

DATASET_FORMAT = "wgfm-dataset-1"
MATRIX_FORMAT = "wgfm-matrix-1"


class MediaError(Exception):
    """Exception for malformed artifact files."""

    def __init__(self, message: str, path: Optional[PathLike] = None, line: Optional[int] = None):
        where = f"{path}:{line}: " if path is not None and line is not None else ""
        super().__init__(f"{where}{message}")
        self.path = str(path) if path is not None else None
        self.line = line


def _num(value: float) -> str:
    return repr(float(value))


def _write_rows(path: Path, header: List[Tuple[str, str]], columns: List[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for key, value in header:
            writer.writerow([f"#{key}", value])
        writer.writerow(columns)
        writer.writerows(rows)


def _read_rows(path: PathLike, columns: List[str]) -> Tuple[Dict[str, str], List[Tuple[int, List[str]]]]:
    path = Path(path)
    if not path.exists():
        raise MediaError(f"File not found: {path}")
    header: Dict[str, str] = {}
    rows: List[Tuple[int, List[str]]] = []
    seen_columns = False
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if row[0].startswith("#"):
                if len(row) != 2:
                    raise MediaError("Header rows hold exactly one key and one value", path, lineno)
                header[row[0][1:]] = row[1]
            elif not seen_columns:
                if row != columns:
                    raise MediaError(f"Expected columns {columns}, got {row}", path, lineno)
                seen_columns = True
            else:
                if len(row) != len(columns):
                    raise MediaError(f"Expected {len(columns)} fields, got {len(row)}", path, lineno)
                rows.append((lineno, row))
    if not seen_columns:
        raise MediaError(f"Missing column row {columns}", path)
    return header, rows


def _require(header: Dict[str, str], key: str, path: PathLike) -> str:
    if key not in header:
        raise MediaError(f"Missing header field '{key}'", path)
    return header[key]


def _flag(value: str) -> bool:
    return value == "true"


# --- Data sets ---

def write_dataset(ds: DataSet, path: PathLike) -> Path:
    """Write a DataSet as CSV: '#key,value' header rows, then m, omega_m, re, im."""
    path = Path(path)
    wg, grid, x = ds.waveguide, ds.grid, ds.measurement
    header = [
        ("format", DATASET_FORMAT),
        ("height", _num(wg.height)),
        ("boundary", wg.boundary.value),
        ("k_minus", _num(grid.k_minus)),
        ("k_plus", _num(grid.k_plus)),
        ("n", str(grid.n)),
        ("vertex", "true" if grid.vertex else "false"),
        ("a", _num(x.a)),
        ("xperp", _num(x.xperp)),
        ("side", x.side.value),
        ("theta", _num(ds.theta)),
        ("doubled", "true" if ds.doubled else "false"),
    ]
    if ds.noise is not None:
        header += [("noise_level", _num(ds.noise.level)), ("noise_seed", str(ds.noise.seed))]
    if ds.alpha is not None:
        header.append(("alpha", _num(ds.alpha)))
    if ds.transmitter is not None:
        t = ds.transmitter
        header += [("tx_a", _num(t.a)), ("tx_xperp", _num(t.xperp)), ("tx_side", t.side.value)]

    rows = [
        [str(int(m)), _num(w), _num(u.real), _num(u.imag)]
        for m, w, u in zip(ds.offsets, ds.wavenumbers, ds.samples)
    ]
    _write_rows(path, header, ["m", "omega_m", "re", "im"], rows)
    logger.debug("Wrote %d samples to %s", len(rows), path)
    return path


def read_dataset(path: PathLike) -> DataSet:
    """
    Read a DataSet written by write_dataset.

    Raises:
        MediaError: On a malformed file
    """
    header, rows = _read_rows(path, ["m", "omega_m", "re", "im"])
    if _require(header, "format", path) != DATASET_FORMAT:
        raise MediaError(f"Unsupported data set format '{header['format']}'", path)
    try:
        wg = Waveguide(float(_require(header, "height", path)), BoundaryKind(_require(header, "boundary", path)))
        grid = FrequencyGrid(
            float(_require(header, "k_minus", path)),
            float(_require(header, "k_plus", path)),
            int(_require(header, "n", path)),
            _flag(_require(header, "vertex", path)),
        )
        measurement = MeasurementConfig(
            float(_require(header, "a", path)),
            float(_require(header, "xperp", path)),
            Side(_require(header, "side", path)),
        )
        noise = None
        if "noise_level" in header:
            noise = NoiseSpec(float(header["noise_level"]), int(_require(header, "noise_seed", path)))
        alpha = float(header["alpha"]) if "alpha" in header else None
        transmitter = None
        if "tx_a" in header:
            transmitter = MeasurementConfig(
                float(header["tx_a"]),
                float(_require(header, "tx_xperp", path)),
                Side(_require(header, "tx_side", path)),
            )
    except ValueError as e:
        raise MediaError(f"Invalid header: {e}", path) from e

    offsets, wavenumbers, samples = [], [], []
    for lineno, (m, w, re, im) in rows:
        try:
            offsets.append(int(m))
            wavenumbers.append(float(w))
            samples.append(complex(float(re), float(im)))
        except ValueError as e:
            raise MediaError(f"Invalid sample row: {e}", path, lineno) from e

    return DataSet(
        wg, grid, measurement, float(_require(header, "theta", path)),
        offsets, wavenumbers, samples,
        doubled=_flag(_require(header, "doubled", path)),
        noise=noise, alpha=alpha, transmitter=transmitter,
    )


# --- Far-field matrices ---

def write_matrix(F: FarFieldMatrix, path: PathLike) -> Path:
    """Write a FarFieldMatrix as CSV rows i, j, re, im."""
    path = Path(path)
    header = [
        ("format", MATRIX_FORMAT),
        ("kind", F.kind.value),
        ("k_minus", _num(F.grid.k_minus)),
        ("k_plus", _num(F.grid.k_plus)),
        ("n", str(F.grid.n)),
        ("vertex", "true" if F.grid.vertex else "false"),
        ("weight", _num(F.weight)),
        ("reference_x1", _num(F.reference_x1)),
        ("theta", _num(F.theta)),
        ("tau", _num(F.tau)),
        ("doubled", "true" if F.doubled else "false"),
    ]
    if F.alpha is not None:
        header.append(("alpha", _num(F.alpha)))
    rows = [
        [str(i), str(j), _num(F.entries[i, j].real), _num(F.entries[i, j].imag)]
        for i in range(F.size)
        for j in range(F.size)
    ]
    _write_rows(path, header, ["i", "j", "re", "im"], rows)
    return path


def read_matrix(path: PathLike) -> FarFieldMatrix:
    """Read a FarFieldMatrix written by write_matrix."""
    header, rows = _read_rows(path, ["i", "j", "re", "im"])
    if _require(header, "format", path) != MATRIX_FORMAT:
        raise MediaError(f"Unsupported matrix format '{header['format']}'", path)
    try:
        grid = FrequencyGrid(
            float(_require(header, "k_minus", path)),
            float(_require(header, "k_plus", path)),
            int(_require(header, "n", path)),
            _flag(_require(header, "vertex", path)),
        )
        kind = OperatorKind(_require(header, "kind", path))
    except ValueError as e:
        raise MediaError(f"Invalid header: {e}", path) from e

    entries = np.full((grid.n, grid.n), np.nan + 0j)
    for lineno, (i, j, re, im) in rows:
        try:
            entries[int(i), int(j)] = complex(float(re), float(im))
        except (ValueError, IndexError) as e:
            raise MediaError(f"Invalid matrix row: {e}", path, lineno) from e
    if np.isnan(entries.real).any():
        raise MediaError("Matrix file does not list every entry", path)

    return FarFieldMatrix(
        entries, grid,
        float(_require(header, "weight", path)),
        kind,
        float(_require(header, "reference_x1", path)),
        theta=float(_require(header, "theta", path)),
        alpha=float(header["alpha"]) if "alpha" in header else None,
        tau=float(_require(header, "tau", path)),
        doubled=_flag(_require(header, "doubled", path)),
    )


# --- Images ---

def write_image_csv(img: ImageField, path: PathLike) -> Path:
    """Write an image as CSV rows z1, zperp, value."""
    path = Path(path)
    header = [("kind", img.kind.value)]
    if img.epsilon is not None:
        header.append(("epsilon", _num(img.epsilon)))
    if img.rho is not None:
        header.append(("rho", _num(img.rho)))
    rows = [
        [_num(z1), _num(zp), _num(img.values[j, i])]
        for j, zp in enumerate(img.grid.zperp)
        for i, z1 in enumerate(img.grid.z1)
    ]
    _write_rows(path, header, ["z1", "zperp", "value"], rows)
    return path


def write_pgm(img: ImageField, path: PathLike) -> Path:
    """
    Write an 8-bit binary grayscale raster (P5), z1 along columns and
    zperp increasing upwards.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pixels = np.clip(np.rint(img.values[::-1] * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(pixels).save(path, format="PPM")
    return path


def read_pgm(path: PathLike) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L"))


# --- Metrics and manifest ---

def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return _num(value)
    if isinstance(value, (tuple, list)):
        return " ".join(_format_value(v) for v in value)
    return str(value)


def write_metrics(metrics: Dict[str, Any], path: PathLike) -> Path:
    """Flat 'key = value' text file, one metric per line, in insertion order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{key} = {_format_value(value)}" for key, value in metrics.items()]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_metrics(path: PathLike) -> Dict[str, str]:
    metrics: Dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        if " = " not in line:
            raise MediaError("Expected 'key = value'", path, lineno)
        key, value = line.split(" = ", 1)
        metrics[key.strip()] = value.strip()
    return metrics


def sha256_file(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def write_json_atomic(payload: Dict[str, Any], path: PathLike) -> Path:
    """Write JSON through a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_profile(z1, values, path: PathLike, columns: Tuple[str, str] = ("z1", "value")) -> Path:
    """Two-column CSV of a one-dimensional profile."""
    path = Path(path)
    rows = [[_num(z), _num(v)] for z, v in zip(z1, values)]
    _write_rows(path, [], list(columns), rows)
    return path
