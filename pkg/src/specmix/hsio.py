"""Hyperspectral cube container and file formats.

Two on-disk formats are supported, both with a mandatory JSON sidecar
(``<path>.json``) carrying ``{height, width, bands, wavelengths?}``:

* ``csv``  - bands rows by height*width columns, full float precision;
* ``raw``  - little-endian 32-bit IEEE floats, band-sequential
  (band 0 plane row-major, then band 1, ...).

All writes are atomic (temp file + rename), so partially-written outputs
never parse.
"""

import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, ParseError

FORMATS = ("csv", "raw")


@dataclass
class HsiCube:
    """A height x width image with ``bands`` spectral samples per pixel.

    ``data`` has shape (bands, height, width); flattening to a matrix maps
    pixel (row, col) to column ``row * width + col``.
    """

    height: int
    width: int
    bands: int
    data: np.ndarray
    wavelengths: list | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        expected = (self.bands, self.height, self.width)
        if self.data.shape != expected:
            raise DimensionMismatch(
                f"cube data has shape {self.data.shape}, expected {expected}"
            )
        if self.height < 1 or self.width < 1 or self.bands < 1:
            raise DimensionMismatch("cube dimensions must be >= 1")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("cube data contains non-finite entries")
        if self.wavelengths is not None and len(self.wavelengths) != self.bands:
            raise DimensionMismatch(
                f"{len(self.wavelengths)} wavelengths for {self.bands} bands"
            )


def cube_to_matrix(cube):
    """Flatten a cube to a bands x (height*width) matrix, one spectrum per column."""
    return cube.data.reshape(cube.bands, cube.height * cube.width).copy()


def matrix_to_cube(matrix, height, width, wavelengths=None):
    """Inverse of :func:`cube_to_matrix` for a known image shape."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[1] != height * width:
        raise DimensionMismatch(
            f"matrix with {m.shape} cannot fill a {height}x{width} image"
        )
    return HsiCube(height, width, m.shape[0], m.reshape(m.shape[0], height, width).copy(),
                   wavelengths=wavelengths)


def pixel_of(column, width):
    """Image coordinates (row, col) of a flattened matrix column."""
    return int(column) // int(width), int(column) % int(width)


def column_of(row, col, width):
    """Flattened matrix column of an image pixel."""
    return int(row) * int(width) + int(col)


def sidecar_path(path):
    return str(path) + ".json"


def write_bytes_atomic(path, payload):
    path = str(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text_atomic(path, text):
    write_bytes_atomic(path, text.encode("utf-8"))


def write_json_atomic(path, obj):
    write_text_atomic(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_sidecar(path):
    sc = sidecar_path(path)
    try:
        with open(sc, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except FileNotFoundError as exc:
        raise ParseError(f"missing JSON sidecar {sc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{sc}: not valid JSON: {exc}") from exc
    try:
        height = int(meta["height"])
        width = int(meta["width"])
        bands = int(meta["bands"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{sc}: needs integer height/width/bands: {exc}") from exc
    wavelengths = meta.get("wavelengths")
    if wavelengths is not None:
        wavelengths = [float(v) for v in wavelengths]
    return height, width, bands, wavelengths


def save_hsi(cube, path, format="raw"):
    """Write a cube in the given format plus its JSON sidecar."""
    if format not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    meta = {"height": cube.height, "width": cube.width, "bands": cube.bands}
    if cube.wavelengths is not None:
        meta["wavelengths"] = list(cube.wavelengths)
    if format == "raw":
        write_bytes_atomic(path, cube.data.astype("<f4").tobytes(order="C"))
    else:
        flat = cube.data.reshape(cube.bands, cube.height * cube.width)
        lines = [",".join(repr(float(v)) for v in row) for row in flat]
        write_text_atomic(path, "\n".join(lines) + "\n")
    write_json_atomic(sidecar_path(path), meta)


def load_hsi(path, format=None):
    """Read a cube written by :func:`save_hsi`.

    ``format`` defaults from the file extension (".csv" means csv, anything
    else raw). Payload/size mismatches and non-finite values are rejected
    with a :class:`ParseError`.
    """
    if format is None:
        format = "csv" if str(path).endswith(".csv") else "raw"
    if format not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    height, width, bands, wavelengths = _load_sidecar(path)
    if format == "raw":
        with open(path, "rb") as fh:
            payload = fh.read()
        data = parse_raw_payload(payload, height, width, bands, name=str(path))
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
        data = parse_csv_payload(text, height, width, bands, name=str(path))
    return HsiCube(height, width, bands, data, wavelengths=wavelengths)


def parse_raw_payload(payload, height, width, bands, name="payload"):
    """Decode a band-sequential little-endian float32 byte string."""
    expected = height * width * bands * 4
    if len(payload) != expected:
        raise ParseError(
            f"{name}: got {len(payload)} bytes, expected {expected} "
            f"({bands} bands x {height}x{width} pixels x 4 bytes)"
        )
    data = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise ParseError(f"{name}: non-finite values rejected")
    return data.reshape(bands, height, width)


def parse_csv_payload(text, height, width, bands, name="payload"):
    """Decode a bands-by-pixels CSV body."""
    rows = [line for line in text.splitlines() if line.strip()]
    if len(rows) != bands:
        raise ParseError(f"{name}: {len(rows)} rows, expected {bands} bands")
    out = np.empty((bands, height * width))
    for i, line in enumerate(rows):
        cells = line.split(",")
        if len(cells) != height * width:
            raise ParseError(
                f"{name}: row {i} has {len(cells)} columns, expected "
                f"{height * width} (height*width)"
            )
        try:
            out[i, :] = [float(c) for c in cells]
        except ValueError as exc:
            raise ParseError(f"{name}: row {i}: non-numeric entry: {exc}") from exc
    if not np.all(np.isfinite(out)):
        raise ParseError(f"{name}: non-finite values rejected")
    return out.reshape(bands, height, width)
