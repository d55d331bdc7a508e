"""Binary checkpoints for shapes and spectra, plus JSON/CSV helpers.

Field file layout::

    8 bytes   magic b"LSETSHP1"
    8 bytes   header length L, unsigned little-endian
    L bytes   UTF-8 JSON header
    rest      raw little-endian float64 arrays, row-major, in header order

A spectrum is a JSON document (eigenvalues, residuals, field file names)
next to one field file per eigenfunction.
"""

from __future__ import annotations

import json
import math
import os
import struct
from pathlib import Path

import numpy as np

from .eigensolve import Spectrum
from .grid_geometry import Grid, LevelSetShape, make_shape

SHAPE_MAGIC = b"LSETSHP1"
_F64 = np.dtype("<f8")


class FormatError(ValueError):
    """File is not a valid checkpoint."""


def _write(path, magic: bytes, header: dict, arrays) -> None:
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as f:
        f.write(magic)
        f.write(struct.pack("<Q", len(head)))
        f.write(head)
        for a in arrays:
            f.write(np.ascontiguousarray(a, dtype=_F64).tobytes())
    os.replace(tmp, path)


def _read(path, magic: bytes):
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:8] != magic:
        raise FormatError(f"{path}: bad magic bytes")
    (n,) = struct.unpack("<Q", data[8:16])
    if 16 + n > len(data):
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(data[16:16 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable header") from exc
    return header, data[16 + n:]


def _grid_from(header) -> Grid:
    try:
        return Grid(tuple(header["dims"]), float(header["h"]), tuple(header["origin"]))
    except (KeyError, TypeError) as exc:
        raise FormatError("header lacks grid description") from exc


def _take(buf: bytes, offset: int, shape) -> tuple[np.ndarray, int]:
    count = int(np.prod(shape))
    end = offset + 8 * count
    if end > len(buf):
        raise FormatError("payload shorter than header declares")
    return np.frombuffer(buf, dtype=_F64, count=count, offset=offset).reshape(shape).astype(np.float64), end


def save_shape(path, shape: LevelSetShape, step: int = 0) -> None:
    meta = {k: v for k, v in shape.metadata.items() if _json_ok(v)}
    header = dict(shape.grid.to_dict(), step=int(step), metadata=meta)
    _write(path, SHAPE_MAGIC, header, [shape.phi])


def load_shape(path) -> LevelSetShape:
    header, buf = _read(path, SHAPE_MAGIC)
    grid = _grid_from(header)
    phi, end = _take(buf, 0, grid.dims)
    if end != len(buf):
        raise FormatError("payload length does not match grid")
    meta = dict(header.get("metadata", {}), step=header.get("step", 0))
    return make_shape(grid, phi, meta)


def _field_paths(path: Path, n: int) -> list[Path]:
    stem = path.name[:-5] if path.name.endswith(".json") else path.name
    return [path.with_name(f"{stem}.u{k + 1}.lsfield") for k in range(n)]


def save_spectrum(path, spectrum: Spectrum) -> None:
    """JSON metadata at ``path`` plus one field file per eigenfunction next to it.

    Field files use the shape layout (magic ``LSETSHP1``); JSON floats are
    written with shortest round-trip repr, so eigenvalues reload bit-exactly.
    """
    path = Path(path)
    files = _field_paths(path, spectrum.n)
    for k, (f, u) in enumerate(zip(files, spectrum.eigenfunctions)):
        header = dict(spectrum.grid.to_dict(), step=0, metadata={"k": k + 1})
        _write(f, SHAPE_MAGIC, header, [u])
    meta = dict(spectrum.grid.to_dict(), N=spectrum.n,
                eigenvalues=[float(v) for v in spectrum.eigenvalues],
                residuals=[float(v) for v in spectrum.residuals],
                fields=[f.name for f in files])
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(meta, indent=1))
    os.replace(tmp, path)


def load_spectrum(path) -> Spectrum:
    path = Path(path)
    try:
        meta = json.loads(path.read_text())
        grid = _grid_from(meta)
        lam = np.array(meta["eigenvalues"], dtype=np.float64)
        res = np.array(meta["residuals"], dtype=np.float64)
        names = meta["fields"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: not a spectrum file") from exc
    if not (len(lam) == len(res) == len(names)):
        raise FormatError(f"{path}: inconsistent lengths")
    fields = np.empty((len(lam),) + grid.dims)
    for k, name in enumerate(names):
        header, buf = _read(path.with_name(name), SHAPE_MAGIC)
        if _grid_from(header) != grid:
            raise FormatError(f"{name}: grid differs from spectrum metadata")
        fields[k], end = _take(buf, 0, grid.dims)
        if end != len(buf):
            raise FormatError(f"{name}: payload length does not match grid")
    return Spectrum(lam, fields, res, grid)


def _json_ok(v) -> bool:
    try:
        json.dumps(v)
        return True
    except TypeError:
        return False


def to_json(obj) -> str:
    """JSON text with non-finite floats written as null."""
    def clean(o):
        if isinstance(o, dict):
            return {str(k): clean(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [clean(v) for v in o]
        if isinstance(o, np.ndarray):
            return clean(o.tolist())
        if isinstance(o, (float, np.floating)):
            return float(o) if math.isfinite(o) else None
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.bool_):
            return bool(o)
        return o
    return json.dumps(clean(obj), indent=2, sort_keys=True)


def profiles_csv(report_dict: dict) -> str:
    """Per-radius profiles of a diagnostics report as long-format CSV."""
    rows = ["profile,r,value"]
    def add(name, radii, values):
        for r, v in zip(radii or [], values or []):
            rows.append(f"{name},{r!r},{v!r}")
    nd = report_dict.get("nondegeneracy") or {}
    add("nondegeneracy_min_ratio", nd.get("radii"), nd.get("min_ratio"))
    de = report_dict.get("density") or {}
    add("density_min", de.get("radii"), de.get("min"))
    add("density_max", de.get("radii"), de.get("max"))
    mk = report_dict.get("minkowski") or {}
    add("minkowski_ratio", mk.get("radii"), mk.get("ratio"))
    for i, c in enumerate((report_dict.get("weiss") or {}).get("centers", [])):
        add(f"weiss_phi_{i}", c["r"], c["phi"])
    for i, c in enumerate((report_dict.get("flatness_decay") or {}).get("centers", [])):
        add(f"flatness_{i}", c["radii"], c["f"])
    for s in (report_dict.get("acf") or {}).get("samples", []) or []:
        rows.append(f"acf_J,{s['r']!r},{s['J']!r}")
    return "\n".join(rows) + "\n"
