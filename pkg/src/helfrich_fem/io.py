"""Run configuration files, OBJ/VTK mesh output and CSV run logs."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .exceptions import ConfigurationError
from .mesh import SurfaceMesh
from .optimizer import LOG_COLUMNS, OptimizerConfig

SHAPES = ("sphere", "prolate", "oblate", "biconcave")


def fmt(value) -> str:
    """Fixed 17-significant-digit formatting used by every writer."""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return f"{float(value):.17g}"


# -- configuration -------------------------------------------------------------


@dataclass
class GeometrySpec:
    shape: str = "prolate"
    subdivisions: int = 2
    jitter: float = 0.0
    seed: int = 1234


@dataclass
class OutputSpec:
    output_dir: str = "run"
    snapshot_every: int = 0


@dataclass
class RunConfig:
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    geometry: GeometrySpec = field(default_factory=GeometrySpec)
    output: OutputSpec = field(default_factory=OutputSpec)


SECTIONS = {
    "physics": ("kb", "H0", "spontaneous_sign_flip"),
    "constraints": ("cA", "cV", "cAloc", "A0", "V0", "reduced_volume", "normalization"),
    "algorithm": (
        "alpha", "alpha_max", "alpha_factor", "Nmax", "tol_grad", "tol_step", "tol_cost", "M",
        "gradient_mode", "metric_epsilon", "order", "derivative_mode", "continuation_rounds",
        "continuation_factor",
    ),
    "geometry": ("shape", "subdivisions", "jitter", "seed"),
    "output": ("output_dir", "snapshot_every"),
}
_OWNER = {key: section for section, keys in SECTIONS.items() for key in keys}
_OPTIONAL_FLOATS = {"A0", "V0", "reduced_volume"}
_INTS = {"Nmax", "M", "order", "continuation_rounds", "subdivisions", "seed", "snapshot_every"}
_BOOLS = {"spontaneous_sign_flip"}
_STRINGS = {"normalization", "gradient_mode", "derivative_mode", "shape", "output_dir"}


def _parse_value(key, text):
    text = text.strip()
    if key in _BOOLS:
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if key in _STRINGS:
        if not text:
            raise ValueError("empty value")
        return text
    if key in _OPTIONAL_FLOATS and text.lower() in ("none", ""):
        return None
    if key in _INTS:
        value = float(text)
        if value != int(value):
            raise ValueError(f"expected an integer, got {text!r}")
        return int(value)
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"non-finite value {text!r}")
    return value


def _build(values: dict) -> RunConfig:
    opt = {k: v for k, v in values.items() if _OWNER[k] in ("physics", "constraints", "algorithm")}
    geo = {k: v for k, v in values.items() if _OWNER[k] == "geometry"}
    out = {k: v for k, v in values.items() if _OWNER[k] == "output"}
    run = RunConfig(OptimizerConfig(**opt), GeometrySpec(**geo), OutputSpec(**out))
    g = run.geometry
    if g.shape not in SHAPES:
        raise ConfigurationError(f"shape must be one of {SHAPES}")
    if not 0 <= g.subdivisions <= 8:
        raise ConfigurationError("subdivisions must lie in [0, 8]")
    if g.jitter < 0:
        raise ConfigurationError("jitter must be non-negative")
    if run.output.snapshot_every < 0:
        raise ConfigurationError("snapshot_every must be non-negative")
    return run


def parse_config_text(text: str, overrides: Optional[dict] = None) -> RunConfig:
    """Parse ``key = value`` lines; ``[section]`` headers and ``#`` comments allowed."""
    values = {}
    lines = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in SECTIONS:
                raise ConfigurationError(f"unknown section [{section}]", line=lineno)
            continue
        if "=" not in line:
            raise ConfigurationError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        key, text_value = (part.strip() for part in line.split("=", 1))
        if key not in _OWNER:
            raise ConfigurationError(f"unknown key {key!r}", line=lineno)
        if section is not None and _OWNER[key] != section:
            raise ConfigurationError(f"key {key!r} belongs to section [{_OWNER[key]}]", line=lineno)
        try:
            values[key] = _parse_value(key, text_value)
        except ValueError as exc:
            raise ConfigurationError(f"bad value for {key!r}: {exc}", line=lineno) from None
        lines[key] = lineno
    for key, value in (overrides or {}).items():
        if key not in _OWNER:
            raise ConfigurationError(f"unknown key {key!r}")
        if value is not None:
            values[key] = value
            lines.pop(key, None)
    try:
        return _build(values)
    except (ConfigurationError, TypeError) as exc:
        raise ConfigurationError(str(exc), line=_blame(values, lines)) from None


def _blame(values, lines):
    """Line of the last file key whose removal makes the config valid."""
    for key in sorted(lines, key=lines.get, reverse=True):
        trial = {k: v for k, v in values.items() if k != key}
        try:
            _build(trial)
        except (ConfigurationError, TypeError):
            continue
        return lines[key]
    return None


def parse_config(path, overrides: Optional[dict] = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, overrides)


def _format_value(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return fmt(value)
    return str(value)


def format_config(run: RunConfig) -> str:
    """Effective configuration in file form; re-parses to an equal config."""
    flat = {}
    for part in (run.optimizer, run.geometry, run.output):
        for f in fields(part):
            flat[f.name] = getattr(part, f.name)
    out = []
    for section, keys in SECTIONS.items():
        out.append(f"[{section}]")
        out.extend(f"{key} = {_format_value(flat[key])}" for key in keys)
        out.append("")
    return "\n".join(out)


def write_config_echo(path, run: RunConfig):
    _write_text(path, format_config(run))


def _write_text(path, text):
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


# -- meshes --------------------------------------------------------------------


def write_obj(path, mesh: SurfaceMesh, vertices=None):
    """ASCII OBJ with ``v``/``f`` records; quadratic edge nodes go to ``<name>.mid``."""
    verts = mesh.vertices if vertices is None else np.asarray(vertices)
    lines = [f"v {fmt(x)} {fmt(y)} {fmt(z)}" for x, y, z in verts]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    _write_text(path, "\n".join(lines) + "\n")
    if mesh.geometry_order == 2:
        mid = [f"{i} {fmt(x)} {fmt(y)} {fmt(z)}" for i, (x, y, z) in enumerate(mesh.edge_midpoint_nodes)]
        _write_text(_sidecar(path), "\n".join(mid) + "\n")


def _sidecar(path):
    return Path(path).with_suffix(".mid")


def read_obj(path) -> SurfaceMesh:
    """Read ``v``/``f`` records (``f`` indices may carry ``/vt/vn`` parts)."""
    vertices, faces = [], []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            vertices.append([float(p) for p in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) for p in parts[1:]]
            if len(idx) != 3:
                raise ValueError(f"{path}:{lineno}: only triangular faces are supported")
            faces.append([i - 1 if i > 0 else len(vertices) + i for i in idx])
    mesh = SurfaceMesh.from_arrays(np.array(vertices), np.array(faces))
    side = _sidecar(path)
    if side.exists():
        mids = np.empty((mesh.n_edges, 3))
        seen = np.zeros(mesh.n_edges, dtype=bool)
        for line in side.read_text().splitlines():
            parts = line.split()
            if parts:
                i = int(parts[0])
                mids[i] = [float(p) for p in parts[1:4]]
                seen[i] = True
        if not seen.all():
            raise ValueError(f"{side}: missing midpoint nodes")
        mesh = SurfaceMesh.from_arrays(mesh.vertices, mesh.triangles, mids)
    return mesh


def write_vtk(path, mesh: SurfaceMesh, state=None, fields: Optional[dict] = None, title="helfrich_fem"):
    """Legacy ASCII unstructured grid of the deformed vertices with point data.

    Scalar fields are ``(n_points,)``; vector fields ``(n_points, 3)``.  Longer
    arrays (quadratic coefficients) are cut to their vertex values.
    """
    n = mesh.n_vertices
    points = mesh.vertices if state is None else state.vertex_positions()
    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    out.append(f"POINTS {n} double")
    out += [f"{fmt(x)} {fmt(y)} {fmt(z)}" for x, y, z in points]
    T = mesh.n_triangles
    out.append(f"CELLS {T} {4 * T}")
    out += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    out.append(f"CELL_TYPES {T}")
    out += ["5"] * T
    fields = dict(fields or {})
    if state is not None and "displacement" not in fields:
        fields["displacement"] = state.displacement
    if fields:
        out.append(f"POINT_DATA {n}")
        for name, values in fields.items():
            arr = np.asarray(values, dtype=float)[:n]
            if arr.ndim == 1:
                out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                out += [fmt(v) for v in arr]
            else:
                out.append(f"VECTORS {name} double")
                out += [f"{fmt(x)} {fmt(y)} {fmt(z)}" for x, y, z in arr]
    _write_text(path, "\n".join(out) + "\n")


def curvature_fields(kappa=None, sigma=None) -> dict:
    fields = {}
    if kappa is not None:
        k = np.asarray(getattr(kappa, "coeffs", kappa))
        fields["kappa"] = k
        fields["mean_curvature"] = 0.5 * np.abs(k)
    if sigma is not None:
        fields["sigma"] = np.asarray(getattr(sigma, "coeffs", sigma))
    return fields


# -- CSV logs ------------------------------------------------------------------


class CsvLogWriter:
    """Incremental writer for run logs with the fixed column schema."""

    def __init__(self, path, columns=LOG_COLUMNS):
        self.path = Path(path)
        self.columns = tuple(columns)
        try:
            self._fh = open(self.path, "w", newline="")
        except OSError as exc:
            raise OSError(f"cannot open log {path}: {exc}") from exc
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(self.columns)

    def write(self, row: dict):
        self._writer.writerow([fmt(row[c]) for c in self.columns])
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_csv_log(path, rows, columns=LOG_COLUMNS):
    with CsvLogWriter(path, columns) as writer:
        for row in rows:
            writer.write(row)


def read_csv_log(path) -> list:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def ensure_dir(path) -> Path:
    p = Path(path)
    try:
        os.makedirs(p, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create directory {path}: {exc}") from exc
    return p
