"""Instance files, CSV ingestion, standardization and result writers.

Instance JSON layout (``schema_version`` 1)::

    {"schema_version": 1, "M": int, "N": int,
     "A": [[...N floats...] x M], "y": [...M floats...],
     "x0": [...N floats...] | null, "support0": [int, ...] | null,
     "noise_var": float | null, "generator": {...} | null}

Floats are written with Python's shortest round-trip repr, so loading and
saving again reproduces every bit.
"""

import csv
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datagen import PlantedInstance
from .errors import ParseError, SchemaVersionMismatch, ShapeMismatch, ZeroVarianceColumn
from .linalg import Instance, SparseWeight

SCHEMA_VERSION = 1

PHASE_HEADER = ("alpha", "rho0", "n_samp", "p_samp")
SUCCESS_HEADER = ("N", "alpha", "rho0", "n_init", "n_samp", "p_suc_mean", "p_suc_stderr")
SCALING_HEADER = ("N", "nconv_mean", "nconv_stderr")
NOISY_HEADER = ("rho", "eps_y_mean", "eps_y_stderr", "eps_x_mean", "eps_x_stderr")
CV_HEADER = ("K", "eps_cv")
COUNTS_HEADER = ("variable", "count")


def _read_rows(path, header):
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ParseError(str(exc), path=path) from None
    with fh:
        rows = list(csv.reader(fh))
    first = 1
    if header and rows:
        rows = rows[1:]
        first = 2
    out = []
    for r, row in enumerate(rows, start=first):
        if not row or all(not cell.strip() for cell in row):
            continue
        vals = []
        for c, cell in enumerate(row, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"non-numeric cell {cell!r}", path=path, row=r, column=c) from None
            if not math.isfinite(v):
                raise ParseError(f"non-finite cell {cell!r}", path=path, row=r, column=c)
            vals.append(v)
        out.append((r, vals))
    return out


def load_csv(path_A, path_y, header=False):
    """Dense instance from a predictor CSV and a one-column response CSV.

    No header row unless ``header`` is set, in which case the first line of
    each file is skipped.
    """
    rows = _read_rows(path_A, header)
    if not rows:
        raise ShapeMismatch(f"{path_A}: no data rows")
    n = len(rows[0][1])
    for r, vals in rows:
        if len(vals) != n:
            raise ShapeMismatch(f"{path_A}: row {r} has {len(vals)} columns, expected {n}")
    yrows = _read_rows(path_y, header)
    for r, vals in yrows:
        if len(vals) != 1:
            raise ShapeMismatch(f"{path_y}: row {r} has {len(vals)} columns, expected 1")
    if len(yrows) != len(rows):
        raise ShapeMismatch(f"{path_A} has {len(rows)} rows but {path_y} has {len(yrows)}")
    A = np.array([vals for _, vals in rows])
    y = np.array([vals[0] for _, vals in yrows])
    return Instance(A, y)


@dataclass(frozen=True, eq=False)
class StandardizedData:
    inst: Instance  # standardized A and y
    col_means: np.ndarray
    col_norms: np.ndarray
    y_mean: float

    @property
    def A_std(self):
        return self.inst.A

    @property
    def y_std(self):
        return self.inst.y

    def predict(self, x_std, A_raw):
        """Back-transform coefficients fitted on the standardized scale."""
        A_raw = np.asarray(A_raw, dtype=float)
        return ((A_raw - self.col_means) / self.col_norms) @ x_std + self.y_mean


def standardize(inst):
    """Center y and the columns of A, then scale columns to unit Euclidean norm."""
    A = inst.A
    means = A.mean(axis=0)
    Ac = A - means
    norms = np.linalg.norm(Ac, axis=0)
    scale = np.maximum(np.abs(A).max(axis=0), 1.0)
    bad = np.flatnonzero(norms <= 1e-12 * scale * math.sqrt(inst.M))
    if bad.size:
        raise ZeroVarianceColumn(int(bad[0]))
    Astd = Ac / norms
    # second pass removes the residual mean left by rounding
    Astd -= Astd.mean(axis=0)
    Astd /= np.linalg.norm(Astd, axis=0)
    y_mean = float(inst.y.mean())
    return StandardizedData(Instance(Astd, inst.y - y_mean), means, norms, y_mean)


def _instance_doc(obj):
    if isinstance(obj, PlantedInstance):
        inst = obj.inst
        extra = {
            "x0": obj.x0.tolist(),
            "support0": obj.support0.ones.tolist(),
            "noise_var": float(obj.noise_var),
            "generator": obj.generator or None,
        }
    else:
        inst = obj
        extra = {"x0": None, "support0": None, "noise_var": None, "generator": None}
    return {
        "schema_version": SCHEMA_VERSION,
        "M": inst.M,
        "N": inst.N,
        "A": inst.A.tolist(),
        "y": inst.y.tolist(),
        **extra,
    }


def dumps_instance(obj):
    return json.dumps(_instance_doc(obj), sort_keys=True, allow_nan=False) + "\n"


def save_instance(obj, path):
    """Write an :class:`Instance` or :class:`PlantedInstance` as JSON."""
    atomic_write(path, dumps_instance(obj))


def load_instance(path):
    """Inverse of :func:`save_instance`; PlantedInstance when x0 is present."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ParseError(str(exc), path=path) from None
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object", path=path)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SchemaVersionMismatch(
            f"{path}: schema_version {doc.get('schema_version')!r}, expected {SCHEMA_VERSION}")
    try:
        M, N = int(doc["M"]), int(doc["N"])
        A = np.array(doc["A"], dtype=float)
        y = np.array(doc["y"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad field: {exc}", path=path) from None
    if A.shape != (M, N):
        raise ShapeMismatch(f"{path}: A has shape {A.shape}, header says ({M}, {N})")
    if y.shape != (M,):
        raise ShapeMismatch(f"{path}: y has shape {y.shape}, header says ({M},)")
    inst = Instance(A, y)
    if doc.get("x0") is None:
        return inst
    x0 = np.array(doc["x0"], dtype=float)
    if x0.shape != (N,):
        raise ShapeMismatch(f"{path}: x0 has shape {x0.shape}, expected ({N},)")
    support0 = SparseWeight.from_indices(doc.get("support0") or np.flatnonzero(x0), N)
    nv = doc.get("noise_var")
    return PlantedInstance(inst, x0, support0, 0.0 if nv is None else float(nv),
                           doc.get("generator") or {})


def atomic_write(path, text):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def format_cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(header, rows):
    lines = [",".join(header)]
    lines += [",".join(format_cell(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def write_csv(path, header, rows):
    atomic_write(path, csv_text(header, rows))


def write_json(path, doc):
    atomic_write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")
