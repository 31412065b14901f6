"""CSV ingestion and emission, instance directories and synthetic instances."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import tempfile
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ParseError
from .models import Design, FloatArray, HomotopyPath, InstanceFiles, ProblemInstance, ScreeningMask, SolverTrace

LOGGER = logging.getLogger(__name__)

INSTANCE_JSON = "instance.json"


def format_number(value: float) -> str:
    return f"{value:.17g}"


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_csv_matrix(path: str | Path) -> FloatArray:
    """Parse a numeric CSV; a first row with a non-numeric cell is taken as a header."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", path=str(path)) from exc
    rows: list[list[float]] = []
    width: int | None = None
    for row_number, cells in enumerate(csv.reader(io.StringIO(text)), start=1):
        cells = [cell.strip() for cell in cells]
        if not cells or all(cell == "" for cell in cells):
            continue
        if not rows and width is None and not all(_is_number(cell) for cell in cells):
            width = len(cells)
            continue
        if width is not None and len(cells) != width:
            raise ParseError(f"expected {width} columns, found {len(cells)}", path=str(path), row=row_number)
        width = len(cells)
        values = []
        for column_number, cell in enumerate(cells, start=1):
            try:
                values.append(float(cell))
            except ValueError:
                raise ParseError(f"non-numeric cell {cell!r}", path=str(path), row=row_number, column=column_number) from None
        rows.append(values)
    if not rows:
        raise ParseError("no numeric rows", path=str(path))
    return np.array(rows, dtype=np.float64)


def normalize_columns(A: FloatArray) -> FloatArray:
    norms = np.linalg.norm(A, axis=0)
    zero = norms == 0
    if np.any(zero):
        LOGGER.warning("columns %s are zero and were left unnormalized", np.flatnonzero(zero).tolist())
    return A / np.where(zero, 1.0, norms)


def load_instance(files: InstanceFiles) -> ProblemInstance:
    A = read_csv_matrix(files.a_path)
    target = read_csv_matrix(files.target_path)
    if target.shape[0] != A.shape[0]:
        row = min(target.shape[0], A.shape[0]) + 1
        raise ParseError(
            f"target has {target.shape[0]} rows but A has {A.shape[0]}", path=files.target_path, row=row
        )
    if files.target_kind == "c":
        if target.shape[1] != 1:
            raise ParseError(f"c must be a single column, found {target.shape[1]}", path=files.target_path, column=2)
        target = target[:, 0]
    if files.normalize:
        A = normalize_columns(A)
    return ProblemInstance(A, target, files.lam)


def atomic_write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handle, temp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(handle, "w", encoding="utf-8", newline="") as out:
            out.write(text)
        os.replace(temp_name, path)
    except BaseException:
        Path(temp_name).unlink(missing_ok=True)
        raise
    return path


def write_csv_rows(path: str | Path, header: Sequence[str] | None, rows: Iterable[Sequence[Any]]) -> Path:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    if header is not None:
        writer.writerow(header)
    for row in rows:
        writer.writerow([format_number(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return atomic_write_text(path, buffer.getvalue())


def write_csv_matrix(path: str | Path, matrix: FloatArray) -> Path:
    values = np.asarray(matrix, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    return write_csv_rows(path, None, ([float(v) for v in row] for row in values))


def write_design_csv(path: str | Path, design: Design) -> Path:
    return write_csv_rows(path, ("index", "weight"), design.to_rows())


def write_trace_csv(path: str | Path, trace: SolverTrace, deterministic: bool = False) -> Path:
    rows = (
        (k, value, gap, surviving, 0.0 if deterministic else elapsed)
        for k, value, gap, surviving, elapsed in trace.to_rows()
    )
    return write_csv_rows(path, ("iter", "value", "gap_or_delta", "surviving", "elapsed_s"), rows)


def write_path_csv(path: str | Path, homotopy: HomotopyPath) -> Path:
    return write_csv_rows(path, ("k", "alpha", "lambda", "nnz", "active_indices"), homotopy.to_rows())


def write_mask_csv(path: str | Path, mask: ScreeningMask) -> Path:
    return write_csv_rows(path, ("index", "test_value", "eliminated"), ((i, s, int(e)) for i, s, e in mask.to_rows()))


def save_instance(inst: ProblemInstance, directory: str | Path, **metadata: Any) -> Path:
    """Write A.csv, c.csv or K.csv and instance.json; values keep 17 significant digits."""
    directory = Path(directory)
    kind = "c" if inst.vector_target else "K"
    write_csv_matrix(directory / "A.csv", inst.A)
    write_csv_matrix(directory / f"{kind}.csv", inst.K)
    payload = {**inst.to_dict(), "target": kind, **metadata}
    atomic_write_text(directory / INSTANCE_JSON, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return directory


def load_instance_dir(directory: str | Path, normalize: bool = False) -> ProblemInstance:
    directory = Path(directory)
    meta_path = directory / INSTANCE_JSON
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", path=str(meta_path)) from exc
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path=str(meta_path), row=exc.lineno, column=exc.colno) from exc
    kind = meta.get("target", "c")
    if "lambda" not in meta:
        raise ParseError("missing 'lambda'", path=str(meta_path))
    files = InstanceFiles(
        a_path=str(directory / "A.csv"),
        target_path=str(directory / f"{kind}.csv"),
        lam=float(meta["lambda"]),
        target_kind=kind,
        normalize=normalize,
    )
    return load_instance(files)


def random_instance(m: int, p: int, r: int = 1, lam: float = 1.0, seed: int = 0, normalize: bool = False) -> ProblemInstance:
    """Gaussian N(0, 1) instance; r = 1 gives a vector target."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, p))
    target = rng.standard_normal(m) if r == 1 else rng.standard_normal((m, r))
    return ProblemInstance(normalize_columns(A) if normalize else A, target, lam)


def synthetic_instance(
    m: int, p: int, lam: float = 0.4, seed: int = 0, classes: int = 10, noise: float = 0.5
) -> ProblemInstance:
    """Image-like instance: nonnegative unit-norm columns clustered around class prototypes.

    The target is a fresh unit-norm sample of class 0, the way a held-out image
    is the quantity of interest in sample selection.
    """
    rng = np.random.default_rng(seed)
    prototypes = np.abs(rng.standard_normal((m, classes)))
    prototypes[rng.random((m, classes)) < 0.5] = 0.0
    labels = np.arange(p) % classes
    A = np.abs(prototypes[:, labels] + noise * rng.standard_normal((m, p)))
    target = np.abs(prototypes[:, 0] + noise * rng.standard_normal(m))
    target /= np.linalg.norm(target)
    return ProblemInstance(normalize_columns(A), target, lam)
