from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from qdesign.data import (
    format_number,
    load_instance,
    load_instance_dir,
    normalize_columns,
    random_instance,
    read_csv_matrix,
    save_instance,
    synthetic_instance,
    write_design_csv,
    write_mask_csv,
    write_trace_csv,
)
from qdesign.errors import ParseError
from qdesign.models import Design, InstanceFiles, ScreeningMask, SolverTrace, TraceRecord


def _write(path: Path, text: str) -> str:
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_load_identity_instance(tmp_path: Path) -> None:
    files = InstanceFiles(
        a_path=_write(tmp_path / "A.csv", "1,0\n0,1\n"),
        target_path=_write(tmp_path / "c.csv", "1\n0\n"),
        lam=1.0,
    )

    inst = load_instance(files)

    assert np.array_equal(inst.A, np.eye(2))
    assert np.array_equal(inst.c, [1.0, 0.0])
    assert inst.vector_target


def test_header_row_is_skipped(tmp_path: Path) -> None:
    matrix = read_csv_matrix(_write(tmp_path / "K.csv", "k1,k2\n1.5,2\n-3,4e-1\n"))
    assert np.array_equal(matrix, [[1.5, 2.0], [-3.0, 0.4]])


def test_non_numeric_cell_reports_location(tmp_path: Path) -> None:
    with pytest.raises(ParseError) as info:
        read_csv_matrix(_write(tmp_path / "A.csv", "1,2\n3,oops\n"))

    assert info.value.row == 2
    assert info.value.column == 2
    assert "A.csv:2:2" in str(info.value)


def test_ragged_rows_are_rejected(tmp_path: Path) -> None:
    with pytest.raises(ParseError) as info:
        read_csv_matrix(_write(tmp_path / "A.csv", "1,2\n3,4,5\n"))
    assert info.value.row == 2


def test_target_shape_errors(tmp_path: Path) -> None:
    a_path = _write(tmp_path / "A.csv", "1,0\n0,1\n")
    with pytest.raises(ParseError):
        load_instance(InstanceFiles(a_path, _write(tmp_path / "c.csv", "1,2\n0,1\n"), 1.0))
    with pytest.raises(ParseError) as info:
        load_instance(InstanceFiles(a_path, _write(tmp_path / "short.csv", "1\n"), 1.0))
    assert info.value.row == 2


def test_missing_file_is_a_parse_error(tmp_path: Path) -> None:
    with pytest.raises(ParseError):
        read_csv_matrix(tmp_path / "absent.csv")


def test_normalize_columns() -> None:
    assert np.allclose(normalize_columns(np.array([[3.0], [4.0]]))[:, 0], [0.6, 0.8])
    assert np.array_equal(normalize_columns(np.zeros((2, 1))), np.zeros((2, 1)))


def test_instance_directory_keeps_full_precision(tmp_path: Path) -> None:
    inst = random_instance(4, 6, r=2, lam=0.3, seed=1)

    save_instance(inst, tmp_path / "inst", seed=1)
    loaded = load_instance_dir(tmp_path / "inst")

    assert np.array_equal(loaded.A, inst.A)
    assert np.array_equal(loaded.K, inst.K)
    assert loaded.lam == 0.3
    assert not loaded.vector_target
    meta = json.loads((tmp_path / "inst" / "instance.json").read_text(encoding="utf-8"))
    assert meta["target"] == "K" and meta["seed"] == 1


def test_instance_directory_needs_lambda(tmp_path: Path) -> None:
    save_instance(random_instance(2, 3, seed=0), tmp_path)
    (tmp_path / "instance.json").write_text('{"target": "c"}', encoding="utf-8")

    with pytest.raises(ParseError):
        load_instance_dir(tmp_path)


def test_design_and_mask_files(tmp_path: Path) -> None:
    design_text = write_design_csv(tmp_path / "w.csv", Design([0.25, 0.75])).read_text(encoding="utf-8")
    assert design_text == "index,weight\n0,0.25\n1,0.75\n"

    mask = ScreeningMask(
        eliminated=np.array([False, True]),
        rule="d1",
        eps_used=0.1,
        index_map=np.array([0]),
        scores=np.array([-0.5, 0.125]),
    )
    mask_text = write_mask_csv(tmp_path / "mask.csv", mask).read_text(encoding="utf-8")
    assert mask_text == "index,test_value,eliminated\n0,-0.5,0\n1,0.125,1\n"
    assert not list(tmp_path.glob(".*.tmp"))


def test_trace_file_deterministic_times(tmp_path: Path) -> None:
    trace = SolverTrace("cd", 4, [TraceRecord(0, 2.0, 0.5, 4, 0.0), TraceRecord(1, 1.5, 1e-7, 3, 0.0123)])

    text = write_trace_csv(tmp_path / "trace.csv", trace, deterministic=True).read_text(encoding="utf-8")

    assert text.splitlines() == [
        "iter,value,gap_or_delta,surviving,elapsed_s",
        "0,2,0.5,4,0",
        "1,1.5,9.9999999999999995e-08,3,0",
    ]


def test_format_number_round_trips() -> None:
    assert format_number(0.1) == "0.10000000000000001"
    assert float(format_number(1 / 3)) == 1 / 3


def test_random_instance_is_seeded() -> None:
    assert np.array_equal(random_instance(3, 5, seed=4).A, random_instance(3, 5, seed=4).A)
    assert not np.array_equal(random_instance(3, 5, seed=4).A, random_instance(3, 5, seed=5).A)


def test_synthetic_instance_shape() -> None:
    inst = synthetic_instance(20, 50, lam=0.4, seed=0)

    assert inst.A.shape == (20, 50)
    assert np.all(inst.A >= 0)
    assert np.allclose(np.linalg.norm(inst.A, axis=0), 1.0)
    assert np.linalg.norm(inst.c) == pytest.approx(1.0)
    assert inst.lam == 0.4
