from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np
import pytest

from qcorr.channels import transpose_map
from qcorr.errors import InvalidInputError
from qcorr.models import (
    MatrixFile,
    dump_document,
    encode_matrix,
    load_matrix_file,
    map_to_document,
    matrix_to_document,
    parse_matrix_document,
)


def test_parse_operator_document() -> None:
    doc = {"dim_in": 2, "matrix": [[[1, 0], [0, -1]], [[0, 1], [0, 0]]]}
    parsed = parse_matrix_document(doc)
    assert parsed.dim_in == 2
    assert parsed.dim_out is None
    assert not parsed.is_choi
    assert np.array_equal(
        parsed.as_operator(), np.array([[1, -1j], [1j, 0]])
    )


def test_parse_choi_and_rectangular_documents() -> None:
    choi = parse_matrix_document(map_to_document(transpose_map(2)))
    assert choi.is_choi
    assert np.array_equal(choi.as_map().choi, transpose_map(2).choi)

    v = np.arange(6).reshape(3, 2)
    rect = parse_matrix_document(matrix_to_document(v, 2, 3))
    assert not rect.is_choi
    assert rect.matrix.shape == (3, 2)
    with pytest.raises(InvalidInputError):
        rect.as_map()
    with pytest.raises(InvalidInputError):
        rect.as_operator()


@pytest.mark.parametrize(
    "doc, message",
    [
        ([], "JSON object"),
        ({"matrix": [[[1, 0]]]}, "dim_in"),
        ({"dim_in": 1}, "matrix"),
        ({"dim_in": 0, "matrix": [[[1, 0]]]}, "positive"),
        ({"dim_in": True, "matrix": [[[1, 0]]]}, "positive"),
        ({"dim_in": 1, "matrix": []}, "non-empty"),
        ({"dim_in": 1, "matrix": [[[1]]]}, r"\[re, im\]"),
        ({"dim_in": 1, "matrix": [[["a", 0]]]}, "number"),
        ({"dim_in": 2, "matrix": [[[1, 0]]]}, "shape"),
        (
            {"dim_in": 2, "matrix": [[[1, 0], [0, 0]], [[0, 0]]]},
            "row 1",
        ),
    ],
)
def test_parse_rejects_malformed(doc: object, message: str) -> None:
    with pytest.raises(InvalidInputError, match=message):
        parse_matrix_document(doc)


def test_parse_rejects_non_finite() -> None:
    doc = {"dim_in": 1, "matrix": [[[float("inf"), 0]]]}
    with pytest.raises(InvalidInputError, match="finite"):
        parse_matrix_document(doc)


def test_dump_and_reload_preserves_values(tmp_path: Path) -> None:
    rng = np.random.default_rng(5)
    m = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    path = tmp_path / "m.json"
    with path.open("w", encoding="utf-8") as fh:
        dump_document(matrix_to_document(m), fh)
    loaded = load_matrix_file(path)
    assert np.max(np.abs(loaded.matrix - m)) <= 1e-15


def test_dump_rejects_nan() -> None:
    with pytest.raises(ValueError):
        dump_document({"x": float("nan")}, io.StringIO())


def test_load_reports_path_on_bad_json(tmp_path: Path) -> None:
    path = tmp_path / "bad.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(InvalidInputError, match="bad.json"):
        load_matrix_file(path)
    with pytest.raises(InvalidInputError, match="cannot read"):
        load_matrix_file(tmp_path / "missing.json")


def test_encode_matrix_layout() -> None:
    encoded = encode_matrix(np.array([[1 + 2j, 3]]))
    assert encoded == [[[1.0, 2.0], [3.0, 0.0]]]
    assert json.loads(json.dumps(encoded)) == encoded


def test_matrix_file_is_read_only() -> None:
    mf = MatrixFile(1, None, [[1.0]])
    with pytest.raises(ValueError):
        mf.matrix[0, 0] = 2.0
