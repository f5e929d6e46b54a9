"""Matrix documents: the on-disk and on-stdout format of the tool.

A matrix document is a UTF-8 JSON object

    {"dim_in": 2, "dim_out": 2, "matrix": [[[re, im], ...], ...]}

where ``matrix[r][c]`` holds the real and imaginary part of one entry.
The declared dimensions fix the shape:

- without ``dim_out`` the matrix is a ``dim_in`` square operator (state or
  observable);
- with ``dim_out`` it is either the Choi matrix of a map, of side
  ``dim_out * dim_in``, or an operator from the input to the output space,
  of shape ``(dim_out, dim_in)``.

Floats are written with Python's shortest round-trip representation (at
most 17 significant digits), so a document re-parses to the same values.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, TextIO

import numpy as np
from attrs import field, frozen

from qcorr.channels import LinearMap
from qcorr.errors import InvalidInputError
from qcorr.linalg import ComplexMatrix

Document = Dict[str, Any]
EncodedMatrix = List[List[List[float]]]


def _readonly_matrix(value: object) -> ComplexMatrix:
    arr = np.array(value, dtype=complex)
    arr.setflags(write=False)
    return arr


@frozen(eq=False)
class MatrixFile:
    """Parsed matrix document.

    Attributes:
        dim_in: Input (or operator) dimension.
        dim_out: Output dimension, present for maps and rectangular
            operators.
        matrix: The complex matrix.
    """

    dim_in: int
    dim_out: Optional[int]
    matrix: ComplexMatrix = field(converter=_readonly_matrix)

    @property
    def is_choi(self) -> bool:
        """True if the matrix has the shape of a Choi matrix."""

        if self.dim_out is None:
            return False
        side = self.dim_out * self.dim_in
        return self.matrix.shape == (side, side)

    def as_operator(self, name: str = "matrix") -> ComplexMatrix:
        """Return the matrix as a square operator on ``dim_in``.

        Throws:
            InvalidInputError: The document describes a map.
        """

        if self.dim_out is not None:
            raise InvalidInputError(
                f"{name}: expected an operator document without dim_out"
            )
        return np.array(self.matrix)

    def as_map(self) -> LinearMap:
        """Return the matrix as the Choi matrix of a map.

        Throws:
            InvalidInputError: The document is not a Choi matrix.
        """

        if self.dim_out is None or not self.is_choi:
            raise InvalidInputError(
                "map document needs dim_out and a Choi matrix of side "
                "dim_out * dim_in"
            )
        return LinearMap(self.dim_in, self.dim_out, np.array(self.matrix))


def _parse_dim(doc: Document, key: str) -> int:
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise InvalidInputError(f"{key} must be a positive integer")
    return value


def _parse_number(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidInputError(f"{where}: expected a number, got {value!r}")
    number = float(value)
    if not math.isfinite(number):
        raise InvalidInputError(f"{where}: entry is not finite")
    return number


def parse_matrix_document(doc: Any) -> MatrixFile:
    """Validate a decoded JSON value and turn it into a ``MatrixFile``.

    Args:
        doc: Value produced by ``json.load``.

    Returns:
        The parsed document.

    Throws:
        InvalidInputError: Missing keys, malformed entries or a shape that
            does not match the declared dimensions.
    """

    if not isinstance(doc, dict):
        raise InvalidInputError("matrix document must be a JSON object")
    for key in ("dim_in", "matrix"):
        if key not in doc:
            raise InvalidInputError(f"matrix document has no {key!r} key")

    dim_in = _parse_dim(doc, "dim_in")
    dim_out = _parse_dim(doc, "dim_out") if "dim_out" in doc else None

    rows = doc["matrix"]
    if not isinstance(rows, list) or not rows:
        raise InvalidInputError("matrix must be a non-empty list of rows")
    width = len(rows[0]) if isinstance(rows[0], list) else -1
    data = np.zeros((len(rows), max(width, 0)), dtype=complex)
    for r, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != width or width < 1:
            raise InvalidInputError(f"matrix row {r} has the wrong length")
        for c, entry in enumerate(row):
            where = f"matrix[{r}][{c}]"
            if not isinstance(entry, list) or len(entry) != 2:
                raise InvalidInputError(f"{where}: expected [re, im]")
            data[r, c] = complex(
                _parse_number(entry[0], where), _parse_number(entry[1], where)
            )

    if dim_out is None:
        allowed = [(dim_in, dim_in)]
    else:
        side = dim_out * dim_in
        allowed = [(side, side), (dim_out, dim_in)]
    if data.shape not in allowed:
        raise InvalidInputError(
            f"matrix shape {data.shape} does not match dim_in={dim_in}"
            + ("" if dim_out is None else f", dim_out={dim_out}")
        )
    return MatrixFile(dim_in, dim_out, data)


def load_matrix_file(path: Path) -> MatrixFile:
    """Read and parse a matrix document from disk.

    Throws:
        InvalidInputError: Unreadable file, invalid JSON or invalid document.
    """

    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: invalid JSON ({exc})") from exc
    try:
        return parse_matrix_document(doc)
    except InvalidInputError as exc:
        raise InvalidInputError(f"{path}: {exc}") from exc


def encode_matrix(m: ComplexMatrix) -> EncodedMatrix:
    """Nested ``[re, im]`` lists of a complex matrix."""

    return [
        [[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m)
    ]


def matrix_to_document(
    m: ComplexMatrix,
    dim_in: Optional[int] = None,
    dim_out: Optional[int] = None,
) -> Document:
    """Build a matrix document.

    Args:
        m: Matrix to encode.
        dim_in: Declared input dimension; defaults to the number of columns.
        dim_out: Declared output dimension, for maps and rectangular
            operators.

    Returns:
        Dictionary ready for ``json.dump``.
    """

    doc: Document = {"dim_in": int(dim_in or np.asarray(m).shape[1])}
    if dim_out is not None:
        doc["dim_out"] = int(dim_out)
    doc["matrix"] = encode_matrix(m)
    return doc


def map_to_document(lmap: LinearMap) -> Document:
    """Matrix document of a map's Choi matrix."""

    return matrix_to_document(lmap.choi, lmap.dim_in, lmap.dim_out)


def dump_document(doc: Document, stream: TextIO) -> None:
    """Write a document as indented JSON followed by a newline.

    Throws:
        ValueError: The document contains NaN or infinite floats.
    """

    stream.write(json.dumps(doc, indent=2, allow_nan=False))
    stream.write("\n")
