import json
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import pytest

from qcorr.channels import LinearMap
from qcorr.linalg import ComplexMatrix, pauli
from qcorr.models import map_to_document, matrix_to_document

MatrixWriter = Callable[..., Path]


@pytest.fixture
def sx() -> ComplexMatrix:
    return pauli("x")


@pytest.fixture
def sy() -> ComplexMatrix:
    return pauli("y")


@pytest.fixture
def sz() -> ComplexMatrix:
    return pauli("z")


@pytest.fixture
def ket0() -> ComplexMatrix:
    return np.array([[1, 0], [0, 0]], dtype=complex)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(20241017))


@pytest.fixture
def write_matrix(tmp_path: Path) -> MatrixWriter:
    """Factory writing matrix documents under the test directory.

    The returned callable takes a file name and either a matrix (written as
    an operator document) or a ``LinearMap`` (written as a Choi document)
    and returns the path of the new file.
    """

    def _write(
        name: str,
        value: object,
        dim_in: Optional[int] = None,
        dim_out: Optional[int] = None,
    ) -> Path:
        if isinstance(value, LinearMap):
            doc = map_to_document(value)
        else:
            doc = matrix_to_document(
                np.asarray(value, dtype=complex), dim_in, dim_out
            )
        path = tmp_path / name
        path.write_text(json.dumps(doc), encoding="utf-8")
        return path

    return _write
