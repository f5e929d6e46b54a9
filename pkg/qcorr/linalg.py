"""Dense complex linear algebra primitives used by every other module.

All matrices are ``numpy`` arrays of ``complex128``. Bipartite operators
follow a single index convention: subsystem 1 is the slow index, so the
basis vector ``|i1, i2>`` sits at position ``i1 * d2 + i2``. This is the
convention of ``numpy.kron`` and every partial trace or partial transpose
in the package relies on it.

The module also hosts the validation helpers that turn user supplied
arrays into checked matrices, states and observables.
"""

from __future__ import annotations

import logging
from typing import Any, Tuple

import numpy as np
import numpy.typing as npt
from attrs import field, frozen

from qcorr.errors import InvalidInputError

ComplexMatrix = npt.NDArray[np.complex128]
RealVector = npt.NDArray[np.float64]
Dims = Tuple[int, int]

# Relative tolerance for Hermiticity and isometry preconditions.
HERMITIAN_TOL = 1e-9

# Eigenvalues of a state may dip this far below zero.
PSD_TOL = 1e-10

# Residual norm below which a completion candidate is linearly dependent.
COMPLETION_CUTOFF = 1e-8

logger = logging.getLogger(__name__)

_PAULI = {
    "i": np.eye(2, dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _readonly(value: Any) -> Any:
    """Return a non-writable copy of an array."""

    arr = np.array(value)
    arr.setflags(write=False)
    return arr


@frozen(eq=False)
class HermitianEigen:
    """Spectral decomposition of a Hermitian matrix.

    Attributes:
        values: Real eigenvalues in ascending order.
        vectors: Matrix whose orthonormal columns are the eigenvectors, in
            the order of ``values``.
    """

    values: RealVector = field(converter=_readonly)
    vectors: ComplexMatrix = field(converter=_readonly)

    def reconstruct(self) -> ComplexMatrix:
        """Rebuild the decomposed matrix as ``sum_k value_k v_k v_k^dag``."""

        return (self.vectors * self.values) @ self.vectors.conj().T


def max_norm(m: npt.ArrayLike) -> float:
    """Largest absolute entry of an array (0 for an empty one)."""

    arr = np.asarray(m)
    if arr.size == 0:
        return 0.0
    return float(np.max(np.abs(arr)))


def as_matrix(value: npt.ArrayLike, name: str = "matrix") -> ComplexMatrix:
    """Convert an array-like into a checked complex matrix.

    Args:
        value: Anything ``numpy.asarray`` understands.
        name: Label used in error messages.

    Returns:
        A two dimensional ``complex128`` array with finite entries.

    Throws:
        InvalidInputError: The value is not a non-empty finite 2-D array.
    """

    try:
        arr = np.array(value, dtype=complex)
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(
            f"{name}: not a numeric array ({exc})"
        ) from exc

    if arr.ndim != 2:
        raise InvalidInputError(
            f"{name}: expected a 2-D matrix, got {arr.ndim} dimension(s)"
        )
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInputError(f"{name}: empty matrix of shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name}: contains NaN or infinite entries")
    return arr


def require_square(m: ComplexMatrix, side: int, name: str) -> None:
    """Raise unless ``m`` is a ``side`` x ``side`` matrix."""

    if m.shape != (side, side):
        raise InvalidInputError(
            f"{name}: expected shape ({side}, {side}), got {m.shape}"
        )


def hermitian_residual(m: ComplexMatrix) -> float:
    """Return ``||M - M^dag||`` relative to ``max(1, ||M||)``.

    Both norms are the largest absolute entry.
    """

    return max_norm(m - m.conj().T) / max(1.0, max_norm(m))


def require_hermitian(m: ComplexMatrix, name: str = "observable") -> None:
    """Raise unless ``m`` is square and Hermitian within tolerance.

    Throws:
        InvalidInputError: The matrix is not square or not Hermitian.
    """

    if m.shape[0] != m.shape[1]:
        raise InvalidInputError(f"{name}: not square, shape {m.shape}")
    residual = hermitian_residual(m)
    if residual > HERMITIAN_TOL:
        raise InvalidInputError(
            f"{name}: not Hermitian (residual {residual:.3e})"
        )


def require_state(rho: ComplexMatrix, name: str = "state") -> None:
    """Raise unless ``rho`` is a density matrix.

    A density matrix is Hermitian, has trace 1 within 1e-9 and no
    eigenvalue below ``-PSD_TOL``.

    Throws:
        InvalidInputError: Any of the conditions fails.
    """

    require_hermitian(rho, name)
    trace = complex(np.trace(rho))
    if abs(trace - 1.0) > 1e-9:
        raise InvalidInputError(f"{name}: trace is {trace:.12g}, not 1")
    smallest = float(np.linalg.eigvalsh(_symmetrize(rho))[0])
    if smallest < -PSD_TOL:
        raise InvalidInputError(
            f"{name}: not positive semidefinite (eigenvalue {smallest:.3e})"
        )


def _symmetrize(m: ComplexMatrix) -> ComplexMatrix:
    return (m + m.conj().T) / 2


def _require_bipartite(m: ComplexMatrix, dims: Dims, subsystem: int) -> None:
    d1, d2 = dims
    if d1 < 1 or d2 < 1:
        raise InvalidInputError(f"invalid subsystem dimensions {dims}")
    require_square(m, d1 * d2, f"operator on {d1}x{d2} system")
    if subsystem not in (1, 2):
        raise InvalidInputError(f"subsystem must be 1 or 2, got {subsystem}")


def pauli(name: str) -> ComplexMatrix:
    """Return the Pauli matrix ``i``, ``x``, ``y`` or ``z``."""

    return _PAULI[name.lower()].copy()


def basis_state(d: int, k: int = 0) -> ComplexMatrix:
    """Return the pure state ``|k><k|`` of dimension ``d``."""

    rho = np.zeros((d, d), dtype=complex)
    rho[k, k] = 1.0
    return rho


def unnormalized_max_entangled(d: int) -> ComplexMatrix:
    """Return ``|Omega><Omega|`` with ``|Omega> = sum_i |ii>``."""

    omega = np.eye(d, dtype=complex).reshape(d * d, 1)
    return omega @ omega.conj().T


def kron(m1: ComplexMatrix, m2: ComplexMatrix) -> ComplexMatrix:
    """Kronecker product with the package index convention.

    Args:
        m1: Factor acting on subsystem 1 (slow index).
        m2: Factor acting on subsystem 2 (fast index).

    Returns:
        Matrix of shape ``(r1 * r2, c1 * c2)``.
    """

    return np.kron(m1, m2)


def partial_trace(
    m: ComplexMatrix, dims: Dims, subsystem: int
) -> ComplexMatrix:
    """Trace out one factor of a bipartite operator.

    Args:
        m: Square operator of side ``d1 * d2``.
        dims: The pair ``(d1, d2)``.
        subsystem: Which factor to trace out, 1 or 2.

    Returns:
        Operator on the remaining factor.

    Throws:
        InvalidInputError: Shapes do not match ``dims``.
    """

    _require_bipartite(m, dims, subsystem)
    d1, d2 = dims
    tensor = m.reshape(d1, d2, d1, d2)
    if subsystem == 1:
        return np.einsum("ijik->jk", tensor)
    return np.einsum("ijkj->ik", tensor)


def partial_transpose(
    m: ComplexMatrix, dims: Dims, subsystem: int
) -> ComplexMatrix:
    """Transpose the indices of one factor of a bipartite operator.

    Args:
        m: Square operator of side ``d1 * d2``.
        dims: The pair ``(d1, d2)``.
        subsystem: Factor whose indices are transposed, 1 or 2.

    Returns:
        The partially transposed operator; applying it twice is the
        identity.

    Throws:
        InvalidInputError: Shapes do not match ``dims``.
    """

    _require_bipartite(m, dims, subsystem)
    d1, d2 = dims
    tensor = m.reshape(d1, d2, d1, d2)
    axes = (2, 1, 0, 3) if subsystem == 1 else (0, 3, 2, 1)
    return np.ascontiguousarray(tensor.transpose(axes)).reshape(
        d1 * d2, d1 * d2
    )


def eig_hermitian(m: ComplexMatrix) -> HermitianEigen:
    """Full spectral decomposition of a Hermitian matrix.

    The matrix is symmetrized before ``numpy.linalg.eigh`` so that round-off
    below the Hermiticity tolerance cannot leak into the spectrum.

    Args:
        m: Square Hermitian matrix.

    Returns:
        Ascending eigenvalues with orthonormal eigenvectors.

    Throws:
        InvalidInputError: ``m`` is not square or not Hermitian.
    """

    require_hermitian(m, "matrix to diagonalize")
    values, vectors = np.linalg.eigh(_symmetrize(m))
    return HermitianEigen(values=values, vectors=vectors)


def complete_to_unitary(v: ComplexMatrix) -> ComplexMatrix:
    """Extend an isometry to a square unitary.

    The columns of ``v`` are copied unchanged into the first columns of the
    result. The remaining columns come from Gram-Schmidt orthogonalization
    of the standard basis vectors, taken in order, skipping any candidate
    whose residual norm falls below ``COMPLETION_CUTOFF``. No randomness is
    involved, so identical input gives identical output.

    Args:
        v: Matrix with orthonormal columns and at least as many rows as
            columns.

    Returns:
        Square unitary of side ``v.shape[0]``.

    Throws:
        InvalidInputError: ``v`` is wide or its columns are not orthonormal.
    """

    rows, cols = v.shape
    if rows < cols:
        raise InvalidInputError(
            f"cannot complete a {rows}x{cols} matrix: more columns than rows"
        )
    residual = max_norm(v.conj().T @ v - np.eye(cols))
    if residual > HERMITIAN_TOL:
        raise InvalidInputError(
            f"columns are not orthonormal (residual {residual:.3e})"
        )

    u = np.zeros((rows, rows), dtype=complex)
    u[:, :cols] = v
    filled = cols

    for k in range(rows):
        if filled == rows:
            break
        candidate = np.zeros(rows, dtype=complex)
        candidate[k] = 1.0

        # Two projection passes keep the new column orthogonal to
        # working precision.
        basis = u[:, :filled]
        for _ in range(2):
            candidate = candidate - basis @ (basis.conj().T @ candidate)
        norm = float(np.linalg.norm(candidate))
        if norm < COMPLETION_CUTOFF:
            continue
        u[:, filled] = candidate / norm
        filled += 1

    logger.debug("completed %dx%d isometry to a unitary", rows, cols)
    return u
