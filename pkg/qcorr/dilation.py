"""Partial expectation values: HP maps realized by an isometry and an ancilla.

For a statistical decomposition ``L = sum_i lambda_i E_i`` the Kraus
operators ``K_ik`` of every part are stacked into one isometry

    V = sum_ik K_ik (x) |(i, k)>,    V: H -> K (x) K',

with the output space ``K`` first and the ancilla ``K'`` second. Ancilla
basis states are ordered by outcome ``i`` (decomposition order) and then by
Kraus index ``k``, so the outcome projectors ``P^i`` are contiguous diagonal
blocks and the ancilla observable ``Z = sum_i lambda_i P^i`` is diagonal.
Then

    L(rho) = Tr_K'[V rho V^dag (1 (x) Z)].

``V`` is extended to a unitary ``U`` on ``K (x) K'`` whose first ``dim_in``
columns are ``V``; the input space is embedded into the first ``dim_in``
basis vectors of ``K (x) K'`` before ``U`` acts.
"""

from __future__ import annotations

import logging
from typing import List, Tuple

import numpy as np
from attrs import field, frozen

from qcorr.channels import (
    TP_TOL,
    LinearMap,
    StatisticalDecomposition,
    instrument_sum,
    kraus_from_choi,
    map_from_function,
    trace_residual,
)
from qcorr.errors import InvalidInputError, NumericalFailureError
from qcorr.linalg import (
    HERMITIAN_TOL,
    ComplexMatrix,
    complete_to_unitary,
    kron,
    max_norm,
    partial_trace,
    require_hermitian,
    require_square,
    require_state,
)

logger = logging.getLogger(__name__)


def _readonly_matrix(value: object) -> ComplexMatrix:
    arr = np.array(value, dtype=complex)
    arr.setflags(write=False)
    return arr


@frozen(eq=False)
class Dilation:
    """Isometry, ancilla measurement and unitary realizing an HP map.

    Attributes:
        dim_in: Dimension of the input space ``H``.
        dim_out: Dimension of the output space ``K``.
        ancilla_dim: Dimension of the ancilla ``K'``.
        coefficients: Weight ``lambda_i`` of every outcome.
        v: Isometry of shape ``(dim_out * ancilla_dim, dim_in)``.
        projectors: Diagonal 0/1 projectors ``P^i`` on the ancilla.
        z: Diagonal ancilla observable ``sum_i lambda_i P^i``.
        u: Unitary on ``K (x) K'`` whose first ``dim_in`` columns are ``v``.
        outcome_index: Outcome ``i`` of every ancilla basis state.
    """

    dim_in: int
    dim_out: int
    ancilla_dim: int
    coefficients: Tuple[float, ...]
    v: ComplexMatrix = field(converter=_readonly_matrix)
    projectors: Tuple[ComplexMatrix, ...]
    z: ComplexMatrix = field(converter=_readonly_matrix)
    u: ComplexMatrix = field(converter=_readonly_matrix)
    outcome_index: Tuple[int, ...]

    @property
    def joint_dim(self) -> int:
        """Dimension of ``K (x) K'``."""

        return self.dim_out * self.ancilla_dim


def dilate(dec: StatisticalDecomposition) -> Dilation:
    """Build the partial expectation value realization of a decomposition.

    Zero-weight parts are kept: they contribute the eigenvalue 0 to ``Z``
    and keep the ancilla measurement complete.

    Args:
        dec: Non-empty statistical decomposition.

    Returns:
        The dilation; ``V`` is an isometry because the parts sum to a
        trace-preserving map.

    Throws:
        InvalidInputError: Empty decomposition or parts that do not sum to a
            trace-preserving map.
        NumericalFailureError: The assembled ``V`` is not an isometry.
    """

    if not dec.parts:
        raise InvalidInputError("cannot dilate an empty decomposition")
    tp = trace_residual(instrument_sum(dec))
    if tp > TP_TOL:
        raise InvalidInputError(
            f"instrument is not trace-preserving (residual {tp:.3e})"
        )

    kraus: List[ComplexMatrix] = []
    outcome_index: List[int] = []
    for i, part in enumerate(dec.parts):
        ops = kraus_from_choi(part).operators
        kraus.extend(ops)
        outcome_index.extend([i] * len(ops))

    ancilla_dim = len(kraus)
    v = np.zeros((dec.dim_out * ancilla_dim, dec.dim_in), dtype=complex)
    for a, k in enumerate(kraus):
        e_a = np.zeros((ancilla_dim, 1), dtype=complex)
        e_a[a, 0] = 1.0
        v += kron(k, e_a)

    residual = max_norm(v.conj().T @ v - np.eye(dec.dim_in))
    if residual > HERMITIAN_TOL:
        raise NumericalFailureError(
            f"dilation is not an isometry (residual {residual:.3e})"
        )

    outcomes = np.array(outcome_index)
    projectors = tuple(
        np.diag((outcomes == i).astype(complex))
        for i in range(len(dec.parts))
    )
    z = np.diag(
        np.array([dec.coefficients[i] for i in outcome_index], dtype=complex)
    )

    logger.debug(
        "dilated %d -> %d map with ancilla dimension %d",
        dec.dim_in,
        dec.dim_out,
        ancilla_dim,
    )
    return Dilation(
        dim_in=dec.dim_in,
        dim_out=dec.dim_out,
        ancilla_dim=ancilla_dim,
        coefficients=dec.coefficients,
        v=v,
        projectors=projectors,
        z=z,
        u=complete_to_unitary(v),
        outcome_index=tuple(outcome_index),
    )


def _joint_state(dil: Dilation, rho: ComplexMatrix) -> ComplexMatrix:
    return dil.v @ rho @ dil.v.conj().T


def embed_input(dil: Dilation, rho: ComplexMatrix) -> ComplexMatrix:
    """Place an input operator on the first ``dim_in`` vectors of K (x) K'."""

    require_square(rho, dil.dim_in, "input operator")
    out = np.zeros((dil.joint_dim, dil.joint_dim), dtype=complex)
    out[: dil.dim_in, : dil.dim_in] = rho
    return out


def dilated_state(dil: Dilation, rho: ComplexMatrix) -> ComplexMatrix:
    """Apply the unitary completion to the embedded input state.

    The result equals ``V rho V^dag`` because ``U`` extends ``V``.
    """

    embedded = embed_input(dil, rho)
    return dil.u @ embedded @ dil.u.conj().T


def partial_expectation(
    dil: Dilation, rho: ComplexMatrix, a: ComplexMatrix
) -> float:
    """Evaluate ``Tr[V rho V^dag (A (x) Z)]``.

    Args:
        dil: Dilation of an HP map ``L``.
        rho: State on the input space.
        a: Observable on the output space.

    Returns:
        The partial expectation value, equal to ``Tr[L(rho) A]``.

    Throws:
        InvalidInputError: Invalid state or observable, or mismatched
            dimensions.
    """

    require_square(rho, dil.dim_in, "state")
    require_state(rho)
    require_square(a, dil.dim_out, "observable")
    require_hermitian(a)
    value = np.trace(_joint_state(dil, rho) @ kron(a, dil.z))
    return float(value.real)


def outcome_probabilities(dil: Dilation, rho: ComplexMatrix) -> List[float]:
    """Probabilities ``Tr[V rho V^dag (1 (x) P^i)]`` of ancilla outcomes."""

    require_square(rho, dil.dim_in, "state")
    joint = _joint_state(dil, rho)
    reduced = partial_trace(joint, (dil.dim_out, dil.ancilla_dim), 1)
    return [float(np.trace(reduced @ p).real) for p in dil.projectors]


def reduced_map(dil: Dilation) -> LinearMap:
    """The map ``rho -> Tr_K'[V rho V^dag (1 (x) Z)]`` of a dilation."""

    weight = kron(np.eye(dil.dim_out), dil.z)

    def action(x: ComplexMatrix) -> ComplexMatrix:
        joint = _joint_state(dil, x) @ weight
        return partial_trace(joint, (dil.dim_out, dil.ancilla_dim), 2)

    return map_from_function(dil.dim_in, dil.dim_out, action)
