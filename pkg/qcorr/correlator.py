"""The ideal quantum correlator and its exact evaluation.

The ideal correlator is the map ``T: L(H) -> L(H (x) H)`` defined by

    Tr[T(rho) (A (x) B)] = Tr[A rho B]

for every state and pair of observables. A closed form satisfying it is

    T(rho) = PT_2[(rho (x) 1) |Omega><Omega|],   |Omega> = sum_i |ii>,

with ``PT_2`` the partial transpose on the second factor. ``T`` is not
Hermiticity preserving, so it is handled through its two Hermitian
components: ``choi(T_R) = (C + C^dag)/2`` and ``choi(T_I) = (C - C^dag)/2i``.
For Hermitian ``rho``, ``A`` and ``B`` these give the real and imaginary part
of ``Tr[A rho B]`` respectively.
"""

from __future__ import annotations

import functools
import logging

import numpy as np
from attrs import frozen

from qcorr.channels import (
    LinearMap,
    StatisticalDecomposition,
    map_from_function,
    statistical_decomposition,
)
from qcorr.dilation import Dilation, dilate
from qcorr.errors import InvalidInputError
from qcorr.linalg import (
    ComplexMatrix,
    kron,
    partial_transpose,
    require_hermitian,
    require_state,
    unnormalized_max_entangled,
)

logger = logging.getLogger(__name__)


@frozen(eq=False)
class CorrelatorPair:
    """Hermitian and anti-Hermitian parts of a map, both as HP maps.

    Attributes:
        dim: Input dimension ``d``.
        t_real: Map whose expectations give the real part.
        t_imag: Map whose expectations give the imaginary part.
    """

    dim: int
    t_real: LinearMap
    t_imag: LinearMap


@frozen(eq=False)
class UniversalCorrelator:
    """Everything needed to estimate ``Tr[A rho B]`` on dimension ``d``.

    None of the members depends on the state or the observables, which is
    what makes the realization universal.

    Attributes:
        dim: Dimension ``d`` of the system.
        correlator: The ideal correlator ``T``.
        pair: Hermitian split of ``T``.
        real_decomposition: Statistical decomposition of ``T_R``.
        imag_decomposition: Statistical decomposition of ``T_I``.
        real_dilation: Isometry and ancilla observable realizing ``T_R``.
        imag_dilation: Isometry and ancilla observable realizing ``T_I``.
    """

    dim: int
    correlator: LinearMap
    pair: CorrelatorPair
    real_decomposition: StatisticalDecomposition
    imag_decomposition: StatisticalDecomposition
    real_dilation: Dilation
    imag_dilation: Dilation


def ideal_correlator(d: int) -> LinearMap:
    """Build the ideal quantum correlator on dimension ``d``.

    Args:
        d: Dimension of the system, at least 2.

    Returns:
        The map ``T`` from dimension ``d`` to ``d * d``.

    Throws:
        InvalidInputError: ``d < 2``.
    """

    if d < 2:
        raise InvalidInputError(f"correlator dimension must be >= 2, got {d}")

    omega = unnormalized_max_entangled(d)
    identity = np.eye(d, dtype=complex)

    def action(x: ComplexMatrix) -> ComplexMatrix:
        return partial_transpose(kron(x, identity) @ omega, (d, d), 2)

    return map_from_function(d, d * d, action)


def hermitian_split(lmap: LinearMap) -> CorrelatorPair:
    """Split a map into its Hermitian and anti-Hermitian components.

    Args:
        lmap: Any linear map.

    Returns:
        Pair with ``choi(t_real) = (C + C^dag)/2`` and
        ``choi(t_imag) = (C - C^dag)/(2i)``; both components are HP and
        ``L = t_real + i t_imag``.
    """

    choi = lmap.choi
    adjoint = choi.conj().T
    t_real = LinearMap(lmap.dim_in, lmap.dim_out, (choi + adjoint) / 2)
    t_imag = LinearMap(lmap.dim_in, lmap.dim_out, (choi - adjoint) / 2j)
    return CorrelatorPair(lmap.dim_in, t_real, t_imag)


def check_correlation_inputs(
    rho: ComplexMatrix, a: ComplexMatrix, b: ComplexMatrix
) -> None:
    """Validate a state and two observables of a common dimension.

    Throws:
        InvalidInputError: Invalid state, non-Hermitian observable or
            mismatched dimensions.
    """

    require_state(rho, "state")
    require_hermitian(a, "observable A")
    require_hermitian(b, "observable B")
    if not rho.shape == a.shape == b.shape:
        raise InvalidInputError(
            f"dimension mismatch: state {rho.shape}, A {a.shape}, "
            f"B {b.shape}"
        )


def exact_correlation(
    rho: ComplexMatrix, a: ComplexMatrix, b: ComplexMatrix
) -> complex:
    """Return ``Tr[A rho B]`` by direct matrix products.

    Throws:
        InvalidInputError: See ``check_correlation_inputs``.
    """

    check_correlation_inputs(rho, a, b)
    return complex(np.trace(a @ rho @ b))


@functools.lru_cache(maxsize=8)
def universal_correlator(d: int) -> UniversalCorrelator:
    """Build (once per dimension) the full realization of the correlator.

    Args:
        d: Dimension of the system, at least 2.

    Returns:
        The correlator with its split, decompositions and dilations.
    """

    correlator = ideal_correlator(d)
    pair = hermitian_split(correlator)
    real_dec = statistical_decomposition(pair.t_real)
    imag_dec = statistical_decomposition(pair.t_imag)
    logger.debug(
        "correlator d=%d: real l1 cost %.6g, imaginary l1 cost %.6g",
        d,
        real_dec.l1_cost,
        imag_dec.l1_cost,
    )
    return UniversalCorrelator(
        dim=d,
        correlator=correlator,
        pair=pair,
        real_decomposition=real_dec,
        imag_decomposition=imag_dec,
        real_dilation=dilate(real_dec),
        imag_dilation=dilate(imag_dec),
    )
