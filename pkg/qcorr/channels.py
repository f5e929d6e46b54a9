"""Linear maps in the Choi representation and their statistical decompositions.

A map ``L: L(H) -> L(K)`` is stored through its Choi matrix

    choi = sum_ij L(|i><j|) (x) |i><j|

with the output factor first. Under this ordering:

- ``L(X) = Tr_in[choi (1_out (x) X^T)]`` (trace over subsystem 2);
- the trace effect ``D = (Tr_out choi)^T`` (trace over subsystem 1) gives
  ``Tr[L(rho)] = Tr[rho D]``, so ``L`` is trace-preserving iff ``D = 1``;
- ``L`` is Hermiticity preserving iff ``choi`` is Hermitian and completely
  positive iff ``choi`` is positive semidefinite.

A statistical decomposition writes a Hermiticity preserving map as
``L = sum_i lambda_i E_i`` with real weights and completely positive parts
whose sum is trace-preserving, i.e. a quantum instrument plus classical
post-processing weights.
"""

from __future__ import annotations

import logging
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from attrs import field, frozen

from qcorr.errors import InvalidInputError
from qcorr.linalg import (
    HERMITIAN_TOL,
    PSD_TOL,
    ComplexMatrix,
    as_matrix,
    eig_hermitian,
    hermitian_residual,
    kron,
    max_norm,
    partial_trace,
    require_square,
    unnormalized_max_entangled,
)

# Eigenvalues below this fraction of the largest magnitude are noise.
SIGN_CUTOFF = 1e-12

# Maximum deviation of the trace effect from the identity for a TP map.
TP_TOL = 1e-9

logger = logging.getLogger(__name__)


def _readonly_matrix(value: object) -> ComplexMatrix:
    arr = np.array(value, dtype=complex)
    arr.setflags(write=False)
    return arr


@frozen(eq=False)
class LinearMap:
    """Linear map between operator spaces, stored as its Choi matrix.

    Attributes:
        dim_in: Dimension of the input Hilbert space.
        dim_out: Dimension of the output Hilbert space.
        choi: Choi matrix of side ``dim_out * dim_in``, output factor first.
    """

    dim_in: int
    dim_out: int
    choi: ComplexMatrix = field(converter=_readonly_matrix)

    def __attrs_post_init__(self) -> None:
        if self.dim_in < 1 or self.dim_out < 1:
            raise InvalidInputError(
                f"map dimensions must be positive, got "
                f"{self.dim_in} -> {self.dim_out}"
            )
        side = self.dim_in * self.dim_out
        require_square(self.choi, side, "Choi matrix")

    @property
    def dims(self) -> Tuple[int, int]:
        """The pair ``(dim_out, dim_in)`` describing the Choi factors."""

        return self.dim_out, self.dim_in


@frozen(eq=False)
class KrausSet:
    """Kraus operators of a completely positive map.

    Attributes:
        dim_in: Input dimension.
        dim_out: Output dimension.
        operators: Operators of shape ``(dim_out, dim_in)``; their norms carry
            the weights of the map.
    """

    dim_in: int
    dim_out: int
    operators: Tuple[ComplexMatrix, ...]

    def apply(self, x: ComplexMatrix) -> ComplexMatrix:
        """Return ``sum_k K_k X K_k^dag``."""

        out = np.zeros((self.dim_out, self.dim_out), dtype=complex)
        for k in self.operators:
            out += k @ x @ k.conj().T
        return out


@frozen(eq=False)
class StatisticalDecomposition:
    """Real-weighted sum of completely positive maps forming an instrument.

    The parts share the dimensions of the decomposed map. An empty
    decomposition represents the zero map.

    Attributes:
        dim_in: Input dimension of every part.
        dim_out: Output dimension of every part.
        coefficients: Real weights ``lambda_i``.
        parts: Completely positive maps ``E_i`` whose sum is trace-preserving.
    """

    dim_in: int
    dim_out: int
    coefficients: Tuple[float, ...] = field(
        converter=lambda xs: tuple(float(x) for x in xs)
    )
    parts: Tuple[LinearMap, ...] = field(converter=tuple)

    def __attrs_post_init__(self) -> None:
        if len(self.coefficients) != len(self.parts):
            raise InvalidInputError(
                f"{len(self.coefficients)} coefficients for "
                f"{len(self.parts)} parts"
            )
        for part in self.parts:
            if (part.dim_in, part.dim_out) != (self.dim_in, self.dim_out):
                raise InvalidInputError(
                    f"part maps {part.dim_in} -> {part.dim_out}, expected "
                    f"{self.dim_in} -> {self.dim_out}"
                )

    def __len__(self) -> int:
        return len(self.parts)

    @property
    def l1_cost(self) -> float:
        """Sum of absolute weights, the sampling overhead of the protocol."""

        return float(sum(abs(c) for c in self.coefficients))

    @property
    def max_abs_coefficient(self) -> float:
        """Largest absolute weight (0 for the empty decomposition)."""

        return max((abs(c) for c in self.coefficients), default=0.0)


@frozen
class DecompositionResiduals:
    """Numerical checks of a decomposition against its target map.

    Attributes:
        reconstruction: Largest entry of ``sum_i lambda_i choi_i - choi(L)``.
        trace_preservation: Largest entry of ``D - 1`` for the summed parts.
        min_cp_eigenvalues: Smallest Choi eigenvalue of each part, divided by
            the largest eigenvalue magnitude of that part.
    """

    reconstruction: float
    trace_preservation: float
    min_cp_eigenvalues: Tuple[float, ...]


def zero_map(d_in: int, d_out: int) -> LinearMap:
    """The map sending every operator to zero."""

    side = d_in * d_out
    return LinearMap(d_in, d_out, np.zeros((side, side), dtype=complex))


def identity_map(d: int) -> LinearMap:
    """The identity channel, Choi matrix ``|Omega><Omega|``."""

    return LinearMap(d, d, unnormalized_max_entangled(d))


def transpose_map(d: int) -> LinearMap:
    """The transpose map ``X -> X^T``, Choi matrix SWAP."""

    return map_from_function(d, d, lambda x: x.T)


def map_from_action(
    d_in: int,
    d_out: int,
    images: Sequence[Sequence[ComplexMatrix]],
) -> LinearMap:
    """Assemble a map from its images of the matrix units.

    Args:
        d_in: Input dimension.
        d_out: Output dimension.
        images: ``images[i][j]`` is ``L(|i><j|)``, a ``d_out`` square matrix.

    Returns:
        The map with Choi matrix ``sum_ij images[i][j] (x) |i><j|``.

    Throws:
        InvalidInputError: Wrong number or shape of images.
    """

    if len(images) != d_in or any(len(row) != d_in for row in images):
        raise InvalidInputError(
            f"expected {d_in}x{d_in} basis images for a map on dimension "
            f"{d_in}"
        )

    choi = np.zeros((d_out * d_in, d_out * d_in), dtype=complex)
    for i in range(d_in):
        for j in range(d_in):
            image = as_matrix(images[i][j], f"image of |{i}><{j}|")
            require_square(image, d_out, f"image of |{i}><{j}|")
            unit = np.zeros((d_in, d_in), dtype=complex)
            unit[i, j] = 1.0
            choi += kron(image, unit)
    return LinearMap(d_in, d_out, choi)


def map_from_function(
    d_in: int,
    d_out: int,
    action: Callable[[ComplexMatrix], ComplexMatrix],
) -> LinearMap:
    """Build a map by evaluating a linear function on the matrix units."""

    images: List[List[ComplexMatrix]] = []
    for i in range(d_in):
        row: List[ComplexMatrix] = []
        for j in range(d_in):
            unit = np.zeros((d_in, d_in), dtype=complex)
            unit[i, j] = 1.0
            row.append(np.asarray(action(unit), dtype=complex))
        images.append(row)
    return map_from_action(d_in, d_out, images)


def map_from_kraus(
    operators: Sequence[ComplexMatrix], d_in: int, d_out: int
) -> LinearMap:
    """Completely positive map ``X -> sum_k K_k X K_k^dag``.

    The Choi matrix is ``sum_k vec(K_k) vec(K_k)^dag`` with row-major
    vectorization, matching the output-first ordering.
    """

    side = d_out * d_in
    choi = np.zeros((side, side), dtype=complex)
    for k in operators:
        k = as_matrix(k, "Kraus operator")
        if k.shape != (d_out, d_in):
            raise InvalidInputError(
                f"Kraus operator has shape {k.shape}, expected "
                f"({d_out}, {d_in})"
            )
        vec = k.reshape(side, 1)
        choi += vec @ vec.conj().T
    return LinearMap(d_in, d_out, choi)


def apply_map(lmap: LinearMap, x: ComplexMatrix) -> ComplexMatrix:
    """Evaluate ``L(X)`` from the Choi matrix.

    Args:
        lmap: The map.
        x: Square operator on the input space.

    Returns:
        ``Tr_in[choi (1_out (x) X^T)]``.

    Throws:
        InvalidInputError: ``x`` does not have the input dimension.
    """

    require_square(x, lmap.dim_in, "map input")
    product = lmap.choi @ kron(np.eye(lmap.dim_out), x.T)
    return partial_trace(product, lmap.dims, 2)


def expectation_value(
    lmap: LinearMap, rho: ComplexMatrix, observable: ComplexMatrix
) -> complex:
    """Return ``Tr[L(rho) A]``."""

    require_square(observable, lmap.dim_out, "observable")
    return complex(np.trace(apply_map(lmap, rho) @ observable))


def trace_effect(lmap: LinearMap) -> ComplexMatrix:
    """Operator ``D`` with ``Tr[L(rho)] = Tr[rho D]`` for all ``rho``."""

    return partial_trace(lmap.choi, lmap.dims, 1).T


def trace_residual(lmap: LinearMap) -> float:
    """Largest entry of ``D - 1``; zero for a trace-preserving map."""

    return max_norm(trace_effect(lmap) - np.eye(lmap.dim_in))


def is_hp(lmap: LinearMap) -> bool:
    """True if the map preserves Hermiticity (Hermitian Choi matrix)."""

    return hermitian_residual(lmap.choi) <= HERMITIAN_TOL


def _relative_min_eigenvalue(choi: ComplexMatrix) -> float:
    values = eig_hermitian(choi).values
    scale = float(np.max(np.abs(values)))
    if scale == 0.0:
        return 0.0
    return float(values[0]) / scale


def is_cp(lmap: LinearMap) -> bool:
    """True if the map is completely positive (PSD Choi matrix)."""

    if not is_hp(lmap):
        return False
    return _relative_min_eigenvalue(lmap.choi) >= -PSD_TOL


def _require_hp(lmap: LinearMap) -> None:
    residual = hermitian_residual(lmap.choi)
    if residual > HERMITIAN_TOL:
        raise InvalidInputError(
            f"map is not Hermiticity preserving: Choi Hermiticity residual "
            f"{residual:.3e}"
        )


def kraus_from_choi(lmap: LinearMap) -> KrausSet:
    """Kraus operators of a completely positive map.

    Each eigenpair ``(mu, v)`` of the Choi matrix gives the operator
    ``sqrt(mu) * unvec(v)``; eigenvalues below ``SIGN_CUTOFF * mu_max`` are
    dropped, so the number of operators equals the numerical rank.

    Args:
        lmap: Completely positive map.

    Returns:
        Kraus operators ordered by decreasing weight.

    Throws:
        InvalidInputError: The Choi matrix is not positive semidefinite.
    """

    _require_hp(lmap)
    eig = eig_hermitian(lmap.choi)
    mu_max = float(np.max(np.abs(eig.values)))
    if mu_max > 0.0 and float(eig.values[0]) < -PSD_TOL * mu_max:
        raise InvalidInputError(
            f"map is not completely positive: Choi eigenvalue "
            f"{float(eig.values[0]):.3e}"
        )

    operators: List[ComplexMatrix] = []
    for k in range(len(eig.values) - 1, -1, -1):
        mu = float(eig.values[k])
        if mu <= SIGN_CUTOFF * mu_max:
            continue
        vec = eig.vectors[:, k]
        operators.append(
            np.sqrt(mu) * vec.reshape(lmap.dim_out, lmap.dim_in)
        )
    return KrausSet(lmap.dim_in, lmap.dim_out, tuple(operators))


def jordan_parts(lmap: LinearMap) -> Tuple[LinearMap, LinearMap]:
    """Split a Hermiticity preserving map into CP maps of orthogonal support.

    Args:
        lmap: Hermiticity preserving map.

    Returns:
        ``(C_plus, C_minus)`` with ``choi(L) = choi(C_plus) - choi(C_minus)``,
        built from the positive and negative eigenspaces of ``choi(L)``.
        Eigenvalues with magnitude at most ``SIGN_CUTOFF`` times the largest
        one belong to neither part.

    Throws:
        InvalidInputError: The map is not Hermiticity preserving.
    """

    _require_hp(lmap)
    eig = eig_hermitian(lmap.choi)
    cutoff = SIGN_CUTOFF * float(np.max(np.abs(eig.values)))
    values = eig.values
    vectors = eig.vectors

    positive = values > cutoff
    negative = values < -cutoff
    plus = (vectors[:, positive] * values[positive]) @ (
        vectors[:, positive].conj().T
    )
    minus = (vectors[:, negative] * -values[negative]) @ (
        vectors[:, negative].conj().T
    )
    return (
        LinearMap(lmap.dim_in, lmap.dim_out, plus),
        LinearMap(lmap.dim_in, lmap.dim_out, minus),
    )


def statistical_decomposition(lmap: LinearMap) -> StatisticalDecomposition:
    """Decompose a Hermiticity preserving map into a weighted instrument.

    A map that is already a channel is returned as the single part with
    weight exactly 1. Otherwise, with ``L+`` and ``L-`` the Jordan parts,
    ``D+-`` their trace effects and ``gamma`` the largest eigenvalue of
    ``D+ + D-``, the parts are ``L+/gamma`` (weight ``gamma``),
    ``L-/gamma`` (weight ``-gamma``) and a completion
    ``rho -> Tr[rho (1 - (D+ + D-)/gamma)] 1/d_out`` with weight 0 that makes
    the instrument trace-preserving. Vanishing parts are omitted. The l1
    cost is ``2 gamma`` whenever both Jordan parts are present; it is not
    claimed to be minimal.

    Args:
        lmap: Hermiticity preserving map.

    Returns:
        The decomposition; empty for the zero map.

    Throws:
        InvalidInputError: The map is not Hermiticity preserving.
    """

    _require_hp(lmap)
    d_in, d_out = lmap.dim_in, lmap.dim_out

    if is_cp(lmap) and trace_residual(lmap) <= TP_TOL:
        logger.debug("map is already a channel; single-part decomposition")
        return StatisticalDecomposition(d_in, d_out, (1.0,), (lmap,))

    plus, minus = jordan_parts(lmap)
    effect = trace_effect(plus) + trace_effect(minus)
    effect = (effect + effect.conj().T) / 2
    gamma = float(np.linalg.eigvalsh(effect)[-1])
    if gamma <= SIGN_CUTOFF:
        logger.debug("zero map; empty decomposition")
        return StatisticalDecomposition(d_in, d_out, (), ())

    coefficients: List[float] = []
    parts: List[LinearMap] = []
    for weight, jordan in ((gamma, plus), (-gamma, minus)):
        if max_norm(jordan.choi) == 0.0:
            continue
        coefficients.append(weight)
        parts.append(LinearMap(d_in, d_out, jordan.choi / gamma))

    # The deficit is PSD by the choice of gamma; clip round-off negatives.
    spectrum = eig_hermitian(np.eye(d_in) - effect / gamma)
    weights = np.clip(spectrum.values, 0.0, None)
    if float(np.max(weights)) > SIGN_CUTOFF:
        vectors = spectrum.vectors
        deficit = (vectors * weights) @ vectors.conj().T
        sigma0 = np.eye(d_out, dtype=complex) / d_out
        coefficients.append(0.0)
        parts.append(LinearMap(d_in, d_out, kron(sigma0, deficit.T)))

    logger.debug(
        "decomposed %d -> %d map into %d parts, gamma=%.6g",
        d_in,
        d_out,
        len(parts),
        gamma,
    )
    return StatisticalDecomposition(d_in, d_out, coefficients, parts)


def reconstruct(dec: StatisticalDecomposition) -> LinearMap:
    """Return ``sum_i lambda_i E_i`` as a single map.

    Throws:
        InvalidInputError: The decomposition is empty.
    """

    if not dec.parts:
        raise InvalidInputError("cannot reconstruct an empty decomposition")
    choi = sum(
        (c * p.choi for c, p in zip(dec.coefficients, dec.parts)),
        np.zeros_like(dec.parts[0].choi),
    )
    return LinearMap(dec.dim_in, dec.dim_out, choi)


def instrument_sum(dec: StatisticalDecomposition) -> LinearMap:
    """The unweighted sum of the parts, a channel for a valid decomposition."""

    side = dec.dim_in * dec.dim_out
    choi = np.zeros((side, side), dtype=complex)
    for part in dec.parts:
        choi = choi + part.choi
    return LinearMap(dec.dim_in, dec.dim_out, choi)


def decomposition_residuals(
    dec: StatisticalDecomposition, target: Optional[LinearMap] = None
) -> DecompositionResiduals:
    """Measure how well a decomposition meets its contract.

    Args:
        dec: Decomposition to check.
        target: Map the decomposition should reproduce. Without it the
            reconstruction residual is reported as 0.

    Returns:
        Reconstruction, trace-preservation and CP residuals.
    """

    if target is None:
        recon = 0.0
    elif not dec.parts:
        recon = max_norm(target.choi)
    else:
        recon = max_norm(reconstruct(dec).choi - target.choi)

    if dec.parts:
        tp = trace_residual(instrument_sum(dec))
    else:
        tp = 1.0
    cp = tuple(_relative_min_eigenvalue(p.choi) for p in dec.parts)
    return DecompositionResiduals(recon, tp, cp)
