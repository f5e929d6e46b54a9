"""Random instances and the invariant suites run by ``qcorr validate``.

Every suite draws its instances from a generator keyed by
``(seed, dim, suite)`` and reports the largest residual it saw against a
tolerance. The generators are public so tests can build the same kind of
instances.
"""

from __future__ import annotations

import logging
import math
from typing import Callable, Dict, Iterable, List, Sequence, Tuple

import numpy as np
from attrs import asdict, evolve, fields, frozen

from qcorr.channels import (
    LinearMap,
    apply_map,
    decomposition_residuals,
    expectation_value,
    instrument_sum,
    jordan_parts,
    kraus_from_choi,
    map_from_kraus,
    statistical_decomposition,
    trace_residual,
)
from qcorr.correlator import (
    exact_correlation,
    hermitian_split,
    ideal_correlator,
)
from qcorr.dilation import (
    dilate,
    embed_input,
    outcome_probabilities,
    partial_expectation,
    reduced_map,
)
from qcorr.errors import InvalidInputError
from qcorr.linalg import (
    ComplexMatrix,
    complete_to_unitary,
    eig_hermitian,
    kron,
    max_norm,
    partial_trace,
)
from qcorr.simulate import estimate_hp_expectation

# Dimensions the suites are meant for.
SUPPORTED_DIMS = (2, 3, 4)

# Shots per instance of the sampling suite, and its instance cap.
ZSCORE_SHOTS = 4000
ZSCORE_INSTANCES = 20

logger = logging.getLogger(__name__)


@frozen
class Tolerances:
    """Thresholds of the invariant suites.

    Attributes:
        kron: Mixed-product property of the Kronecker product.
        trace: Partial trace followed by full trace.
        eigen: Eigendecomposition reconstruction.
        unitary: Unitarity and embedding of the unitary completion.
        correlation: Defining identity of the correlator and its split.
        decomposition: Reconstruction and trace preservation of
            decompositions.
        cp: Allowed negativity of the relative Choi eigenvalues of parts.
        instrument: Recombined instrument expectation values.
        probability: Outcome probabilities.
        kraus: Kraus action and Jordan exactness.
        partial_expectation: Partial expectation values.
        isometry: Isometry of the dilation and reduced map round trip.
        zscore: Largest accepted |z-score| of sampled estimates.
    """

    kron: float = 1e-10
    trace: float = 1e-10
    eigen: float = 1e-9
    unitary: float = 1e-9
    correlation: float = 1e-9
    decomposition: float = 1e-9
    cp: float = 1e-10
    instrument: float = 1e-8
    probability: float = 1e-9
    kraus: float = 1e-9
    partial_expectation: float = 1e-8
    isometry: float = 1e-9
    zscore: float = 5.0

    def override(self, overrides: Dict[str, float]) -> Tolerances:
        """Return a copy with some thresholds replaced.

        Throws:
            InvalidInputError: Unknown name or non-positive value.
        """

        known = {a.name for a in fields(Tolerances)}
        for name, value in overrides.items():
            if name not in known:
                raise InvalidInputError(
                    f"unknown tolerance {name!r}; known: "
                    f"{', '.join(sorted(known))}"
                )
            if not value > 0.0:
                raise InvalidInputError(f"tolerance {name} must be > 0")
        return evolve(self, **overrides)

    def as_dict(self) -> Dict[str, float]:
        """Thresholds keyed by name."""

        return asdict(self)


@frozen
class SuiteResult:
    """Outcome of one invariant suite on one dimension.

    Attributes:
        module: Module whose invariant is checked.
        name: Invariant name.
        dim: Dimension of the random instances.
        instances: Number of instances checked.
        max_residual: Largest residual observed.
        tolerance: Threshold the residual must not exceed.
    """

    module: str
    name: str
    dim: int
    instances: int
    max_residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        """True if the largest residual is within tolerance."""

        return self.max_residual <= self.tolerance


@frozen
class ValidationReport:
    """All suite results of a validation run.

    Attributes:
        seed: Seed of the random instances.
        results: Suite results in execution order.
    """

    seed: int
    results: Tuple[SuiteResult, ...]

    @property
    def passed(self) -> bool:
        """True if every suite passed."""

        return all(r.passed for r in self.results)


def _ginibre(rng: np.random.Generator, rows: int, cols: int) -> ComplexMatrix:
    return rng.standard_normal((rows, cols)) + 1j * rng.standard_normal(
        (rows, cols)
    )


def random_state(rng: np.random.Generator, d: int) -> ComplexMatrix:
    """Random full-rank density matrix ``G G^dag / Tr``."""

    g = _ginibre(rng, d, d)
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_hermitian(rng: np.random.Generator, d: int) -> ComplexMatrix:
    """Random Hermitian matrix with entries of order one."""

    g = _ginibre(rng, d, d)
    return (g + g.conj().T) / 2


def random_isometry(
    rng: np.random.Generator, rows: int, cols: int
) -> ComplexMatrix:
    """Random matrix with orthonormal columns."""

    q, _ = np.linalg.qr(_ginibre(rng, rows, cols))
    return q


def random_hp_map(
    rng: np.random.Generator, d_in: int, d_out: int
) -> LinearMap:
    """Map with a random Hermitian Choi matrix."""

    return LinearMap(d_in, d_out, random_hermitian(rng, d_in * d_out))


def random_cptp_map(
    rng: np.random.Generator, d_in: int, d_out: int, n_kraus: int = 2
) -> LinearMap:
    """Random channel built from the blocks of a random isometry."""

    v = random_isometry(rng, d_out * n_kraus, d_in)
    kraus = [v[k * d_out : (k + 1) * d_out] for k in range(n_kraus)]
    return map_from_kraus(kraus, d_in, d_out)


def _unit(d: int, i: int, j: int) -> ComplexMatrix:
    e = np.zeros((d, d), dtype=complex)
    e[i, j] = 1.0
    return e


def _rel(residual: float, scale: float) -> float:
    return residual / max(1.0, scale)


Check = Callable[[np.random.Generator, int], Dict[str, float]]


def _linalg_checks(rng: np.random.Generator, d: int) -> Dict[str, float]:
    a, b, c, e = (_ginibre(rng, d, d) for _ in range(4))
    lhs = kron(a, b) @ kron(c, e)
    mixed = _rel(max_norm(lhs - kron(a @ c, b @ e)), max_norm(lhs))

    m = _ginibre(rng, d * d, d * d)
    reduced = partial_trace(m, (d, d), 1)
    trace = abs(np.trace(reduced) - np.trace(m))

    h = random_hermitian(rng, d * d)
    eigen = max_norm(eig_hermitian(h).reconstruct() - h)

    v = random_isometry(rng, d * 2, d)
    u = complete_to_unitary(v)
    unitary = max(
        max_norm(u.conj().T @ u - np.eye(2 * d)), max_norm(u[:, :d] - v)
    )
    return {
        "kron": mixed,
        "trace": trace,
        "eigen": eigen,
        "unitary": unitary,
    }


def _channel_checks(rng: np.random.Generator, d: int) -> Dict[str, float]:
    lmap = random_hp_map(rng, d, d)
    dec = statistical_decomposition(lmap)
    res = decomposition_residuals(dec, lmap)

    rho = random_state(rng, d)
    a = random_hermitian(rng, d)
    recombined = sum(
        c * expectation_value(p, rho, a)
        for c, p in zip(dec.coefficients, dec.parts)
    )
    target = expectation_value(lmap, rho, a)
    probs = [float(np.trace(apply_map(p, rho)).real) for p in dec.parts]

    plus, minus = jordan_parts(lmap)
    jordan = max_norm(plus.choi - minus.choi - lmap.choi)

    channel = random_cptp_map(rng, d, d)
    kraus = kraus_from_choi(channel)
    units = [_unit(d, i, j) for i in range(d) for j in range(d)]
    kraus_res = max(
        max_norm(kraus.apply(x) - apply_map(channel, x)) for x in units
    )
    single = statistical_decomposition(channel)
    cptp = 0.0 if single.coefficients == (1.0,) else 1.0

    return {
        "decomposition": max(
            res.reconstruction, res.trace_preservation, cptp
        ),
        "cp": max([0.0] + [-x for x in res.min_cp_eigenvalues]),
        "instrument": abs(recombined - target),
        "probability": max(
            max([0.0] + [-p for p in probs]), abs(sum(probs) - 1.0)
        ),
        "kraus": max(kraus_res, _rel(jordan, max_norm(lmap.choi))),
    }


def _correlator_checks(
    correlator: LinearMap,
) -> Check:
    pair = hermitian_split(correlator)

    def check(rng: np.random.Generator, d: int) -> Dict[str, float]:
        rho = random_state(rng, d)
        a = random_hermitian(rng, d)
        b = random_hermitian(rng, d)
        exact = exact_correlation(rho, a, b)
        ab = kron(a, b)
        via_t = expectation_value(correlator, rho, ab)
        re = expectation_value(pair.t_real, rho, ab).real
        im = expectation_value(pair.t_imag, rho, ab).real
        swapped = exact_correlation(rho, b, a)
        return {
            "correlation": max(
                abs(via_t - exact),
                abs(re - exact.real),
                abs(im - exact.imag),
                abs(exact - swapped.conjugate()),
            )
        }

    return check


def _dilation_checks(rng: np.random.Generator, d: int) -> Dict[str, float]:
    lmap = random_hp_map(rng, d, d)
    dec = statistical_decomposition(lmap)
    dil = dilate(dec)

    isometry = max_norm(dil.v.conj().T @ dil.v - np.eye(d))
    roundtrip = max_norm(reduced_map(dil).choi - lmap.choi)

    rho = random_state(rng, d)
    a = random_hermitian(rng, d)
    partial = abs(
        partial_expectation(dil, rho, a) - expectation_value(lmap, rho, a).real
    )

    psi = _ginibre(rng, d, 1)
    psi = psi / np.linalg.norm(psi)
    embedded = embed_input(dil, psi @ psi.conj().T)
    image = dil.u @ embedded @ dil.u.conj().T
    direct = dil.v @ psi @ psi.conj().T @ dil.v.conj().T
    unitary = max(
        max_norm(dil.u.conj().T @ dil.u - np.eye(dil.joint_dim)),
        max_norm(image - direct),
    )

    expected = [float(np.trace(apply_map(p, rho)).real) for p in dec.parts]
    probs = max(
        abs(x - y) for x, y in zip(outcome_probabilities(dil, rho), expected)
    )
    channel_res = trace_residual(instrument_sum(dec))
    return {
        "isometry": max(isometry, roundtrip),
        "partial_expectation": partial,
        "unitary": unitary,
        "probability": max(probs, channel_res),
    }


def _zscore_checks(rng: np.random.Generator, d: int) -> Dict[str, float]:
    lmap = random_hp_map(rng, d, d)
    dec = statistical_decomposition(lmap)
    rho = random_state(rng, d)
    a = random_hermitian(rng, d)
    seed = int(rng.integers(0, 2**31))
    result = estimate_hp_expectation(dec, rho, a, ZSCORE_SHOTS, seed)
    oracle = expectation_value(lmap, rho, a).real
    if result.std_error == 0.0:
        z = 0.0 if math.isclose(result.estimate, oracle) else math.inf
    else:
        z = abs(result.estimate - oracle) / result.std_error
    return {"zscore": z}


def _run_suite(
    module: str,
    check: Check,
    dim: int,
    instances: int,
    seed: int,
    suite_index: int,
    tolerances: Tolerances,
) -> List[SuiteResult]:
    sequence = np.random.SeedSequence(seed, spawn_key=(dim, suite_index))
    rng = np.random.default_rng(sequence)
    worst: Dict[str, float] = {}
    for _ in range(instances):
        for name, value in check(rng, dim).items():
            worst[name] = max(worst.get(name, 0.0), float(value))

    limits = tolerances.as_dict()
    return [
        SuiteResult(module, name, dim, instances, worst[name], limits[name])
        for name in sorted(worst)
    ]


def run_validation(
    dims: Sequence[int],
    instances: int,
    seed: int = 0,
    tolerances: Tolerances = Tolerances(),
) -> ValidationReport:
    """Run every invariant suite on random instances.

    Args:
        dims: Dimensions to test, each in ``SUPPORTED_DIMS``.
        instances: Random instances per suite and dimension, at least 1.
        seed: Seed of the instance generators.
        tolerances: Thresholds of the suites.

    Returns:
        The collected suite results.

    Throws:
        InvalidInputError: No instances, no dimensions or an unsupported
            dimension.
    """

    if instances < 1:
        raise InvalidInputError("nothing to validate: instances must be >= 1")
    if not dims:
        raise InvalidInputError("nothing to validate: no dimensions given")
    bad = [d for d in dims if d not in SUPPORTED_DIMS]
    if bad:
        raise InvalidInputError(
            f"unsupported dimension(s) {bad}; choose from {SUPPORTED_DIMS}"
        )

    results: List[SuiteResult] = []
    for dim in dims:
        suites: Iterable[Tuple[str, Check, int]] = (
            ("linalg", _linalg_checks, instances),
            ("channels", _channel_checks, instances),
            (
                "correlator",
                _correlator_checks(ideal_correlator(dim)),
                instances,
            ),
            ("dilation", _dilation_checks, instances),
            ("simulate", _zscore_checks, min(instances, ZSCORE_INSTANCES)),
        )
        for index, (module, check, count) in enumerate(suites):
            logger.debug("running %s suite for d=%d", module, dim)
            results.extend(
                _run_suite(module, check, dim, count, seed, index, tolerances)
            )
    return ValidationReport(seed, tuple(results))
