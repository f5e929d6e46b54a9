"""Monte Carlo realization of the instrument protocol.

One shot of the protocol sends the state through the instrument
``{E_i}``, records the outcome ``i`` (probability ``p(i) = Tr[E_i(rho)]``),
measures the observable on ``rho_i = E_i(rho)/p(i)`` and contributes
``X = lambda_i * a`` where ``a`` is the measured eigenvalue. The mean of
``X`` is an unbiased estimate of ``Tr[L(rho) A]``.

Shots are grouped in blocks of ``BLOCK_SIZE``. Block ``b`` draws from a
Philox counter-based generator keyed by ``(seed, *key, b)``, and blocks
are reduced in index order, so results do not depend on how many worker
threads ran the blocks.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt
from attrs import frozen

from qcorr.channels import StatisticalDecomposition, apply_map
from qcorr.correlator import check_correlation_inputs, universal_correlator
from qcorr.dilation import Dilation, dilated_state
from qcorr.errors import InvalidInputError, NumericalFailureError
from qcorr.linalg import (
    ComplexMatrix,
    RealVector,
    eig_hermitian,
    kron,
    require_hermitian,
    require_square,
    require_state,
)

# Number of shots drawn from one counter-based substream.
BLOCK_SIZE = 1 << 14

# Probabilities this far below zero are clipped; anything lower is an error.
NEGATIVE_PROBABILITY_TOL = 1e-10

# Eigenvalues closer than this share one Born projector.
DEGENERACY_TOL = 1e-9

# Width, in standard errors, of the acceptance band of statistical checks.
Z_BAND = 5.0

StreamKey = Tuple[int, ...]
BlockSample = Tuple[npt.NDArray[np.int64], RealVector]

logger = logging.getLogger(__name__)


@frozen
class ShotRecord:
    """Single shot of the protocol.

    Attributes:
        outcome: Instrument outcome ``i``.
        eigenvalue: Measured eigenvalue ``a`` of the observable.
        weight: Coefficient ``lambda_i`` of the outcome.
    """

    outcome: int
    eigenvalue: float
    weight: float

    @property
    def value(self) -> float:
        """The single-shot estimate ``lambda_i * a``."""

        return self.weight * self.eigenvalue


@frozen
class OutcomeStatistics:
    """Aggregated shots of one instrument outcome.

    Attributes:
        outcome: Instrument outcome ``i``.
        frequency: Number of shots with this outcome.
        mean_eigenvalue: Average measured eigenvalue, the sampled
            ``<A>_i`` (0 when the outcome never occurred).
    """

    outcome: int
    frequency: int
    mean_eigenvalue: float


@frozen
class EstimatorResult:
    """Outcome of a sampling run.

    Attributes:
        shots: Number of shots ``N``.
        estimate: Mean of the single-shot values.
        std_error: Sample standard deviation divided by ``sqrt(N)``.
        variance: Sample variance of the single-shot values.
        per_outcome: Statistics of every instrument outcome, in order. Their
            frequencies sum to ``shots``, except for the empty decomposition
            of the zero map: it has no outcomes, so ``per_outcome`` is empty
            and every shot contributes 0.
        seed: Seed of the random streams.
    """

    shots: int
    estimate: float
    std_error: float
    variance: float
    per_outcome: Tuple[OutcomeStatistics, ...]
    seed: int


@frozen
class CorrelationEstimate:
    """Sampled estimate of ``Tr[A rho B]``.

    Attributes:
        real: Run of the Hermitian component.
        imag: Run of the anti-Hermitian component.
    """

    real: EstimatorResult
    imag: EstimatorResult

    @property
    def estimate(self) -> complex:
        """The complex estimate ``re + i im``."""

        return complex(self.real.estimate, self.imag.estimate)

    @property
    def std_error(self) -> complex:
        """Standard errors of both components packed as ``se_re + i se_im``."""

        return complex(self.real.std_error, self.imag.std_error)


@frozen
class UncertaintyReport:
    """Sampled test of the Robertson relation ``dA dB >= |<[A,B]>|/2``.

    Attributes:
        commutator: Estimate of ``<[A, B]>``.
        commutator_std_error: Standard errors of its real and imaginary
            parts, packed as a complex number.
        bound: Estimate of ``|<[A, B]>| / 2``.
        bound_std_error: Propagated standard error of ``bound``.
        delta_a: Sampled standard deviation of ``A``.
        delta_b: Sampled standard deviation of ``B``.
        product_std_error: Propagated standard error of ``delta_a*delta_b``.
        holds: Whether ``delta_a*delta_b >= bound - 5 sigma``.
        saturated: Whether both sides agree within ``5 sigma``.
        shots: Shots used by each of the four sampling runs.
        seed: Seed of the random streams.
    """

    commutator: complex
    commutator_std_error: complex
    bound: float
    bound_std_error: float
    delta_a: float
    delta_b: float
    product_std_error: float
    holds: bool
    saturated: bool
    shots: int
    seed: int

    @property
    def product(self) -> float:
        """The product ``delta_a * delta_b``."""

        return self.delta_a * self.delta_b

    @property
    def status(self) -> str:
        """Human readable verdict."""

        if not self.holds:
            return "violated"
        if self.saturated:
            return "holds (saturated)"
        return "holds"


@frozen(eq=False)
class _Spectrum:
    values: RealVector
    projectors: Tuple[ComplexMatrix, ...]


@frozen(eq=False)
class _ShotPlan:
    """Sampling tables for the two-stage protocol."""

    weights: RealVector
    outcome_cdf: RealVector
    eigenvalues: Tuple[RealVector, ...]
    eigen_cdfs: Tuple[Optional[RealVector], ...]


def block_generator(
    seed: int, key: StreamKey, block: int
) -> np.random.Generator:
    """Counter-based generator of one shot block.

    Args:
        seed: Run seed, non-negative.
        key: Identifies the sampling run inside a larger computation.
        block: Block index.

    Returns:
        A ``Philox`` generator keyed by ``(seed, *key, block)``.
    """

    sequence = np.random.SeedSequence(seed, spawn_key=(*key, block))
    return np.random.Generator(np.random.Philox(sequence))


def _require_sampling_args(shots: int, seed: int, workers: int) -> None:
    if shots < 1:
        raise InvalidInputError(f"shots must be >= 1, got {shots}")
    if seed < 0:
        raise InvalidInputError(f"seed must be >= 0, got {seed}")
    if workers < 1:
        raise InvalidInputError(f"workers must be >= 1, got {workers}")


def _clip_probabilities(raw: Sequence[float], what: str) -> RealVector:
    """Clip round-off negatives and renormalize.

    Throws:
        NumericalFailureError: A probability is below
            ``-NEGATIVE_PROBABILITY_TOL`` or all of them vanish.
    """

    probs = np.array(raw, dtype=float)
    if np.any(probs < -NEGATIVE_PROBABILITY_TOL):
        raise NumericalFailureError(
            f"negative {what} probability {float(np.min(probs)):.3e}"
        )
    probs = np.clip(probs, 0.0, None)
    total = float(np.sum(probs))
    if total <= 0.0:
        raise NumericalFailureError(f"all {what} probabilities vanish")
    return probs / total


def _cdf(probs: RealVector) -> RealVector:
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    return cdf


def _draw(cdf: RealVector, u: npt.ArrayLike) -> npt.NDArray[np.int64]:
    """Inverse-CDF sampling; zero-probability entries are never returned."""

    return np.searchsorted(cdf, u, side="right").astype(np.int64)


def observable_spectrum(o: ComplexMatrix) -> _Spectrum:
    """Distinct eigenvalues of an observable with their eigenprojectors.

    Eigenvalues closer than ``DEGENERACY_TOL`` to the first member of their
    group are merged into a single projector.
    """

    eig = eig_hermitian(o)
    groups: List[List[int]] = []
    for k, value in enumerate(eig.values):
        if groups and value - eig.values[groups[-1][0]] <= DEGENERACY_TOL:
            groups[-1].append(k)
        else:
            groups.append([k])

    values = np.array([float(np.mean(eig.values[g])) for g in groups])
    projectors = tuple(
        eig.vectors[:, g] @ eig.vectors[:, g].conj().T for g in groups
    )
    return _Spectrum(values, projectors)


def born_distribution(
    o: ComplexMatrix, rho: ComplexMatrix
) -> Tuple[RealVector, RealVector]:
    """Eigenvalues of ``o`` and their Born probabilities ``Tr[rho Pi_k]``."""

    spectrum = observable_spectrum(o)
    raw = [float(np.trace(rho @ p).real) for p in spectrum.projectors]
    return spectrum.values, _clip_probabilities(raw, "Born")


def instrument_distribution(
    dec: StatisticalDecomposition, rho: ComplexMatrix
) -> Tuple[RealVector, Tuple[Optional[ComplexMatrix], ...]]:
    """Outcome probabilities and post-measurement states of the instrument.

    Returns:
        ``(p, states)`` where ``states[i] = E_i(rho)/p(i)``, or ``None`` for
        outcomes with zero probability.
    """

    outputs = [apply_map(part, rho) for part in dec.parts]
    raw = [float(np.trace(out).real) for out in outputs]
    probs = _clip_probabilities(raw, "instrument")
    states = tuple(
        out / np.trace(out).real if p > 0.0 else None
        for out, p in zip(outputs, probs)
    )
    return probs, states


def sample_instrument(
    dec: StatisticalDecomposition,
    rho: ComplexMatrix,
    stream: np.random.Generator,
) -> Tuple[int, ComplexMatrix]:
    """Run the instrument once.

    Args:
        dec: Valid statistical decomposition.
        rho: Input state.
        stream: Random generator consumed by the draw.

    Returns:
        The outcome ``i`` and the normalized output state ``rho_i``.

    Throws:
        NumericalFailureError: No outcome has positive probability.
    """

    require_state(rho)
    probs, states = instrument_distribution(dec, rho)
    i = int(_draw(_cdf(probs), stream.random()))
    state = states[i]
    assert state is not None
    return i, state


def measure_observable(
    o: ComplexMatrix, rho: ComplexMatrix, stream: np.random.Generator
) -> float:
    """Measure an observable once following the Born rule.

    Throws:
        InvalidInputError: Non-Hermitian observable or dimension mismatch.
    """

    require_hermitian(o)
    require_square(rho, o.shape[0], "state")
    values, probs = born_distribution(o, rho)
    return float(values[_draw(_cdf(probs), stream.random())])


def _run_blocks(
    shots: int,
    workers: int,
    sample_block: Callable[[int, int], BlockSample],
) -> BlockSample:
    """Run all shot blocks and concatenate them in block order."""

    blocks = math.ceil(shots / BLOCK_SIZE)
    sizes = [min(BLOCK_SIZE, shots - b * BLOCK_SIZE) for b in range(blocks)]

    def job(b: int) -> BlockSample:
        return sample_block(b, sizes[b])

    if workers == 1 or blocks == 1:
        results = [job(b) for b in range(blocks)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, range(blocks)))

    outcomes = np.concatenate([r[0] for r in results])
    eigenvalues = np.concatenate([r[1] for r in results])
    return outcomes, eigenvalues


def _summarize(
    outcomes: npt.NDArray[np.int64],
    eigenvalues: RealVector,
    weights: RealVector,
    seed: int,
) -> EstimatorResult:
    """Recombine sampled shots as ``mean(lambda_i * a)``."""

    shots = int(outcomes.size)
    values = weights[outcomes] * eigenvalues
    estimate = float(np.sum(values) / shots)
    variance = float(np.var(values, ddof=1)) if shots > 1 else 0.0

    per_outcome: List[OutcomeStatistics] = []
    for i in range(weights.size):
        mask = outcomes == i
        count = int(np.count_nonzero(mask))
        mean = float(np.sum(eigenvalues[mask]) / count) if count else 0.0
        per_outcome.append(OutcomeStatistics(i, count, mean))

    return EstimatorResult(
        shots=shots,
        estimate=estimate,
        std_error=math.sqrt(variance / shots),
        variance=variance,
        per_outcome=tuple(per_outcome),
        seed=seed,
    )


def _require_expectation_inputs(
    dim_in: int, dim_out: int, rho: ComplexMatrix, a: ComplexMatrix
) -> None:
    require_square(rho, dim_in, "state")
    require_state(rho)
    require_square(a, dim_out, "observable")
    require_hermitian(a)


def _shot_plan(
    dec: StatisticalDecomposition, rho: ComplexMatrix, a: ComplexMatrix
) -> _ShotPlan:
    probs, states = instrument_distribution(dec, rho)
    eigenvalues: List[RealVector] = []
    cdfs: List[Optional[RealVector]] = []
    for state in states:
        if state is None:
            eigenvalues.append(np.zeros(0))
            cdfs.append(None)
            continue
        values, born = born_distribution(a, state)
        eigenvalues.append(values)
        cdfs.append(_cdf(born))
    return _ShotPlan(
        weights=np.array(dec.coefficients, dtype=float),
        outcome_cdf=_cdf(probs),
        eigenvalues=tuple(eigenvalues),
        eigen_cdfs=tuple(cdfs),
    )


def estimate_hp_expectation(
    dec: StatisticalDecomposition,
    rho: ComplexMatrix,
    a: ComplexMatrix,
    shots: int,
    seed: int,
    *,
    key: StreamKey = (),
    workers: int = 1,
) -> EstimatorResult:
    """Estimate ``Tr[L(rho) A]`` by running the instrument protocol.

    Every shot samples an outcome ``i``, then an eigenvalue ``a`` of ``A`` on
    ``rho_i``, and records ``lambda_i * a``.

    Args:
        dec: Statistical decomposition of ``L``.
        rho: Input state.
        a: Observable on the output space.
        shots: Number of shots, at least 1.
        seed: Non-negative seed.
        key: Stream key separating this run from others sharing the seed.
        workers: Number of threads running shot blocks.

    Returns:
        The estimate with its standard error and per-outcome statistics.

    Throws:
        InvalidInputError: Invalid arguments.
        NumericalFailureError: Probabilities inconsistent with a valid
            decomposition.
    """

    _require_sampling_args(shots, seed, workers)
    _require_expectation_inputs(dec.dim_in, dec.dim_out, rho, a)
    if not dec.parts:
        # Zero map: no outcome to sample, every shot is 0.
        return EstimatorResult(shots, 0.0, 0.0, 0.0, (), seed)

    plan = _shot_plan(dec, rho, a)

    def sample_block(b: int, n: int) -> BlockSample:
        gen = block_generator(seed, key, b)
        outcomes = _draw(plan.outcome_cdf, gen.random(n))
        u = gen.random(n)
        eigenvalues = np.zeros(n)
        for i, cdf in enumerate(plan.eigen_cdfs):
            mask = outcomes == i
            if cdf is None or not np.any(mask):
                continue
            eigenvalues[mask] = plan.eigenvalues[i][_draw(cdf, u[mask])]
        return outcomes, eigenvalues

    outcomes, eigenvalues = _run_blocks(shots, workers, sample_block)
    result = _summarize(outcomes, eigenvalues, plan.weights, seed)
    logger.debug(
        "instrument run: %d shots, estimate %.6g +- %.2g",
        shots,
        result.estimate,
        result.std_error,
    )
    return result


def shot_records(
    dec: StatisticalDecomposition,
    rho: ComplexMatrix,
    a: ComplexMatrix,
    shots: int,
    seed: int,
    *,
    key: StreamKey = (),
) -> List[ShotRecord]:
    """Draw shots one at a time with the single-shot samplers.

    Uses the same block streams as ``estimate_hp_expectation`` but consumes
    them shot by shot, so individual values differ from the batched run
    while following the same distribution.
    """

    _require_sampling_args(shots, seed, 1)
    _require_expectation_inputs(dec.dim_in, dec.dim_out, rho, a)
    records: List[ShotRecord] = []
    for b in range(math.ceil(shots / BLOCK_SIZE)):
        n = min(BLOCK_SIZE, shots - b * BLOCK_SIZE)
        gen = block_generator(seed, key, b)
        for _ in range(n):
            i, state = sample_instrument(dec, rho, gen)
            value = measure_observable(a, state, gen)
            records.append(ShotRecord(i, value, dec.coefficients[i]))
    return records


def estimate_dilation_expectation(
    dil: Dilation,
    rho: ComplexMatrix,
    a: ComplexMatrix,
    shots: int,
    seed: int,
    *,
    key: StreamKey = (),
    workers: int = 1,
) -> EstimatorResult:
    """Estimate ``Tr[L(rho) A]`` by measuring ``A (x) Z`` on the dilated state.

    The state ``U (rho (x) |e0><e0|) U^dag`` is measured jointly with the
    commuting projectors ``Pi_k (x) P^i``; a shot reporting ``(a_k, i)``
    contributes ``a_k * lambda_i``.

    Args:
        dil: Dilation of ``L``.
        rho: Input state.
        a: Observable on the output space.
        shots: Number of shots, at least 1.
        seed: Non-negative seed.
        key: Stream key separating this run from others sharing the seed.
        workers: Number of threads running shot blocks.

    Returns:
        The estimate; ``per_outcome`` is indexed by the ancilla outcome.
    """

    _require_sampling_args(shots, seed, workers)
    _require_expectation_inputs(dil.dim_in, dil.dim_out, rho, a)

    joint = dilated_state(dil, rho)
    spectrum = observable_spectrum(a)
    outcome_of: List[int] = []
    value_of: List[float] = []
    raw: List[float] = []
    for i, proj in enumerate(dil.projectors):
        for value, pi in zip(spectrum.values, spectrum.projectors):
            outcome_of.append(i)
            value_of.append(float(value))
            raw.append(float(np.trace(joint @ kron(pi, proj)).real))
    cdf = _cdf(_clip_probabilities(raw, "joint"))
    outcome_table = np.array(outcome_of, dtype=np.int64)
    value_table = np.array(value_of)

    def sample_block(b: int, n: int) -> BlockSample:
        cells = _draw(cdf, block_generator(seed, key, b).random(n))
        return outcome_table[cells], value_table[cells]

    outcomes, eigenvalues = _run_blocks(shots, workers, sample_block)
    weights = np.array(dil.coefficients, dtype=float)
    return _summarize(outcomes, eigenvalues, weights, seed)


def sample_observable(
    o: ComplexMatrix,
    rho: ComplexMatrix,
    shots: int,
    seed: int,
    *,
    key: StreamKey = (),
    workers: int = 1,
) -> RealVector:
    """Measure an observable ``shots`` times on fresh copies of ``rho``."""

    _require_sampling_args(shots, seed, workers)
    require_hermitian(o)
    require_square(rho, o.shape[0], "state")
    require_state(rho)
    values, probs = born_distribution(o, rho)
    cdf = _cdf(probs)

    def sample_block(b: int, n: int) -> BlockSample:
        idx = _draw(cdf, block_generator(seed, key, b).random(n))
        return idx, values[idx]

    return _run_blocks(shots, workers, sample_block)[1]


def analytic_variance(
    dec: StatisticalDecomposition, rho: ComplexMatrix, a: ComplexMatrix
) -> float:
    """Exact variance of the single-shot value ``lambda_i * a``.

    Returns:
        ``sum_i lambda_i^2 Tr[E_i(rho) A^2]
        - (sum_i lambda_i Tr[E_i(rho) A])^2``.
    """

    a2 = a @ a
    second = 0.0
    first = 0.0
    for c, part in zip(dec.coefficients, dec.parts):
        out = apply_map(part, rho)
        second += c * c * float(np.trace(out @ a2).real)
        first += c * float(np.trace(out @ a).real)
    return second - first * first


def estimate_correlation(
    rho: ComplexMatrix,
    a: ComplexMatrix,
    b: ComplexMatrix,
    shots: int,
    seed: int,
    *,
    real_fraction: float = 0.5,
    key: StreamKey = (),
    workers: int = 1,
) -> CorrelationEstimate:
    """Estimate ``Tr[A rho B]`` through the two Hermitian components of ``T``.

    Args:
        rho: State.
        a: First observable.
        b: Second observable.
        shots: Total shots, split between the real and imaginary runs.
        seed: Non-negative seed.
        real_fraction: Share of the shots given to the real part.
        key: Stream key separating this run from others sharing the seed.
        workers: Number of threads running shot blocks.

    Returns:
        Estimates of both components.

    Throws:
        InvalidInputError: Invalid inputs, or a split leaving a run without
            shots.
    """

    check_correlation_inputs(rho, a, b)
    if not 0.0 < real_fraction < 1.0:
        raise InvalidInputError(
            f"real fraction must lie in (0, 1), got {real_fraction}"
        )
    real_shots = int(round(shots * real_fraction))
    imag_shots = shots - real_shots
    if real_shots < 1 or imag_shots < 1:
        raise InvalidInputError(
            f"{shots} shots cannot be split with real fraction "
            f"{real_fraction}"
        )

    realization = universal_correlator(rho.shape[0])
    observable = kron(a, b)
    real = estimate_hp_expectation(
        realization.real_decomposition,
        rho,
        observable,
        real_shots,
        seed,
        key=(*key, 0),
        workers=workers,
    )
    imag = estimate_hp_expectation(
        realization.imag_decomposition,
        rho,
        observable,
        imag_shots,
        seed,
        key=(*key, 1),
        workers=workers,
    )
    return CorrelationEstimate(real, imag)


def _std_with_error(samples: RealVector) -> Tuple[float, float]:
    """Sample standard deviation and its large-sample standard error."""

    n = samples.size
    if n < 2:
        return 0.0, 0.0
    variance = float(np.var(samples, ddof=1))
    if variance <= 0.0:
        return 0.0, 0.0
    centered = samples - np.mean(samples)
    fourth = float(np.mean(centered**4))
    spread = max(fourth - variance * variance, 0.0)
    return math.sqrt(variance), math.sqrt(spread / (4.0 * variance * n))


def uncertainty_check(
    rho: ComplexMatrix,
    a: ComplexMatrix,
    b: ComplexMatrix,
    shots: int,
    seed: int,
    *,
    workers: int = 1,
) -> UncertaintyReport:
    """Test the Robertson relation from sampled data only.

    The commutator ``<[A, B]> = Tr[B rho A] - Tr[A rho B]`` comes from two
    correlation runs, while ``dA`` and ``dB`` come from direct measurements of
    each observable. The relation holds when
    ``dA dB >= |<[A,B]>|/2 - 5 sigma``, with ``sigma`` the propagated standard
    error of both sides, and is saturated when the two sides agree within
    ``5 sigma``.

    Args:
        rho: State.
        a: First observable.
        b: Second observable.
        shots: Shots of each of the four sampling runs.
        seed: Non-negative seed.
        workers: Number of threads running shot blocks.

    Returns:
        The report.
    """

    check_correlation_inputs(rho, a, b)
    ab = estimate_correlation(
        rho, a, b, shots, seed, key=(0,), workers=workers
    )
    ba = estimate_correlation(
        rho, b, a, shots, seed, key=(1,), workers=workers
    )
    commutator = ba.estimate - ab.estimate
    se_re = math.hypot(ab.real.std_error, ba.real.std_error)
    se_im = math.hypot(ab.imag.std_error, ba.imag.std_error)
    bound = abs(commutator) / 2
    bound_se = math.hypot(se_re, se_im) / 2

    delta_a, se_a = _std_with_error(
        sample_observable(a, rho, shots, seed, key=(2,), workers=workers)
    )
    delta_b, se_b = _std_with_error(
        sample_observable(b, rho, shots, seed, key=(3,), workers=workers)
    )
    product = delta_a * delta_b
    product_se = math.hypot(delta_b * se_a, delta_a * se_b)
    sigma = math.hypot(bound_se, product_se)

    report = UncertaintyReport(
        commutator=commutator,
        commutator_std_error=complex(se_re, se_im),
        bound=bound,
        bound_std_error=bound_se,
        delta_a=delta_a,
        delta_b=delta_b,
        product_std_error=product_se,
        holds=product >= bound - Z_BAND * sigma,
        saturated=abs(product - bound) <= Z_BAND * sigma,
        shots=shots,
        seed=seed,
    )
    logger.debug(
        "uncertainty: dA dB = %.6g, |<[A,B]>|/2 = %.6g (%s)",
        product,
        bound,
        report.status,
    )
    return report
