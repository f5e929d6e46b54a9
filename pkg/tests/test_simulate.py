from __future__ import annotations

import attrs
import numpy as np
import pytest

from qcorr.channels import (
    StatisticalDecomposition,
    expectation_value,
    statistical_decomposition,
    transpose_map,
)
from qcorr.correlator import exact_correlation
from qcorr.dilation import dilate
from qcorr.errors import InvalidInputError, NumericalFailureError
from qcorr.linalg import ComplexMatrix, pauli
from qcorr.simulate import (
    BLOCK_SIZE,
    Z_BAND,
    OutcomeStatistics,
    ShotRecord,
    _clip_probabilities,
    analytic_variance,
    block_generator,
    born_distribution,
    estimate_correlation,
    estimate_dilation_expectation,
    estimate_hp_expectation,
    measure_observable,
    observable_spectrum,
    sample_instrument,
    sample_observable,
    shot_records,
    uncertainty_check,
)
from qcorr.validation import random_hermitian, random_hp_map, random_state


@pytest.fixture
def transpose_dec() -> StatisticalDecomposition:
    return statistical_decomposition(transpose_map(2))


def _within_band(estimate: float, oracle: float, std_error: float) -> bool:
    return abs(estimate - oracle) <= Z_BAND * std_error


def test_block_generator_is_keyed() -> None:
    a = block_generator(7, (0,), 3).random(4)
    b = block_generator(7, (0,), 3).random(4)
    c = block_generator(7, (1,), 3).random(4)
    d = block_generator(7, (0,), 4).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_clip_probabilities() -> None:
    probs = _clip_probabilities([0.5, -1e-12, 0.5], "test")
    assert probs[1] == 0.0
    assert probs.sum() == pytest.approx(1.0)
    with pytest.raises(NumericalFailureError):
        _clip_probabilities([1.2, -0.2], "test")
    with pytest.raises(NumericalFailureError):
        _clip_probabilities([0.0, 0.0], "test")


def test_observable_spectrum_merges_degenerate_values() -> None:
    spectrum = observable_spectrum(np.diag([1.0, 1.0, -2.0]).astype(complex))
    assert list(spectrum.values) == pytest.approx([-2.0, 1.0])
    assert np.allclose(spectrum.projectors[1], np.diag([1, 1, 0]))


def test_born_distribution(ket0: ComplexMatrix, sx: ComplexMatrix) -> None:
    values, probs = born_distribution(sx, ket0)
    assert list(values) == pytest.approx([-1.0, 1.0])
    assert list(probs) == pytest.approx([0.5, 0.5])


def test_single_shot_samplers(
    transpose_dec: StatisticalDecomposition,
    ket0: ComplexMatrix,
    sz: ComplexMatrix,
) -> None:
    stream = block_generator(0, (), 0)
    outcome, state = sample_instrument(transpose_dec, ket0, stream)
    assert outcome in (0, 1)
    assert np.trace(state).real == pytest.approx(1.0)
    assert measure_observable(sz, state, stream) in (-1.0, 1.0)


def test_shot_records_take_values_lambda_times_a(
    transpose_dec: StatisticalDecomposition,
    ket0: ComplexMatrix,
    sz: ComplexMatrix,
) -> None:
    records = shot_records(transpose_dec, ket0, sz, 200, seed=3)
    assert len(records) == 200
    assert all(abs(r.value) == pytest.approx(2.0) for r in records)
    assert {r.outcome for r in records} <= {0, 1}


def test_transpose_estimate_and_variance(
    transpose_dec: StatisticalDecomposition,
    ket0: ComplexMatrix,
    sz: ComplexMatrix,
) -> None:
    # Every shot gives +-2, so the variance is 4 - 1 = 3.
    assert analytic_variance(transpose_dec, ket0, sz) == pytest.approx(3.0)
    result = estimate_hp_expectation(transpose_dec, ket0, sz, 100_000, 11)
    assert result.shots == 100_000
    assert result.seed == 11
    assert _within_band(result.estimate, 1.0, result.std_error)
    assert result.variance == pytest.approx(3.0, rel=0.05)
    assert result.std_error == pytest.approx(np.sqrt(3.0 / 100_000), rel=0.05)

    freq = [s.frequency for s in result.per_outcome]
    assert sum(freq) == 100_000
    assert freq[0] / 100_000 == pytest.approx(0.75, abs=0.01)
    assert result.per_outcome[0].mean_eigenvalue > 0.0


def test_estimates_are_deterministic_across_workers(
    transpose_dec: StatisticalDecomposition,
    ket0: ComplexMatrix,
    sx: ComplexMatrix,
) -> None:
    shots = 3 * BLOCK_SIZE + 17
    serial = estimate_hp_expectation(transpose_dec, ket0, sx, shots, 5)
    again = estimate_hp_expectation(transpose_dec, ket0, sx, shots, 5)
    parallel = estimate_hp_expectation(
        transpose_dec, ket0, sx, shots, 5, workers=4
    )
    assert serial == again
    assert serial == parallel
    other = estimate_hp_expectation(transpose_dec, ket0, sx, shots, 6)
    assert other.estimate != serial.estimate


def test_sampling_arguments_are_checked(
    transpose_dec: StatisticalDecomposition,
    ket0: ComplexMatrix,
    sz: ComplexMatrix,
) -> None:
    with pytest.raises(InvalidInputError, match="shots"):
        estimate_hp_expectation(transpose_dec, ket0, sz, 0, 1)
    with pytest.raises(InvalidInputError, match="seed"):
        estimate_hp_expectation(transpose_dec, ket0, sz, 10, -1)
    with pytest.raises(InvalidInputError, match="workers"):
        estimate_hp_expectation(transpose_dec, ket0, sz, 10, 1, workers=0)
    with pytest.raises(InvalidInputError):
        estimate_hp_expectation(transpose_dec, ket0, np.eye(3), 10, 1)


def test_empty_decomposition_estimates_zero(
    ket0: ComplexMatrix, sz: ComplexMatrix
) -> None:
    dec = StatisticalDecomposition(2, 2, (), ())
    result = estimate_hp_expectation(dec, ket0, sz, 50, 0)
    assert result.shots == 50
    assert result.estimate == 0.0
    assert result.std_error == 0.0
    assert result.variance == 0.0
    assert result.per_outcome == ()


def test_dilation_sampler_matches_oracle(rng: np.random.Generator) -> None:
    lmap = random_hp_map(rng, 2, 2)
    dec = statistical_decomposition(lmap)
    dil = dilate(dec)
    rho = random_state(rng, 2)
    a = random_hermitian(rng, 2)
    oracle = expectation_value(lmap, rho, a).real

    result = estimate_dilation_expectation(dil, rho, a, 60_000, 2)
    assert _within_band(result.estimate, oracle, result.std_error)
    assert len(result.per_outcome) == len(dec)
    assert result.variance == pytest.approx(
        analytic_variance(dec, rho, a), rel=0.1
    )


def test_sample_observable_statistics(
    ket0: ComplexMatrix, sx: ComplexMatrix
) -> None:
    samples = sample_observable(sx, ket0, 40_000, 9)
    assert samples.shape == (40_000,)
    assert np.allclose(np.abs(samples), 1.0)
    assert abs(samples.mean()) <= Z_BAND / np.sqrt(40_000)


def test_correlation_estimate_of_pauli_pair(
    ket0: ComplexMatrix, sx: ComplexMatrix, sy: ComplexMatrix
) -> None:
    est = estimate_correlation(ket0, sx, sy, 200_000, 7)
    assert _within_band(est.real.estimate, 0.0, est.real.std_error)
    assert _within_band(est.imag.estimate, -1.0, est.imag.std_error)
    assert est.real.shots == est.imag.shots == 100_000
    again = estimate_correlation(ket0, sx, sy, 200_000, 7)
    assert again.estimate == est.estimate
    assert again.std_error == est.std_error


def test_correlation_of_identities(ket0: ComplexMatrix) -> None:
    one = np.eye(2, dtype=complex)
    est = estimate_correlation(ket0, one, one, 50_000, 1)
    assert _within_band(est.real.estimate, 1.0, est.real.std_error)
    assert _within_band(est.imag.estimate, 0.0, est.imag.std_error)


def test_real_fraction_splits_shots(
    ket0: ComplexMatrix, sx: ComplexMatrix, sy: ComplexMatrix
) -> None:
    est = estimate_correlation(ket0, sx, sy, 1000, 0, real_fraction=0.25)
    assert est.real.shots == 250
    assert est.imag.shots == 750
    with pytest.raises(InvalidInputError):
        estimate_correlation(ket0, sx, sy, 1000, 0, real_fraction=1.0)
    with pytest.raises(InvalidInputError):
        estimate_correlation(ket0, sx, sy, 1, 0)


def test_uncertainty_saturated_for_pauli_pair(
    ket0: ComplexMatrix, sx: ComplexMatrix, sy: ComplexMatrix
) -> None:
    report = uncertainty_check(ket0, sx, sy, 40_000, 3)
    assert report.holds
    assert report.saturated
    assert report.status == "holds (saturated)"
    assert report.delta_a == pytest.approx(1.0, abs=0.01)
    assert report.delta_b == pytest.approx(1.0, abs=0.01)
    assert report.product == pytest.approx(report.delta_a * report.delta_b)
    # <[X, Y]> = 2i <Z> = 2i on |0>.
    assert abs(report.commutator.imag - 2.0) <= Z_BAND * abs(
        report.commutator_std_error.imag
    )


def test_uncertainty_holds_strictly_for_mixed_state(
    sx: ComplexMatrix, sy: ComplexMatrix
) -> None:
    mixed = np.eye(2, dtype=complex) / 2
    report = uncertainty_check(mixed, sx, sy, 40_000, 4)
    assert report.holds
    assert not report.saturated
    assert report.status == "holds"


def test_commutator_magnitude_matches_exact(
    rng: np.random.Generator,
) -> None:
    rho = random_state(rng, 2)
    a = random_hermitian(rng, 2)
    b = random_hermitian(rng, 2)
    exact = exact_correlation(rho, b, a) - exact_correlation(rho, a, b)
    report = uncertainty_check(rho, a, b, 40_000, 8)
    se = abs(report.commutator_std_error)
    assert abs(report.commutator - exact) <= Z_BAND * max(se, 1e-12)


@pytest.mark.slow
def test_protocol_is_unbiased_on_random_qubits() -> None:
    rng = np.random.default_rng(np.random.SeedSequence(2024))
    scores = []
    for k in range(50):
        lmap = random_hp_map(rng, 2, 2)
        dec = statistical_decomposition(lmap)
        rho = random_state(rng, 2)
        a = random_hermitian(rng, 2)
        oracle = expectation_value(lmap, rho, a).real
        result = estimate_hp_expectation(dec, rho, a, 100_000, k)
        scores.append((result.estimate - oracle) / result.std_error)
    assert max(abs(z) for z in scores) <= Z_BAND
    assert -0.5 <= float(np.mean(scores)) <= 0.5


def test_correlation_of_equal_observables(
    ket0: ComplexMatrix,
) -> None:
    # A = B = Z: the real part is <Z Z> = 1 and the imaginary part 0.
    est = estimate_correlation(ket0, pauli("z"), pauli("z"), 40_000, 12)
    assert _within_band(est.real.estimate, 1.0, est.real.std_error)


def test_instrument_and_dilation_readings_agree(
    rng: np.random.Generator,
) -> None:
    lmap = random_hp_map(rng, 2, 2)
    dec = statistical_decomposition(lmap)
    rho = random_state(rng, 2)
    a = random_hermitian(rng, 2)

    instrument = estimate_hp_expectation(dec, rho, a, 60_000, 21)
    ancilla = estimate_dilation_expectation(dilate(dec), rho, a, 60_000, 22)
    combined = np.hypot(instrument.std_error, ancilla.std_error)
    assert abs(instrument.estimate - ancilla.estimate) <= Z_BAND * combined


@pytest.mark.slow
def test_sample_instrument_frequencies_follow_probabilities(
    transpose_dec: StatisticalDecomposition,
) -> None:
    # Transpose map on the maximally mixed qubit: p = (3/4, 1/4).
    rho = np.eye(2, dtype=complex) / 2
    shots = 100_000
    stream = block_generator(13, (), 0)
    counts = np.zeros(2, dtype=int)
    for _ in range(shots):
        outcome, _ = sample_instrument(transpose_dec, rho, stream)
        counts[outcome] += 1
    for count, p in zip(counts, (0.75, 0.25)):
        sigma = np.sqrt(p * (1 - p) / shots)
        assert abs(count / shots - p) <= Z_BAND * sigma


def test_uncertainty_commutator_vanishes_for_equal_observables(
    rng: np.random.Generator,
) -> None:
    rho = random_state(rng, 2)
    a = random_hermitian(rng, 2)
    report = uncertainty_check(rho, a, a, 40_000, 5)
    se = report.commutator_std_error
    assert abs(report.commutator.real) <= Z_BAND * se.real
    assert abs(report.commutator.imag) <= Z_BAND * se.imag
    assert report.holds


def test_shot_records_are_frozen_attrs_records() -> None:
    record = ShotRecord(1, -1.0, -2.0)
    stats = OutcomeStatistics(0, 10, 0.5)
    assert attrs.has(ShotRecord) and attrs.has(OutcomeStatistics)
    assert record.value == 2.0
    with pytest.raises(attrs.exceptions.FrozenInstanceError):
        stats.frequency = 11  # type: ignore[misc]
