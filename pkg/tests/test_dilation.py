from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcorr.channels import (
    LinearMap,
    StatisticalDecomposition,
    apply_map,
    expectation_value,
    identity_map,
    statistical_decomposition,
    transpose_map,
)
from qcorr.dilation import (
    dilate,
    dilated_state,
    embed_input,
    outcome_probabilities,
    partial_expectation,
    reduced_map,
)
from qcorr.errors import InvalidInputError
from qcorr.linalg import ComplexMatrix, max_norm
from qcorr.validation import (
    random_cptp_map,
    random_hermitian,
    random_hp_map,
    random_state,
)


def test_identity_channel_needs_no_ancilla() -> None:
    dil = dilate(statistical_decomposition(identity_map(2)))
    assert dil.ancilla_dim == 1
    assert dil.joint_dim == 2
    # V = U (x) |0> for a single unitary Kraus operator U.
    assert max_norm(dil.v.conj().T @ dil.v - np.eye(2)) <= 1e-12
    assert np.allclose(dil.z, [[1.0]])


def test_transpose_dilation(
    ket0: ComplexMatrix, sz: ComplexMatrix
) -> None:
    dec = statistical_decomposition(transpose_map(2))
    dil = dilate(dec)
    assert dil.ancilla_dim == 4
    assert dil.v.shape == (8, 2)
    assert np.allclose(np.diag(dil.z).real, [2.0, 2.0, 2.0, -2.0])
    assert dil.outcome_index == (0, 0, 0, 1)
    assert outcome_probabilities(dil, ket0) == pytest.approx([0.75, 0.25])
    assert partial_expectation(dil, ket0, sz) == pytest.approx(1.0)


def test_projectors_partition_the_ancilla() -> None:
    dil = dilate(statistical_decomposition(transpose_map(2)))
    total = sum(dil.projectors)
    assert np.array_equal(total, np.eye(dil.ancilla_dim))
    weighted = sum(c * p for c, p in zip(dil.coefficients, dil.projectors))
    assert np.allclose(weighted, dil.z)


def test_unitary_extends_isometry(rng: np.random.Generator) -> None:
    dil = dilate(statistical_decomposition(random_hp_map(rng, 2, 2)))
    assert max_norm(dil.u.conj().T @ dil.u - np.eye(dil.joint_dim)) <= 1e-9
    assert np.array_equal(dil.u[:, : dil.dim_in], dil.v)

    psi = rng.standard_normal((2, 1)) + 1j * rng.standard_normal((2, 1))
    psi /= np.linalg.norm(psi)
    embedded = np.zeros((dil.joint_dim, 1), dtype=complex)
    embedded[:2] = psi
    assert max_norm(dil.u @ embedded - dil.v @ psi) <= 1e-9


def test_dilated_state_matches_isometry(rng: np.random.Generator) -> None:
    dil = dilate(statistical_decomposition(random_hp_map(rng, 3, 2)))
    rho = random_state(rng, 3)
    joint = dilated_state(dil, rho)
    assert max_norm(joint - dil.v @ rho @ dil.v.conj().T) <= 1e-9
    assert np.trace(joint).real == pytest.approx(1.0)


def test_embed_input_rejects_wrong_dimension() -> None:
    dil = dilate(statistical_decomposition(identity_map(2)))
    with pytest.raises(InvalidInputError):
        embed_input(dil, np.eye(3, dtype=complex) / 3)


def test_empty_decomposition_cannot_be_dilated() -> None:
    with pytest.raises(InvalidInputError):
        dilate(StatisticalDecomposition(2, 2, (), ()))


def test_non_tp_instrument_is_rejected() -> None:
    half = LinearMap(2, 2, identity_map(2).choi / 2)
    dec = StatisticalDecomposition(2, 2, (1.0,), (half,))
    with pytest.raises(InvalidInputError, match="trace-preserving"):
        dilate(dec)


def test_partial_expectation_validates_inputs(
    ket0: ComplexMatrix,
) -> None:
    dil = dilate(statistical_decomposition(identity_map(2)))
    with pytest.raises(InvalidInputError):
        partial_expectation(dil, ket0, np.array([[0, 1], [0, 0]]))
    with pytest.raises(InvalidInputError):
        partial_expectation(dil, 2 * ket0, np.eye(2))


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    d_in=st.integers(2, 3),
    d_out=st.integers(2, 3),
)
def test_partial_expectation_reproduces_map(
    seed: int, d_in: int, d_out: int
) -> None:
    rng = np.random.default_rng(seed)
    lmap = random_hp_map(rng, d_in, d_out)
    dec = statistical_decomposition(lmap)
    dil = dilate(dec)

    assert max_norm(dil.v.conj().T @ dil.v - np.eye(d_in)) <= 1e-9
    assert max_norm(reduced_map(dil).choi - lmap.choi) <= 1e-9

    for _ in range(5):
        rho = random_state(rng, d_in)
        a = random_hermitian(rng, d_out)
        exact = expectation_value(lmap, rho, a).real
        assert abs(partial_expectation(dil, rho, a) - exact) <= 1e-8

        expected = [
            float(np.trace(apply_map(p, rho)).real) for p in dec.parts
        ]
        probs = outcome_probabilities(dil, rho)
        assert probs == pytest.approx(expected, abs=1e-9)
        assert sum(probs) == pytest.approx(1.0, abs=1e-9)


def test_channel_dilation_is_stinespring(rng: np.random.Generator) -> None:
    channel = random_cptp_map(rng, 2, 2, n_kraus=3)
    dil = dilate(statistical_decomposition(channel))
    assert dil.coefficients == (1.0,)
    assert dil.ancilla_dim == 3
    assert np.allclose(dil.z, np.eye(3))
