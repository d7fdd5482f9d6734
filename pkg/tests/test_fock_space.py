import numpy as np
import pytest

from picture_lab.fock_space import (
    FieldMismatchError,
    FockCapacityError,
    WavePacketError,
    anticommutator,
    anticommutator_defect,
    build_ladder_operators,
    charge_operator,
    current_operator,
    fock_hamiltonian,
    free_hamiltonian_operator,
    interaction_hamiltonian,
    packet_energy,
    prepare_wave_packet,
    symmetrized_bilinear,
    total_charge_operator,
    vacuum_state,
)
from picture_lab.lattice_model import Potential, PotentialError, build_hamiltonian

from conftest import PACKET, make_basis, make_field


@pytest.fixture(scope="module")
def small_field():
    return make_field(make_basis(n_sites=2, box_length=2.0))


def test_ladder_operators_annihilate_vacuum(field):
    ladder = field.ladder
    vacuum = vacuum_state(ladder)
    assert ladder.dim == 256
    assert np.linalg.norm(ladder.b(1).apply(vacuum)) == 0.0
    assert np.linalg.norm(ladder.d(1).apply(vacuum)) == 0.0


def test_ladder_anticommutators(field):
    ladder = field.ladder
    identity = np.eye(ladder.dim)
    operators = list(ladder.electrons) + list(ladder.positrons)
    for i, left in enumerate(operators):
        for j, right in enumerate(operators):
            mixed = anticommutator(left, right.adjoint()).dense()
            assert np.max(np.abs(mixed - (identity if i == j else 0.0))) <= 1e-12
            assert np.max(np.abs(anticommutator(left, right).dense())) <= 1e-12


def test_number_operator_spectrum(field):
    number = (field.ladder.b_dag(1) @ field.ladder.b(1)).dense()
    values = np.round(np.linalg.eigvalsh(number), 12)
    assert np.count_nonzero(values == 0.0) == 128
    assert np.count_nonzero(values == 1.0) == 128


def test_fock_capacity_cap():
    basis = make_basis(n_sites=4)
    with pytest.raises(FockCapacityError):
        build_ladder_operators(basis, max_sites=2)


def test_field_has_zero_vacuum_expectation(field):
    vacuum = vacuum_state(field.ladder)
    for index in range(field.n_components):
        assert abs(field.component_at(index).expectation(vacuum)) == 0.0


def test_field_anticommutators_full_pairs(field):
    assert anticommutator_defect(field) <= 1e-12
    assert field.coefficient_anticommutator_defect() <= 1e-12


def test_field_anticommutators_random_pairs_at_six_sites():
    field = make_field(make_basis(n_sites=6, box_length=6.0))
    rng = np.random.default_rng(11)
    pairs = [tuple(pair) for pair in rng.integers(0, field.n_components, size=(256, 2))]
    assert anticommutator_defect(field, pairs) <= 1e-12


def test_total_number_has_integer_spectrum(small_field):
    number = symmetrized_bilinear(small_field, np.eye(small_field.n_components))
    shifted = number.dense() + 0.5 * small_field.n_components * np.eye(small_field.ladder.dim)
    values = np.linalg.eigvalsh(shifted)
    assert np.allclose(values, np.round(values), atol=1e-12)
    assert values.min() == pytest.approx(0.0, abs=1e-12)
    assert values.max() == pytest.approx(small_field.n_components, abs=1e-12)


def test_bilinear_matches_normal_ordered_sum(small_field):
    rng = np.random.default_rng(5)
    size = small_field.n_components
    raw = rng.normal(size=(size, size)) + 1j * rng.normal(size=(size, size))
    kernel = raw + raw.conj().T
    a = small_field.config.spacing
    components = [small_field.component_at(i).dense() for i in range(size)]
    expected = sum(
        kernel[m, n] * a * (components[m].conj().T @ components[n])
        for m in range(size)
        for n in range(size)
    ) - 0.5 * np.trace(kernel) * np.eye(small_field.ladder.dim)
    result = symmetrized_bilinear(small_field, kernel)
    assert np.max(np.abs(result.dense() - expected)) <= 1e-10
    assert result.hermiticity_defect() <= 1e-12


def test_bilinear_rejects_wrong_kernel_shape(field):
    with pytest.raises(FieldMismatchError):
        symmetrized_bilinear(field, np.eye(3))


def test_h0_vacuum_and_spectrum(field, basis):
    vacuum = vacuum_state(field.ladder)
    raw = symmetrized_bilinear(field, basis.hamiltonian)
    assert raw.expectation(vacuum).real == pytest.approx(-np.sum(basis.energies), abs=1e-12)
    h0 = free_hamiltonian_operator(field)
    assert np.linalg.norm(h0.apply(vacuum)) <= 1e-12
    assert np.linalg.eigvalsh(h0.dense()).min() >= -1e-10
    one = field.ladder.b_dag(1).apply(vacuum)
    assert np.allclose(h0.apply(one), basis.energies[0] * one, atol=1e-12)


def test_h0_spectrum_is_sum_of_mode_energies(small_field):
    h0 = free_hamiltonian_operator(small_field)
    energies = np.concatenate([small_field.basis.energies] * 2)
    occupations = ((np.arange(2**4)[:, None] >> np.arange(4)) & 1).astype(float)
    expected = np.sort(occupations @ energies)
    assert np.allclose(np.linalg.eigvalsh(h0.dense()), expected, atol=1e-10)


def test_current_and_charge_vacuum_values(hopping_field, field):
    vacuum = vacuum_state(field.ladder)
    for site in range(4):
        assert abs(charge_operator(field, site).expectation(vacuum)) <= 1e-12
        assert abs(current_operator(hopping_field, site).expectation(vacuum)) <= 1e-12
        assert current_operator(field, site).hermiticity_defect() <= 1e-12


def test_spectral_vacuum_current_is_uniform(field):
    vacuum = vacuum_state(field.ladder)
    values = [current_operator(field, site).expectation(vacuum).real for site in range(4)]
    assert np.allclose(values, values[0], atol=1e-12)
    # carried by the unpaired momentum -pi/a alone
    assert abs(values[0]) == pytest.approx(np.pi / (4 * np.sqrt(1 + np.pi**2)), abs=1e-12)


def test_one_electron_carries_unit_charge(field):
    state = field.ladder.b_dag(2).apply(vacuum_state(field.ladder))
    a = field.config.spacing
    total = sum(a * charge_operator(field, site).expectation(state).real for site in range(4))
    assert total == pytest.approx(field.config.charge, abs=1e-12)
    assert total_charge_operator(field).expectation(state).real == pytest.approx(total, abs=1e-12)


def test_interaction_hamiltonian_zero_potential_is_h0(field):
    h = interaction_hamiltonian(field, (np.zeros(4), np.zeros(4)))
    assert h.distance(free_hamiltonian_operator(field)) == 0.0


def test_constant_scalar_potential_adds_charge(field):
    h = interaction_hamiltonian(field, Potential(scalar=np.full(4, 0.3), vector=np.zeros(4)))
    expected = free_hamiltonian_operator(field) + total_charge_operator(field) * 0.3
    assert h.distance(expected) <= 1e-12


def test_interaction_hamiltonian_matches_kernel_path(field):
    chi = 0.2 * np.cos(2 * np.pi * field.config.positions() / field.config.box_length)
    potential = Potential(scalar=0.1 * chi, vector=-np.gradient(chi))
    via_operators = interaction_hamiltonian(field, potential)
    via_kernel = fock_hamiltonian(field, build_hamiltonian(field.config, potential))
    assert via_operators.distance(via_kernel) <= 1e-12


def test_interaction_hamiltonian_rejects_complex_potential(field):
    with pytest.raises(PotentialError):
        interaction_hamiltonian(field, (np.zeros(4) + 1j, np.zeros(4)))


def test_wave_packet_energy(field, basis, packet_state):
    h0 = free_hamiltonian_operator(field)
    expected = (1 + np.sqrt(1 + (np.pi / 2) ** 2)) / 2
    assert np.linalg.norm(packet_state) == pytest.approx(1.0, abs=1e-12)
    assert h0.expectation(packet_state).real == pytest.approx(expected, abs=1e-12)
    assert packet_energy(basis, PACKET) == pytest.approx(expected, abs=1e-12)


def test_single_mode_packet(field, basis):
    state = prepare_wave_packet(basis, field.ladder, {1: 1.0})
    assert free_hamiltonian_operator(field).expectation(state).real == pytest.approx(basis.energies[0])


def test_wave_packet_rejects_bad_weights(field, basis):
    with pytest.raises(WavePacketError):
        prepare_wave_packet(basis, field.ladder, {1: 0.0})
    with pytest.raises(WavePacketError):
        prepare_wave_packet(basis, field.ladder, {9: 1.0})


def test_wave_packet_renormalizes(field, basis):
    state = prepare_wave_packet(basis, field.ladder, [2.0, 0.0, 0.0, 0.0])
    assert np.linalg.norm(state) == pytest.approx(1.0, abs=1e-12)
