"""
Tests for ring spectra, thermal occupations, chain modes and the current operator
"""

import math

import numpy as np
import pytest

from bose_transport.errors import ChemicalPotentialError, HermiticityError
from bose_transport.model_core import (
    ChainSpec,
    ReservoirSpec,
    bond_currents,
    bose_einstein_occupation,
    chain_eigenmodes,
    chain_hamiltonian,
    check_hermitian,
    continuum_density,
    current_from_spdm,
    current_operator,
    expected_resonances,
    interaction_from_g,
    ring_density,
    ring_energies,
    ring_size_for,
    solve_chemical_potential,
    solve_continuum_chemical_potential,
)


def test_ring_energies_band():
    """Ring energies fill [-J_r, J_r] with the band minimum at k = M"""
    r = ReservoirSpec(gamma=0.1, beta=1.0, n_bar=1.0, M=8, J_r=2.0)
    energies = ring_energies(r)

    assert energies.shape == (8,)
    assert energies[-1] == pytest.approx(-2.0)
    assert energies[3] == pytest.approx(2.0)
    assert np.all(np.abs(energies) <= 2.0 + 1e-12)


def test_bose_einstein_occupation_positive():
    """Occupations are positive and decrease with energy"""
    occupations = bose_einstein_occupation(np.linspace(-1, 1, 11), beta=2.0, mu=1.5)
    assert np.all(occupations > 0)
    assert np.all(np.diff(occupations) < 0)


@pytest.mark.parametrize("beta,n_bar", [(0.1, 1.0), (1.0, 0.1), (10.0, 1.0), (1.0, 5.0)])
def test_solve_chemical_potential_density(beta, n_bar):
    """The solved mu reproduces the target density to 1e-10"""
    r = ReservoirSpec(gamma=0.1, beta=beta, n_bar=n_bar, M=200)
    thermal = solve_chemical_potential(r)

    assert thermal.mu > r.J_r
    assert abs(thermal.density - n_bar) <= 1e-10 * n_bar
    assert np.all(thermal.occupations > 0)
    assert ring_density(r, thermal.mu) == pytest.approx(n_bar, rel=1e-10)


def test_solve_chemical_potential_without_bracket(mocker):
    """A density the ring cannot hold raises ChemicalPotentialError"""
    mocker.patch('bose_transport.model_core.ring_density', return_value=0.0)
    r = ReservoirSpec(gamma=0.1, beta=1.0, n_bar=1.0, M=10)

    with pytest.raises(ChemicalPotentialError):
        solve_chemical_potential(r)


def test_continuum_density_matches_large_ring():
    """A large ring sums the occupations like the Brillouin-zone integral"""
    r = ReservoirSpec(gamma=0.1, beta=1.0, n_bar=1.0, M=2000)
    mu = r.J_r + 0.5
    assert ring_density(r, mu) == pytest.approx(continuum_density(r, mu), rel=1e-8)


@pytest.mark.parametrize("beta,n_bar", [(0.1, 1.0), (1.0, 0.5), (10.0, 1.0)])
def test_continuum_chemical_potential(beta, n_bar):
    r = ReservoirSpec(gamma=0.1, beta=beta, n_bar=n_bar, M=50)
    mu = solve_continuum_chemical_potential(r)

    assert mu > r.J_r
    assert continuum_density(r, mu) == pytest.approx(n_bar, rel=1e-9)


def test_continuum_density_near_band_edge():
    """Close to mu = J_r the density follows 1 / (2 beta sqrt(gap J_r / 2))"""
    r = ReservoirSpec(gamma=0.1, beta=1.0, n_bar=1.0, M=50)
    gap = 1e-10
    expected = 1.0 / (2.0 * r.beta * math.sqrt(0.5 * gap * r.J_r))

    assert continuum_density(r, r.J_r + gap) == pytest.approx(expected, rel=1e-3)
    with pytest.raises(ValueError, match="mu > J_r"):
        continuum_density(r, r.J_r)


def test_chain_eigenvalues_closed_form():
    """Chain eigenvalues equal delta - J_s cos(pi i / (L + 1))"""
    chain = ChainSpec(L=7, J_s=1.3, delta=0.25)
    eig = chain_eigenmodes(chain)
    expected = 0.25 - 1.3 * np.cos(np.pi * np.arange(1, 8) / 8)

    np.testing.assert_allclose(eig.omegas, np.sort(expected), atol=1e-10)
    np.testing.assert_allclose(eig.modes.T @ eig.modes, np.eye(7), atol=1e-12)
    np.testing.assert_allclose(
        chain_hamiltonian(chain) @ eig.modes, eig.modes * eig.omegas, atol=1e-12
    )


def test_eigenmodes_do_not_depend_on_gate():
    chain = ChainSpec(L=4)
    shifted = ChainSpec(L=4, delta=-2.0)
    np.testing.assert_allclose(chain_eigenmodes(chain).modes, chain_eigenmodes(shifted).modes)
    np.testing.assert_allclose(chain_eigenmodes(shifted).omegas, chain_eigenmodes(chain).omegas - 2.0)


def test_expected_resonances():
    """Resonant gate voltages -(omega_i + J_r) for L = 5"""
    resonances = expected_resonances(ChainSpec(L=5, delta=0.7), J_r=1.0)
    omegas = -np.cos(np.pi * np.arange(1, 6) / 6)
    np.testing.assert_allclose(resonances, np.sort(-(omegas + 1.0)), atol=1e-12)


def test_current_operator_hermitian():
    j = current_operator(4, 1.0)
    np.testing.assert_allclose(j, j.conj().T)


def test_current_from_spdm_sign():
    """Positive Im rho_12 gives a positive (left to right) current"""
    rho = np.array([[1.0, 0.1j], [-0.1j, 0.5]])
    chain = ChainSpec(L=2, J_s=1.0)

    assert current_from_spdm(rho, chain) == pytest.approx(0.1)
    np.testing.assert_allclose(bond_currents(rho, 1.0), [0.1])


def test_current_from_spdm_rejects_non_hermitian():
    rho = np.array([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(HermiticityError):
        current_from_spdm(rho, ChainSpec(L=2))
    with pytest.raises(HermiticityError):
        check_hermitian(rho)


def test_invalid_parameters_name_the_key():
    with pytest.raises(ValueError, match="chain.L"):
        ChainSpec(L=1)
    with pytest.raises(ValueError, match="left.gamma"):
        ReservoirSpec(gamma=0.0, beta=1.0, n_bar=1.0)
    with pytest.raises(ValueError, match="right.nbar"):
        ReservoirSpec(gamma=0.1, beta=1.0, n_bar=-1.0, side="right")


def test_interaction_from_g():
    assert interaction_from_g(0.1, 2.0) == pytest.approx(0.05)
    with pytest.raises(ValueError):
        interaction_from_g(0.1, 0.0)


def test_system_copies(small_system):
    gated = small_system.with_gate(-1.5)
    assert gated.chain.delta == -1.5
    assert small_system.chain.delta == 0.0

    assert small_system.with_interaction(0.2).chain.U == 0.2
    both = small_system.with_gamma(2.0)
    assert both.left.gamma == both.right.gamma == 2.0

    params = small_system.to_dict()
    assert params["chain.L"] == 3
    assert params["right.nbar"] == 0.1


def test_ring_size_for():
    """Level spacing 2 pi J_r / M stays below gamma / 2"""
    assert ring_size_for(0.01) == 1257
    assert ring_size_for(0.1) == 200
    assert ring_size_for(0.5, minimum=10) == 26
    assert ring_size_for(0.01, J_r=2.0) == 2514
    with pytest.raises(ValueError):
        ring_size_for(0.0)


def test_ring_sizes_follow_gamma(system_factory):
    s = system_factory(gamma=0.01, M=200, gamma_right=0.05)
    sized = s.with_ring_sizes_for_gamma()

    assert sized.left.M == 1257
    assert sized.right.M == 252
    assert system_factory(gamma=1.0, M=300).with_ring_sizes_for_gamma().left.M == 300
