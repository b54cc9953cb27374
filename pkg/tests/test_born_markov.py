"""
Tests for the Born memory equation, the Markov limit and the closed-form current
"""

import math

import numpy as np
import pytest

from bose_transport.born_markov import (
    _BornIntegrator,
    _resolvent_weights,
    analytic_current,
    born_stationary,
    born_time_series,
    build_kernel_table,
    free_bessel,
    markov_residual,
    markov_stationary,
    propagate_born,
    propagate_markov,
    reduced_result,
    reservoir_correlation,
    resolvent_weights,
)
from bose_transport.errors import (
    HistoryUnderrunError,
    SingularSystemError,
    UnsupportedInteractionError,
)
from bose_transport.model_core import (
    chain_eigenmodes,
    continuum_density,
    current_from_spdm,
    solve_continuum_chemical_potential,
)


def test_free_bessel_values():
    assert free_bessel(0.0) == pytest.approx(1.0)
    assert free_bessel(2.404825557695773) == pytest.approx(0.0, abs=1e-10)
    assert free_bessel(-3.0) == pytest.approx(free_bessel(3.0))


def test_reservoir_correlation(small_system):
    """F(0) is the ring density; F(-t) is the conjugate of F(t) and |F(t)| <= F(0)"""
    r = small_system.left
    mu = solve_continuum_chemical_potential(r)
    at_zero = reservoir_correlation(r, mu, 0.0)

    assert at_zero.real == pytest.approx(continuum_density(r, mu), rel=1e-9)
    assert at_zero.imag == pytest.approx(0.0, abs=1e-12)
    for t in (0.5, 3.0, 10.0):
        value = reservoir_correlation(r, mu, t)
        assert reservoir_correlation(r, mu, -t) == pytest.approx(value.conjugate(), abs=1e-10)
        assert abs(value) <= at_zero.real + 1e-12


def test_discrete_kernel_table(small_system):
    left, right = build_kernel_table(small_system, dt=0.05)

    assert left.side == "left" and right.side == "right"
    assert left.n_lags == int(math.ceil(40.0 / 0.5 / 0.05)) + 1
    assert left.dt == pytest.approx(0.05)
    assert left.jf_values[0] == pytest.approx(1.0)
    assert right.jf_values[0] == pytest.approx(0.1)
    assert left.j0_values[0] == pytest.approx(1.0)
    assert left.decay_weight[-1] == pytest.approx(math.exp(-20.0), rel=5e-2)


def test_continuum_kernel_table(small_system):
    left, _ = build_kernel_table(small_system, dt=0.5, mode="continuum", tau_max=5.0)
    mu = solve_continuum_chemical_potential(small_system.left)

    np.testing.assert_allclose(left.j0_values.real, free_bessel(left.tau_grid))
    for n in (0, 4, 10):
        expected = reservoir_correlation(small_system.left, mu, left.tau_grid[n])
        assert left.jf_values[n] == pytest.approx(expected, abs=1e-7)


def test_kernel_table_rejects_unknown_mode(small_system):
    with pytest.raises(ValueError, match="born.kernel"):
        build_kernel_table(small_system, dt=0.1, mode="exact")


def test_trapezoid_weights_match_closed_form(small_system):
    """Tabulated memory integrals converge to the ring resolvent"""
    left, _ = build_kernel_table(small_system, dt=0.01)
    omegas = chain_eigenmodes(small_system.chain).omegas
    wf, wg = _resolvent_weights(left, omegas)
    exact_f, exact_g = resolvent_weights(small_system.left, omegas)

    np.testing.assert_allclose(wf, exact_f, rtol=1e-3)
    np.testing.assert_allclose(wg, exact_g, rtol=1e-3)


def test_analytic_current_value(system_factory):
    s = system_factory(gamma=1.0, epsilon=1.0, nbar_left=1.0, nbar_right=0.1)
    assert analytic_current(s) == pytest.approx(0.225)
    assert analytic_current(s.with_gate(-1.3)) == pytest.approx(0.225)
    assert analytic_current(system_factory(nbar_left=0.3, nbar_right=0.3)) == 0.0


def test_analytic_current_requires_equal_gammas(system_factory):
    with pytest.raises(ValueError, match="gamma"):
        analytic_current(system_factory(gamma=0.1, gamma_right=0.2))


def test_markov_equilibrium_is_uniform(system_factory):
    s = system_factory(L=4, gamma=0.5, nbar_left=0.7, nbar_right=0.7)
    rho = markov_stationary(s).rho
    np.testing.assert_allclose(rho, 0.7 * np.eye(4), atol=1e-12)


@pytest.mark.parametrize("rate", [0.1, 0.5, 1.0, 2.0])
def test_markov_current_matches_closed_form(system_factory, rate):
    s = system_factory(L=5, M=20, gamma=1.0, epsilon=math.sqrt(rate))
    state = markov_stationary(s)

    assert markov_residual(s, state.rho) < 1e-10
    assert current_from_spdm(state.rho, s.chain) == pytest.approx(analytic_current(s), rel=1e-8)


def test_markov_forgets_the_initial_state(system_factory):
    s = system_factory(L=3, M=20, gamma=1.0, epsilon=1.0)
    full = 0.5 * np.eye(3, dtype=complex)
    (from_empty,) = propagate_markov(s, None, [200.0])
    (from_full,) = propagate_markov(s, full, [200.0])

    np.testing.assert_allclose(from_empty.rho, from_full.rho, atol=1e-10)
    np.testing.assert_allclose(from_empty.rho, markov_stationary(s).rho, atol=1e-10)


def test_uncoupled_born_matches_markov(system_factory):
    """At epsilon = 0 both reduced equations are the free chain evolution"""
    s = system_factory(L=3, M=20, gamma=0.5, epsilon=0.0)
    rho0 = np.array([[1.0, 0.2j, 0.0], [-0.2j, 0.5, 0.1], [0.0, 0.1, 0.0]], dtype=complex)
    tables = build_kernel_table(s, dt=0.01, tau_max=1.0)

    born = propagate_born(s, rho0, [0.0, 3.0], tables=tables)
    markov = propagate_markov(s, rho0, [0.0, 3.0])

    assert born[-1].t == pytest.approx(3.0)
    np.testing.assert_allclose(born[-1].rho, markov[-1].rho, atol=1e-10)
    assert np.trace(born[-1].rho).real == pytest.approx(1.5)


def test_born_propagation_reaches_fixed_point(system_factory):
    s = system_factory(L=2, M=20, gamma=1.0, beta=1.0, epsilon=0.6)
    tables = build_kernel_table(s)
    states = propagate_born(s, None, [0.0, 10.0, 150.0], tables=tables)
    fixed = born_stationary(s, tables=tables).rho

    assert len(states) == 3
    np.testing.assert_allclose(states[0].rho, 0.0)
    assert current_from_spdm(states[-1].rho, s.chain, atol=1e-6) == pytest.approx(
        current_from_spdm(fixed, s.chain), rel=2e-2
    )
    np.testing.assert_allclose(np.diag(states[-1].rho).real, np.diag(fixed).real, atol=1e-2)

    assert states[-1].history.shape[0] == max(table.n_lags for table in tables)

    rows = born_time_series(states, s)
    assert rows.shape == (3, 4)


def test_born_history_keeps_only_the_memory_window(system_factory):
    s = system_factory(L=2, M=20, gamma=1.0, beta=1.0, epsilon=0.6)
    tables = build_kernel_table(s, dt=0.05, tau_max=2.0)
    integrator = _BornIntegrator(s, tables)
    earlier, later = propagate_born(s, None, [29.95, 30.0], tables=tables)

    assert later.history.shape == (tables[0].n_lags, 2, 2)
    np.testing.assert_allclose(later.history[0], integrator.end_rows(later.rho), atol=1e-14)
    np.testing.assert_allclose(later.history[1], integrator.end_rows(earlier.rho), atol=1e-14)
    np.testing.assert_allclose(later.history[1:], earlier.history[:-1])


def test_born_fixed_point_is_converged_in_step_and_memory(system_factory):
    """At gamma = 0.2, beta = 10 halving dt or stretching the memory to 60 / gamma moves j by < 0.2%"""
    s = system_factory(L=5, M=200, gamma=0.2, beta=10.0, epsilon=0.4)
    reference = current_from_spdm(born_stationary(s).rho, s.chain)
    finer = current_from_spdm(born_stationary(s, dt=0.01).rho, s.chain)
    longer = current_from_spdm(
        born_stationary(s, tables=build_kernel_table(s, tau_max=300.0)).rho, s.chain
    )

    assert finer == pytest.approx(reference, rel=2e-3)
    assert longer == pytest.approx(reference, rel=1e-6)

def test_born_approaches_markov_for_fast_rings(system_factory):
    """For gamma large against the bandwidths Born reduces to Markov at equal eps^2 / gamma"""
    gaps = []
    for gamma in (2.0, 200.0):
        s = system_factory(L=3, M=50, gamma=gamma, beta=1.0, epsilon=math.sqrt(0.5 * gamma))
        born = current_from_spdm(born_stationary(s).rho, s.chain)
        markov = current_from_spdm(markov_stationary(s).rho, s.chain)
        gaps.append(abs(born - markov) / abs(markov))

    assert gaps[1] < gaps[0]
    assert gaps[1] < 0.03


def test_reduced_methods_reject_interaction(small_system):
    interacting = small_system.with_interaction(0.1)
    with pytest.raises(UnsupportedInteractionError):
        markov_stationary(interacting)
    with pytest.raises(UnsupportedInteractionError):
        propagate_born(interacting, None, [0.0])


def test_stationary_requires_coupling(system_factory):
    s = system_factory(L=2, M=20, gamma=1.0, epsilon=0.0)
    with pytest.raises(SingularSystemError):
        markov_stationary(s)
    with pytest.raises(SingularSystemError):
        born_stationary(s, dt=0.05)


def test_dissipator_needs_enough_history(small_system):
    tables = build_kernel_table(small_system, dt=0.1, tau_max=2.0)
    integrator = _BornIntegrator(small_system, tables)
    with pytest.raises(HistoryUnderrunError):
        integrator.dissipator(np.zeros((1, 2, 3), dtype=complex), 5)


def test_reduced_result_schema(system_factory):
    s = system_factory(L=4, gamma=1.0, epsilon=1.0)
    result = reduced_result(s, markov_stationary(s), "markov")
    document = result.to_dict()

    assert document["method"] == "markov"
    assert document["current"] == pytest.approx(analytic_current(s), rel=1e-8)
    np.testing.assert_allclose(document["bond_currents"], document["current"], rtol=1e-8)
