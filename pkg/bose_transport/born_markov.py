"""
Reduced dynamics of the chain SPDM with the rings traced out

Born (memory kernel) equation, in the ordering rho_{ij} = <a_i^dagger a_j>:

    d rho / dt = i [H_s, rho] + eps^2 sum_l (K_l + K_l^dagger),
    K_l(t) = P_l int_0^t dtau w(tau) [F_l(tau) - G_l(tau) rho(t - tau)] U_s(tau),

with w(tau) = exp(-gamma tau / 2) / 4, U_s(tau) = exp(-i H_s tau), F_l the
reservoir occupation correlation and G_l the free ring propagator. For large
gamma it reduces to the Markov equation with rate eps^2 / gamma.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy import integrate, linalg, special

from .errors import (
    HermiticityError,
    HistoryUnderrunError,
    QuadratureError,
    SingularSystemError,
    UnsupportedInteractionError,
)
from .exact_spdm import StationaryResult
from .model_core import (
    ReservoirSpec,
    SystemSpec,
    band_edge_breakpoints,
    band_occupation,
    bond_currents,
    chain_eigenmodes,
    chain_hamiltonian,
    current_from_spdm,
    ring_energies,
    solve_chemical_potential,
    solve_continuum_chemical_potential,
)

logger = logging.getLogger(__name__)

KernelMode = Literal["discrete", "continuum"]

# exp(-gamma tau_max / 2) = exp(-20)
MEMORY_DECAY_TIMES = 40.0
DT_SCALE = 0.02
HERMITICITY_DRIFT = 1e-6
_CHUNK = 2048


@dataclass(frozen=True)
class KernelTable:
    """
    Correlation functions of one reservoir on the uniform lag grid tau_n = n * dt

    jf_values holds F(tau) = <n_k exp(i E_k tau)> over the ring band and
    j0_values the free propagator <exp(i E_k tau)>, equal to J0(J_r tau) in the
    continuum limit. decay_weight is exp(-gamma tau / 2).
    """
    side: str
    gamma: float
    n_bar: float
    mode: str
    tau_grid: np.ndarray = field(repr=False)
    jf_values: np.ndarray = field(repr=False)
    j0_values: np.ndarray = field(repr=False)
    decay_weight: np.ndarray = field(repr=False)

    @property
    def dt(self) -> float:
        return float(self.tau_grid[1] - self.tau_grid[0])

    @property
    def n_lags(self) -> int:
        return self.tau_grid.size


@dataclass(frozen=True)
class ReducedState:
    """
    Chain SPDM with the stored end-site history

    history holds rows 1 and L of past rho values projected on the chain
    eigenmodes, most recent first, spaced by the integrator step.
    """
    rho: np.ndarray = field(repr=False)
    t: float
    history: np.ndarray | None = field(default=None, repr=False)


def free_bessel(tau) -> np.ndarray:
    """Zeroth-order Bessel function of the first kind"""
    return special.j0(tau)


def reservoir_correlation(r: ReservoirSpec, mu: float, t: float) -> complex:
    """
    Occupation correlation (1/2 pi) int dkappa n(kappa) exp(-i J_r cos(kappa) t) of an infinite ring

    Args:
        r (ReservoirSpec): Ring parameters (M is ignored)
        mu (float): Chemical potential of the continuum ring
        t (float): Time lag

    Returns:
        complex: Correlation value; real and equal to the density at t = 0

    Raises:
        QuadratureError: If either quadrature does not converge
    """
    breaks = band_edge_breakpoints(r, mu) or None
    parts = []
    for phase in (np.cos, np.sin):
        value, abserr = integrate.quad(
            lambda kappa: band_occupation(kappa, r, mu) * phase(r.J_r * np.cos(kappa) * t),
            0.0, np.pi, points=breaks, limit=1000, epsabs=1e-13, epsrel=1e-11,
        )
        if not np.isfinite(value) or abserr > 1e-7:
            raise QuadratureError(f"Reservoir correlation did not converge at t={t} (error {abserr:.2e})")
        parts.append(value / np.pi)
    return complex(parts[0], -parts[1])


def _mode_sum(tau: np.ndarray, energies: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """(1/M) sum_k weights_k exp(i E_k tau) for every tau"""
    out = np.empty(tau.size, dtype=complex)
    for start in range(0, tau.size, _CHUNK):
        chunk = tau[start:start + _CHUNK]
        out[start:start + _CHUNK] = np.exp(1j * np.outer(chunk, energies)) @ weights
    return out / energies.size


def _continuum_correlation(r: ReservoirSpec, mu: float, tau: np.ndarray) -> np.ndarray:
    def integrand(kappa):
        n = band_occupation(kappa, r, mu)
        phase = r.J_r * np.cos(kappa) * tau
        return np.concatenate([n * np.cos(phase), -n * np.sin(phase)])

    values, abserr = integrate.quad_vec(integrand, 0.0, np.pi, epsabs=1e-11, epsrel=1e-9,
                                       norm="max", limit=20000,
                                       points=band_edge_breakpoints(r, mu) or None)
    if not np.all(np.isfinite(values)) or abserr > 1e-6:
        raise QuadratureError(f"Continuum correlation table did not converge (error {abserr:.2e})")
    values = values / np.pi
    return values[:tau.size] + 1j * values[tau.size:]


def default_dt(s: SystemSpec) -> float:
    rates = (s.chain.J_s, s.left.J_r, s.right.J_r, s.left.gamma, s.right.gamma,
             abs(s.chain.delta) + s.chain.J_s)
    return DT_SCALE / max(rates)


def build_kernel_table(
    s: SystemSpec,
    dt: float | None = None,
    mode: KernelMode = "discrete",
    tau_max: float | None = None,
) -> tuple[KernelTable, KernelTable]:
    """
    Tabulate the reservoir correlations of both rings on the memory grid

    Args:
        s (SystemSpec): Parameter set
        dt (float, optional): Lag spacing; the Born integrator uses the same step
        mode (KernelMode): 'discrete' sums over the M ring modes, 'continuum' uses
            the infinite-ring quadrature and the Bessel propagator
        tau_max (float, optional): Memory cut-off; 40 / gamma by default

    Returns:
        tuple[KernelTable, KernelTable]: Left and right tables
    """
    if mode not in ("discrete", "continuum"):
        raise ValueError(f"born.kernel must be 'discrete' or 'continuum' (got {mode})")
    step = dt if dt is not None else default_dt(s)
    tables = []
    for r in s.reservoirs:
        cutoff = tau_max if tau_max is not None else MEMORY_DECAY_TIMES / r.gamma
        n_lags = int(math.ceil(cutoff / step)) + 1
        tau = step * np.arange(n_lags)
        if mode == "discrete":
            energies = ring_energies(r)
            occupations = solve_chemical_potential(r).occupations
            jf = _mode_sum(tau, energies, occupations)
            j0 = _mode_sum(tau, energies, np.ones(r.M))
        else:
            mu = solve_continuum_chemical_potential(r)
            jf = _continuum_correlation(r, mu, tau)
            j0 = free_bessel(r.J_r * tau).astype(complex)
        tables.append(KernelTable(
            side=r.side, gamma=r.gamma, n_bar=r.n_bar, mode=mode, tau_grid=tau,
            jf_values=jf, j0_values=j0, decay_weight=np.exp(-0.5 * r.gamma * tau),
        ))
        logger.debug(f"{r.side} kernel table: {n_lags} lags up to tau={tau[-1]:.4g} ({mode})")
    return tables[0], tables[1]


def _check_reduced(s: SystemSpec) -> None:
    if s.chain.U != 0:
        raise UnsupportedInteractionError(
            f"The reduced master equations require U = 0 (got U={s.chain.U}); "
            "use the langevin method for interacting bosons"
        )


def _check_state(rho: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(rho)):
        raise HermiticityError(f"Non-finite reduced SPDM at t={t}")
    drift = float(np.max(np.abs(rho - rho.conj().T)))
    if drift > HERMITICITY_DRIFT:
        raise HermiticityError(f"Hermiticity drift {drift:.3e} of the reduced SPDM at t={t}")


def _as_matrix(rho0, L: int) -> tuple[np.ndarray, float]:
    if rho0 is None:
        return np.zeros((L, L), dtype=complex), 0.0
    if isinstance(rho0, ReducedState):
        return np.array(rho0.rho, dtype=complex), rho0.t
    rho = np.array(rho0, dtype=complex)
    if rho.shape != (L, L):
        raise ValueError(f"Initial chain SPDM has shape {rho.shape}, expected {(L, L)}")
    return rho, 0.0


class _BornIntegrator:
    """
    Exponential trapezoid scheme for the memory equation

    The unitary part is applied exactly; the dissipator is integrated with a
    trapezoid predictor-corrector, and the lag integrals use the trapezoid rule
    on the stored history. Only rows 1 and L of rho enter the memory, and they
    are kept in the chain eigenbasis so each lag costs O(L).
    """

    def __init__(self, s: SystemSpec, tables: tuple[KernelTable, KernelTable]):
        self.s = s
        self.dt = tables[0].dt
        if abs(tables[1].dt - self.dt) > 1e-12 * self.dt:
            raise ValueError("left and right kernel tables must share the lag spacing")
        L = s.chain.L
        eig = chain_eigenmodes(s.chain)
        self.modes = eig.modes
        self.eps2 = s.epsilon ** 2
        self.ends = (0, L - 1)
        self.propagator = linalg.expm(1j * chain_hamiltonian(s.chain) * self.dt)

        self.memory = []
        self.source = []
        for table in tables:
            phase = np.exp(-1j * np.outer(table.tau_grid, eig.omegas))
            weight = 0.25 * table.decay_weight[:, None] * phase
            self.memory.append(weight * table.j0_values[:, None])
            self.source.append(integrate.cumulative_trapezoid(
                weight * table.jf_values[:, None], dx=self.dt, axis=0, initial=0.0))
        self.n_lags = [table.n_lags for table in tables]

    def unitary(self, rho: np.ndarray) -> np.ndarray:
        return self.propagator @ rho @ self.propagator.conj().T

    def end_rows(self, rho: np.ndarray) -> np.ndarray:
        return np.stack([rho[p] @ self.modes for p in self.ends])

    def dissipator(self, history: np.ndarray, n: int) -> np.ndarray:
        """eps^2 sum_l (K_l + K_l^dagger) at step n; history[m] is step n - m"""
        L = self.s.chain.L
        D = np.zeros((L, L), dtype=complex)
        for side, p in enumerate(self.ends):
            count = min(n, self.n_lags[side] - 1) + 1
            if history.shape[0] < count:
                raise HistoryUnderrunError(
                    f"Memory integral needs {count} past states but only {history.shape[0]} are stored"
                )
            kernel = self.memory[side][:count] * history[:count, side]
            if count > 1:
                lag_sum = self.dt * (kernel.sum(axis=0) - 0.5 * (kernel[0] + kernel[-1]))
            else:
                lag_sum = np.zeros(L, dtype=complex)
            row = (self.source[side][count - 1] * self.modes[p] - lag_sum) @ self.modes.T
            D[p] += row
        return self.eps2 * (D + D.conj().T)


def propagate_born(
    s: SystemSpec,
    rho0=None,
    t_grid: Sequence[float] = (),
    dt: float | None = None,
    kernel: KernelMode = "discrete",
    tables: tuple[KernelTable, KernelTable] | None = None,
) -> list[ReducedState]:
    """
    Integrate the Born memory equation for the chain SPDM

    The chain starts at t = 0 uncorrelated with the rings. Output times are
    rounded to the nearest integrator step.

    Args:
        s (SystemSpec): Parameter set with U = 0
        rho0 (np.ndarray | ReducedState, optional): Initial chain SPDM; empty chain by default
        t_grid (Sequence[float]): Ascending output times
        dt (float, optional): Integrator and lag step
        kernel (KernelMode): Correlation tables to build when none are given
        tables (tuple[KernelTable, KernelTable], optional): Precomputed tables

    Returns:
        list[ReducedState]: States at the output times

    Raises:
        UnsupportedInteractionError: If U != 0
        HermiticityError: If the state drifts from Hermiticity
    """
    _check_reduced(s)
    tables = tables or build_kernel_table(s, dt, kernel)
    integrator = _BornIntegrator(s, tables)
    step = integrator.dt

    rho, t0 = _as_matrix(rho0, s.chain.L)
    times = np.asarray(t_grid, dtype=float)
    if times.size and (times[0] < t0 or np.any(np.diff(times) < 0)):
        raise ValueError("t_grid must be ascending and start at or after the initial time")
    targets = np.rint((times - t0) / step).astype(int) if times.size else np.array([], dtype=int)

    # ring buffer of the last n_keep end rows; step n lives at index n % n_keep
    n_keep = max(integrator.n_lags)
    history = np.zeros((n_keep, 2, s.chain.L), dtype=complex)
    history[0] = integrator.end_rows(rho)

    def recent(n: int) -> np.ndarray:
        return history[(n - np.arange(min(n + 1, n_keep))) % n_keep]

    states = []
    target_iter = iter(targets)
    next_target = next(target_iter, None)
    n = 0
    while next_target is not None:
        while next_target is not None and next_target == n:
            t = t0 + n * step
            _check_state(rho, t)
            states.append(ReducedState(rho=rho.copy(), t=t, history=recent(n).copy()))
            next_target = next(target_iter, None)
        if next_target is None:
            break

        d_now = integrator.dissipator(recent(n), n)
        base = integrator.unitary(rho + 0.5 * step * d_now)
        history[(n + 1) % n_keep] = integrator.end_rows(integrator.unitary(rho + step * d_now))
        d_pred = integrator.dissipator(recent(n + 1), n + 1)
        rho = base + 0.5 * step * d_pred
        history[(n + 1) % n_keep] = integrator.end_rows(rho)
        n += 1

    logger.info(f"Born propagation to t={t0 + n * step:.4g} in {n} steps (dt={step:.4g})")
    return states


def _resolvent_weights(table: KernelTable, omegas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Trapezoid values of int w(tau) {F, G}(tau) exp(-i omega tau) dtau over the table"""
    phase = np.exp(-1j * np.outer(table.tau_grid, omegas))
    weight = 0.25 * table.decay_weight[:, None] * phase
    wf = integrate.trapezoid(weight * table.jf_values[:, None], dx=table.dt, axis=0)
    wg = integrate.trapezoid(weight * table.j0_values[:, None], dx=table.dt, axis=0)
    return wf, wg


def resolvent_weights(r: ReservoirSpec, omegas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Closed-form infinite-memory weights of a finite ring

    Returns (1/4)<n_k / (gamma/2 + i(omega - E_k))> and (1/4)<1 / (gamma/2 + i(omega - E_k))>
    over the ring modes for every omega.
    """
    energies = ring_energies(r)
    occupations = solve_chemical_potential(r).occupations
    denominators = 0.5 * r.gamma + 1j * (np.asarray(omegas)[:, None] - energies[None, :])
    wf = 0.25 * np.mean(occupations / denominators, axis=1)
    wg = 0.25 * np.mean(1.0 / denominators, axis=1)
    return wf, wg


def born_stationary(
    s: SystemSpec,
    dt: float | None = None,
    kernel: KernelMode = "discrete",
    tables: tuple[KernelTable, KernelTable] | None = None,
) -> ReducedState:
    """
    Long-time fixed point of the Born equation

    With rho constant the lag integrals become the constant matrices
    S_l = Phi diag(wf) Phi^T and W_l = Phi diag(wg) Phi^T, and the stationary
    condition i[H, rho] - eps^2 sum_l (P_l rho W_l + W_l^dagger rho P_l)
    = -eps^2 sum_l (P_l S_l + S_l^dagger P_l) is solved as an L^2 linear system.

    Raises:
        SingularSystemError: If epsilon = 0 or the linear system is singular
    """
    _check_reduced(s)
    if s.epsilon <= 0:
        raise SingularSystemError("Born fixed point is not unique at epsilon = 0")
    tables = tables or build_kernel_table(s, dt, kernel)
    L = s.chain.L
    eig = chain_eigenmodes(s.chain)
    phi = eig.modes
    H = chain_hamiltonian(s.chain)
    identity = np.eye(L)
    eps2 = s.epsilon ** 2

    system = 1j * np.kron(H, identity) - 1j * np.kron(identity, H.T)
    rhs = np.zeros((L, L), dtype=complex)
    for table, p in zip(tables, (0, L - 1)):
        wf, wg = _resolvent_weights(table, eig.omegas)
        S = (phi * wf) @ phi.T
        W = (phi * wg) @ phi.T
        P = np.zeros((L, L))
        P[p, p] = 1.0
        system -= eps2 * (np.kron(P, W.T) + np.kron(W.conj().T, P))
        rhs -= eps2 * (P @ S + S.conj().T @ P)

    try:
        vec = linalg.solve(system, rhs.reshape(-1))
    except (linalg.LinAlgError, ValueError) as e:
        raise SingularSystemError(f"Born stationary solve failed: {str(e)}") from e
    rho = vec.reshape(L, L)
    rho = 0.5 * (rho + rho.conj().T)
    residual = float(np.linalg.norm(system @ rho.reshape(-1) - rhs.reshape(-1))
                     / max(np.linalg.norm(rhs), 1e-300))
    logger.info(f"Born stationary state solved (residual {residual:.3e})")
    return ReducedState(rho=rho, t=math.inf)


def _markov_generator(s: SystemSpec) -> tuple[np.ndarray, np.ndarray]:
    """A = i H - (1/2) diag(rates) and the source diag(rate * nbar) at the end sites"""
    L = s.chain.L
    rates = np.zeros(L)
    source = np.zeros(L)
    for r, p in zip(s.reservoirs, (0, L - 1)):
        rate = s.epsilon ** 2 / r.gamma
        rates[p] += rate
        source[p] += rate * r.n_bar
    A = 1j * chain_hamiltonian(s.chain) - 0.5 * np.diag(rates)
    return A, np.diag(source).astype(complex)


def markov_stationary(s: SystemSpec) -> ReducedState:
    """
    Fixed point of the Markov equation by a Bartels-Stewart Lyapunov solve

    Raises:
        SingularSystemError: If epsilon = 0
    """
    _check_reduced(s)
    if s.epsilon <= 0:
        raise SingularSystemError("Markov fixed point is not unique at epsilon = 0")
    A, Q = _markov_generator(s)
    try:
        rho = linalg.solve_continuous_lyapunov(A, -Q)
    except (linalg.LinAlgError, ValueError) as e:
        raise SingularSystemError(f"Markov Lyapunov solve failed: {str(e)}") from e
    return ReducedState(rho=0.5 * (rho + rho.conj().T), t=math.inf)


def markov_residual(s: SystemSpec, rho: np.ndarray) -> float:
    A, Q = _markov_generator(s)
    res = A @ rho + rho @ A.conj().T + Q
    scale = np.linalg.norm(Q)
    return float(np.linalg.norm(res) / scale) if scale > 0 else float(np.linalg.norm(res))


def propagate_markov(s: SystemSpec, rho0=None, t_grid: Sequence[float] = ()) -> list[ReducedState]:
    """
    Markov evolution rho(t) = rho_inf + exp(A t)(rho0 - rho_inf) exp(A^dagger t)

    The propagation is exact for any output times. With epsilon = 0 the
    evolution is unitary.

    Args:
        s (SystemSpec): Parameter set with U = 0
        rho0 (np.ndarray | ReducedState, optional): Initial chain SPDM; empty chain by default
        t_grid (Sequence[float]): Ascending output times

    Returns:
        list[ReducedState]: States at the output times
    """
    _check_reduced(s)
    rho, t0 = _as_matrix(rho0, s.chain.L)
    A, _ = _markov_generator(s)
    fixed = markov_stationary(s).rho if s.epsilon > 0 else np.zeros_like(rho)
    deviation = rho - fixed

    states = []
    for t in np.asarray(t_grid, dtype=float):
        if t < t0:
            raise ValueError("t_grid must start at or after the initial time")
        E = linalg.expm(A * (t - t0))
        current = fixed + E @ deviation @ E.conj().T
        _check_state(current, float(t))
        states.append(ReducedState(rho=current, t=float(t)))
    logger.debug(f"Markov propagation evaluated at {len(states)} times")
    return states


def analytic_current(s: SystemSpec) -> float:
    """
    Closed-form stationary current of the Markov equation

    j = J_s (J_s g / (J_s^2 + g^2)) (nbar_L - nbar_R) / 2 with g = eps^2 / gamma.
    It does not depend on L or delta.

    Raises:
        ValueError: If the two rings have different gamma
    """
    if s.left.gamma != s.right.gamma:
        raise ValueError("analytic current needs left.gamma == right.gamma")
    J = s.chain.J_s
    rate = s.epsilon ** 2 / s.left.gamma
    if rate == 0:
        return 0.0
    return J * (J * rate / (J ** 2 + rate ** 2)) * (s.left.n_bar - s.right.n_bar) / 2.0


def reduced_result(s: SystemSpec, state: ReducedState, method: str, residual: float = 0.0) -> StationaryResult:
    """Stationary chain observables in the same schema as the exact solver"""
    return StationaryResult(
        params=s.to_dict(),
        current=current_from_spdm(state.rho, s.chain),
        chain_occupations=np.real(np.diag(state.rho)).tolist(),
        residual=residual,
        bond_currents=bond_currents(state.rho, s.chain.J_s).tolist(),
        method=method,
    )


def born_time_series(states: Sequence[ReducedState], s: SystemSpec) -> np.ndarray:
    """Rows (t, j, n_1..n_L) for the time-series CSV"""
    return np.array([
        [state.t, current_from_spdm(state.rho, s.chain, atol=HERMITICITY_DRIFT),
         *np.real(np.diag(state.rho))]
        for state in states
    ])
