"""
Exact (U = 0) dynamics of the total single-particle density matrix

All matrices use the ordering rho_{ij} = <c_i^dagger c_j> over the modes laid
out as [left ring | chain | right ring]. In this ordering the equation of
motion is

    d rho / dt = A rho + rho A^dagger + gamma N,    A = i h - (gamma / 2) P,

with P the projector on ring modes and N the diagonal of target occupations.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from .errors import HermiticityError, NumericalError, SingularSystemError, UnsupportedInteractionError
from .model_core import (
    SystemSpec,
    ThermalOccupations,
    bond_currents,
    chain_hamiltonian,
    current_from_spdm,
    ring_energies,
    solve_chemical_potential,
)

logger = logging.getLogger(__name__)

HERMITICITY_DRIFT = 1e-6
STATIONARY_RESIDUAL = 1e-8
# dt <= DT_SCALE / max(J_s, J_r, gamma)
DT_SCALE = 0.02


@dataclass(frozen=True)
class TotalGenerator:
    """Hamiltonian, damping and injection of the (M + L + M)-mode problem"""
    system: SystemSpec
    h: np.ndarray = field(repr=False)
    damping: np.ndarray = field(repr=False)
    injection: np.ndarray = field(repr=False)
    thermal: tuple[ThermalOccupations, ThermalOccupations] = field(repr=False)

    @property
    def size(self) -> int:
        return self.h.shape[0]

    @property
    def layout(self) -> tuple[int, int, int]:
        return (self.system.left.M, self.system.chain.L, self.system.right.M)

    @property
    def drift(self) -> np.ndarray:
        """The matrix A = i h - diag(damping)"""
        return 1j * self.h - np.diag(self.damping)

    def max_rate(self) -> float:
        s = self.system
        return max(s.chain.J_s, s.left.J_r, s.right.J_r, s.left.gamma, s.right.gamma)


@dataclass(frozen=True)
class TotalSPDM:
    rho: np.ndarray = field(repr=False)
    t: float
    layout: tuple[int, int, int]


@dataclass
class StationaryResult:
    """Stationary chain observables in the JSON result schema"""
    params: dict
    current: float
    chain_occupations: list[float]
    residual: float
    bond_currents: list[float] = field(default_factory=list)
    method: str = "exact"

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "params": self.params,
            "current": self.current,
            "chain_occupations": self.chain_occupations,
            "bond_currents": self.bond_currents,
            "residual": self.residual,
        }


def build_total_generator(s: SystemSpec) -> TotalGenerator:
    """
    Assemble the single-particle generator of chain plus both rings

    Args:
        s (SystemSpec): Full parameter set; U must be zero

    Returns:
        TotalGenerator: Hermitian h, ring damping gamma/2 and injection gamma * n_k

    Raises:
        UnsupportedInteractionError: If the chain is interacting
    """
    if s.chain.U != 0:
        raise UnsupportedInteractionError(
            f"The exact SPDM method requires U = 0 (got U={s.chain.U}); "
            "use the langevin method for interacting bosons"
        )

    M_left, L, M_right = s.left.M, s.chain.L, s.right.M
    size = M_left + L + M_right
    chain = slice(M_left, M_left + L)
    right = slice(M_left + L, size)

    h = np.zeros((size, size))
    h[:M_left, :M_left] = np.diag(ring_energies(s.left))
    h[right, right] = np.diag(ring_energies(s.right))
    h[chain, chain] = chain_hamiltonian(s.chain)

    first, last = M_left, M_left + L - 1
    h[first, :M_left] = h[:M_left, first] = -s.epsilon / (2.0 * math.sqrt(M_left))
    h[last, right] = h[right, last] = -s.epsilon / (2.0 * math.sqrt(M_right))

    thermal_left = solve_chemical_potential(s.left)
    thermal_right = solve_chemical_potential(s.right)

    damping = np.zeros(size)
    damping[:M_left] = s.left.gamma / 2.0
    damping[right] = s.right.gamma / 2.0

    injection = np.zeros(size)
    injection[:M_left] = s.left.gamma * thermal_left.occupations
    injection[right] = s.right.gamma * thermal_right.occupations

    logger.info(
        f"Built total generator of size {size} (L={L}, M={M_left}+{M_right}, eps={s.epsilon})"
    )
    return TotalGenerator(
        system=s, h=h, damping=damping, injection=injection,
        thermal=(thermal_left, thermal_right),
    )


def thermal_initial_state(gen: TotalGenerator, t0: float = 0.0) -> TotalSPDM:
    """Empty chain with both rings at their thermal occupations"""
    occupations = np.zeros(gen.size)
    rings = gen.damping > 0
    occupations[rings] = gen.injection[rings] / (2.0 * gen.damping[rings])
    return TotalSPDM(rho=np.diag(occupations).astype(complex), t=t0, layout=gen.layout)


def _rhs(A: np.ndarray, source: np.ndarray, rho: np.ndarray) -> np.ndarray:
    out = A @ rho + rho @ A.conj().T
    out[np.diag_indices_from(out)] += source
    return out


def _rk4_step(A: np.ndarray, source: np.ndarray, rho: np.ndarray, dt: float) -> np.ndarray:
    k1 = _rhs(A, source, rho)
    k2 = _rhs(A, source, rho + 0.5 * dt * k1)
    k3 = _rhs(A, source, rho + 0.5 * dt * k2)
    k4 = _rhs(A, source, rho + dt * k3)
    return rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check_drift(rho: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(rho)):
        raise HermiticityError(f"Non-finite density matrix at t={t}; reduce the step size")
    drift = float(np.max(np.abs(rho - rho.conj().T)))
    if drift > HERMITICITY_DRIFT:
        raise HermiticityError(
            f"Hermiticity drift {drift:.3e} at t={t} exceeds {HERMITICITY_DRIFT}; reduce the step size"
        )


def propagate(
    gen: TotalGenerator,
    rho0: TotalSPDM,
    t_grid: Sequence[float],
    dt: float | None = None,
) -> list[TotalSPDM]:
    """
    Integrate the total SPDM with classical fourth-order Runge-Kutta steps

    Args:
        gen (TotalGenerator): Generator of the dynamics
        rho0 (TotalSPDM): Initial state; rho0.t must not exceed t_grid[0]
        t_grid (Sequence[float]): Ascending output times
        dt (float, optional): Step size; defaults to 0.02 / max(J_s, J_r, gamma)

    Returns:
        list[TotalSPDM]: States at the requested times

    Raises:
        HermiticityError: If the state drifts from Hermiticity (step too large)
    """
    times = np.asarray(t_grid, dtype=float)
    if times.size and (times[0] < rho0.t or np.any(np.diff(times) < 0)):
        raise ValueError("t_grid must be ascending and start at or after rho0.t")
    if rho0.rho.shape != (gen.size, gen.size):
        raise ValueError(f"Initial state has shape {rho0.rho.shape}, expected {(gen.size, gen.size)}")

    dt_max = dt if dt is not None else DT_SCALE / gen.max_rate()
    A = gen.drift
    rho = np.array(rho0.rho, dtype=complex)
    _check_drift(rho, rho0.t)
    t = rho0.t

    states = []
    for t_next in times:
        n_steps = int(math.ceil((t_next - t) / dt_max - 1e-12))
        if n_steps > 0:
            step = (t_next - t) / n_steps
            for _ in range(n_steps):
                rho = _rk4_step(A, gen.injection, rho, step)
            _check_drift(rho, t_next)
        t = float(t_next)
        states.append(TotalSPDM(rho=rho.copy(), t=t, layout=gen.layout))
    logger.debug(f"Propagated total SPDM to t={t} with dt<={dt_max:.4g}")
    return states


def stationary(gen: TotalGenerator) -> TotalSPDM:
    """
    Solve A rho + rho A^dagger + gamma N = 0 by a dense Bartels-Stewart solve

    Args:
        gen (TotalGenerator): Generator with gamma > 0 and epsilon > 0

    Returns:
        TotalSPDM: Stationary state (t = inf)

    Raises:
        SingularSystemError: If the fixed point is not unique
    """
    if gen.system.epsilon <= 0:
        raise SingularSystemError(
            "Stationary state is not unique at epsilon = 0: the chain block is conserved"
        )
    A = gen.drift
    source = np.diag(gen.injection).astype(complex)
    try:
        rho = linalg.solve_continuous_lyapunov(A, -source)
    except (linalg.LinAlgError, ValueError) as e:
        raise SingularSystemError(f"Lyapunov solve failed: {str(e)}") from e

    rho = 0.5 * (rho + rho.conj().T)
    residual = lyapunov_residual(gen, rho)
    if not np.isfinite(residual) or residual > STATIONARY_RESIDUAL:
        raise SingularSystemError(f"Stationary residual {residual:.3e} exceeds {STATIONARY_RESIDUAL}")
    logger.info(f"Stationary total SPDM solved (residual {residual:.3e})")
    return TotalSPDM(rho=rho, t=math.inf, layout=gen.layout)


def lyapunov_residual(gen: TotalGenerator, rho: np.ndarray) -> float:
    """Relative residual ||A rho + rho A^dagger + gamma N|| / ||gamma N||"""
    res = _rhs(gen.drift, gen.injection, rho)
    scale = np.linalg.norm(gen.injection)
    return float(np.linalg.norm(res) / scale) if scale > 0 else float(np.linalg.norm(res))


def stationary_by_marching(
    gen: TotalGenerator,
    dt: float | None = None,
    tol: float = 1e-9,
    t_max: float = 1e5,
    check_every: int = 200,
) -> TotalSPDM:
    """
    Time-march from the thermal initial state until the generator residual falls below tol

    Raises:
        SingularSystemError: If no steady state is reached before t_max
    """
    step = dt if dt is not None else DT_SCALE / gen.max_rate()
    A = gen.drift
    state = thermal_initial_state(gen)
    rho, t = state.rho.copy(), state.t
    residual = math.inf
    while t < t_max:
        for _ in range(check_every):
            rho = _rk4_step(A, gen.injection, rho, step)
        t += check_every * step
        _check_drift(rho, t)
        residual = lyapunov_residual(gen, rho)
        if residual < tol:
            logger.info(f"Steady state reached by time marching at t={t:.4g}")
            return TotalSPDM(rho=rho, t=t, layout=gen.layout)
    raise SingularSystemError(f"No steady state reached by t={t_max} (residual {residual:.3e})")


def chain_block(rho: TotalSPDM) -> np.ndarray:
    """Chain SPDM rho_{l,m} = <a_l^dagger a_m>: the central slice [M, M + L)"""
    M_left, L, _ = rho.layout
    return rho.rho[M_left:M_left + L, M_left:M_left + L].copy()


def stationary_current(s: SystemSpec) -> StationaryResult:
    """
    Stationary current of the exact model at one parameter point

    Args:
        s (SystemSpec): Parameter set with U = 0 and epsilon > 0

    Returns:
        StationaryResult: Current, chain occupations, bond currents and residual
    """
    gen = build_total_generator(s)
    state = stationary(gen)
    block = chain_block(state)
    return StationaryResult(
        params=s.to_dict(),
        current=current_from_spdm(block, s.chain),
        chain_occupations=np.real(np.diag(block)).tolist(),
        residual=lyapunov_residual(gen, state.rho),
        bond_currents=bond_currents(block, s.chain.J_s).tolist(),
    )


def time_series(states: Sequence[TotalSPDM], s: SystemSpec) -> np.ndarray:
    """Rows (t, j, n_1..n_L) for the time-series CSV"""
    rows = []
    for state in states:
        block = chain_block(state)
        rows.append([state.t, current_from_spdm(block, s.chain, atol=HERMITICITY_DRIFT),
                     *np.real(np.diag(block))])
    return np.array(rows)
