"""
Static model objects shared by every solver: ring spectra, thermal occupations,
chain Hamiltonian, eigenmodes and the current operator
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Literal

import numpy as np
from scipy import integrate, linalg, optimize

from .errors import ChemicalPotentialError, HermiticityError, QuadratureError

logger = logging.getLogger(__name__)

# Smallest gap mu - J_r tried when bracketing the chemical potential
MU_EDGE = 1e-12
MAX_BRACKET_DOUBLINGS = 200
DENSITY_RTOL = 1e-10
DEFAULT_RING_SIZE = 200
# ring levels per relaxation linewidth gamma when sizing rings from gamma
LEVELS_PER_LINEWIDTH = 2.0


@dataclass(frozen=True)
class ChainSpec:
    """Tight-binding chain: L sites, hopping J_s, gate voltage delta, interaction U"""
    L: int
    J_s: float = 1.0
    delta: float = 0.0
    U: float = 0.0

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 2:
            raise ValueError(f"chain.L must be an integer >= 2 (got {self.L})")
        if not self.J_s > 0:
            raise ValueError(f"chain.Js must be > 0 (got {self.J_s})")
        if self.U < 0:
            raise ValueError(f"chain.U must be >= 0 (got {self.U})")


@dataclass(frozen=True)
class ReservoirSpec:
    """Tight-binding ring reservoir relaxing to a Bose-Einstein distribution"""
    gamma: float
    beta: float
    n_bar: float
    M: int = DEFAULT_RING_SIZE
    J_r: float = 1.0
    side: Literal["left", "right"] = "left"

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 2:
            raise ValueError(f"{self.side}.M must be an integer >= 2 (got {self.M})")
        if not self.gamma > 0:
            raise ValueError(f"{self.side}.gamma must be > 0 (got {self.gamma})")
        if not self.beta > 0:
            raise ValueError(f"{self.side}.beta must be > 0 (got {self.beta})")
        if not self.n_bar > 0:
            raise ValueError(f"{self.side}.nbar must be > 0 (got {self.n_bar})")
        if self.side not in ("left", "right"):
            raise ValueError(f"reservoir side must be 'left' or 'right' (got {self.side})")


@dataclass(frozen=True)
class SystemSpec:
    """Chain coupled at site 1 to the left ring and at site L to the right ring"""
    chain: ChainSpec
    left: ReservoirSpec
    right: ReservoirSpec
    epsilon: float

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0 (got {self.epsilon})")
        if self.left.side != "left" or self.right.side != "right":
            raise ValueError("reservoirs must be attached as left and right")

    @property
    def reservoirs(self) -> tuple[ReservoirSpec, ReservoirSpec]:
        return (self.left, self.right)

    def with_gate(self, delta: float) -> "SystemSpec":
        return replace(self, chain=replace(self.chain, delta=delta))

    def with_interaction(self, U: float) -> "SystemSpec":
        return replace(self, chain=replace(self.chain, U=U))

    def with_gamma(self, gamma: float) -> "SystemSpec":
        return replace(
            self,
            left=replace(self.left, gamma=gamma),
            right=replace(self.right, gamma=gamma),
        )

    def with_ring_sizes_for_gamma(self) -> "SystemSpec":
        """Copy whose rings are at least ring_size_for(gamma, J_r) sites long"""
        left, right = (
            replace(r, M=ring_size_for(r.gamma, r.J_r, minimum=r.M)) for r in self.reservoirs
        )
        return replace(self, left=left, right=right)

    def to_dict(self) -> dict:
        """Flat parameter dictionary using the configuration key names"""
        params = {
            "chain.L": self.chain.L,
            "chain.Js": self.chain.J_s,
            "chain.delta": self.chain.delta,
            "chain.U": self.chain.U,
            "epsilon": self.epsilon,
        }
        for r in self.reservoirs:
            params.update({
                f"{r.side}.M": r.M,
                f"{r.side}.Jr": r.J_r,
                f"{r.side}.gamma": r.gamma,
                f"{r.side}.beta": r.beta,
                f"{r.side}.nbar": r.n_bar,
            })
        return params


@dataclass(frozen=True)
class ThermalOccupations:
    mu: float
    occupations: np.ndarray = field(repr=False)
    density: float


@dataclass(frozen=True)
class EigenmodeSet:
    """Chain eigenfrequencies (ascending) and orthonormal eigenvectors as columns"""
    omegas: np.ndarray
    modes: np.ndarray = field(repr=False)


def ring_size_for(
    gamma: float,
    J_r: float = 1.0,
    minimum: int = DEFAULT_RING_SIZE,
    levels_per_width: float = LEVELS_PER_LINEWIDTH,
) -> int:
    """
    Ring size whose mean level spacing 2 pi J_r / M is at most gamma / levels_per_width

    Below this size the stationary current resolves single ring levels and no
    longer vanishes linearly as gamma -> 0.

    Args:
        gamma (float): Ring relaxation rate
        J_r (float): Ring hopping
        minimum (int): Smallest size returned
        levels_per_width (float): Ring levels per linewidth gamma

    Returns:
        int: max(minimum, ceil(levels_per_width * 2 pi J_r / gamma))
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be > 0 (got {gamma})")
    return max(int(minimum), int(math.ceil(levels_per_width * 2.0 * np.pi * J_r / gamma)))


def ring_energies(r: ReservoirSpec) -> np.ndarray:
    """
    Bloch energies of a ring, E_k = -J_r cos(2 pi k / M) for k = 1..M

    Args:
        r (ReservoirSpec): Ring parameters

    Returns:
        np.ndarray: Energies of length M; E_M = -J_r is the band minimum
    """
    k = np.arange(1, r.M + 1)
    return -r.J_r * np.cos(2.0 * np.pi * k / r.M)


def bose_einstein_occupation(energies, beta: float, mu: float) -> np.ndarray:
    """Occupations 1 / (exp(beta (E + mu)) - 1); requires E + mu > 0"""
    x = beta * (np.asarray(energies, dtype=float) + mu)
    with np.errstate(over="ignore"):
        return 1.0 / np.expm1(x)


def ring_density(r: ReservoirSpec, mu: float) -> float:
    return float(np.mean(bose_einstein_occupation(ring_energies(r), r.beta, mu)))


def band_occupation(kappa, r: ReservoirSpec, mu: float):
    """
    Occupation of the infinite-ring Bloch state kappa

    E(kappa) + mu is written as (mu - J_r) + 2 J_r sin^2(kappa / 2) so that the
    gap to the band edge keeps full precision when mu approaches J_r.
    """
    excitation = (mu - r.J_r) + 2.0 * r.J_r * np.sin(0.5 * np.asarray(kappa)) ** 2
    with np.errstate(over="ignore"):
        return 1.0 / np.expm1(r.beta * excitation)


def band_edge_breakpoints(r: ReservoirSpec, mu: float) -> list[float]:
    """Quadrature breakpoints resolving the occupation peak of width sqrt((mu - J_r) / J_r) at kappa = 0"""
    width = math.sqrt(max(mu - r.J_r, 0.0) / r.J_r)
    return [k for k in (width, 10.0 * width, 100.0 * width) if 0.0 < k < np.pi]


def continuum_density(r: ReservoirSpec, mu: float) -> float:
    """
    Density of the infinite ring, (1/2 pi) integral of n(kappa) over the Brillouin zone

    The density diverges as mu -> J_r like 1 / sqrt(mu - J_r).

    Args:
        r (ReservoirSpec): Ring parameters (M is ignored)
        mu (float): Chemical potential, must exceed J_r

    Returns:
        float: Continuum particle density

    Raises:
        QuadratureError: If the integral does not converge
    """
    if not mu > r.J_r:
        raise ValueError(f"continuum density needs mu > J_r (got mu={mu}, J_r={r.J_r})")
    value, abserr = integrate.quad(
        band_occupation, 0.0, np.pi, args=(r, mu), points=band_edge_breakpoints(r, mu) or None,
        limit=400, epsabs=0.0, epsrel=1e-11,
    )
    if not np.isfinite(value) or abserr > 1e-8 * max(abs(value), 1e-300):
        raise QuadratureError(f"Continuum density integral did not converge at mu={mu}")
    return value / np.pi


def _solve_mu(density: Callable[[float], float], r: ReservoirSpec) -> float:
    """Root of density(mu) = n_bar on (J_r, inf) for a density decreasing in mu"""
    # approach the band edge from above; the edge itself may be singular
    gap = 1.0
    while density(r.J_r + gap) < r.n_bar:
        gap *= 0.5
        if gap < MU_EDGE:
            raise ChemicalPotentialError(
                f"Density {r.n_bar} exceeds what the {r.side} ring holds at mu -> J_r"
            )
    lower = r.J_r + gap

    width = 2.0 * gap
    for _ in range(MAX_BRACKET_DOUBLINGS):
        if density(r.J_r + width) < r.n_bar:
            break
        width *= 2.0
    else:
        raise ChemicalPotentialError(
            f"Could not bracket the chemical potential for nbar={r.n_bar}, beta={r.beta}"
        )
    upper = r.J_r + width

    mu = optimize.brentq(
        lambda m: density(m) - r.n_bar,
        lower, upper,
        xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=1000,
    )
    return float(mu)


def solve_chemical_potential(r: ReservoirSpec) -> ThermalOccupations:
    """
    Find the chemical potential that gives the ring the requested mean density

    The density is strictly decreasing in mu on (J_r, inf), so the bracketed
    root is unique.

    Args:
        r (ReservoirSpec): Ring parameters with target density n_bar

    Returns:
        ThermalOccupations: mu, the M occupations and the realised density

    Raises:
        ChemicalPotentialError: If no bracket exists for the requested density
    """
    mu = _solve_mu(lambda m: ring_density(r, m), r)
    occupations = bose_einstein_occupation(ring_energies(r), r.beta, mu)
    density = float(np.mean(occupations))
    if abs(density - r.n_bar) > DENSITY_RTOL * r.n_bar:
        raise ChemicalPotentialError(
            f"Chemical potential root misses the density: {density} vs {r.n_bar}"
        )
    logger.debug(f"{r.side} ring: mu={mu:.12g}, density={density:.12g}")
    return ThermalOccupations(mu=mu, occupations=occupations, density=density)


def solve_continuum_chemical_potential(r: ReservoirSpec) -> float:
    """Chemical potential of the infinite ring holding density n_bar"""
    return _solve_mu(lambda m: continuum_density(r, m), r)


def interaction_from_g(g: float, n_bar_left: float) -> float:
    """Microscopic U from the macroscopic constant g = U * nbar_L"""
    if n_bar_left <= 0:
        raise ValueError(f"left.nbar must be > 0 to derive U from g (got {n_bar_left})")
    return g / n_bar_left


def chain_hamiltonian(c: ChainSpec) -> np.ndarray:
    """
    Single-particle chain Hamiltonian: delta on the diagonal, -J_s/2 on the off-diagonals

    Args:
        c (ChainSpec): Chain parameters

    Returns:
        np.ndarray: Real symmetric L x L matrix
    """
    off = np.full(c.L - 1, -0.5 * c.J_s)
    return np.diag(np.full(c.L, float(c.delta))) + np.diag(off, 1) + np.diag(off, -1)


def chain_eigenmodes(c: ChainSpec) -> EigenmodeSet:
    """
    Eigenfrequencies and eigenmodes of the isolated chain

    The modes are computed at zero gate voltage and the frequencies shifted by
    delta afterwards, so the eigenvectors do not depend on delta.

    Args:
        c (ChainSpec): Chain parameters

    Returns:
        EigenmodeSet: Ascending frequencies and column eigenvectors
    """
    omegas, modes = linalg.eigh_tridiagonal(
        np.zeros(c.L), np.full(c.L - 1, -0.5 * c.J_s)
    )
    # fix the sign so the first non-negligible component is positive
    for i in range(c.L):
        column = modes[:, i]
        pivot = column[np.argmax(np.abs(column) > 1e-12)]
        if pivot < 0:
            modes[:, i] = -column
    return EigenmodeSet(omegas=omegas + c.delta, modes=modes)


def expected_resonances(c: ChainSpec, J_r: float) -> np.ndarray:
    """Gate voltages -(omega_i + J_r) at which chain modes meet the ring band bottom"""
    zero_gate = replace(c, delta=0.0)
    return np.sort(-(chain_eigenmodes(zero_gate).omegas + J_r))


def current_operator(L: int, J_s: float) -> np.ndarray:
    """
    Current operator with elements j_{l,m} = J_s (delta_{l,m+1} - delta_{l,m-1}) / 2i

    Args:
        L (int): Number of chain sites
        J_s (float): Chain hopping

    Returns:
        np.ndarray: Hermitian complex L x L matrix
    """
    if L < 2:
        raise ValueError(f"current operator needs L >= 2 (got {L})")
    j = np.zeros((L, L), dtype=complex)
    idx = np.arange(L - 1)
    j[idx + 1, idx] = J_s / 2j
    j[idx, idx + 1] = -J_s / 2j
    return j


def check_hermitian(rho: np.ndarray, atol: float = 1e-8) -> None:
    deviation = np.max(np.abs(rho - rho.conj().T)) if rho.size else 0.0
    scale = max(1.0, float(np.max(np.abs(rho))) if rho.size else 1.0)
    if deviation > atol * scale:
        raise HermiticityError(f"Density matrix is not Hermitian (deviation {deviation:.3e})")


def current_from_spdm(rho: np.ndarray, c: ChainSpec, atol: float = 1e-8) -> float:
    """
    Current density j = Tr[rho j_op] / (L - 1) of a chain SPDM

    Args:
        rho (np.ndarray): Chain SPDM, rho_{l,m} = <a_l^dagger a_m>
        c (ChainSpec): Chain parameters
        atol (float): Hermiticity tolerance

    Returns:
        float: Current density, positive for flow from site 1 towards site L

    Raises:
        HermiticityError: If rho is not Hermitian within tolerance
    """
    rho = np.asarray(rho)
    check_hermitian(rho, atol)
    value = np.trace(rho @ current_operator(c.L, c.J_s))
    return float(value.real) / (c.L - 1)


def bond_currents(rho: np.ndarray, J_s: float) -> np.ndarray:
    """Currents J_s Im rho_{l,l+1} through the L-1 bonds of the chain"""
    return J_s * np.imag(np.diagonal(np.asarray(rho), 1))
