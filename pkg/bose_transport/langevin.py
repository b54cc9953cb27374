"""
Pseudoclassical (truncated Wigner) Langevin simulation of the chain and rings

Each ring mode is a damped oscillator driven by complex white noise,

    i db_k = (E_k - i gamma/2) b_k dt + sqrt(gamma n_k / 2) dxi_k + eps/(2 sqrt M) a_end dt,

and the chain sites obey

    i da_l = [delta a_l + U |a_l|^2 a_l - (J_s/2)(a_{l-1} + a_{l+1})] dt + (eps/2) chi dt

at the end sites, with chi = sum_k b_k / sqrt(M) of the attached ring. Trajectories
are integrated in vectorised blocks with the stochastic Heun scheme.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .analysis import RunningStats
from .errors import DivergenceError
from .model_core import SystemSpec, expected_resonances, ring_energies, solve_chemical_potential

logger = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e6
DEFAULT_BLOCK_SIZE = 64
DIVERGENCE_CHECK_EVERY = 100


@dataclass(frozen=True)
class NoiseModel:
    """
    Noise realisation settings

    vacuum_half adds the symmetric-ordering half quantum to the diffusion
    (n_k + 1/2); chain observables then have the 1/2 offset subtracted.
    """
    seed: int = 0
    vacuum_half: bool = False
    dt: float = 0.01

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"langevin.dt must be > 0 (got {self.dt})")


@dataclass(frozen=True)
class TrajectoryState:
    """Amplitudes of one trajectory, or of a block along a leading axis"""
    a: np.ndarray = field(repr=False)
    b_left: np.ndarray = field(repr=False)
    b_right: np.ndarray = field(repr=False)
    t: float = 0.0

    @property
    def chi_left(self) -> np.ndarray:
        return self.b_left.sum(axis=-1) / math.sqrt(self.b_left.shape[-1])

    @property
    def chi_right(self) -> np.ndarray:
        return self.b_right.sum(axis=-1) / math.sqrt(self.b_right.shape[-1])


@dataclass
class EnsembleResult:
    mean_current: float
    std_error: float
    n_realizations: int
    site_occupations: np.ndarray = field(repr=False)
    spdm: np.ndarray = field(repr=False)
    spdm_stderr: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "current": self.mean_current,
            "stderr": self.std_error,
            "n_realizations": self.n_realizations,
            "chain_occupations": self.site_occupations.tolist(),
        }


@dataclass
class SweepCurve:
    """Current versus gate voltage for one interaction constant"""
    delta: np.ndarray = field(repr=False)
    j_mean: np.ndarray = field(repr=False)
    j_stderr: np.ndarray = field(repr=False)
    n_realizations: int
    g: float
    resonances: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class TrajectoryRecord:
    t: np.ndarray = field(repr=False)
    a: np.ndarray = field(repr=False)
    chi_left: np.ndarray = field(repr=False)
    chi_right: np.ndarray = field(repr=False)
    dt: float


class _BlockIntegrator:
    """Precomputed drift and noise coefficients for one SystemSpec"""

    def __init__(self, s: SystemSpec, vacuum_half: bool):
        self.s = s
        self.L = s.chain.L
        self.half_J = 0.5 * s.chain.J_s
        self.U = s.chain.U
        self.vacuum_half = vacuum_half
        offset = 0.5 if vacuum_half else 0.0

        self.rings = []
        for r in s.reservoirs:
            occupations = solve_chemical_potential(r).occupations
            self.rings.append({
                "energy": ring_energies(r) - 0.5j * r.gamma,
                "coupling": s.epsilon / (2.0 * math.sqrt(r.M)),
                "noise": np.sqrt(r.gamma * (occupations + offset) / 2.0),
                "sample": np.sqrt(occupations + offset),
                "sqrt_M": math.sqrt(r.M),
            })
        self.half_eps = 0.5 * s.epsilon

    def drift(self, a, bl, br, delta):
        left, right = self.rings
        chi_l = bl.sum(axis=-1) / left["sqrt_M"]
        chi_r = br.sum(axis=-1) / right["sqrt_M"]

        hop = np.zeros_like(a)
        hop[..., 1:] += a[..., :-1]
        hop[..., :-1] += a[..., 1:]
        force = delta * a - self.half_J * hop
        if self.U:
            force = force + self.U * (a.real ** 2 + a.imag ** 2) * a
        force[..., 0] += self.half_eps * chi_l
        force[..., -1] += self.half_eps * chi_r

        fbl = left["energy"] * bl + left["coupling"] * a[..., :1]
        fbr = right["energy"] * br + right["coupling"] * a[..., -1:]
        return -1j * force, -1j * fbl, -1j * fbr

    def noise_increments(self, rng: np.random.Generator, batch: tuple, dt: float):
        increments = []
        for ring in self.rings:
            shape = batch + ring["noise"].shape
            g = rng.standard_normal((2,) + shape)
            dxi = (g[0] + 1j * g[1]) * math.sqrt(dt)
            increments.append(-1j * ring["noise"] * dxi)
        return increments

    def heun_step(self, state: TrajectoryState, rng, dt: float,
                  delta_now: float, delta_next: float) -> TrajectoryState:
        a, bl, br = state.a, state.b_left, state.b_right
        batch = a.shape[:-1]
        dwl, dwr = self.noise_increments(rng, batch, dt)

        fa0, fl0, fr0 = self.drift(a, bl, br, delta_now)
        pa, pl, pr = a + fa0 * dt, bl + fl0 * dt + dwl, br + fr0 * dt + dwr
        fa1, fl1, fr1 = self.drift(pa, pl, pr, delta_next)
        return TrajectoryState(
            a=a + 0.5 * (fa0 + fa1) * dt,
            b_left=bl + 0.5 * (fl0 + fl1) * dt + dwl,
            b_right=br + 0.5 * (fr0 + fr1) * dt + dwr,
            t=state.t + dt,
        )

    def sample(self, rng: np.random.Generator, batch: tuple = ()) -> TrajectoryState:
        rings = []
        for ring in self.rings:
            g = rng.standard_normal((2,) + batch + ring["sample"].shape)
            rings.append(ring["sample"] * (g[0] + 1j * g[1]) / math.sqrt(2.0))
        return TrajectoryState(a=np.zeros(batch + (self.L,), dtype=complex),
                               b_left=rings[0], b_right=rings[1], t=0.0)

    def check(self, state: TrajectoryState, **context) -> None:
        peak = np.max(np.abs(state.a)) if state.a.size else 0.0
        if not np.isfinite(peak) or peak > DIVERGENCE_LIMIT:
            params = {"t": round(state.t, 6), "U": self.U, "delta": self.s.chain.delta,
                      "epsilon": self.s.epsilon}
            params.update(context)
            raise DivergenceError("Langevin trajectory diverged", params)


@lru_cache(maxsize=32)
def _integrator(s: SystemSpec, vacuum_half: bool) -> _BlockIntegrator:
    return _BlockIntegrator(s, vacuum_half)


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def bond_current_density(a: np.ndarray, J_s: float) -> np.ndarray:
    """(1/(L-1)) sum_l J_s Im(a_l^* a_{l+1}) along the last axis"""
    bonds = np.imag(np.conj(a[..., :-1]) * a[..., 1:])
    return J_s * bonds.mean(axis=-1)


def sample_initial(s: SystemSpec, rng: np.random.Generator,
                   noise: NoiseModel | None = None, n: int | None = None) -> TrajectoryState:
    """
    Thermal ring amplitudes with <|b_k|^2> = n_k (+1/2) and an empty chain

    Args:
        s (SystemSpec): Parameter set
        rng (np.random.Generator): Random source
        noise (NoiseModel, optional): Selects the vacuum half quantum
        n (int, optional): Number of trajectories; a single state if omitted

    Returns:
        TrajectoryState: Initial amplitudes at t = 0
    """
    noise = noise or NoiseModel()
    batch = () if n is None else (n,)
    return _integrator(s, noise.vacuum_half).sample(rng, batch)


def step(state: TrajectoryState, s: SystemSpec, noise: NoiseModel,
         rng: np.random.Generator) -> TrajectoryState:
    """
    Advance by one stochastic Heun step of size noise.dt

    Raises:
        DivergenceError: If a chain amplitude exceeds 1e6
    """
    integrator = _integrator(s, noise.vacuum_half)
    new_state = integrator.heun_step(state, rng, noise.dt, s.chain.delta, s.chain.delta)
    integrator.check(new_state, dt=noise.dt)
    return new_state


def _integrate(integrator: _BlockIntegrator, state: TrajectoryState, rng, dt: float,
               n_steps: int, gate: Callable[[float], float],
               observe: Callable[[int, TrajectoryState], None] | None = None,
               block: int = 0) -> TrajectoryState:
    for i in range(n_steps):
        state = integrator.heun_step(state, rng, dt, gate(state.t), gate(state.t + dt))
        if observe is not None:
            observe(i, state)
        if (i + 1) % DIVERGENCE_CHECK_EVERY == 0 or i == n_steps - 1:
            integrator.check(state, dt=dt, block=block)
    return state


def _blocks(n_traj: int, block_size: int) -> list[tuple[int, int]]:
    return [(b, min(block_size, n_traj - b * block_size))
            for b in range(math.ceil(n_traj / block_size))]


def _run_blocks(worker: Callable[[int, int], object], n_traj: int, block_size: int, workers: int):
    blocks = _blocks(n_traj, block_size)
    if workers <= 1 or len(blocks) == 1:
        return [worker(b, size) for b, size in blocks]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(lambda item: worker(*item), blocks))


def estimate_current(
    s: SystemSpec,
    n_traj: int,
    t_transient: float,
    t_average: float,
    noise: NoiseModel,
    block_size: int = DEFAULT_BLOCK_SIZE,
    workers: int = 1,
) -> EnsembleResult:
    """
    Time- and ensemble-averaged stationary current

    Each trajectory is run for t_transient, then the bond-averaged current and
    the products a_l^* a_m are time-averaged over t_average. Trajectory means
    are merged across blocks with streaming statistics.

    Args:
        s (SystemSpec): Parameter set (U may be non-zero)
        n_traj (int): Number of realisations, at least 2
        t_transient (float): Discarded relaxation time
        t_average (float): Averaging window
        noise (NoiseModel): Seed, step and vacuum flag
        block_size (int): Trajectories integrated together
        workers (int): Threads used for blocks

    Returns:
        EnsembleResult: Mean current with standard error and the chain SPDM estimate
    """
    if n_traj < 2:
        raise ValueError(f"n_traj must be >= 2 (got {n_traj})")
    if not t_average > 0:
        raise ValueError(f"t_average must be > 0 (got {t_average})")

    integrator = _integrator(s, noise.vacuum_half)
    dt, L, J_s = noise.dt, s.chain.L, s.chain.J_s
    n_transient = int(round(t_transient / dt))
    n_average = max(1, int(round(t_average / dt)))
    gate = lambda t: s.chain.delta

    def run_block(block: int, size: int):
        rng = _block_rng(noise.seed, block)
        state = integrator.sample(rng, (size,))
        state = _integrate(integrator, state, rng, dt, n_transient, gate, block=block)

        current = np.zeros(size)
        spdm = np.zeros((size, L, L), dtype=complex)

        def observe(_, st):
            nonlocal current
            current += bond_current_density(st.a, J_s)
            spdm[...] += np.conj(st.a)[:, :, None] * st.a[:, None, :]

        _integrate(integrator, state, rng, dt, n_average, gate, observe, block=block)
        current /= n_average
        spdm /= n_average
        if noise.vacuum_half:
            spdm -= 0.5 * np.eye(L)
        logger.debug(f"Block {block} ({size} trajectories) done")
        return current, spdm

    current_stats = RunningStats()
    spdm_stats = RunningStats((2, L, L))
    for current, spdm in _run_blocks(run_block, n_traj, block_size, workers):
        current_stats.push_batch(current)
        spdm_stats.push_batch(np.stack([spdm.real, spdm.imag], axis=1))

    mean_spdm = spdm_stats.mean[0] + 1j * spdm_stats.mean[1]
    stderr_spdm = spdm_stats.std_error[0] + 1j * spdm_stats.std_error[1]
    result = EnsembleResult(
        mean_current=float(current_stats.mean),
        std_error=float(current_stats.std_error),
        n_realizations=current_stats.count,
        site_occupations=np.real(np.diag(mean_spdm)),
        spdm=mean_spdm,
        spdm_stderr=stderr_spdm,
    )
    logger.info(
        f"Langevin ensemble of {n_traj}: j={result.mean_current:.6g} +/- {result.std_error:.2g}"
    )
    return result


def gate_sweep(
    s: SystemSpec,
    delta_min: float,
    delta_max: float,
    duration: float,
    n_traj: int,
    noise: NoiseModel,
    t_transient: float = 0.0,
    n_bins: int = 80,
    block_size: int = DEFAULT_BLOCK_SIZE,
    workers: int = 1,
    g: float | None = None,
) -> SweepCurve:
    """
    Current recorded while the gate voltage is ramped linearly

    The system first relaxes for t_transient at delta_min; then delta runs from
    delta_min to delta_max over `duration` and the instantaneous current is
    averaged in n_bins equal delta bins and over the ensemble.

    Args:
        s (SystemSpec): Parameter set; its own delta is ignored
        delta_min (float): Ramp start
        delta_max (float): Ramp end
        duration (float): Ramp time, long compared with the relaxation time
        n_traj (int): Number of realisations
        noise (NoiseModel): Seed, step and vacuum flag
        t_transient (float): Relaxation time before the ramp
        n_bins (int): Number of delta bins
        g (float, optional): Interaction label for the curve; U * nbar_L by default

    Returns:
        SweepCurve: Bin centres, mean current and its standard error
    """
    if n_traj < 2:
        raise ValueError(f"n_traj must be >= 2 (got {n_traj})")
    if not duration > 0 or delta_max <= delta_min:
        raise ValueError("gate sweep needs duration > 0 and delta_max > delta_min")

    start = s.with_gate(delta_min)
    integrator = _integrator(start, noise.vacuum_half)
    dt, J_s = noise.dt, s.chain.J_s
    n_transient = int(round(t_transient / dt))
    n_ramp = max(n_bins, int(round(duration / dt)))
    rate = (delta_max - delta_min) / (n_ramp * dt)
    bin_of_step = np.minimum((np.arange(n_ramp) * n_bins) // n_ramp, n_bins - 1)
    counts = np.bincount(bin_of_step, minlength=n_bins).astype(float)

    def run_block(block: int, size: int):
        rng = _block_rng(noise.seed, block)
        state = integrator.sample(rng, (size,))
        state = _integrate(integrator, state, rng, dt, n_transient, lambda t: delta_min, block=block)
        ramp_start = state.t
        state = replace(state, t=0.0)
        binned = np.zeros((size, n_bins))

        def observe(i, st):
            binned[:, bin_of_step[i]] += bond_current_density(st.a, J_s)

        _integrate(integrator, state, rng, dt, n_ramp, lambda t: delta_min + rate * t,
                   observe, block=block)
        logger.debug(f"Sweep block {block} done (ramp started at t={ramp_start:.4g})")
        return binned / counts

    stats = RunningStats((n_bins,))
    for binned in _run_blocks(run_block, n_traj, block_size, workers):
        stats.push_batch(binned)

    edges = np.linspace(delta_min, delta_max, n_bins + 1)
    label = g if g is not None else s.chain.U * s.left.n_bar
    logger.info(f"Gate sweep with g={label:.4g} over {stats.count} realisations finished")
    return SweepCurve(
        delta=0.5 * (edges[:-1] + edges[1:]),
        j_mean=stats.mean,
        j_stderr=stats.std_error,
        n_realizations=stats.count,
        g=label,
        resonances=expected_resonances(s.chain, s.left.J_r),
    )


def stationary_sweep(
    s: SystemSpec,
    deltas: Sequence[float],
    n_traj: int,
    t_transient: float,
    t_average: float,
    noise: NoiseModel,
    block_size: int = DEFAULT_BLOCK_SIZE,
    workers: int = 1,
    g: float | None = None,
) -> SweepCurve:
    """Per-delta stationary estimates, the non-adiabatic counterpart of gate_sweep"""
    results = [
        estimate_current(s.with_gate(float(d)), n_traj, t_transient, t_average,
                         replace(noise, seed=noise.seed + i), block_size, workers)
        for i, d in enumerate(deltas)
    ]
    return SweepCurve(
        delta=np.asarray(deltas, dtype=float),
        j_mean=np.array([r.mean_current for r in results]),
        j_stderr=np.array([r.std_error for r in results]),
        n_realizations=n_traj,
        g=g if g is not None else s.chain.U * s.left.n_bar,
        resonances=expected_resonances(s.chain, s.left.J_r),
    )


def record_trajectory(
    s: SystemSpec,
    t_record: float,
    noise: NoiseModel,
    t_transient: float = 0.0,
    sample_every: int = 1,
    trajectory: int = 0,
) -> TrajectoryRecord:
    """
    Record one trajectory's chain amplitudes and the ring forces chi_1, chi_L

    Args:
        s (SystemSpec): Parameter set
        t_record (float): Recording time after the transient
        noise (NoiseModel): Seed, step and vacuum flag
        t_transient (float): Relaxation time before recording
        sample_every (int): Keep every n-th step
        trajectory (int): Block index used to seed the noise

    Returns:
        TrajectoryRecord: Samples spaced by noise.dt * sample_every
    """
    integrator = _integrator(s, noise.vacuum_half)
    rng = _block_rng(noise.seed, trajectory)
    dt = noise.dt
    gate = lambda t: s.chain.delta

    state = integrator.sample(rng)
    state = _integrate(integrator, state, rng, dt, int(round(t_transient / dt)), gate)

    n_steps = int(round(t_record / dt))
    n_samples = n_steps // sample_every
    times = np.zeros(n_samples)
    amplitudes = np.zeros((n_samples, s.chain.L), dtype=complex)
    chi_l = np.zeros(n_samples, dtype=complex)
    chi_r = np.zeros(n_samples, dtype=complex)

    def observe(i, st):
        if (i + 1) % sample_every == 0 and (i + 1) // sample_every <= n_samples:
            k = (i + 1) // sample_every - 1
            times[k] = st.t
            amplitudes[k] = st.a
            chi_l[k] = st.chi_left
            chi_r[k] = st.chi_right

    _integrate(integrator, state, rng, dt, n_steps, gate, observe)
    logger.info(f"Recorded {n_samples} samples over t={t_record}")
    return TrajectoryRecord(t=times, a=amplitudes, chi_left=chi_l, chi_right=chi_r,
                            dt=dt * sample_every)
