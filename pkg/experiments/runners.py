"""
Experiment orchestration: single runs, parameter grids, resonance sweeps and spectra
"""

import itertools
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import psutil

from bose_transport import born_markov, exact_spdm, langevin
from bose_transport.analysis import (
    check_nyquist,
    find_spectral_peaks,
    site_spectra,
    spectral_density,
    write_spectrum_csv,
)
from bose_transport.errors import SimulationError
from bose_transport.model_core import SystemSpec, expected_resonances, interaction_from_g
from bose_transport.utils import parameter_hash, write_csv, write_json
from db.base import DatabaseSetup, default_database_url, init_database
from services.db_service import grid_point_crud
from .config import grid_axes, system_with
from .models import ExperimentPlan, GridPoint, SYSTEM_KEYS

logger = logging.getLogger(__name__)

TIME_SERIES_POINTS = 201


@dataclass
class PointResult:
    """Stationary current of one method at one parameter point"""
    method: str
    current: float
    stderr: float
    payload: dict = field(default_factory=dict)


@dataclass
class GridTable:
    columns: List[str]
    rows: np.ndarray = field(repr=False)
    method: str
    n_failed: int = 0


def default_workers(plan: Optional[ExperimentPlan] = None) -> int:
    """Worker count from the plan, BOSE_TRANSPORT_WORKERS, or the physical core count"""
    if plan is not None and plan.workers:
        return plan.workers
    env = os.getenv("BOSE_TRANSPORT_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            logger.warning(f"Ignoring invalid BOSE_TRANSPORT_WORKERS={env}")
    return psutil.cpu_count(logical=False) or 1


def _noise(plan: ExperimentPlan, seed_offset: int = 0) -> langevin.NoiseModel:
    return langevin.NoiseModel(seed=plan.seed + seed_offset,
                               vacuum_half=plan.langevin.vacuum_half, dt=plan.langevin.dt)


def evaluate_point(system: SystemSpec, plan: ExperimentPlan, workers: int = 1) -> PointResult:
    """
    Stationary current of plan.method at one parameter point

    Args:
        system (SystemSpec): Parameter point
        plan (ExperimentPlan): Method and options
        workers (int): Threads for Langevin trajectory blocks

    Returns:
        PointResult: Current, uncertainty (zero for deterministic methods) and the result document
    """
    method = plan.method
    if method == "exact":
        result = exact_spdm.stationary_current(system)
        return PointResult(method, result.current, 0.0, result.to_dict())
    if method == "langevin":
        opts = plan.langevin
        ensemble = langevin.estimate_current(
            system, opts.n_traj, opts.t_transient, opts.t_average, _noise(plan),
            block_size=opts.block_size, workers=workers,
        )
        payload = {"method": method, "params": system.to_dict(), **ensemble.to_dict()}
        return PointResult(method, ensemble.mean_current, ensemble.std_error, payload)
    if method == "born":
        state = born_markov.born_stationary(system, plan.born.dt, plan.born.kernel)
        result = born_markov.reduced_result(system, state, "born")
        return PointResult(method, result.current, 0.0, result.to_dict())
    if method == "markov":
        state = born_markov.markov_stationary(system)
        residual = born_markov.markov_residual(system, state.rho)
        result = born_markov.reduced_result(system, state, "markov", residual)
        return PointResult(method, result.current, 0.0, result.to_dict())
    if method == "analytic":
        current = born_markov.analytic_current(system)
        return PointResult(method, current, 0.0,
                           {"method": method, "params": system.to_dict(), "current": current})
    raise ValueError(f"Unknown method '{method}'")


def _time_series(system: SystemSpec, plan: ExperimentPlan) -> Optional[np.ndarray]:
    if plan.method == "exact" and plan.exact.t_max:
        gen = exact_spdm.build_total_generator(system)
        times = np.linspace(0.0, plan.exact.t_max, TIME_SERIES_POINTS)
        states = exact_spdm.propagate(gen, exact_spdm.thermal_initial_state(gen), times, plan.exact.dt)
        return exact_spdm.time_series(states, system)
    if plan.method in ("born", "markov") and plan.born.t_max:
        times = np.linspace(0.0, plan.born.t_max, TIME_SERIES_POINTS)
        if plan.method == "born":
            states = born_markov.propagate_born(system, None, times, plan.born.dt, plan.born.kernel)
        else:
            states = born_markov.propagate_markov(system, None, times)
        return born_markov.born_time_series(states, system)
    return None


def run_single(system: SystemSpec, plan: ExperimentPlan) -> PointResult:
    """
    Run one method at one parameter point and write result.json

    A time series CSV (t, j, n_1..n_L) is added for exact, born and markov when
    the method's t_max is configured.
    """
    start = time.perf_counter()
    result = evaluate_point(system, plan, default_workers(plan))
    result.payload["wall_time"] = time.perf_counter() - start
    write_json(os.path.join(plan.output, "result.json"), result.payload)

    series = _time_series(system, plan)
    if series is not None:
        columns = ["t", "j"] + [f"n_{i}" for i in range(1, system.chain.L + 1)]
        write_csv(os.path.join(plan.output, "timeseries.csv"), series, columns,
                  {"method": plan.method})
    logger.info(f"Single {plan.method} run: j={result.current:.8g}")
    return result


def _grid_id(system: SystemSpec, plan: ExperimentPlan) -> str:
    return parameter_hash({
        "method": plan.method,
        "base": system.to_dict(),
        "axes": plan.grid,
        "options": plan.model_dump(include={"exact", "langevin", "born", "ring_size"}),
        "seed": plan.seed,
    })


def grid_points(system: SystemSpec, plan: ExperimentPlan) -> List[Dict[str, float]]:
    """Axis assignments in parameter order (last axis fastest)"""
    axes = grid_axes(plan)
    names = [name for name, _ in axes]
    return [dict(zip(names, values)) for values in itertools.product(*(v for _, v in axes))]


def _evaluate_grid_point(system: SystemSpec, plan: ExperimentPlan) -> GridPoint:
    start = time.perf_counter()
    row = GridPoint(method=plan.method, params=system.to_dict(), status="ok")
    try:
        result = evaluate_point(system, plan)
        row.current, row.stderr = float(result.current), float(result.stderr)
    except (SimulationError, ValueError) as e:
        logger.warning(f"Grid point failed ({plan.method}): {str(e)}")
        row.status, row.error = "failed", str(e)
    row.wall_time = time.perf_counter() - start
    return row


def run_grid(
    system: SystemSpec,
    plan: ExperimentPlan,
    database: Optional[DatabaseSetup] = None,
    workers: Optional[int] = None,
) -> GridTable:
    """
    Evaluate plan.method on the Cartesian product of the grid axes

    Points already stored with status 'ok' are skipped, so an interrupted grid
    resumes where it stopped. Points run in a thread pool; rows are committed
    one by one in parameter order. Failed points are stored and the grid goes on.

    Args:
        system (SystemSpec): Base parameters
        plan (ExperimentPlan): Method, options and grid axes
        database (DatabaseSetup, optional): Result store; DATABASE_URL or
            <output>/grid.db by default
        workers (int, optional): Pool size

    Returns:
        GridTable: All system parameters, j, stderr, wall time and an ok flag per point
    """
    database = database or init_database(default_database_url(plan.output))
    grid_id = _grid_id(system, plan)
    assignments = grid_points(system, plan) or [{}]
    pool_size = workers or default_workers(plan)

    pending = []
    with database.get_db() as db:
        done = grid_point_crud.completed_hashes(db, grid_id)
    for position, assignment in enumerate(assignments):
        try:
            point = system_with(system, assignment)
            if plan.ring_size == "auto":
                point = point.with_ring_sizes_for_gamma()
        except ValueError as e:
            point = None
            logger.warning(f"Invalid grid point {assignment}: {str(e)}")
        key = parameter_hash({"grid": grid_id, "position": position, "axes": assignment})
        if key not in done:
            pending.append((position, key, assignment, point))
    logger.info(f"Grid {grid_id[:12]}: {len(assignments)} points, {len(pending)} to run")

    def evaluate(item) -> GridPoint:
        position, key, assignment, point = item
        if point is None:
            row = GridPoint(method=plan.method, params=assignment, status="failed",
                            error="invalid parameters", wall_time=0.0)
        else:
            row = _evaluate_grid_point(point, plan)
        row.param_hash, row.grid_id, row.position = key, grid_id, position
        return row

    with ThreadPoolExecutor(max_workers=pool_size) as executor, database.get_db() as db:
        for row in executor.map(evaluate, pending):
            grid_point_crud.update(db, model_obj=row)
            logger.debug(f"Stored grid point {row.position} ({row.status})")

    table = export_grid(database, grid_id, plan)
    logger.info(f"Grid finished with {table.n_failed} failed points")
    return table


def export_grid(database: DatabaseSetup, grid_id: str, plan: ExperimentPlan) -> GridTable:
    """Write grid.csv from the stored rows of one grid in parameter order"""
    columns = list(SYSTEM_KEYS) + ["j", "stderr", "wall_time", "ok"]
    rows = []
    n_failed = 0
    with database.get_db() as db:
        for point in grid_point_crud.list_ordered(db, grid_id):
            ok = point.status == "ok"
            n_failed += not ok
            params = [float(point.params.get(key, np.nan)) for key in SYSTEM_KEYS]
            rows.append(params + [
                point.current if ok else np.nan,
                point.stderr if ok else np.nan,
                point.wall_time or 0.0,
                1.0 if ok else 0.0,
            ])
    table = GridTable(columns=columns, rows=np.array(rows).reshape(-1, len(columns)),
                      method=plan.method, n_failed=n_failed)
    write_csv(os.path.join(plan.output, "grid.csv"), table.rows, columns,
              {"method": plan.method, "grid_id": grid_id, "axes": ", ".join(plan.grid)},
              labels={"method": plan.method})
    return table


def _per_delta(system: SystemSpec, deltas: Sequence[float],
               evaluate: Callable[[SystemSpec], float], workers: int) -> np.ndarray:
    points = [system.with_gate(float(d)) for d in deltas]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return np.array(list(executor.map(evaluate, points)))


def _sweep_curve(system: SystemSpec, plan: ExperimentPlan, g: float, workers: int) -> langevin.SweepCurve:
    opts = plan.sweep
    deltas = np.linspace(opts.delta_min, opts.delta_max, opts.n_points)
    resonances = expected_resonances(system.chain, system.left.J_r)
    method = plan.method

    if method == "langevin":
        lopts = plan.langevin
        if opts.mode == "ramp":
            return langevin.gate_sweep(
                system, opts.delta_min, opts.delta_max, opts.duration, lopts.n_traj, _noise(plan),
                t_transient=lopts.t_transient, n_bins=opts.n_bins,
                block_size=lopts.block_size, workers=workers, g=g,
            )
        return langevin.stationary_sweep(
            system, deltas, lopts.n_traj, lopts.t_transient, lopts.t_average, _noise(plan),
            block_size=lopts.block_size, workers=workers, g=g,
        )

    if method == "exact":
        evaluate = lambda s: exact_spdm.stationary_current(s).current
    elif method == "born":
        tables = None if plan.born.kernel == "discrete" else born_markov.build_kernel_table(
            system, plan.born.dt, plan.born.kernel)
        evaluate = lambda s: born_markov.reduced_result(
            s, born_markov.born_stationary(s, plan.born.dt, plan.born.kernel, tables), "born").current
    elif method == "markov":
        evaluate = lambda s: born_markov.reduced_result(s, born_markov.markov_stationary(s), "markov").current
    else:
        evaluate = born_markov.analytic_current
    currents = _per_delta(system, deltas, evaluate, workers)
    return langevin.SweepCurve(delta=deltas, j_mean=currents, j_stderr=np.zeros_like(currents),
                               n_realizations=1, g=g, resonances=resonances)


def run_resonance_sweep(system: SystemSpec, plan: ExperimentPlan) -> List[langevin.SweepCurve]:
    """
    Current versus gate voltage, one curve per interaction constant g

    Curves are written to sweep_g<g>.csv with columns (delta, j_mean, j_stderr,
    expected_peak); expected_peak lists the positions -(omega_i + J_r) in its
    first L rows.

    Returns:
        List[SweepCurve]: Curves in the order of sweep.g
    """
    workers = default_workers(plan)
    g_values = list(plan.sweep.g) or [system.chain.U * system.left.n_bar]
    curves = []
    for g in g_values:
        point = system.with_interaction(interaction_from_g(g, system.left.n_bar))
        curve = _sweep_curve(point, plan, g, workers)
        curves.append(curve)

        peaks = np.full(curve.delta.size, np.nan)
        n_peaks = min(curve.resonances.size, peaks.size)
        peaks[:n_peaks] = curve.resonances[:n_peaks]
        write_csv(
            os.path.join(plan.output, f"sweep_g{g:g}.csv"),
            np.column_stack([curve.delta, curve.j_mean, curve.j_stderr, peaks]),
            ["delta", "j_mean", "j_stderr", "expected_peak"],
            {"method": plan.method, "g": g, "n_realizations": curve.n_realizations,
             "expected_peaks": ", ".join(f"{p:.12g}" for p in curve.resonances)},
        )
    return curves


def run_spectrum(system: SystemSpec, plan: ExperimentPlan) -> dict:
    """
    Record one Langevin trajectory and write the spectra of chi_1, chi_L and chain sites

    Returns:
        dict: SpectrumRecord per signal name ('chi_left', 'chi_right', 'site_<l>')
    """
    opts = plan.spectrum
    dt = plan.langevin.dt
    for r in system.reservoirs:
        check_nyquist(dt, r.J_r, r.gamma)

    record = langevin.record_trajectory(system, opts.t_record, _noise(plan),
                                        t_transient=plan.langevin.t_transient)
    spectra = {
        "chi_left": spectral_density(record.chi_left, record.dt, opts.n_segments),
        "chi_right": spectral_density(record.chi_right, record.dt, opts.n_segments),
    }
    sites = opts.sites or list(range(1, system.chain.L + 1))
    for site, spectrum in site_spectra(record, sites, opts.n_segments).items():
        spectra[f"site_{site}"] = spectrum

    for name, spectrum in spectra.items():
        peaks = find_spectral_peaks(spectrum)
        logger.info(f"Spectrum {name}: peaks at {[round(p.nu, 4) for p in peaks]}")
        write_spectrum_csv(spectrum, os.path.join(plan.output, f"spectrum_{name}.csv"),
                           {"signal": name, "seed": plan.seed})
    return spectra
