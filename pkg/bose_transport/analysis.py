"""
Spectral densities of recorded signals, steady-state detection and ensemble statistics
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import signal

from .errors import SignalTooShortError
from .utils import write_csv

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SpectrumRecord:
    """
    Two-sided spectral density of a complex signal on an angular-frequency grid

    The convention is x(t) ~ exp(-i nu t) <-> peak at nu, and the density is
    normalised so that mean |x|^2 = (1/2 pi) * integral of P(nu) d nu.
    """
    nu_grid: np.ndarray = field(repr=False)
    power: np.ndarray = field(repr=False)
    n_segments: int
    dt: float
    t_total: float
    resolution: float


@dataclass(frozen=True)
class SpectralPeak:
    nu: float
    height: float
    fwhm: float


@dataclass(frozen=True)
class SteadyWindow:
    t_transient: float
    mean: float
    stderr: float
    converged: bool


class RunningStats:
    """
    Streaming mean and variance with an associative merge

    Values are arrays of a fixed shape; each pushed batch carries samples along
    its first axis.
    """

    def __init__(self, shape: tuple = ()):
        self.count = 0
        self.mean = np.zeros(shape)
        self.m2 = np.zeros(shape)

    def push_batch(self, samples) -> "RunningStats":
        samples = np.asarray(samples, dtype=float)
        n = samples.shape[0]
        if n == 0:
            return self
        other = RunningStats(samples.shape[1:])
        other.count = n
        other.mean = samples.mean(axis=0)
        other.m2 = ((samples - other.mean) ** 2).sum(axis=0)
        return self.merge(other)

    def merge(self, other: "RunningStats") -> "RunningStats":
        if other.count == 0:
            return self
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean.copy(), other.m2.copy()
            return self
        total = self.count + other.count
        delta = other.mean - self.mean
        self.mean = self.mean + delta * (other.count / total)
        self.m2 = self.m2 + other.m2 + delta ** 2 * (self.count * other.count / total)
        self.count = total
        return self

    @property
    def variance(self) -> np.ndarray:
        if self.count < 2:
            return np.full_like(self.mean, np.nan)
        return self.m2 / (self.count - 1)

    @property
    def std_error(self) -> np.ndarray:
        return np.sqrt(self.variance / self.count)


def check_nyquist(dt: float, J_r: float, gamma: float) -> bool:
    """Whether pi / dt covers the band [-(J_r + 5 gamma), J_r + 5 gamma]"""
    ok = math.pi / dt >= J_r + 5.0 * gamma
    if not ok:
        logger.warning(
            f"Sampling step {dt} resolves only |nu| < {math.pi / dt:.3g}, "
            f"below the reservoir band edge {J_r + 5.0 * gamma:.3g}"
        )
    return ok


def spectral_density(signal_values, dt: float, n_segments: int = 8) -> SpectrumRecord:
    """
    Segment-averaged Hann periodogram (50% overlap) of a complex signal

    Args:
        signal_values (array-like): Complex samples spaced by dt
        dt (float): Sampling step
        n_segments (int): Number of averaged segments

    Returns:
        SpectrumRecord: Ascending nu grid and the two-sided density P(nu)

    Raises:
        SignalTooShortError: If there are fewer than 2 * n_segments samples
    """
    x = np.asarray(signal_values, dtype=complex)
    if n_segments < 1 or x.size < 2 * n_segments:
        raise SignalTooShortError(
            f"Signal of {x.size} samples is too short for {n_segments} segments"
        )
    nperseg = (2 * x.size) // (n_segments + 1)
    noverlap = nperseg // 2
    freqs, pxx = signal.welch(
        x, fs=1.0 / dt, window="hann", nperseg=nperseg, noverlap=noverlap,
        detrend=False, return_onesided=False, scaling="density",
    )
    nu = -2.0 * np.pi * freqs
    order = np.argsort(nu)
    used = 1 + (x.size - nperseg) // (nperseg - noverlap)
    return SpectrumRecord(
        nu_grid=nu[order],
        power=np.maximum(pxx[order], 0.0),
        n_segments=used,
        dt=dt,
        t_total=x.size * dt,
        resolution=2.0 * np.pi / (nperseg * dt),
    )


def site_spectra(record, sites: Iterable[int] | None = None, n_segments: int = 8) -> dict[int, SpectrumRecord]:
    """
    Spectral densities of the local oscillators a_l(t) of a recorded trajectory

    Args:
        record: Trajectory record with `a` of shape (n_samples, L) and `dt`
        sites (Iterable[int], optional): 1-based sites; all sites by default
        n_segments (int): Number of averaged segments

    Returns:
        dict[int, SpectrumRecord]: Spectrum per site
    """
    L = record.a.shape[1]
    chosen = list(sites) if sites is not None else list(range(1, L + 1))
    spectra = {}
    for site in chosen:
        if not 1 <= site <= L:
            raise ValueError(f"Site {site} outside the chain 1..{L}")
        spectra[site] = spectral_density(record.a[:, site - 1], record.dt, n_segments)
    return spectra


def find_spectral_peaks(record: SpectrumRecord, min_prominence: float = 0.05) -> list[SpectralPeak]:
    """Peaks with prominence above a fraction of the maximum, with their FWHM in nu"""
    power = record.power
    peaks, _ = signal.find_peaks(power, prominence=min_prominence * float(np.max(power)))
    if peaks.size == 0:
        return []
    widths = signal.peak_widths(power, peaks, rel_height=0.5)[0]
    step = float(np.mean(np.diff(record.nu_grid)))
    return [
        SpectralPeak(nu=float(record.nu_grid[p]), height=float(power[p]), fwhm=float(w * step))
        for p, w in zip(peaks, widths)
    ]


def _block_stderr(values: np.ndarray, n_blocks: int) -> float:
    n_blocks = min(n_blocks, values.size)
    if n_blocks < 2:
        return 0.0
    usable = values[: (values.size // n_blocks) * n_blocks]
    means = usable.reshape(n_blocks, -1).mean(axis=1)
    return float(np.std(means, ddof=1) / np.sqrt(n_blocks))


def steady_window(
    series,
    rel_tol: float = 0.01,
    times: Sequence[float] | None = None,
    n_windows: int = 10,
    n_blocks: int = 8,
) -> SteadyWindow:
    """
    Detect the end of the transient and average the stationary tail

    The series is cut into n_windows windows; the transient ends at the first
    window after which successive window means agree within rel_tol of the
    tail level (plus three combined window standard errors). The tail error is
    estimated by block averaging, which accounts for autocorrelation.

    Args:
        series (array-like): Real time series
        rel_tol (float): Relative agreement of successive window means
        times (Sequence[float], optional): Sample times; sample index otherwise
        n_windows (int): Number of candidate windows (at least 3)
        n_blocks (int): Number of blocks for the tail error

    Returns:
        SteadyWindow: Transient time, tail mean, its error and a convergence flag
    """
    values = np.asarray(series, dtype=float)
    if n_windows < 3 or values.size < 3 * n_windows:
        raise SignalTooShortError(
            f"Series of {values.size} samples is too short for {n_windows} windows"
        )
    t = np.arange(values.size, dtype=float) if times is None else np.asarray(times, dtype=float)

    window_len = values.size // n_windows
    windows = values[: window_len * n_windows].reshape(n_windows, window_len)
    means = windows.mean(axis=1)
    errors = windows.std(axis=1) / np.sqrt(window_len)
    scale = abs(means[-1])

    start = None
    for w in range(n_windows - 2):
        diffs = np.abs(np.diff(means[w:]))
        bounds = rel_tol * scale + 3.0 * np.sqrt(errors[w:-1] ** 2 + errors[w + 1:] ** 2)
        if np.all(diffs <= bounds):
            start = w * window_len
            break

    converged = start is not None
    if not converged:
        logger.warning("No stationary window found; averaging the last third of the series")
        start = values.size - values.size // 3

    tail = values[start:]
    return SteadyWindow(
        t_transient=float(t[start]),
        mean=float(tail.mean()),
        stderr=_block_stderr(tail, n_blocks),
        converged=converged,
    )


def write_spectrum_csv(record: SpectrumRecord, path: str, metadata: dict | None = None) -> None:
    header = {"dt": record.dt, "t_total": record.t_total, "n_segments": record.n_segments,
              "resolution": record.resolution}
    header.update(metadata or {})
    write_csv(path, np.column_stack([record.nu_grid, record.power]), ["nu", "P"], header)
