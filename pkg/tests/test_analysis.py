"""
Tests for spectral densities, steady-state detection and streaming statistics
"""

import logging

import numpy as np
import pytest

from bose_transport.analysis import (
    RunningStats,
    check_nyquist,
    find_spectral_peaks,
    site_spectra,
    spectral_density,
    steady_window,
    write_spectrum_csv,
)
from bose_transport.errors import SignalTooShortError
from bose_transport.langevin import TrajectoryRecord


def _tone(nu, n=8192, dt=0.05, amplitude=1.0):
    t = dt * np.arange(n)
    return amplitude * np.exp(-1j * nu * t)


def test_tone_peaks_at_its_frequency():
    """exp(-i nu0 t) shows a single peak at +nu0"""
    record = spectral_density(_tone(0.7), dt=0.05, n_segments=8)

    assert np.all(np.diff(record.nu_grid) > 0)
    assert record.n_segments == 8
    peak = record.nu_grid[np.argmax(record.power)]
    assert abs(peak - 0.7) <= record.resolution


def test_parseval_for_a_tone():
    record = spectral_density(_tone(-0.4, amplitude=2.0), dt=0.05)
    d_nu = record.nu_grid[1] - record.nu_grid[0]
    assert np.sum(record.power) * d_nu / (2 * np.pi) == pytest.approx(4.0, rel=1e-6)


def test_parseval_for_noise():
    rng = np.random.default_rng(0)
    x = (rng.standard_normal(20000) + 1j * rng.standard_normal(20000)) / np.sqrt(2)
    record = spectral_density(x, dt=0.1, n_segments=16)
    d_nu = record.nu_grid[1] - record.nu_grid[0]

    assert np.sum(record.power) * d_nu / (2 * np.pi) == pytest.approx(np.mean(np.abs(x) ** 2), rel=0.05)


def test_short_signal_is_rejected():
    with pytest.raises(SignalTooShortError):
        spectral_density(np.ones(10, dtype=complex), dt=0.1, n_segments=8)


def test_two_tones_are_resolved():
    x = _tone(-1.0) + 0.5 * _tone(0.5)
    peaks = find_spectral_peaks(spectral_density(x, dt=0.05), min_prominence=0.05)
    positions = sorted(p.nu for p in peaks)

    assert len(positions) == 2
    assert positions[0] == pytest.approx(-1.0, abs=0.05)
    assert positions[1] == pytest.approx(0.5, abs=0.05)
    assert all(p.fwhm > 0 for p in peaks)


def test_site_spectra_selects_sites():
    n, dt = 4096, 0.05
    a = np.column_stack([_tone(0.3, n, dt), _tone(-0.6, n, dt)])
    record = TrajectoryRecord(t=dt * np.arange(n), a=a, chi_left=a[:, 0], chi_right=a[:, 1], dt=dt)
    spectra = site_spectra(record, sites=[2])

    assert list(spectra) == [2]
    assert spectra[2].nu_grid[np.argmax(spectra[2].power)] == pytest.approx(-0.6, abs=spectra[2].resolution)
    with pytest.raises(ValueError, match="Site 3"):
        site_spectra(record, sites=[3])


def test_nyquist_warning(caplog):
    with caplog.at_level(logging.WARNING):
        assert check_nyquist(0.05, 1.0, 0.1)
        assert not check_nyquist(3.0, 1.0, 0.1)
    assert "band edge" in caplog.text


def test_running_stats_merge_matches_numpy():
    rng = np.random.default_rng(3)
    samples = rng.normal(size=(50, 3))
    left = RunningStats((3,)).push_batch(samples[:20])
    right = RunningStats((3,)).push_batch(samples[20:])
    merged = left.merge(right)

    assert merged.count == 50
    np.testing.assert_allclose(merged.mean, samples.mean(axis=0))
    np.testing.assert_allclose(merged.variance, samples.var(axis=0, ddof=1))
    np.testing.assert_allclose(merged.std_error, samples.std(axis=0, ddof=1) / np.sqrt(50))


def test_running_stats_single_sample_has_no_variance():
    stats = RunningStats().push_batch([1.5])
    assert stats.mean == 1.5
    assert np.isnan(stats.variance)


def test_steady_window_finds_the_transient():
    rng = np.random.default_rng(5)
    t = np.linspace(0, 100, 2000)
    series = 1.0 - np.exp(-t / 3.0) + 0.01 * rng.standard_normal(t.size)
    window = steady_window(series, rel_tol=0.01, times=t)

    assert window.converged
    assert 5.0 <= window.t_transient <= 50.0
    assert window.mean == pytest.approx(1.0, abs=0.01)
    assert window.stderr > 0


def test_steady_window_without_plateau(caplog):
    series = np.linspace(0.0, 10.0, 300)
    with caplog.at_level(logging.WARNING):
        window = steady_window(series, rel_tol=1e-3)

    assert not window.converged
    assert window.t_transient == 200.0
    assert "No stationary window" in caplog.text


def test_write_spectrum_csv(tmp_path):
    record = spectral_density(_tone(0.2, n=256), dt=0.1, n_segments=4)
    path = tmp_path / "spectra" / "spectrum_chi_left.csv"
    write_spectrum_csv(record, str(path), {"site": "chi_left"})

    text = path.read_text()
    assert text.startswith("# ")
    assert "site" in text
    data = np.loadtxt(path, delimiter=",", comments="#", skiprows=0, ndmin=2)
    assert data.shape == (record.nu_grid.size, 2)
