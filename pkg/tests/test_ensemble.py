import math

import numpy as np
import pytest

from hamdaemon.classical import FullClassicalState, integrate_full
from hamdaemon.ensemble import (EnsembleSpec, bin_density, reference_ensemble_spec, run_ensemble,
                                shift_time_statistic)

LZ0 = math.sqrt(5.0 / 6.0)


@pytest.fixture(scope="module")
def small(d_classical):
    return run_ensemble(EnsembleSpec(64, FullClassicalState(0, 0.6, 0, LZ0)), (0, 3), d_classical,
                        n_samples=301)


def test_grid_phases_uniform():
    ph = EnsembleSpec(8, FullClassicalState(0, 0.6, 0.5, LZ0)).initial_phases()
    assert np.allclose(np.diff(ph), 2 * np.pi / 8)
    assert ph[0] == 0.5


def test_random_phases_reproducible():
    s = FullClassicalState(0, 0.6, 0, LZ0)
    a = EnsembleSpec(50, s, seed=3, phi_sampling="random").initial_phases()
    b = EnsembleSpec(50, s, seed=3, phi_sampling="random").initial_phases()
    c = EnsembleSpec(50, s, seed=4, phi_sampling="random").initial_phases()
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert np.all((a >= 0) & (a < 2 * np.pi))


def test_invalid_spec():
    s = FullClassicalState(0, 0.6, 0, LZ0)
    with pytest.raises(ValueError):
        EnsembleSpec(0, s)
    with pytest.raises(ValueError):
        EnsembleSpec(4, s, phi_sampling="sobol")


def test_members_match_single_integration(small, d_classical):
    j = 17
    tr = integrate_full(FullClassicalState(0, 0.6, small.phi0[j], LZ0), (0, 3), d_classical,
                        tol=1e-12, t_eval=small.times)
    assert np.max(np.abs(tr.lz - small.states[j, :, 3])) < 1e-5
    assert np.max(np.abs(tr.p - small.states[j, :, 1])) < 1e-5


def test_histogram_conserves_members(small):
    for axis in ("Q", "P"):
        h = bin_density(small, axis, n_bins=100, n_times=40)
        assert np.all(h.totals() == len(small))
        assert np.all(h.underflow == 0) and np.all(h.overflow == 0)


def test_histogram_interpolated_times(small):
    # off-grid samples come from Hermite interpolation with exact slopes
    h_grid = bin_density(small, "P", n_bins=80, times=small.times[10::10])
    h_off = bin_density(small, "P", edges=h_grid.bin_edges, times=small.times[10::10] + 1e-9)
    assert np.abs(h_grid.counts - h_off.counts).sum() <= 2


def test_translation_shift_bin_exact(small, d_classical):
    h = bin_density(small, "Q", n_bins=500, n_times=60)
    a = 37 * (h.bin_edges[1] - h.bin_edges[0])
    moved = run_ensemble(EnsembleSpec(64, FullClassicalState(a, 0.6, a, LZ0)), (0, 3), d_classical,
                         n_samples=301)
    hm = bin_density(moved, "Q", edges=h.bin_edges + a, times=h.time_samples)
    assert np.array_equal(hm.counts, h.counts)
    assert np.max(np.abs(moved.states[..., 0] - small.states[..., 0] - a)) < 1e-10


def test_start_time_shift_is_exact(small, d_classical):
    # autonomous equations: same initial states started later give the same densities later
    dt = 0.25
    late = run_ensemble(EnsembleSpec(64, FullClassicalState(0, 0.6, 0, LZ0)), (dt, 3 + dt), d_classical,
                        n_samples=301)
    h1 = bin_density(small, "P", n_bins=120, times=small.times)
    h2 = bin_density(late, "P", edges=h1.bin_edges, times=late.times)
    assert shift_time_statistic(h1, h2) < 1e-12


def test_reference_ensemble():
    s = reference_ensemble_spec()
    assert s.n_traj == 1000 and s.base_state.p == 0.6 and s.base_state.lz == pytest.approx(LZ0)


def test_empty_ensemble_histogram(small):
    small_empty = type(small)(small.spec, small.params, small.times, small.states[:0], small.phi0[:0])
    with pytest.raises(ValueError):
        bin_density(small_empty, "Q")
