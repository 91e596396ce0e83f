import math

import numpy as np
import pytest

from hamdaemon.classical import (FullClassicalState, PoleSingularityError, classify_trajectory,
                                 integrate_full, integrate_reduced, noether_J, reduce_state,
                                 reduced_energy, reduced_time_offset, wrap_angle)

LZ0 = math.sqrt(5.0 / 6.0)


def start(phi=0.0, q=0.0, p=0.6):
    return FullClassicalState(q, p, phi, LZ0)


def test_free_fall_apex(d_classical):
    d0 = d_classical.replace(gamma_tilde=0.0)
    tr = integrate_full(start(), (0.0, 0.6), d0, t_eval=[0.0, 0.3, 0.6])
    assert tr.q[-1] == pytest.approx(540.0, rel=1e-10)
    assert tr.p[-1] == pytest.approx(0.0, abs=1e-12)
    assert np.all(tr.lz == LZ0)


def test_noether_charge_initial_value():
    j = noether_J(start().as_array()[None, :], np.array([0.0]))
    assert j[0] == pytest.approx(0.6 + LZ0) and j[0] == pytest.approx(1.5129, abs=1e-4)


@pytest.mark.parametrize("phi", [0.0, math.pi / 2])
def test_conservation(d_classical, phi):
    tr = integrate_full(start(phi), (0.0, 3.0), d_classical, tol=1e-12, t_eval=np.linspace(0, 3, 601))
    e, j = tr.diagnostics["energy"], tr.diagnostics["J"]
    assert np.max(np.abs(e - e[0])) / abs(e[0]) < 1e-8
    assert np.max(np.abs(j - j[0])) / abs(j[0]) < 1e-8


def test_phase_classification(d_classical):
    t = np.linspace(0, 3, 3001)
    down = classify_trajectory(integrate_full(start(0.0), (0, 3), d_classical, t_eval=t))
    dec = classify_trajectory(integrate_full(start(math.pi / 2), (0, 3), d_classical, t_eval=t))
    assert down.is_downconversion and not dec.is_downconversion
    assert down.lz_drop > 1.5
    assert 0.2 < down.start < 0.4 and down.end > 2.0


def test_translation_symmetry(d_classical):
    a = 0.37
    t = np.linspace(0, 1.5, 301)
    base = integrate_full(start(0.2), (0, 1.5), d_classical, t_eval=t)
    moved = integrate_full(FullClassicalState(a, 0.6, 0.2 + a, LZ0), (0, 1.5), d_classical, t_eval=t)
    assert np.allclose(moved.q - base.q, a, atol=1e-6)
    assert np.allclose(moved.phi - base.phi, a, atol=1e-6)
    assert np.allclose(moved.lz, base.lz, atol=1e-9)


@pytest.mark.parametrize("phi", [0.0, math.pi / 2])
def test_reduced_matches_full(d_classical, phi):
    s0 = start(phi)
    t = np.linspace(0, 2, 401)
    full = integrate_full(s0, (0, 2), d_classical, t_eval=t)
    off = reduced_time_offset(s0, 0.0, d_classical)
    red = integrate_reduced(reduce_state(s0), (off, off + 2), d_classical, t_eval=off + t)
    assert np.max(np.abs(red.lz - full.lz)) < 1e-7
    assert np.max(np.abs(wrap_angle(red.phi - (full.phi - full.q)))) < 1e-5


def test_reduced_energy_rate(d_classical):
    # dK/dsigma along a trajectory equals the explicit derivative lz/M~
    s0 = start(0.0)
    off = reduced_time_offset(s0, 0.0, d_classical)
    sig = off + np.linspace(0, 1, 2001)
    red = integrate_reduced(reduce_state(s0), (sig[0], sig[-1]), d_classical, t_eval=sig)
    k = reduced_energy(red.phi, red.lz, sig, d_classical)
    lhs = np.gradient(k, sig)
    rhs = red.lz / d_classical.M_tilde
    assert np.max(np.abs(lhs - rhs)[5:-5]) / np.max(np.abs(rhs)) < 1e-3


def test_pole_start_rejected(d_classical):
    with pytest.raises(PoleSingularityError):
        integrate_full(FullClassicalState(0, 0.6, 0, 1.0), (0, 1), d_classical)


def test_invalid_inputs(d_classical):
    with pytest.raises(ValueError):
        FullClassicalState(0, 0, 0, 1.2)
    with pytest.raises(ValueError):
        integrate_full(start(), (0, 1), d_classical, tol=0.0)


def test_sphere_coordinates_are_unit(d_classical):
    tr = integrate_full(start(0.0), (0, 1), d_classical, t_eval=np.linspace(0, 1, 51))
    assert np.allclose(np.linalg.norm(tr.sphere_xyz(), axis=1), 1.0)
