import math
import warnings

import numpy as np
import pytest

from hamdaemon import quantum as qm
from hamdaemon.model import DomainError, UnsupportedModeError, reference_params

D5 = reference_params(5)
HOL = 1 / math.sqrt(30)
SMALL = dict(n_grid=256, n_shift=256)


def small_packet(d=D5, **kw):
    return qm.init_packet(qm.reference_packet(), 5, d, **{**SMALL, **kw})


@pytest.fixture(scope="module")
def short_run():
    psi = small_packet()
    return psi, qm.propagate(psi, (0.0, 1.0), qm.StepControl(snapshot_times=(0.5, 0.6, 1.0)))


@pytest.fixture(scope="module")
def free_run():
    psi = small_packet(D5.replace(gamma_tilde=0.0))
    return psi, qm.propagate(psi, (0.0, 0.6), qm.StepControl(snapshot_times=(0.0, 0.3, 0.6)))


def test_initial_packet():
    psi = small_packet()
    assert psi.norm() == pytest.approx(1.0, abs=1e-12)
    occ = qm.occupation_probabilities(psi)
    assert occ[-1] == pytest.approx(1.0) and np.all(occ[:-1] == 0)
    assert psi.delta * psi.n_shift == pytest.approx(HOL, rel=1e-15)
    md = qm.reconstruct_momentum_density(psi)
    dp = md.p[1] - md.p[0]
    assert np.sum(md.p * md.density) * dp == pytest.approx(0.6, abs=1e-12)
    sd = math.sqrt(np.sum((md.p - 0.6) ** 2 * md.density) * dp)
    assert sd == pytest.approx(qm.reference_packet().sigma_p(D5) / math.sqrt(2), rel=1e-6)


def test_packet_domain_errors():
    with pytest.raises(UnsupportedModeError):
        qm.PacketSpec(0.6, math.inf)
    with pytest.raises(DomainError):
        qm.PacketSpec(0.6, 0.0)
    with pytest.raises(DomainError):
        qm.init_packet(qm.PacketSpec(0.6, 20.0, m0=7), 5, D5)
    with pytest.raises(DomainError):
        qm.init_packet(qm.reference_packet(), 5, D5, n_grid=64, n_shift=256)


def test_norm_per_point(short_run):
    _, res = short_run
    assert res.norm_drift < 1e-10
    assert np.allclose(res.occupations.sum(axis=1), 1.0, atol=1e-10)


def test_step_convergence():
    # reference: fourth order with half the step
    psi = small_packet()
    occ = {k: qm.propagate(psi, (0.0, 0.7), qm.StepControl(substeps=j, order=o)).occupations[-1]
           for k, (j, o) in {"2": (1, 2), "4": (1, 4), "ref": (2, 4)}.items()}
    assert np.max(np.abs(occ["4"] - occ["ref"])) < 1e-7
    assert np.max(np.abs(occ["2"] - occ["ref"])) < 1e-6


def test_first_crossing_branching(short_run):
    _, res = short_run
    p5 = res.occupations[-1][-1]
    assert p5 == pytest.approx(0.308, abs=0.03)


def test_free_fall_ehrenfest_apex(free_run):
    psi, res = free_run
    assert np.allclose(res.occupations[:, -1], 1.0)
    end = res.snapshot_at(0.6)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pos = qm.reconstruct_position_density(end)
    dq = pos.q[1] - pos.q[0]
    mean = np.sum(pos.q * pos.density) * dq
    assert end.q_mean == pytest.approx(540.0, abs=1e-6)
    assert mean == pytest.approx(540.0, abs=1e-3)


def test_free_packet_spreading(free_run):
    psi, res = free_run
    sp = qm.reference_packet().sigma_p(D5)
    sd0 = 20 / math.sqrt(2)  # in 1/k units the amplitude width is 20
    for tau in (0.0, 0.3, 0.6):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            pos = qm.reconstruct_position_density(res.snapshot_at(tau))
        _, _, sd = qm.branch_position_moments(pos)
        v_sd = sp / math.sqrt(2) / D5.M_tilde
        assert sd[-1] == pytest.approx(math.hypot(sd0, v_sd * tau), rel=1e-3)


def test_momentum_falls_freely(free_run):
    _, res = free_run
    for s in res.snapshots:
        w, mean = qm.branch_momentum_moments(s)
        assert mean[-1] == pytest.approx(0.6 - s.time, abs=1e-10)


def test_jump_is_grid_aligned(short_run):
    _, res = short_run
    md = qm.reconstruct_momentum_density(res.final)
    dp = md.p[1] - md.p[0]
    assert dp * res.final.n_shift == pytest.approx(HOL, rel=1e-14)
    # the m=4 branch is the m=5 lattice kicked up by exactly n_shift points
    i5 = np.flatnonzero(md.per_m[-1] > 0)
    i4 = np.flatnonzero(md.per_m[-2] > 0)
    assert i4[0] - i5[0] == res.final.n_shift
    assert len(i4) == len(i5)


def test_momentum_density_normalized(short_run):
    _, res = short_run
    for s in res.snapshots:
        md = qm.reconstruct_momentum_density(s)
        assert md.density.sum() * (md.p[1] - md.p[0]) == pytest.approx(1.0, abs=1e-10)


def test_energy_conserved(short_run):
    psi, res = short_run
    e0 = qm.energy_expectation(psi)["total"]
    for s in res.snapshots:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            e = qm.energy_expectation(s)
        assert e["total"] == pytest.approx(e0, rel=1e-6)


def test_point_propagator_matches_lattice():
    psi = small_packet()
    res = qm.propagate(psi, (0.0, 0.8))
    i = 100
    sig0 = 0.0 - (psi.p_grid[i] - D5.M_tilde * D5.Omega_tilde)
    pp = qm.PointPropagator(5, D5, psi.amps[i], sig0, sig0 + 0.8, psi.delta)
    out = pp.at([sig0 + res.final.time])[0]
    assert np.max(np.abs(out - res.final.amps[i])) < 1e-8
    with pytest.raises(ValueError):
        pp.at([sig0 - 1.0])


def test_propagate_rejects_bad_span():
    psi = small_packet()
    with pytest.raises(ValueError):
        qm.propagate(psi, (0.1, 0.5))
    with pytest.raises(ValueError):
        qm.propagate(psi, (0.0, -0.5))
