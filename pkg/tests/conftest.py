"""Shared expensive runs, computed once per session."""
import math
import warnings
from dataclasses import dataclass

import numpy as np
import pytest

from hamdaemon import analysis, quantum as qm
from hamdaemon.ensemble import reference_ensemble_spec, run_ensemble
from hamdaemon.model import reference_params

L5 = 5
HOL5 = 1.0 / math.sqrt(30.0)


@pytest.fixture(scope="session")
def d_classical():
    return reference_params(None)


@pytest.fixture(scope="session")
def d5():
    return reference_params(5)


@dataclass
class QuantumRun:
    psi0: qm.ReducedWavefunction
    result: qm.PropagationResult
    crossings: np.ndarray
    midpoints: np.ndarray

    def at(self, tau):
        return self.result.snapshot_at(tau)

    def positions(self, tau):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return qm.reconstruct_position_density(self.at(tau))


@pytest.fixture(scope="session")
def quantum_run(d5):
    """l = 5 packet (p0 = 0.6, width 20/k) on 1024 points over tau in [0, 3]."""
    pk = qm.reference_packet()
    crossings = analysis.crossing_schedule(pk, L5, d5)
    mids = analysis.plateau_midpoints(crossings)
    grid = np.round(np.arange(0.1, 3.0, 0.1), 6)
    snaps = tuple(sorted(set([0.0, 3.0, *crossings, *mids, *grid])))
    psi = qm.init_packet(pk, L5, d5)
    res = qm.propagate(psi, (0.0, 3.0), qm.StepControl(snapshot_times=snaps))
    return QuantumRun(psi, res, crossings, mids)


@pytest.fixture(scope="session")
def ensemble_run(d_classical):
    return run_ensemble(reference_ensemble_spec(1000), (0.0, 3.0), d_classical)


# ----------------------------------------------------------------------------
# acceptance report: one line per criterion, echoed in the terminal summary

_REPORT: dict[int, str] = {}


@pytest.fixture
def report(capsys):
    def emit(number: int, passed: bool, text: str):
        line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}: {text}"
        _REPORT[number] = line
        with capsys.disabled():
            print("\n" + line)
        return passed
    return emit


def pytest_terminal_summary(terminalreporter):
    if _REPORT:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_REPORT):
            terminalreporter.write_line(_REPORT[k])
