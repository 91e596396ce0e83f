"""Classical daemon dynamics: the full 4-D system and its reduction to the L-sphere."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .model import DimensionlessParams

POLE_MARGIN = 1e-12

DECOUPLING = "decoupling"
DOWNCONVERSION = "downconversion"
INCONCLUSIVE = "inconclusive"


class PoleSingularityError(ValueError):
    """Derivatives of the sphere coordinates are singular at |lz| = 1."""


class IntegrationError(RuntimeError):
    """Integration stopped early; ``partial`` holds the trajectory computed so far."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class FullClassicalState:
    q: float
    p: float
    phi: float
    lz: float

    def __post_init__(self):
        if abs(self.lz) > 1.0:
            raise ValueError(f"|lz| must not exceed 1, got {self.lz}")

    def as_array(self) -> np.ndarray:
        return np.array([self.q, self.p, self.phi, self.lz], dtype=float)


@dataclass(frozen=True)
class ReducedClassicalState:
    phi: float
    lz: float

    def __post_init__(self):
        if abs(self.lz) > 1.0:
            raise ValueError(f"|lz| must not exceed 1, got {self.lz}")


@dataclass
class Trajectory:
    """Sampled solution.  ``states`` has one row per time; phi is kept unwrapped."""

    times: np.ndarray
    states: np.ndarray
    kind: str  # "full" or "reduced"
    params: DimensionlessParams
    diagnostics: dict = field(default_factory=dict)
    labels: np.ndarray | None = None

    def __post_init__(self):
        if self.times.ndim != 1 or len(self.times) != len(self.states):
            raise ValueError("times and states must have matching lengths")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def q(self):
        return self.states[:, 0]

    @property
    def p(self):
        return self.states[:, 1]

    @property
    def phi(self):
        return self.states[:, -2]

    @property
    def lz(self):
        return self.states[:, -1]

    def wrapped_phi(self) -> np.ndarray:
        return wrap_angle(self.phi)

    def sphere_xyz(self) -> np.ndarray:
        """Cartesian components of the unit L vector, for plotting on the sphere."""
        r = np.sqrt(np.clip(1.0 - self.lz ** 2, 0.0, None))
        return np.column_stack([r * np.cos(self.phi), r * np.sin(self.phi), self.lz])


def wrap_angle(phi):
    return (np.asarray(phi) + np.pi) % (2 * np.pi) - np.pi


# ----------------------------------------------------------------------------
# full system

def full_energy(states, d: DimensionlessParams):
    s = np.asarray(states, dtype=float)
    q, p, phi, lz = s[..., 0], s[..., 1], s[..., 2], s[..., 3]
    root = np.sqrt(np.clip(1.0 - lz ** 2, 0.0, None))
    return p ** 2 / (2 * d.M_tilde) + q + d.Omega_tilde * lz - d.gamma_tilde * root * np.cos(q - phi)


def noether_J(s, tau):
    """J~ = p + tau + lz, exactly conserved by the full dynamics."""
    if isinstance(s, FullClassicalState):
        return s.p + tau + s.lz
    s = np.asarray(s, dtype=float)
    return s[..., 1] + tau + s[..., 3]


def _full_rhs(d: DimensionlessParams):
    Mt, Om, g = d.M_tilde, d.Omega_tilde, d.gamma_tilde

    def rhs(tau, y):
        q, p, phi, lz = y[0::4], y[1::4], y[2::4], y[3::4]
        root = np.sqrt(np.clip(1.0 - lz * lz, 0.0, None))  # trial steps may overshoot a pole
        x = q - phi
        s, c = np.sin(x), np.cos(x)
        out = np.empty_like(y)
        out[0::4] = p / Mt
        out[1::4] = -1.0 - g * root * s
        out[2::4] = Om + g * lz * c / root
        out[3::4] = g * root * s
        return out

    return rhs


def full_derivatives(s: FullClassicalState, tau: float, d: DimensionlessParams) -> np.ndarray:
    """Hamilton's equations for the dimensionless daemon Hamiltonian.

    Returns (dq, dp, dphi, dlz)/dtau.  The lz equation carries the sign that
    makes J~ = p + tau + lz an exact constant of motion.
    """
    if abs(s.lz) >= 1.0:
        raise PoleSingularityError("derivative undefined at |lz| = 1")
    return _full_rhs(d)(tau, s.as_array())


def _pole_event(tau, y):
    return (1.0 - POLE_MARGIN) - np.max(np.abs(y[3::4]))


_pole_event.terminal = True


def _solve(rhs, y0, span, tol, t_eval, max_step, event):
    atol = tol * max(1.0, float(np.max(np.abs(y0))))
    return solve_ivp(rhs, span, y0, method="DOP853", rtol=tol, atol=atol,
                     t_eval=t_eval, events=event, max_step=max_step,
                     dense_output=False)


def integrate_full(s0: FullClassicalState, span, d: DimensionlessParams,
                   tol: float = 1e-12, t_eval=None, max_step: float = np.inf) -> Trajectory:
    """Adaptive 8th-order Runge-Kutta (DOP853) integration of the full system.

    With ``t_eval`` unset every accepted step is returned.  Reaching the pole
    margin stops integration with :class:`IntegrationError`.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if abs(s0.lz) >= 1.0 - POLE_MARGIN:
        raise PoleSingularityError("initial state sits on a pole")
    sol = _solve(_full_rhs(d), s0.as_array(), span, tol, t_eval, max_step, _pole_event)
    traj = _full_trajectory(sol.t, sol.y.T, d)
    if sol.status != 0:
        reason = "pole reached" if sol.status == 1 else sol.message
        raise IntegrationError(f"integration stopped at tau={sol.t[-1]:.6g}: {reason}", traj)
    return traj


def _full_trajectory(t, states, d):
    traj = Trajectory(np.asarray(t), np.asarray(states), "full", d)
    traj.diagnostics["energy"] = full_energy(traj.states, d)
    traj.diagnostics["J"] = noether_J(traj.states, traj.times)
    return traj


def reduced_time_offset(s: FullClassicalState, tau: float, d: DimensionlessParams) -> float:
    """Reduced-clock value sigma at full time tau: sigma = tau + M~ Omega~ - J~."""
    return tau + d.M_tilde * d.Omega_tilde - noether_J(s, tau)


def reduce_state(s: FullClassicalState) -> ReducedClassicalState:
    """Canonical map to the sphere variables: phi -> phi - q, keep lz."""
    return ReducedClassicalState(float(s.phi - s.q), s.lz)


# ----------------------------------------------------------------------------
# reduced (sphere) system

def reduced_energy(phi, lz, sigma, d: DimensionlessParams):
    """H_eff in dimensionless form: (lz^2/2 + sigma lz)/M~ - gamma~ sqrt(1-lz^2) cos(phi)."""
    lz = np.asarray(lz, dtype=float)
    root = np.sqrt(np.clip(1.0 - lz ** 2, 0.0, None))
    return (0.5 * lz ** 2 + sigma * lz) / d.M_tilde - d.gamma_tilde * root * np.cos(phi)


def _reduced_rhs(d: DimensionlessParams):
    Mt, g = d.M_tilde, d.gamma_tilde

    def rhs(sigma, y):
        phi, lz = y[0::2], y[1::2]
        root = np.sqrt(np.clip(1.0 - lz * lz, 0.0, None))
        out = np.empty_like(y)
        out[0::2] = (lz + sigma) / Mt + g * lz * np.cos(phi) / root
        out[1::2] = -g * root * np.sin(phi)
        return out

    return rhs


def _reduced_pole_event(sigma, y):
    return (1.0 - POLE_MARGIN) - np.max(np.abs(y[1::2]))


_reduced_pole_event.terminal = True


def integrate_reduced(s0: ReducedClassicalState, span, d: DimensionlessParams,
                      tol: float = 1e-12, t_eval=None, max_step: float = np.inf) -> Trajectory:
    """Integrate the sphere dynamics; ``span`` is in the reduced clock sigma."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if abs(s0.lz) >= 1.0 - POLE_MARGIN:
        raise PoleSingularityError("initial state sits on a pole")
    y0 = np.array([s0.phi, s0.lz])
    sol = _solve(_reduced_rhs(d), y0, span, tol, t_eval, max_step, _reduced_pole_event)
    traj = Trajectory(sol.t, sol.y.T, "reduced", d)
    traj.diagnostics["energy"] = reduced_energy(traj.phi, traj.lz, traj.times, d)
    if sol.status != 0:
        raise IntegrationError(f"integration stopped at sigma={sol.t[-1]:.6g}", traj)
    return traj


# ----------------------------------------------------------------------------
# phase classification

@dataclass
class PhaseReport:
    labels: np.ndarray
    intervals: list[tuple[float, float]]
    perturbations: list[tuple[float, float]]
    lz_drop: float
    conclusive: bool

    @property
    def is_downconversion(self) -> bool:
        return bool(self.intervals)

    @property
    def start(self):
        return self.intervals[0][0] if self.intervals else None

    @property
    def end(self):
        return self.intervals[-1][1] if self.intervals else None


def classify_trajectory(t: Trajectory, band_tol: float = 0.05, band_half: float | None = None,
                        min_duration: float | None = None) -> PhaseReport:
    """Label each sample of a full trajectory as decoupling or downconversion.

    Candidate samples have p inside the resonance band M~Omega~ +- band_half
    (default: the small-coupling separatrix half-height 2 sqrt(M~ gamma~)).
    A contiguous candidate run counts as downconversion when it lasts at least
    ``min_duration`` (default: twice the free-fall time through the band) and
    its mean velocity, the exact difference quotient of q over the run, lies
    within Omega~(1 +- band_tol).  Shorter runs are reported as perturbations:
    that is what a decoupling trajectory shows as it falls through resonance.
    """
    d = t.params
    if t.kind != "full":
        raise ValueError("classify_trajectory needs a full trajectory")
    if band_half is None:
        band_half = 2.0 * math.sqrt(d.M_tilde * d.gamma_tilde)
    if min_duration is None:
        min_duration = 4.0 * band_half

    tau, q = t.times, t.q
    p_c = d.M_tilde * d.Omega_tilde
    in_band = np.abs(t.p - p_c) <= band_half

    labels = np.full(len(tau), DECOUPLING, dtype=object)
    intervals, perturbations = [], []
    for a, b in _runs(in_band):
        t0, t1 = tau[a], tau[b - 1]
        mean_v = (q[b - 1] - q[a]) / (t1 - t0) if t1 > t0 else np.nan
        steady = abs(mean_v - d.Omega_tilde) <= band_tol * d.Omega_tilde
        if t1 - t0 >= min_duration and steady:
            labels[a:b] = DOWNCONVERSION
            intervals.append((t0, t1))
        else:
            perturbations.append((t0, t1))

    conclusive = t.p[0] > p_c and (t.p[-1] < p_c - band_half or bool(intervals))
    if not conclusive:
        labels[:] = INCONCLUSIVE
    lz_drop = 0.0
    if intervals:
        i0 = np.searchsorted(tau, intervals[0][0])
        i1 = np.searchsorted(tau, intervals[-1][1])
        lz_drop = float(t.lz[i0] - t.lz[i1])
    t.labels = labels
    return PhaseReport(labels, intervals, perturbations, lz_drop, conclusive)


def _runs(mask):
    """(start, stop) index pairs of contiguous True runs."""
    m = np.concatenate([[False], np.asarray(mask, bool), [False]])
    edges = np.flatnonzero(np.diff(m.astype(int)))
    return list(zip(edges[0::2], edges[1::2]))
