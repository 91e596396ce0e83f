"""Classical ensembles over the initial fast phase, binned into densities in Q or P."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from .classical import (FullClassicalState, Trajectory, _full_rhs, _full_trajectory, _pole_event,
                        classify_trajectory)
from .model import DimensionlessParams


@dataclass(frozen=True)
class EnsembleSpec:
    n_traj: int
    base_state: FullClassicalState
    seed: int = 0
    phi_sampling: str = "grid"  # "grid" or "random"

    def __post_init__(self):
        if self.n_traj < 1:
            raise ValueError("n_traj must be at least 1")
        if self.phi_sampling not in ("grid", "random"):
            raise ValueError(f"unknown phi_sampling {self.phi_sampling!r}")

    def phase_offsets(self) -> np.ndarray:
        """Phases relative to the base state's phi, in [0, 2 pi)."""
        if self.phi_sampling == "grid":
            return 2 * np.pi * np.arange(self.n_traj) / self.n_traj
        rng = np.random.default_rng(self.seed)
        return rng.uniform(0.0, 2 * np.pi, self.n_traj)

    def initial_phases(self) -> np.ndarray:
        return self.base_state.phi + self.phase_offsets()


@dataclass
class EnsembleResult:
    spec: EnsembleSpec
    params: DimensionlessParams
    times: np.ndarray
    states: np.ndarray  # (n_traj, n_times, 4)
    phi0: np.ndarray
    failures: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.phi0)

    def trajectory(self, j: int) -> Trajectory:
        return _full_trajectory(self.times, self.states[j], self.params)

    def derivatives(self) -> np.ndarray:
        rhs = _full_rhs(self.params)
        n, nt, _ = self.states.shape
        flat = self.states.transpose(1, 0, 2).reshape(nt, 4 * n)
        out = np.stack([rhs(t, y) for t, y in zip(self.times, flat)])
        return out.reshape(nt, n, 4).transpose(1, 0, 2)

    def downconversion_fraction(self) -> float:
        ok = [j for j in range(len(self)) if j not in self.failures]
        hits = sum(classify_trajectory(self.trajectory(j)).is_downconversion for j in ok)
        return hits / len(ok)


def _relative_rhs(d: DimensionlessParams):
    # variables (x = q - phi, p, phi - phi0, lz); depends on x only, so a common
    # shift of q and phi leaves the integration bitwise unchanged
    Mt, Om, g = d.M_tilde, d.Omega_tilde, d.gamma_tilde

    def rhs(tau, y):
        x, p, lz = y[0::4], y[1::4], y[3::4]
        root = np.sqrt(np.clip(1.0 - lz * lz, 0.0, None))
        s, c = np.sin(x), np.cos(x)
        dphi = Om + g * lz * c / root
        out = np.empty_like(y)
        out[0::4] = p / Mt - dphi
        out[1::4] = -1.0 - g * root * s
        out[2::4] = dphi
        out[3::4] = g * root * s
        return out

    return rhs


def _integrate_relative(rhs, y0, span, tol, times):
    atol = tol * max(1.0, float(np.max(np.abs(y0))))
    return solve_ivp(rhs, span, y0, method="DOP853", rtol=tol, atol=atol,
                     t_eval=times, events=_pole_event)


def run_ensemble(spec: EnsembleSpec, span, d: DimensionlessParams, tol: float = 1e-10,
                 n_samples: int = 1969, batch: int = 250) -> EnsembleResult:
    """Evolve the ensemble and sample every member on a common uniform time grid.

    Members are integrated together in batches as one stacked ODE system,
    which is exact trajectory by trajectory since the members do not
    interact.  A batch that fails is redone member by member so that a
    failure is attributed to its own trajectory.  The integration runs in
    translation-invariant variables, so shifting the base q and phi by the
    same amount shifts every output q and phi by exactly that amount.
    """
    base = spec.base_state
    offsets = spec.phase_offsets()
    phi0 = base.phi + offsets
    x0 = (base.q - base.phi) - offsets
    times = np.linspace(span[0], span[1], n_samples)
    rel = np.full((spec.n_traj, n_samples, 4), np.nan)
    failures = {}
    rhs = _relative_rhs(d)

    def initial(idx):
        y0 = np.empty((len(idx), 4))
        y0[:] = (0.0, base.p, 0.0, base.lz)
        y0[:, 0] = x0[idx]
        return y0.ravel()

    for start in range(0, spec.n_traj, batch):
        idx = np.arange(start, min(start + batch, spec.n_traj))
        sol = _integrate_relative(rhs, initial(idx), span, tol, times)
        if sol.status == 0:
            rel[idx] = sol.y.reshape(len(idx), 4, -1).transpose(0, 2, 1)
            continue
        for j in idx:
            sol = _integrate_relative(rhs, initial(np.array([j])), span, tol, times)
            rel[j, :sol.y.shape[1]] = sol.y.T
            if sol.status != 0:
                reason = "pole reached" if sol.status == 1 else sol.message
                failures[int(j)] = f"integration stopped at tau={sol.t[-1]:.6g}: {reason}"
    states = np.empty_like(rel)
    states[..., 2] = phi0[:, None] + rel[..., 2]
    states[..., 0] = rel[..., 0] + states[..., 2]
    states[..., 1] = rel[..., 1]
    states[..., 3] = rel[..., 3]
    return EnsembleResult(spec, d, times, states, phi0, failures)


@dataclass
class DensityHistogram:
    axis: str
    bin_edges: np.ndarray
    time_samples: np.ndarray
    counts: np.ndarray  # (n_times, n_bins)
    underflow: np.ndarray
    overflow: np.ndarray

    @property
    def bin_centers(self):
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    def totals(self):
        return self.counts.sum(axis=1) + self.underflow + self.overflow


def bin_density(ens: EnsembleResult, axis: str, n_bins: int = 1700, n_times: int = 1312,
                edges=None, times=None) -> DensityHistogram:
    """Count ensemble members per bin at equally spaced times.

    Sample times that are not on the ensemble grid are reached by cubic
    Hermite interpolation, using the equations of motion for the slopes.
    Members outside the bin range go to the underflow/overflow counters.
    """
    if len(ens) == 0:
        raise ValueError("empty ensemble")
    col = {"Q": 0, "P": 1}[axis.upper()]
    if times is None:
        times = np.linspace(ens.times[0], ens.times[-1], n_times)
    times = np.asarray(times, dtype=float)
    values = _sample(ens, col, times)
    finite = np.isfinite(values)
    if edges is None:
        lo, hi = np.min(values[finite]), np.max(values[finite])
        pad = 1e-9 * max(1.0, hi - lo)
        edges = np.linspace(lo - pad, hi + pad, n_bins + 1)
    edges = np.asarray(edges, dtype=float)
    nb = len(edges) - 1
    idx = np.searchsorted(edges, values, side="right") - 1
    counts = np.zeros((len(times), nb), dtype=np.int64)
    under = np.zeros(len(times), dtype=np.int64)
    over = np.zeros(len(times), dtype=np.int64)
    for it in range(len(times)):
        row = idx[:, it]
        valid = finite[:, it]
        under[it] = np.count_nonzero(valid & (row < 0))
        over[it] = np.count_nonzero(valid & (row >= nb)) + np.count_nonzero(~valid)
        inside = valid & (row >= 0) & (row < nb)
        counts[it] = np.bincount(row[inside], minlength=nb)
    return DensityHistogram(axis.upper(), edges, times, counts, under, over)


def _sample(ens: EnsembleResult, col: int, times: np.ndarray) -> np.ndarray:
    grid = ens.times
    if len(times) == len(grid) and np.array_equal(times, grid):
        return ens.states[:, :, col].copy()
    deriv = ens.derivatives()
    spline = CubicHermiteSpline(grid, ens.states[:, :, col], deriv[:, :, col], axis=1)
    return spline(times)


def shift_time_statistic(h1: DensityHistogram, h2: DensityHistogram) -> float:
    """Largest per-bin count difference in units of binomial noise sqrt(c1 + c2 + 1)."""
    diff = np.abs(h1.counts - h2.counts)
    return float(np.max(diff / np.sqrt(h1.counts + h2.counts + 1.0)))


def reference_ensemble_spec(n_traj: int = 1000, seed: int = 0) -> EnsembleSpec:
    return EnsembleSpec(n_traj, FullClassicalState(0.0, 0.6, 0.0, math.sqrt(5.0 / 6.0)), seed)
