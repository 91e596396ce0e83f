"""Exact quantum evolution of the weight plus fast rotor, via the reduced (2l+1)-level problem.

Amplitudes are stored against the conserved momentum variable ``P_c``.  At
time tau the weight component with fast label m has internal momentum
``P = P_c - tau`` and physical momentum ``P - m hbar/L``; its amplitude is
``Psi_m(P) = psi_m(P_c) exp(i (L/hbar) P^3 / (6 M~))``.  Every ``P_c`` evolves
on its own under ``h(sigma)`` with ``sigma = tau - (P_c - M~ Omega~)``.

Since the cubic phase has unit modulus it drops out of every momentum-space
density and only enters the position reconstruction.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .model import DimensionlessParams, DomainError, UnsupportedModeError, check_spin, l_to_L_over_hbar
from .spectrum import coupling, m_values

# ----------------------------------------------------------------------------
# state


@dataclass(frozen=True)
class PacketSpec:
    p0: float  # mean physical momentum
    width_d: float = 20.0  # position width in units of 1/k
    m0: float | None = None  # initial fast level; None means the top of the ladder
    q0: float = 0.0

    def __post_init__(self):
        if not self.width_d > 0:
            raise DomainError("width_d must be positive")
        if math.isinf(self.width_d):
            raise UnsupportedModeError("a momentum eigenstate (infinite width) is not representable")

    def sigma_p(self, d: DimensionlessParams) -> float:
        """Momentum width: the packet amplitude is exp(-(P - P0)^2 / (2 sigma_p^2))."""
        return d.hbar_over_L / self.width_d


@dataclass
class ReducedWavefunction:
    l: float
    params: DimensionlessParams
    p_grid: np.ndarray  # conserved variable P_c, uniform
    amps: np.ndarray  # (n_grid, 2l+1), columns ordered m = -l..l
    time: float
    n_shift: int  # grid points per hbar/L
    q_mean: float = 0.0  # mean position, carried along by the Ehrenfest relation

    @property
    def delta(self) -> float:
        """Grid spacing, hbar/L divided by n_shift by construction."""
        return self.params.hbar_over_L / self.n_shift

    @property
    def m(self) -> np.ndarray:
        return m_values(self.l)

    def norm(self) -> float:
        return float(np.sum(np.abs(self.amps) ** 2) * self.delta)

    def point_norms(self) -> np.ndarray:
        return np.sum(np.abs(self.amps) ** 2, axis=1)

    def copy(self) -> "ReducedWavefunction":
        return replace(self, amps=self.amps.copy(), p_grid=self.p_grid.copy())

    def internal_momentum(self) -> np.ndarray:
        return self.p_grid - self.time

    def sigma(self) -> np.ndarray:
        return self.time - (self.p_grid - self.params.M_tilde * self.params.Omega_tilde)

    def physical_amplitudes(self) -> np.ndarray:
        """Psi_m(P) on the internal-momentum grid, cubic phase included."""
        p = self.internal_momentum()
        phase = np.exp(1j * self.params.L_over_hbar * p ** 3 / (6.0 * self.params.M_tilde))
        return self.amps * phase[:, None]


def _spin_params(l: float, d: DimensionlessParams) -> DimensionlessParams:
    check_spin(l)
    return d.replace(L_over_hbar=l_to_L_over_hbar(l))


def init_packet(spec: PacketSpec, l: float, d: DimensionlessParams, n_grid: int = 1024,
                n_shift: int = 1024, min_sigmas: float = 8.0) -> ReducedWavefunction:
    """Gaussian packet in the fast level m0 on a grid with hbar/L = n_shift * spacing."""
    d = _spin_params(l, d)
    m0 = l if spec.m0 is None else spec.m0
    if not (-l <= m0 <= l):
        raise DomainError(f"m0={m0} not on the ladder")
    hol = d.hbar_over_L
    delta = hol / n_shift
    sp = spec.sigma_p(d)
    if 0.5 * (n_grid - 1) * delta < min_sigmas * sp:
        raise DomainError(f"grid half-width {(n_grid - 1) * delta / 2:.4g} below {min_sigmas} momentum widths")
    center = spec.p0 + m0 * hol  # internal momentum of the m0 component at tau=0
    p_c = center + (np.arange(n_grid) - n_grid // 2) * delta
    gauss = np.exp(-0.5 * ((p_c - center) / sp) ** 2) * np.exp(-1j * d.L_over_hbar * spec.q0 * (p_c - m0 * hol))
    gauss /= math.sqrt(np.sum(np.abs(gauss) ** 2) * delta)
    amps = np.zeros((n_grid, int(round(2 * l)) + 1), dtype=complex)
    j0 = int(round(m0 + l))
    # undo the cubic phase so that Psi itself is the plain Gaussian at tau=0
    amps[:, j0] = gauss * np.exp(-1j * d.L_over_hbar * p_c ** 3 / (6.0 * d.M_tilde))
    return ReducedWavefunction(l, d, p_c, amps, 0.0, n_shift, spec.q0)


# ----------------------------------------------------------------------------
# propagators


def _h_batch(l: float, d: DimensionlessParams, sigma: np.ndarray) -> np.ndarray:
    m = m_values(l)
    hol = d.hbar_over_L
    n = len(m)
    h = np.zeros(sigma.shape + (n, n))
    idx = np.arange(n)
    h[..., idx, idx] = (0.5 * hol * m ** 2 + sigma[..., None] * m) / d.M_tilde
    w = coupling(l, d)
    h[..., idx[1:], idx[:-1]] = -w
    h[..., idx[:-1], idx[1:]] = -w
    return h


def step_unitaries(l: float, d: DimensionlessParams, sigma_start, dt: float, order: int = 4,
                   chunk: int = 4096) -> np.ndarray:
    """One-step propagators over [s, s + dt] for every start value s (dt may be an array).

    order 2: exponential of the midpoint matrix.  order 4: two-point Gauss
    Magnus expansion with the commutator correction.  Both are exactly
    unitary since the exponent is Hermitian and exponentiated by eigh.
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    s = np.asarray(sigma_start, dtype=float)
    out = np.empty(s.shape + (len(m_values(l)),) * 2, dtype=complex)
    flat_s, flat_out = s.reshape(-1), out.reshape((-1,) + out.shape[-2:])
    flat_dt = np.broadcast_to(np.asarray(dt, dtype=float), s.shape).reshape(-1)
    c = math.sqrt(3.0) / 6.0
    for a in range(0, len(flat_s), chunk):
        ss = flat_s[a:a + chunk]
        h_ = flat_dt[a:a + chunk]
        hh = h_[:, None, None]
        if order == 2:
            g = (hh * _h_batch(l, d, ss + 0.5 * h_)).astype(complex)
        else:
            h1 = _h_batch(l, d, ss + (0.5 - c) * h_)
            h2 = _h_batch(l, d, ss + (0.5 + c) * h_)
            comm = h2 @ h1 - h1 @ h2
            g = 0.5 * hh * (h1 + h2) - 1j * (math.sqrt(3.0) / 12.0) * hh * hh * comm
        ev, vec = np.linalg.eigh(g)
        flat_out[a:a + chunk] = (vec * np.exp(-1j * ev)[..., None, :]) @ np.conj(np.swapaxes(vec, -1, -2))
    return out


@dataclass(frozen=True)
class StepControl:
    substeps: int = 1  # time step = grid spacing / substeps
    order: int = 2
    snapshot_every: int | None = None  # in steps; None keeps only the end state
    snapshot_times: tuple | None = None  # nearest step is used


@dataclass
class PropagationResult:
    final: ReducedWavefunction
    step_times: np.ndarray
    occupations: np.ndarray  # (n_steps + 1, 2l+1)
    snapshots: list[ReducedWavefunction]
    norm_drift: float  # max over grid points of |norm change|
    dt: float
    notes: list[str] = field(default_factory=list)

    def snapshot_at(self, tau: float) -> ReducedWavefunction:
        return min(self.snapshots, key=lambda s: abs(s.time - tau))


def propagate(psi: ReducedWavefunction, span, step: StepControl = StepControl()) -> PropagationResult:
    """Evolve every grid point from span[0] (must equal psi.time) to span[1].

    The step is the grid spacing divided by ``step.substeps``.  With that
    choice the sigma value of grid point i at step n depends only on
    n + (N-1-i)*substeps, so each distinct propagator is built once and
    shared along the lattice diagonal.
    """
    t0, t1 = map(float, span)
    if abs(t0 - psi.time) > 1e-12:
        raise ValueError(f"state is at tau={psi.time}, span starts at {t0}")
    if t1 < t0:
        raise ValueError("backward propagation is not supported")
    l, d = psi.l, psi.params
    n_grid = len(psi.p_grid)
    j = int(step.substeps)
    dt = psi.delta / j
    n_steps = int(math.floor((t1 - t0) / dt + 1e-9))
    rest = (t1 - t0) - n_steps * dt

    # sigma of the last grid point at the start; lattice index k = n + (N-1-i) j
    base = t0 - (psi.p_grid[-1] - d.M_tilde * d.Omega_tilde)
    n_u = n_steps + (n_grid - 1) * j
    cache = step_unitaries(l, d, base + dt * np.arange(n_u), dt, step.order)

    snap_steps = set()
    if step.snapshot_every:
        snap_steps.update(range(0, n_steps + 1, int(step.snapshot_every)))
    if step.snapshot_times:
        for t in step.snapshot_times:
            snap_steps.add(int(min(max(round((t - t0) / dt), 0), n_steps)))

    amps = psi.amps.copy()
    norms0 = np.sum(np.abs(amps) ** 2, axis=1)
    occ = np.empty((n_steps + 1, amps.shape[1]))
    occ[0] = np.sum(np.abs(amps) ** 2, axis=0) * psi.delta
    snapshots = []
    top = (n_grid - 1) * j
    vec = amps[:, :, None]
    for n in range(n_steps):
        if n in snap_steps:
            snapshots.append((n, vec[:, :, 0].copy()))
        u = cache[n + top::-j] if n == 0 else cache[n + top:n - 1:-j]
        vec = u @ vec
        occ[n + 1] = np.sum(np.abs(vec[:, :, 0]) ** 2, axis=0) * psi.delta
    amps = vec[:, :, 0]
    t_end = t0 + n_steps * dt
    times = t0 + dt * np.arange(n_steps + 1)
    if rest > 1e-14:
        sig = t_end - (psi.p_grid - d.M_tilde * d.Omega_tilde)
        amps = (step_unitaries(l, d, sig, rest, step.order) @ amps[:, :, None])[:, :, 0]
        t_end = t1
        times = np.append(times, t1)
        occ = np.vstack([occ, np.sum(np.abs(amps) ** 2, axis=0) * psi.delta])
    # exact Ehrenfest relation dQ/dtau = <P>/M~, with <P> = <P_c> - tau - (hbar/L)<m>
    pc_mean = float(np.sum(norms0 * psi.p_grid) * psi.delta)
    p_mean = pc_mean - times - d.hbar_over_L * (occ @ psi.m)
    q_hist = psi.q_mean + np.concatenate([[0.0], np.cumsum(0.5 * np.diff(times) * (p_mean[1:] + p_mean[:-1]))]) / d.M_tilde
    q_end = q_hist[-1]
    snapshots = [replace(psi, amps=a, time=t0 + n * dt, q_mean=float(q_hist[n])) for n, a in snapshots]
    final = replace(psi, amps=np.ascontiguousarray(amps), time=t_end, q_mean=float(q_end))
    if n_steps in snap_steps or step.snapshot_every:
        snapshots.append(final)
    drift = float(np.max(np.abs(np.sum(np.abs(amps) ** 2, axis=1) - norms0)))
    return PropagationResult(final, times, occ, snapshots, drift, dt)


class PointPropagator:
    """Evolution of a single P_c from sigma0, stored on a lattice of step dt up to sigma_max.

    Values between lattice points are reached by one partial step from the
    lattice point below.
    """

    def __init__(self, l: float, d: DimensionlessParams, amps0, sigma0: float, sigma_max: float,
                 dt: float, order: int = 2):
        self.l, self.d = l, _spin_params(l, d)
        self.sigma0, self.dt, self.order = float(sigma0), float(dt), order
        n_steps = max(int(math.ceil((sigma_max - sigma0) / dt)), 0)
        cache = step_unitaries(l, self.d, sigma0 + dt * np.arange(n_steps), dt, order)
        states = np.empty((n_steps + 1, len(amps0)), dtype=complex)
        states[0] = amps0
        for n in range(n_steps):
            states[n + 1] = cache[n] @ states[n]
        self.states = states

    @property
    def sigma_max(self) -> float:
        return self.sigma0 + self.dt * (len(self.states) - 1)

    def at(self, targets) -> np.ndarray:
        targets = np.asarray(targets, dtype=float)
        if np.any(targets < self.sigma0 - 1e-15) or np.any(targets > self.sigma_max + 1e-12):
            raise ValueError("target outside the propagated interval")
        k = np.clip(np.floor((targets - self.sigma0) / self.dt).astype(int), 0, len(self.states) - 1)
        rest = targets - (self.sigma0 + k * self.dt)
        out = self.states[k].copy()
        need = rest > 1e-15
        if np.any(need):
            u = step_unitaries(self.l, self.d, self.sigma0 + k[need] * self.dt, rest[need], self.order)
            out[need] = (u @ out[need][..., None])[..., 0]
        return out


# ----------------------------------------------------------------------------
# observables


def occupation_probabilities(psi: ReducedWavefunction) -> np.ndarray:
    """p_m = integral |psi_m|^2 dP, ordered m = -l..l."""
    return np.sum(np.abs(psi.amps) ** 2, axis=0) * psi.delta


@dataclass
class MomentumDensity:
    p: np.ndarray  # physical momentum grid
    density: np.ndarray  # total
    per_m: np.ndarray  # (2l+1, len(p))


def reconstruct_momentum_density(psi: ReducedWavefunction) -> MomentumDensity:
    """pr(P) = sum_m |Psi_m(P + m hbar/L)|^2 on a common physical-momentum grid.

    The m-shift is an integer number of grid points, so no interpolation is
    involved.
    """
    n_grid, n_m = psi.amps.shape
    ns = psi.n_shift
    two_l = n_m - 1
    size = n_grid + two_l * ns
    per_m = np.zeros((n_m, size))
    dens = np.abs(psi.amps) ** 2
    for col, m in enumerate(psi.m):
        off = int(round((psi.l - m) * ns))  # P_phys index = i - (m + l) ns + 2l ns
        per_m[col, off:off + n_grid] = dens[:, col]
    p0 = psi.p_grid[0] - psi.time - psi.l * psi.params.hbar_over_L
    p = p0 + psi.delta * np.arange(size)
    return MomentumDensity(p, per_m.sum(axis=0), per_m)


@dataclass
class PositionDensity:
    q: np.ndarray
    density: np.ndarray
    per_m: np.ndarray  # (2l+1, len(q))
    amplitudes: np.ndarray  # complex per-m position amplitudes
    window: float  # period of the discrete transform in Q
    aliased: bool
    edge_mass: float


def _circular_center(dens: np.ndarray, q: np.ndarray, window: float) -> float:
    """Center of the window that puts the emptiest circular arc at the edges."""
    n = len(dens)
    k = max(1, n // 20)
    csum = np.concatenate([[0.0], np.cumsum(np.concatenate([dens, dens]))])
    arc = csum[k:n + k] - csum[:n]
    i = int(np.argmin(arc))
    q_gap = q[0] + (i + k / 2) * (q[1] - q[0])
    return q_gap + window / 2


def reconstruct_position_density(psi: ReducedWavefunction, q_center: float | None = None,
                                 pad: int = 2, edge_fraction: float = 0.05,
                                 alias_tol: float = 1e-6) -> PositionDensity:
    """Per-m Fourier transform of Psi_m to position; incoherent sum over m.

    The transform is periodic in Q with period 2 pi hbar / (L * spacing).
    With ``q_center`` unset the window is placed so that its edges fall in
    the emptiest part of the circle, then moved by whole periods to agree
    with the tracked mean position.  Mass within ``edge_fraction`` of the
    window edges above ``alias_tol`` raises the ``aliased`` flag.
    """
    d = psi.params
    kappa = d.L_over_hbar
    n_grid = len(psi.p_grid)
    n_fft = pad * n_grid
    delta = psi.delta
    window = 2.0 * math.pi / (kappa * delta)
    dq = window / n_fft
    big = psi.physical_amplitudes()  # (n_grid, n_m), indexed by internal momentum
    p_int = psi.internal_momentum()

    def transform(center):
        q = center - window / 2 + dq * np.arange(n_fft)
        out = np.empty((big.shape[1], n_fft), dtype=complex)
        for col, m in enumerate(psi.m):
            p_phys = p_int - m * d.hbar_over_L
            # sum_i Psi_i exp(i kappa p_i q_j) with p_i = p_phys[0] + i delta, q_j = q[0] + j dq
            a = big[:, col] * np.exp(1j * kappa * (p_phys - p_phys[0]) * q[0])
            f = np.fft.ifft(a, n_fft) * n_fft
            out[col] = f * np.exp(1j * kappa * p_phys[0] * q) * delta * math.sqrt(kappa / (2 * math.pi))
        return q, out

    if q_center is None:
        q, amp = transform(0.0)
        q_center = _circular_center(np.sum(np.abs(amp) ** 2, axis=0), q, window)
        dens = np.sum(np.abs(amp) ** 2, axis=0)
        qq = q_center - window / 2 + np.mod(q - (q_center - window / 2), window)
        mean = float(np.sum(qq * dens) / np.sum(dens))
        q_center += window * round((psi.q_mean - mean) / window)
    q, amp = transform(q_center)
    per_m = np.abs(amp) ** 2
    total = per_m.sum(axis=0)
    edge = int(edge_fraction * n_fft)
    mass = float((total[:edge].sum() + total[-edge:].sum()) * dq)
    aliased = mass > alias_tol
    if aliased:
        warnings.warn(f"position window edges carry mass {mass:.2e}; density may be aliased")
    return PositionDensity(q, total, per_m, amp, window, aliased, mass)


def energy_expectation(psi: ReducedWavefunction, pos: PositionDensity | None = None) -> dict:
    """Mean total energy split into kinetic, gravitational, fast-sector and coupling parts."""
    d = psi.params
    hol = d.hbar_over_L
    if pos is None:
        pos = reconstruct_position_density(psi, pad=4)
    dens = np.abs(psi.amps) ** 2
    p_int = psi.internal_momentum()
    p_phys = p_int[:, None] - psi.m[None, :] * hol
    kinetic = float(np.sum(dens * p_phys ** 2) * psi.delta / (2.0 * d.M_tilde))
    dq = pos.q[1] - pos.q[0]
    gravity = float(np.sum(pos.q * pos.density) * dq)
    fast = float(d.Omega_tilde * hol * np.sum(dens * psi.m[None, :]) * psi.delta)
    w = coupling(psi.l, d)
    cross = np.sum(w[None, :] * 2.0 * np.real(np.conj(psi.amps[:, :-1]) * psi.amps[:, 1:]), axis=1)
    coup = float(-hol * np.sum(cross) * psi.delta)
    total = kinetic + gravity + fast + coup
    return {"kinetic": kinetic, "gravity": gravity, "fast": fast, "coupling": coup, "total": total}


def branch_position_moments(pos: PositionDensity) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-m weight, mean position and standard deviation."""
    dq = pos.q[1] - pos.q[0]
    w = pos.per_m.sum(axis=1) * dq
    safe = np.where(w > 0, w, 1.0)
    mean = (pos.per_m @ pos.q) * dq / safe
    var = (pos.per_m @ pos.q ** 2) * dq / safe - mean ** 2
    return w, mean, np.sqrt(np.clip(var, 0.0, None))


def branch_momentum_moments(psi: ReducedWavefunction) -> tuple[np.ndarray, np.ndarray]:
    """Per-m weight and mean physical momentum."""
    dens = np.abs(psi.amps) ** 2
    w = dens.sum(axis=0) * psi.delta
    p_int = psi.internal_momentum()
    safe = np.where(w > 0, w, 1.0)
    mean = (p_int @ dens) * psi.delta / safe - psi.m * psi.params.hbar_over_L
    return w, mean


def reference_packet() -> PacketSpec:
    return PacketSpec(p0=0.6, width_d=20.0)
