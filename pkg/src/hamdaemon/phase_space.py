"""Instantaneous phase-space geometry of the reduced Hamiltonian on the L-sphere.

Everything here is evaluated at a frozen value of the reduced clock ``sigma``
(for the worked example launched at p=0.6, sigma = tau - 1.3129).  Areas are
in units of L, so 2*pi*hbar corresponds to 2*pi/(L/hbar).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq, minimize_scalar

from .classical import reduced_energy
from .model import DimensionlessParams, separatrix_area_estimate

STABLE = "stable"
UNSTABLE = "unstable"


class NoSeparatrixError(ValueError):
    """No unstable fixed point exists at the requested time."""


@dataclass(frozen=True)
class FixedPoint:
    phi: float
    lz: float
    energy: float
    stability: str


@dataclass
class Separatrix:
    sigma: float
    energy: float
    unstable_point: FixedPoint
    phi: np.ndarray
    upper_branch: np.ndarray
    lower_branch: np.ndarray
    area: float  # units of L
    params: DimensionlessParams

    @property
    def area_hbar(self) -> float:
        """Area in units of pi*hbar."""
        return self.area * self.params.L_over_hbar / math.pi

    @property
    def area_2pi_hbar(self) -> float:
        """Area in units of 2*pi*hbar, i.e. the number of states it holds."""
        return 0.5 * self.area_hbar


@dataclass(frozen=True)
class BSLevel:
    n: int
    energy: float
    action: float  # units of L
    region: str


@dataclass
class Contour:
    energy: float
    region: str  # "upper", "lower", "inside", "winding"
    phi: np.ndarray
    lz: np.ndarray  # closed loops carry both halves, traced counter-clockwise


@dataclass
class ContourSet:
    sigma: float
    contours: list[Contour]
    notes: list[str] = field(default_factory=list)


# ----------------------------------------------------------------------------
# fixed points

def _dK_scaled(theta, phi_cos, sigma, d):
    # dK/dlz * sqrt(1 - lz^2) with lz = cos(theta); smooth up to the poles
    c, s = np.cos(theta), np.sin(theta)
    return (c + sigma) * s / d.M_tilde + d.gamma_tilde * phi_cos * c


def _hessian_det(phi, lz, d):
    root = math.sqrt(1.0 - lz * lz)
    k_pp = d.gamma_tilde * root * math.cos(phi)
    k_ll = 1.0 / d.M_tilde + d.gamma_tilde * math.cos(phi) / root ** 3
    return k_pp * k_ll


def instantaneous_fixed_points(d: DimensionlessParams, sigma: float,
                               n_scan: int = 4001) -> list[FixedPoint]:
    """All fixed points on the meridians phi=0 and phi=pi, classified by the Hessian."""
    theta = np.linspace(0.0, math.pi, n_scan)[1:-1]
    points = []
    for phi in (0.0, math.pi):
        c = math.cos(phi)
        f = _dK_scaled(theta, c, sigma, d)
        for i in np.flatnonzero(np.sign(f[:-1]) * np.sign(f[1:]) < 0):
            th = brentq(_dK_scaled, theta[i], theta[i + 1], args=(c, sigma, d), xtol=1e-15)
            lz = math.cos(th)
            kind = STABLE if _hessian_det(phi, lz, d) > 0 else UNSTABLE
            points.append(FixedPoint(phi, lz, float(reduced_energy(phi, lz, sigma, d)), kind))
    return points


def unstable_point(d: DimensionlessParams, sigma: float) -> FixedPoint:
    saddles = [fp for fp in instantaneous_fixed_points(d, sigma) if fp.stability == UNSTABLE]
    if not saddles:
        raise NoSeparatrixError(f"no separatrix at sigma={sigma}")
    return saddles[0]


def sigma_for_latitude(d: DimensionlessParams, lz: float) -> float:
    """Reduced time at which the unstable point sits at latitude ``lz``."""
    return d.M_tilde * d.gamma_tilde * lz / math.sqrt(1.0 - lz * lz) - lz


def separatrix_window(d: DimensionlessParams) -> tuple[float, float]:
    """Interval of sigma on which a separatrix exists (found by bisection on existence)."""
    def exists(s):
        return any(fp.stability == UNSTABLE for fp in instantaneous_fixed_points(d, s, 2001))

    def edge(inside, outside):
        for _ in range(60):
            mid = 0.5 * (inside + outside)
            if exists(mid):
                inside = mid
            else:
                outside = mid
        return inside

    return edge(0.0, -2.0), edge(0.0, 2.0)


# ----------------------------------------------------------------------------
# vectorised root finding along lz at fixed phi

def _K(phi, lz, sigma, d):
    # reduced energy without clipping; callers keep |lz| <= 1
    return (0.5 * lz * lz + sigma * lz) / d.M_tilde - d.gamma_tilde * np.sqrt(1.0 - lz * lz) * np.cos(phi)


def _bisect_lz(phi, energy, lo, hi, sigma, d, iters=56):
    """Root of K(phi, lz) = energy in [lo, hi]; K - energy must change sign on the bracket."""
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    phi = np.broadcast_to(phi, lo.shape)
    cos_phi = np.cos(phi)
    lin = sigma / d.M_tilde

    def f(z):
        return (0.5 * z * z / d.M_tilde + lin * z) - d.gamma_tilde * np.sqrt(1.0 - z * z) * cos_phi - energy

    f_lo = f(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        same = np.sign(f_mid) == np.sign(f_lo)
        lo = np.where(same, mid, lo)
        f_lo = np.where(same, f_mid, f_lo)
        hi = np.where(same, hi, mid)
    return 0.5 * (lo + hi)


def _graded_nodes(n_panels: int = 14, order: int = 16):
    """Gauss-Legendre nodes on [0, pi], panels graded geometrically toward pi."""
    breaks = [0.0, math.pi / 2]
    for k in range(2, n_panels):
        breaks.append(math.pi * (1 - 0.5 ** k))
    breaks.append(math.pi)
    x, w = np.polynomial.legendre.leggauss(order)
    nodes, weights = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        nodes.append(0.5 * (b - a) * x + 0.5 * (b + a))
        weights.append(0.5 * (b - a) * w)
    return np.concatenate(nodes), np.concatenate(weights)


_PHI_NODES, _PHI_WEIGHTS = _graded_nodes()


class _Geometry:
    """Separatrix branches and region boundaries at one instant."""

    def __init__(self, d: DimensionlessParams, sigma: float):
        self.d, self.sigma = d, sigma
        self.e_north = reduced_energy(0.0, 1.0, sigma, d)
        self.e_south = reduced_energy(0.0, -1.0, sigma, d)
        saddles = [fp for fp in instantaneous_fixed_points(d, sigma) if fp.stability == UNSTABLE]
        self.saddle = saddles[0] if saddles else None
        self._ridge_table = None
        if self.saddle is not None:
            self.e0 = self.saddle.energy
            lz_u = self.saddle.lz
            lz_c = brentq(lambda z: (z + sigma) / d.M_tilde + d.gamma_tilde * z / math.sqrt(1 - z * z),
                          self.lower(0.0), self.upper(0.0), xtol=1e-15)
            self.center = FixedPoint(0.0, lz_c, float(reduced_energy(0.0, lz_c, sigma, d)), STABLE)
            self._lz_u = lz_u

    def upper(self, phi):
        phi = np.asarray(phi, dtype=float)
        lz_u = self.saddle.lz
        lo = np.full(phi.shape, lz_u)
        hi = np.ones(phi.shape)
        out = _bisect_lz(phi, self.e0, lo, hi, self.sigma, self.d)
        return np.where(np.cos(phi) <= -1.0, lz_u, out)

    def lower(self, phi):
        phi = np.asarray(phi, dtype=float)
        lz_u = self.saddle.lz
        lo = -np.ones(phi.shape)
        hi = np.full(phi.shape, lz_u)
        out = _bisect_lz(phi, self.e0, lo, hi, self.sigma, self.d)
        return np.where(np.cos(phi) <= -1.0, lz_u, out)

    # -- contours of a given energy, one branch, evaluated at phi
    def winding(self, phi, energy, region):
        phi = np.asarray(phi, dtype=float)
        if region == "upper":
            lo, hi = self.upper(phi), np.ones(phi.shape)
        elif region == "lower":
            lo, hi = -np.ones(phi.shape), self.lower(phi)
        else:
            lo, hi = -np.ones(phi.shape), np.ones(phi.shape)
        return _bisect_lz(phi, energy, lo, hi, self.sigma, self.d)

    def ridge(self, phi):
        """lz minimising K(phi, .) between the separatrix branches (K is convex there)."""
        phi = np.asarray(phi, dtype=float)
        lo, hi = self.lower(phi), self.upper(phi)
        c = np.cos(phi)
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            dk = (mid + self.sigma) / self.d.M_tilde + self.d.gamma_tilde * c * mid / np.sqrt(1 - mid * mid)
            lo = np.where(dk < 0, mid, lo)
            hi = np.where(dk < 0, hi, mid)
        return 0.5 * (lo + hi)

    def loop_extent(self, energy):
        """Half-width phi_t of the closed orbit of the given energy inside the separatrix."""
        if energy >= self.e0:
            return math.pi
        if self._ridge_table is None:
            grid = np.linspace(0.0, math.pi, 2049)
            self._ridge_table = (grid, _K(grid, self.ridge(grid), self.sigma, self.d))
        grid, e_ridge = self._ridge_table
        j = int(np.searchsorted(e_ridge, energy))
        j = min(max(j, 1), len(grid) - 1)

        def excess(p):
            return float(_K(p, self.ridge(np.array([p]))[0], self.sigma, self.d)) - energy

        return brentq(excess, grid[j - 1], grid[j], xtol=1e-14)

    def loop(self, u, energy):
        """Upper and lower halves of a closed orbit sampled at phi = phi_t (1 - u^2)."""
        phi_t = self.loop_extent(energy)
        phi = phi_t * (1.0 - np.asarray(u, dtype=float) ** 2)
        mids = self.ridge(phi)
        up = _bisect_lz(phi, energy, mids, self.upper(phi), self.sigma, self.d)
        lo = _bisect_lz(phi, energy, self.lower(phi), mids, self.sigma, self.d)
        return phi_t, phi, up, lo

    # -- actions in units of L
    def winding_action(self, energy, region):
        lz = self.winding(_PHI_NODES, energy, region)
        return 2.0 * float(np.sum(_PHI_WEIGHTS * (1.0 - lz)))

    def loop_action(self, energy, order=48):
        if energy <= self.center.energy:
            return 0.0
        x, w = np.polynomial.legendre.leggauss(order)
        u, wu = 0.5 * (x + 1.0), 0.5 * w
        phi_t, _, up, lo = self.loop(u, energy)
        # dphi = 2 phi_t u du, both phi signs
        return 2.0 * float(np.sum(wu * (up - lo) * 2.0 * phi_t * u))

    def separatrix_area_fast(self):
        up = self.upper(_PHI_NODES)
        lo = self.lower(_PHI_NODES)
        return 2.0 * float(np.sum(_PHI_WEIGHTS * (up - lo)))


# ----------------------------------------------------------------------------
# public operations

def separatrix(d: DimensionlessParams, sigma: float, n_phi: int = 257,
               epsrel: float = 1e-10) -> Separatrix:
    """Separatrix through the unstable point, with its area by adaptive quadrature."""
    geo = _Geometry(d, sigma)
    if geo.saddle is None:
        raise NoSeparatrixError(f"no separatrix at sigma={sigma}")

    def width(phi):
        return float(geo.upper(np.array([phi]))[0] - geo.lower(np.array([phi]))[0])

    half, _ = quad(width, 0.0, math.pi, epsabs=1e-13, epsrel=epsrel, limit=200)
    phi = np.linspace(-math.pi, math.pi, n_phi)
    return Separatrix(sigma, geo.e0, geo.saddle, phi, geo.upper(phi), geo.lower(phi),
                      2.0 * half, d)


def separatrix_area(d: DimensionlessParams, sigma: float) -> float:
    """Separatrix area in units of L by graded Gauss-Legendre quadrature; 0 if none exists."""
    geo = _Geometry(d, sigma)
    return 0.0 if geo.saddle is None else geo.separatrix_area_fast()


def maximal_separatrix(d: DimensionlessParams) -> Separatrix:
    lo, hi = separatrix_window(d)
    res = minimize_scalar(lambda s: -separatrix_area(d, s), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-8})
    return separatrix(d, float(res.x))


def separatrix_area_estimate_checked(d: DimensionlessParams) -> float:
    if d.M_tilde * d.gamma_tilde > 0.05:
        warnings.warn("small-coupling separatrix estimate used outside its range (M~ gamma~ > 0.05)")
    return separatrix_area_estimate(d)


def energy_contours(d: DimensionlessParams, sigma: float, energies, n_phi: int = 256) -> ContourSet:
    """Contours lz(phi) of the instantaneous reduced Hamiltonian.

    Winding contours are sampled on a uniform phi grid over [-pi, pi] refined
    toward the borders; closed orbits inside the separatrix are returned as a
    single closed polyline.
    """
    geo = _Geometry(d, sigma)
    base = np.linspace(0.0, math.pi, n_phi // 2 + 1)
    edge = math.pi * (1.0 - np.logspace(-6, -2, 16))
    half = np.unique(np.concatenate([base, edge]))
    phi = np.concatenate([-half[::-1], half[1:]])
    out = ContourSet(sigma, [])
    for e in energies:
        e = float(e)
        found = False
        if geo.saddle is None:
            if min(geo.e_north, geo.e_south) < e < max(geo.e_north, geo.e_south):
                out.contours.append(Contour(e, "winding", phi, geo.winding(phi, e, "winding")))
                found = True
        else:
            if e >= geo.e0 and e < geo.e_north:
                out.contours.append(Contour(e, "upper", phi, geo.winding(phi, e, "upper")))
                found = True
            if e >= geo.e0 and e < geo.e_south:
                out.contours.append(Contour(e, "lower", phi, geo.winding(phi, e, "lower")))
                found = True
            if geo.center.energy < e < geo.e0:
                u = np.linspace(0.0, 1.0, n_phi // 2)
                _, ph, up, lo = geo.loop(u, e)
                ring_phi = np.concatenate([ph[::-1], -ph, -ph[::-1], ph])
                ring_lz = np.concatenate([up[::-1], up, lo[::-1], lo])
                out.contours.append(Contour(e, "inside", ring_phi, ring_lz))
                found = True
        if not found:
            out.notes.append(f"energy {e:.6g} not attainable as a regular contour; skipped")
    return out


def _levels_in_range(action_fn, e_lo, e_hi, a_min, a_max, quantum, region, n_scan=48,
                     rtol=1e-10):
    """Energies with action = quantum (n + 1/2) for actions inside (a_min, a_max)."""
    energies = np.linspace(e_lo, e_hi, n_scan)
    actions = np.array([action_fn(e) for e in energies])
    steps = np.diff(actions)
    if not (np.all(steps >= -1e-12) or np.all(steps <= 1e-12)):
        raise ArithmeticError(f"action not monotone in energy in region {region!r}")
    levels = []
    n = 0
    while quantum * (n + 0.5) < a_max:
        target = quantum * (n + 0.5)
        if target > a_min:
            above = (actions - target) > 0
            j = int(np.flatnonzero(above[:-1] != above[1:])[0])
            e = brentq(lambda x: action_fn(x) - target, energies[j], energies[j + 1],
                       xtol=1e-15 * max(1.0, abs(energies[j])), rtol=1e-15, maxiter=200)
            act = action_fn(e)
            if abs(act - target) > rtol * target + 1e-12:
                raise ArithmeticError(f"level n={n} not resolved: {act} vs {target}")
            levels.append(BSLevel(n, float(e), float(act), region))
        n += 1
    return levels


def bohr_sommerfeld_levels(d: DimensionlessParams, sigma: float) -> list[BSLevel]:
    """Semiclassical levels: contour action = 2 pi hbar (n + 1/2) in each region.

    Winding contours are measured from the north pole, so the action runs
    over (0, 4 pi) across the whole sphere; closed orbits use their enclosed
    area.
    """
    if d.is_classical:
        raise ValueError("Bohr-Sommerfeld levels need finite L/hbar")
    quantum = 2.0 * math.pi * d.hbar_over_L
    total = 4.0 * math.pi
    geo = _Geometry(d, sigma)
    levels = []
    if geo.saddle is None:
        act = lambda e: geo.winding_action(e, "winding")
        e_lo, e_hi = sorted((geo.e_north, geo.e_south))
        pad = 1e-12 * (e_hi - e_lo)
        levels += _levels_in_range(act, e_lo + pad, e_hi - pad, 0.0, total, quantum, "winding")
        return levels

    a_top = 2.0 * float(np.sum(_PHI_WEIGHTS * (1.0 - geo.upper(_PHI_NODES))))
    s_sep = geo.separatrix_area_fast()
    pad = 1e-9 * abs(geo.e0) + 1e-12
    up = lambda e: geo.winding_action(e, "upper")
    low = lambda e: geo.winding_action(e, "lower")
    levels += _levels_in_range(up, geo.e0 + pad, geo.e_north - pad, 0.0, a_top, quantum, "upper")
    levels += _levels_in_range(geo.loop_action, geo.center.energy + pad, geo.e0 - pad, 0.0, s_sep,
                               quantum, "inside")
    levels += _levels_in_range(low, geo.e0 + pad, geo.e_south - pad, a_top + s_sep, total,
                               quantum, "lower")
    return levels
