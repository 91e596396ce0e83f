"""Reduced (2l+1)-level Hamiltonian of the fast sector and its instantaneous spectrum.

The matrix acts on amplitudes psi_m, m = -l..l, and generates the evolution
i dpsi/dtau = h(sigma) psi in the shifted clock sigma.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import linear_sum_assignment, minimize_scalar

from .model import DimensionlessParams, check_spin, l_to_L_over_hbar


def m_values(l: float) -> np.ndarray:
    check_spin(l)
    return -l + np.arange(int(round(2 * l)) + 1)


def _with_l(d: DimensionlessParams, l: float) -> DimensionlessParams:
    # the ladder fixes L/hbar; a mismatching value in d is overridden
    return d.replace(L_over_hbar=l_to_L_over_hbar(l))


def diagonal(l: float, d: DimensionlessParams, sigma) -> np.ndarray:
    """h_m(sigma) = (1/M~)[(hbar/2L) m^2 + sigma m]; sigma may be an array (last axis is m)."""
    m = m_values(l)
    hol = 1.0 / l_to_L_over_hbar(l)
    s = np.asarray(sigma, dtype=float)[..., None]
    return (0.5 * hol * m ** 2 + s * m) / d.M_tilde


def coupling(l: float, d: DimensionlessParams) -> np.ndarray:
    """w_{m,m-1} = (gamma~/2) sqrt(l(l+1) - m(m-1)) for m = -l+1..l."""
    m = m_values(l)[1:]
    return 0.5 * d.gamma_tilde * np.sqrt(l * (l + 1.0) - m * (m - 1.0))


def build_h(l: float, d: DimensionlessParams, sigma: float) -> np.ndarray:
    """Dense real-symmetric tridiagonal h(sigma), basis ordered m = -l..l."""
    diag = diagonal(l, d, sigma)
    off = -coupling(l, d)
    return np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)


def eigensystem(l: float, d: DimensionlessParams, sigma: float):
    """Sorted eigenvalues and eigenvectors (columns) of h(sigma)."""
    return eigh_tridiagonal(diagonal(l, d, sigma), -coupling(l, d))


@dataclass
class LevelDiagram:
    l: float
    params: DimensionlessParams
    sigma: np.ndarray
    eigenvalues: np.ndarray  # (n_sigma, 2l+1), ascending per row
    eigenvectors: np.ndarray  # (n_sigma, 2l+1, 2l+1), columns match eigenvalues
    tracks: np.ndarray  # (n_sigma, 2l+1): sorted index occupied by each continued level
    overlaps: np.ndarray  # (n_sigma-1,) smallest assigned overlap per step
    flags: list[str] = field(default_factory=list)

    @property
    def m(self):
        return m_values(self.l)

    def dominant_m(self) -> np.ndarray:
        """Diabatic label (largest |component|) of every sorted eigenvector."""
        return self.m[np.argmax(np.abs(self.eigenvectors), axis=1)]

    def tracked_eigenvalues(self) -> np.ndarray:
        return np.take_along_axis(self.eigenvalues, self.tracks, axis=1)


def _assign(v_prev, v_cur):
    ov = np.abs(v_prev.T @ v_cur)
    rows, cols = linear_sum_assignment(-ov)
    perm = np.empty(len(rows), dtype=int)
    perm[rows] = cols
    return perm, float(ov[rows, cols].min())


def instantaneous_spectrum(l: float, d: DimensionlessParams, sigma_grid, min_overlap: float = 0.9,
                           max_refine: int = 6) -> LevelDiagram:
    """Eigenvalues on a sigma grid with levels continued by eigenvector overlap.

    Steps whose best assignment has an overlap below ``min_overlap`` get
    midpoints inserted, up to ``max_refine`` rounds.  Steps still below 0.5
    afterwards are flagged as ambiguous.
    """
    grid = np.asarray(sigma_grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 1 or np.any(np.diff(grid) <= 0):
        raise ValueError("sigma_grid must be strictly increasing")
    d = _with_l(d, l)
    off = -coupling(l, d)

    def solve(points):
        vals, vecs = zip(*(eigh_tridiagonal(diagonal(l, d, s), off) for s in points))
        return np.array(vals), np.array(vecs)

    vals, vecs = solve(grid)
    for _ in range(max_refine):
        worst = np.array([_assign(vecs[i], vecs[i + 1])[1] for i in range(len(grid) - 1)])
        bad = np.flatnonzero(worst < min_overlap)
        if len(bad) == 0:
            break
        mids = 0.5 * (grid[bad] + grid[bad + 1])
        mv, mvec = solve(mids)
        grid = np.concatenate([grid, mids])
        order = np.argsort(grid, kind="stable")
        grid = grid[order]
        vals = np.concatenate([vals, mv])[order]
        vecs = np.concatenate([vecs, mvec])[order]

    n = vals.shape[1]
    tracks = np.empty((len(grid), n), dtype=int)
    tracks[0] = np.arange(n)
    overlaps = np.ones(max(len(grid) - 1, 0))
    flags = []
    for i in range(len(grid) - 1):
        perm, worst = _assign(vecs[i], vecs[i + 1])
        overlaps[i] = worst
        tracks[i + 1] = perm[tracks[i]]
        if worst < 0.5:
            flags.append(f"ambiguous level tracking between sigma={grid[i]:.8g} and {grid[i + 1]:.8g}")
    return LevelDiagram(l, d, grid, vals, vecs, tracks, overlaps, flags)


@dataclass(frozen=True)
class AvoidedCrossing:
    m_upper: float
    m_lower: float
    sigma_star: float
    min_gap: float
    order: int
    level_index: int  # lower of the two adjacent sorted levels
    true_crossing: bool = False

    @property
    def width(self) -> float:
        """Sweep interval in sigma over which the diabatic splitting equals the gap."""
        return float("nan") if self.order == 0 else self.min_gap


def crossing_width(c: AvoidedCrossing, d: DimensionlessParams) -> float:
    """Crossing duration in sigma: min_gap divided by the diabatic slope difference order/M~."""
    return c.min_gap * d.M_tilde / c.order


def find_avoided_crossings(diagram: LevelDiagram, zero_gap: float = 1e-9) -> list[AvoidedCrossing]:
    """Local minima of every adjacent eigenvalue gap, refined by golden-section search."""
    l, d = diagram.l, diagram.params
    s = diagram.sigma
    gaps = np.diff(diagram.eigenvalues, axis=1)
    m = diagram.m
    out = []
    scale = float(np.max(np.abs(diagram.eigenvalues))) or 1.0
    for k in range(gaps.shape[1]):
        g = gaps[:, k]

        def gap(x, k=k):
            return float(np.diff(eigh_tridiagonal(diagonal(l, d, x), -coupling(l, d),
                                                  eigvals_only=True))[k])

        for i in range(1, len(s) - 1):
            if not (g[i] <= g[i - 1] and g[i] < g[i + 1]):
                continue
            res = minimize_scalar(gap, bracket=(s[i - 1], s[i], s[i + 1]), method="golden",
                                  tol=1e-12)
            x = float(res.x)
            _, vecs = eigensystem(l, d, x)
            weight = vecs[:, k] ** 2 + vecs[:, k + 1] ** 2
            a, b = np.sort(m[np.argsort(weight)[-2:]])
            gmin = float(res.fun)
            out.append(AvoidedCrossing(float(b), float(a), x, gmin, int(round(b - a)), k,
                                       gmin <= zero_gap * scale))
    out.sort(key=lambda c: (c.sigma_star, c.level_index))
    return out


def diabatic_crossing_times(l: float) -> np.ndarray:
    """sigma at which h_m = h_{m-1}, for m = l down to -l+1."""
    m = m_values(l)[1:][::-1]
    return -(2 * m - 1) / (2 * l_to_L_over_hbar(l))


def lowest_arc(crossings: list[AvoidedCrossing]) -> list[AvoidedCrossing]:
    """Order-1 crossings between the two lowest levels, in time order."""
    return [c for c in crossings if c.order == 1 and c.level_index == 0]
