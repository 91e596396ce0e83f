"""Derived observables of quantum runs: crossing schedule, jumps, branches."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from . import spectrum
from .lz import cascade_tree, step_entropy
from .model import DimensionlessParams, l_to_L_over_hbar
from .quantum import MomentumDensity, PacketSpec


def center_clock_offset(packet: PacketSpec, l: float, d: DimensionlessParams) -> float:
    """tau_P of the packet center: the reduced clock there is sigma = tau - tau_P."""
    m0 = l if packet.m0 is None else packet.m0
    return packet.p0 + m0 / l_to_L_over_hbar(l) - d.M_tilde * d.Omega_tilde


def lowest_arc_sigmas(l: float, d: DimensionlessParams, n_sigma: int = 1201) -> np.ndarray:
    """sigma* of the order-1 crossings, from the exact instantaneous spectrum."""
    hol = 1.0 / l_to_L_over_hbar(l)
    edge = (2 * l + 1) * hol / 2
    diagram = spectrum.instantaneous_spectrum(l, d, np.linspace(-edge, edge, n_sigma))
    arc = spectrum.lowest_arc(spectrum.find_avoided_crossings(diagram))
    return np.array([c.sigma_star for c in arc])


def crossing_schedule(packet: PacketSpec, l: float, d: DimensionlessParams) -> np.ndarray:
    """tau at which the packet center passes each lowest-arc crossing."""
    return lowest_arc_sigmas(l, d) + center_clock_offset(packet, l, d)


def plateau_midpoints(crossing_taus: np.ndarray) -> np.ndarray:
    return 0.5 * (crossing_taus[1:] + crossing_taus[:-1])


def step_entropy_curve(packet: PacketSpec, l: float, d: DimensionlessParams):
    m0 = l if packet.m0 is None else packet.m0
    return step_entropy(cascade_tree(l, d, m0), crossing_schedule(packet, l, d))


def jump_times(times: np.ndarray, occupations: np.ndarray, m_values: np.ndarray,
               m0: float) -> np.ndarray:
    """For k = 1, 2, ...: first time the weight below m0 - k + 1 reaches half its final value."""
    out = []
    for k in range(1, int(round(m0 - m_values.min())) + 1):
        below = occupations[:, m_values <= m0 - k].sum(axis=1)
        final = below[-1]
        if final <= 0:
            break
        idx = int(np.argmax(below >= 0.5 * final))
        out.append(times[idx])
    return np.array(out)


@dataclass
class MomentumBranch:
    p: float
    mass: float
    peak: float


def momentum_branches(md: MomentumDensity, spacing: float, threshold: float = 1e-4) -> list[MomentumBranch]:
    """Peaks of pr(P) whose mass within +-spacing/2 exceeds ``threshold``."""
    dp = md.p[1] - md.p[0]
    top = float(md.density.max())
    idx, _ = find_peaks(md.density, height=1e-12 * top, distance=max(1, int(0.5 * spacing / dp)))
    out = []
    for i in idx:
        win = np.abs(md.p - md.p[i]) <= 0.5 * spacing
        mass = float(md.density[win].sum() * dp)
        if mass > threshold:
            out.append(MomentumBranch(float(md.p[i]), mass, float(md.density[i])))
    return out


def intermediate_ratio(md: MomentumDensity, p_low: float, p_high: float, guard: float = 0.25) -> float:
    """Largest density strictly inside the central part of (p_low, p_high), over the larger peak.

    ``guard`` is the fraction of the gap excluded next to each peak.
    """
    gap = p_high - p_low
    inner = (md.p > p_low + guard * gap) & (md.p < p_high - guard * gap)
    near = (md.p >= p_low - 0.5 * gap) & (md.p <= p_high + 0.5 * gap)
    return float(md.density[inner].max() / md.density[near].max())
