"""Landau-Zener treatment of the crossing cascade.

Each order-1 crossing between diabatic levels m and m-1 is approximated by a
linearly swept two-level problem.  Chaining these crossings as independent
probabilistic events gives the branch tree and the step entropy curve.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .model import DimensionlessParams, DomainError, check_spin, l_to_L_over_hbar


def _check_pair(l: float, m: float) -> None:
    check_spin(l)
    if abs((m - l) - round(m - l)) > 1e-12 or not (-l + 1 <= m <= l):
        raise DomainError(f"m={m} and m-1 must both lie on the ladder -{l}..{l}")


def _ladder_factor(l: float, m: float) -> float:
    return l * (l + 1.0) - m * (m - 1.0)


def lz_probability(l: float, d: DimensionlessParams, m: float) -> float:
    """Diabatic passage probability exp(-pi gamma~^2 M~ [l(l+1) - m(m-1)] / 2)."""
    _check_pair(l, m)
    return math.exp(-math.pi * d.gamma_tilde ** 2 * d.M_tilde * _ladder_factor(l, m) / 2.0)


@dataclass(frozen=True)
class TwoLevelModel:
    """h = offset0 + offset1*ds + slope*ds*sz - gap_half*sx, with ds = sigma - sigma_star.

    Basis (|m>, |m-1>); energies in the same per-tau units as the reduced matrix.
    """

    m: float
    slope: float
    gap_half: float
    sigma_star: float
    offset0: float
    offset1: float
    M_tilde: float

    @property
    def gap_width(self) -> float:
        """Duration in sigma over which the diabatic splitting equals the minimum gap."""
        return self.gap_half / self.slope

    def matrix(self, sigma: float) -> np.ndarray:
        ds = sigma - self.sigma_star
        e = self.offset0 + self.offset1 * ds
        return np.array([[e + self.slope * ds, -self.gap_half],
                         [-self.gap_half, e - self.slope * ds]])

    def lz_probability(self) -> float:
        return math.exp(-math.pi * self.gap_half ** 2 / self.slope)


def project_two_level(l: float, d: DimensionlessParams, m: float) -> TwoLevelModel:
    """Restriction of the reduced matrix to {|m>, |m-1>} near their diabatic crossing."""
    _check_pair(l, m)
    hol = 1.0 / l_to_L_over_hbar(l)
    s_star = -(2 * m - 1) * hol / 2.0
    h_m = (0.5 * hol * m ** 2 + s_star * m) / d.M_tilde
    return TwoLevelModel(
        m=m,
        slope=1.0 / (2.0 * d.M_tilde),
        gap_half=0.5 * d.gamma_tilde * math.sqrt(_ladder_factor(l, m)),
        sigma_star=s_star,
        offset0=h_m,
        offset1=(m - 0.5) / d.M_tilde,
        M_tilde=d.M_tilde,
    )


def sweep_two_level(model: TwoLevelModel, window_widths: float = 40.0, rtol: float = 1e-10) -> float:
    """Diabatic probability from direct integration of the two-level Schrodinger equation.

    The state starts in the lower adiabatic eigenstate at -window and the
    weight found in the upper adiabatic eigenstate at +window is returned.
    The identity part of h only adds a global phase and is dropped.
    """
    half = window_widths * model.gap_width
    a, b = model.slope, model.gap_half

    def h(ds):
        return np.array([[a * ds, -b], [-b, -a * ds]])

    def rhs(ds, y):
        return -1j * (h(ds) @ y)

    _, v0 = np.linalg.eigh(h(-half))
    sol = solve_ivp(rhs, (-half, half), v0[:, 0].astype(complex), method="DOP853",
                    rtol=rtol, atol=rtol * 1e-2)
    _, v1 = np.linalg.eigh(h(half))
    return float(abs(np.vdot(v1[:, 1], sol.y[:, -1])) ** 2)


@dataclass
class BranchNode:
    crossing: int  # -1 for the root
    m: float
    probability: float
    momentum_offset: float  # accumulated kicks in units of P~
    children: list["BranchNode"] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"crossing": self.crossing, "m": self.m, "probability": self.probability,
                "momentum_offset": self.momentum_offset,
                "children": [c.to_dict() for c in self.children]}


@dataclass
class BranchTree:
    l: float
    m0: float
    root: BranchNode
    crossing_m: list[float]  # upper diabatic label of each crossing, in time order
    stages: list[dict]  # distribution over m before any crossing, then after each one

    @property
    def leaves(self) -> dict:
        return self.stages[-1]

    def leaf_nodes(self) -> list[BranchNode]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if node.children:
                stack.extend(reversed(node.children))
            else:
                out.append(node)
        return out

    def to_dict(self) -> dict:
        return {"l": self.l, "m0": self.m0, "crossing_m": self.crossing_m,
                "leaves": {str(k): v for k, v in sorted(self.leaves.items())},
                "tree": self.root.to_dict()}


def cascade_tree(l: float, d: DimensionlessParams, m0: float) -> BranchTree:
    """Independent-crossing model of the descent through the order-1 crossings.

    At the crossing of m and m-1 a branch sitting on either level keeps its
    label with the diabatic probability pr_m and swaps to the other label
    otherwise.  All higher-order crossings are passed diabatically.
    """
    check_spin(l)
    if not (-l <= m0 <= l) or abs((m0 - l) - round(m0 - l)) > 1e-12:
        raise DomainError(f"m0={m0} not on the ladder")
    hol = 1.0 / l_to_L_over_hbar(l)
    crossing_m = [l - k for k in range(int(round(2 * l)))]
    root = BranchNode(-1, float(m0), 1.0, 0.0)
    active = [root]
    stages = [{float(m0): 1.0}]
    for k, a in enumerate(crossing_m):
        pr = lz_probability(l, d, a)
        nxt = []
        for node in active:
            if node.m not in (a, a - 1):
                nxt.append(node)
                continue
            other = a - 1 if node.m == a else a
            for m_new, p in ((node.m, pr), (other, 1.0 - pr)):
                if p <= 0.0:
                    continue
                child = BranchNode(k, float(m_new), node.probability * p,
                                   (m0 - m_new) * hol)
                node.children.append(child)
                nxt.append(child)
        active = nxt
        dist: dict = {}
        for node in active:
            dist[node.m] = dist.get(node.m, 0.0) + node.probability
        stages.append(dist)
    return BranchTree(float(l), float(m0), root, [float(a) for a in crossing_m], stages)


def full_downconversion_probability(l: float, d: DimensionlessParams) -> float:
    return math.prod(1.0 - lz_probability(l, d, a) for a in np.arange(l, -l, -1.0))


def ignition_probability(l: float, d: DimensionlessParams, m0: float) -> float:
    """Probability that a branch started at m0 is carried past its first lowest-arc crossing.

    For m0 = l this is the chance of not exiting at the first crossing
    (1 - pr_l); for m0 < l the branch must jump diabatically onto the arc at
    the crossing of m0+1 and m0, which happens with pr_{m0+1}.
    """
    tree = cascade_tree(l, d, m0)
    if m0 == l:
        return 1.0 - lz_probability(l, d, l)
    k = tree.crossing_m.index(m0 + 1)
    # still at m0 right after that crossing means it is on the lowest level
    return tree.stages[k + 1].get(float(m0), 0.0)


def distribution_entropy(probs) -> float:
    p = np.asarray(list(probs), dtype=float)
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


@dataclass
class StepCurve:
    times: np.ndarray  # crossing times, ascending
    values: np.ndarray  # len(times) + 1 entropies: before the first crossing, then after each

    def __call__(self, t):
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right")
        return self.values[idx]


def step_entropy(tree: BranchTree, crossing_times) -> StepCurve:
    """Entropy of the branch distribution, switching instantaneously at each crossing."""
    times = np.asarray(crossing_times, dtype=float)
    if len(times) != len(tree.stages) - 1:
        raise ValueError("need one crossing time per crossing in the tree")
    if np.any(np.diff(times) <= 0):
        raise ValueError("crossing times must be increasing")
    values = np.array([distribution_entropy(s.values()) for s in tree.stages])
    return StepCurve(times, values)
