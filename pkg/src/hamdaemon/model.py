"""Parameters of the daemon Hamiltonian and regime classification.

All downstream numerics work in the dimensionless variables

    Q~ = kQ,   P~ = P/(kL),   L~ = L/|L|,   tau = M g t/(k L)

in which the model is fixed by the three ratios (M~, Omega~, gamma~) plus the
action ratio L/hbar for quantum runs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field


class DomainError(ValueError):
    """Raised when an input lies outside the domain of an operation."""


class UnsupportedModeError(ValueError):
    """Raised when a quantum quantity is requested for a classical-only model."""


@dataclass(frozen=True)
class PhysicalParams:
    M: float
    g: float
    k: float
    Omega: float
    gamma: float
    L: float
    hbar: float = 1.0

    def __post_init__(self):
        for name in ("M", "g", "k", "Omega", "gamma", "L", "hbar"):
            value = getattr(self, name)
            if not value > 0:
                raise DomainError(f"{name} must be strictly positive, got {value!r}")


@dataclass(frozen=True)
class DimensionlessParams:
    M_tilde: float
    Omega_tilde: float
    gamma_tilde: float
    L_over_hbar: float = math.inf

    @property
    def is_classical(self) -> bool:
        return math.isinf(self.L_over_hbar)

    @property
    def hbar_over_L(self) -> float:
        """Momentum kick hbar*k in P~ units (zero in the classical limit)."""
        return 0.0 if self.is_classical else 1.0 / self.L_over_hbar

    @property
    def resonant_momentum(self) -> float:
        return self.M_tilde * self.Omega_tilde

    @property
    def small_oscillation_freq(self) -> float:
        """omega~ = sqrt(gamma~/M~), the bound-orbit frequency in the downconversion phase."""
        return math.sqrt(self.gamma_tilde / self.M_tilde)

    def with_spin(self, l: float) -> "DimensionlessParams":
        return DimensionlessParams(self.M_tilde, self.Omega_tilde, self.gamma_tilde,
                                   l_to_L_over_hbar(l))

    def replace(self, **changes) -> "DimensionlessParams":
        values = dict(M_tilde=self.M_tilde, Omega_tilde=self.Omega_tilde,
                      gamma_tilde=self.gamma_tilde, L_over_hbar=self.L_over_hbar)
        values.update(changes)
        return DimensionlessParams(**values)


@dataclass(frozen=True)
class RegimeReport:
    is_daemon: bool
    is_strong_quantum: bool
    resonant_momentum: float
    separatrix_area_estimate: float
    notes: list[str] = field(default_factory=list)


def l_to_L_over_hbar(l: float) -> float:
    """L/hbar = sqrt(l(l+1)) for integer or half-integer l > 0."""
    check_spin(l)
    return math.sqrt(l * (l + 1.0))


def check_spin(l: float) -> None:
    if not (l > 0 and abs(2 * l - round(2 * l)) < 1e-12):
        raise DomainError(f"l must be a positive integer or half-integer, got {l!r}")


def reference_params(l: float | None = 5) -> DimensionlessParams:
    """Parameter set used throughout for the worked examples: M~=1/3000, Omega~=600, gamma~=15."""
    L_over_hbar = math.inf if l is None else l_to_L_over_hbar(l)
    return DimensionlessParams(1.0 / 3000.0, 600.0, 15.0, L_over_hbar)


def nondimensionalize(p: PhysicalParams) -> DimensionlessParams:
    return DimensionlessParams(
        M_tilde=p.M ** 2 * p.g / (p.k ** 3 * p.L ** 2),
        Omega_tilde=p.k * p.L * p.Omega / (p.M * p.g),
        gamma_tilde=p.k * p.L * p.gamma / (p.M * p.g),
        L_over_hbar=p.L / p.hbar,
    )


@dataclass(frozen=True)
class CriticalVelocities:
    v_c: float
    p_c: float
    p_q: float
    p_q_kicked: float
    delta_p: float
    jump_period: float


def critical_velocities(d: DimensionlessParams) -> CriticalVelocities:
    """Classical and quantum resonance conditions in dimensionless units.

    Velocities are dQ~/dtau, momenta are P~ and periods are in tau.  Since
    dP~/dtau = -1 under gravity alone, the time between momentum jumps equals
    the jump size hbar/L.
    """
    if d.is_classical:
        raise UnsupportedModeError("quantum critical velocity needs finite L/hbar")
    p_c = d.M_tilde * d.Omega_tilde
    kick = d.hbar_over_L
    return CriticalVelocities(
        v_c=d.Omega_tilde,
        p_c=p_c,
        p_q=p_c - kick / 2,
        p_q_kicked=p_c + kick / 2,
        delta_p=kick,
        jump_period=kick,
    )


def separatrix_area_estimate(d: DimensionlessParams) -> float:
    """Small-coupling estimate 16 sqrt(M~ gamma~) of the largest separatrix area, in units of L."""
    return 16.0 * math.sqrt(d.M_tilde * d.gamma_tilde)


def classify_regime(d: DimensionlessParams, much_less: float = 10.0) -> RegimeReport:
    notes = []
    g_ok = d.gamma_tilde > 1.0
    if not g_ok:
        notes.append("gamma~ <= 1: coupling cannot lift the weight")
    sep_ok = much_less * d.gamma_tilde <= d.Omega_tilde
    if not sep_ok:
        notes.append("gamma~ not << Omega~: L is not a well separated fast sector")
    cost_ok = much_less * d.M_tilde * d.Omega_tilde / 4.0 <= 1.0
    if not cost_ok:
        notes.append("M~ Omega~/4 not << 1: reaching v_c costs too much of the fuel")

    area = separatrix_area_estimate(d)
    if d.is_classical:
        strong = False
        notes.append("classical model: strong-quantum test not applicable")
    else:
        threshold = (math.pi * d.hbar_over_L / 8.0) ** 2
        strong = d.M_tilde * d.gamma_tilde <= threshold
    return RegimeReport(
        is_daemon=g_ok and sep_ok and cost_ok,
        is_strong_quantum=strong,
        resonant_momentum=d.M_tilde * d.Omega_tilde,
        separatrix_area_estimate=area,
        notes=notes,
    )
