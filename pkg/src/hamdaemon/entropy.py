"""Entanglement between the fast rotor and the weight."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import DimensionlessParams, l_to_L_over_hbar
from .quantum import PacketSpec, PointPropagator, ReducedWavefunction
from .spectrum import eigensystem


class QuadratureError(ArithmeticError):
    """The Gauss-Hermite estimate did not converge within the node budget."""


@dataclass
class FastDensityMatrix:
    rho: np.ndarray
    time: float

    def __post_init__(self):
        if abs(np.trace(self.rho).real - 1.0) > 1e-10:
            raise ValueError(f"trace {np.trace(self.rho).real} differs from 1")
        if not np.allclose(self.rho, self.rho.conj().T, atol=1e-12):
            raise ValueError("density matrix not hermitian")

    @property
    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.rho))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.rho)


def physical_basis_amplitudes(psi: ReducedWavefunction) -> np.ndarray:
    """Amplitudes A[j, m] on the common physical-momentum lattice, scaled by sqrt(spacing).

    Column m holds Psi_m(P_phys + m hbar/L); A^dagger A is the fast-sector
    density matrix and A A^dagger the weight's.
    """
    n_grid, n_m = psi.amps.shape
    ns = psi.n_shift
    size = n_grid + (n_m - 1) * ns
    out = np.zeros((size, n_m), dtype=complex)
    big = psi.physical_amplitudes() * math.sqrt(psi.delta)
    for col, m in enumerate(psi.m):
        off = int(round((psi.l - m) * ns))
        out[off:off + n_grid, col] = big[:, col]
    return out


def reduced_density_fast(psi: ReducedWavefunction) -> FastDensityMatrix:
    """rho_mn = integral dP Psi_m(P + m hbar/L) conj(Psi_n(P + n hbar/L))."""
    a = physical_basis_amplitudes(psi)
    rho = a.T @ a.conj()
    rho = 0.5 * (rho + rho.conj().T)
    return FastDensityMatrix(rho, psi.time)


def reduced_density_slow(psi: ReducedWavefunction) -> np.ndarray:
    """Weight density matrix on the physical-momentum lattice; only sensible for small grids."""
    a = physical_basis_amplitudes(psi)
    return a @ a.conj().T


def von_neumann_entropy(x) -> float:
    """-sum p ln p in nats, from a density matrix (eigenvalues) or a probability vector."""
    if isinstance(x, FastDensityMatrix):
        p = x.eigenvalues()
    else:
        arr = np.asarray(x)
        p = np.linalg.eigvalsh(arr) if arr.ndim == 2 else arr.astype(float)
    p = np.clip(np.real(p), 0.0, None)
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def default_sigma_start(l: float) -> float:
    """Start of the P-independent evolution: 7.5 kicks before the reference crossing origin."""
    return -7.5 / l_to_L_over_hbar(l)


def aligned_sigma_start(l: float, d: DimensionlessParams, packet: PacketSpec) -> float:
    """sigma_start that puts tau = 0 on the packet center's own reduced clock."""
    m0 = l if packet.m0 is None else packet.m0
    return -(packet.p0 + m0 / l_to_L_over_hbar(l) - d.M_tilde * d.Omega_tilde)


@dataclass
class RmResult:
    tau: np.ndarray
    R: np.ndarray  # (len(tau), 2l+1)
    nodes: int
    method: str  # "hermite" or "trapezoid"


def r_m_quadrature(l: float, d: DimensionlessParams, packet: PacketSpec, tau, n_nodes: int = 41,
                   sigma_start: float | None = None, dt: float | None = None,
                   tol: float = 1e-6, max_nodes: int = 328, method: str = "auto",
                   span_sigmas: float = 12.0, initial: str = "basis") -> RmResult:
    """Populations from one evolution averaged over the packet's momentum profile.

    Phi solves i dPhi/dsigma = h(sigma) Phi with Phi = |l> at sigma_start,
    which corresponds to tau = 0 for the packet center.  A momentum offset
    xi*sigma_p shifts the clock by the same amount, so
    R_m(tau) = pi^-1/2 integral dxi exp(-xi^2) |Phi_m(sigma_start + tau + xi sigma_p)|^2.
    Before sigma_start the state is taken to be |l>.

    ``method="hermite"`` uses Gauss-Hermite nodes, doubled until the result
    changes by less than ``tol``.  Once branches have formed the integrand
    oscillates far faster than the node spacing and this cannot converge;
    ``"trapezoid"`` samples a uniform lattice of spacing ``dt`` over
    +-span_sigmas widths instead, checked against half the spacing.
    ``"auto"`` tries the former and falls back to the latter.

    ``initial="adiabatic"`` starts Phi in the instantaneous eigenvector that
    continues |l> instead of |l> itself.  A sudden start leaves a small
    coherent admixture whose phase depends on the start time; the packet
    averages it away because each momentum starts at a different clock
    value, a single evolution does not.
    """
    if method not in ("auto", "hermite", "trapezoid"):
        raise ValueError(f"unknown method {method!r}")
    d = d.replace(L_over_hbar=l_to_L_over_hbar(l))
    hol = d.hbar_over_L
    s0 = default_sigma_start(l) if sigma_start is None else float(sigma_start)
    sp = packet.sigma_p(d)
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    dt = hol / 1024 if dt is None else dt
    n_m = int(round(2 * l)) + 1
    e_top = np.zeros(n_m, dtype=complex)
    e_top[-1] = 1.0
    if initial == "adiabatic":
        _, vecs = eigensystem(l, d, s0)
        k = int(np.argmax(np.abs(vecs[-1])))
        e_top = vecs[:, k].astype(complex) * np.sign(vecs[-1, k])
    elif initial != "basis":
        raise ValueError(f"unknown initial {initial!r}")

    # Hermite nodes lie inside |x| < sqrt(2n + 1)
    reach = sp * max(math.sqrt(4 * max_nodes + 1), span_sigmas + 1.0)
    prop = PointPropagator(l, d, e_top, s0, max(s0 + float(tau.max()) + reach, s0), dt)

    def average(x, w):
        sig = s0 + tau[:, None] + sp * x[None, :]
        pops = np.zeros(sig.shape + (n_m,))
        pops[..., :] = np.abs(e_top) ** 2
        late = sig > s0
        if np.any(late):
            pops[late] = np.abs(prop.at(sig[late])) ** 2
        return np.einsum("j,tjm->tm", w, pops)

    def hermite(n):
        x, w = np.polynomial.hermite.hermgauss(n)
        return average(x, w / math.sqrt(math.pi))

    def trapezoid(h):
        k = int(math.ceil(span_sigmas * sp / h))
        x = np.arange(-k, k + 1) * h / sp
        w = np.exp(-x ** 2) * (h / sp) / math.sqrt(math.pi)
        return average(x, w)

    if method in ("auto", "hermite"):
        n = n_nodes
        cur = hermite(n)
        while 2 * n <= max_nodes:
            nxt = hermite(2 * n)
            if np.max(np.abs(nxt - cur)) < tol:
                return RmResult(tau, cur, n, "hermite")
            n *= 2
            cur = nxt
        if method == "hermite":
            raise QuadratureError(f"R_m quadrature not converged with {n} nodes")

    coarse, fine = trapezoid(dt), trapezoid(dt / 2)
    if np.max(np.abs(fine - coarse)) >= tol:
        raise QuadratureError("R_m lattice average not converged at the propagation step")
    return RmResult(tau, fine, fine.shape[0] and int(2 * math.ceil(span_sigmas * sp / (dt / 2)) + 1),
                    "trapezoid")


def entropy_curve(populations: np.ndarray) -> np.ndarray:
    """Entropy of each row of a population table."""
    return np.array([von_neumann_entropy(row) for row in populations])
