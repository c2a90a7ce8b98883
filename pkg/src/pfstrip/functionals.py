"""Nodal state container and the scalar functionals of the coupled system.

All functionals integrate against the combined measure: bulk quadrature
weights over the strip plus surface weights on the two boundary circles.
The three core quantities are linked by the exact algebraic identity

    energy = mass - entropy

which holds per node before summation and is used as a cross-check:
theta - ln(theta) + lambda + F - delta chi^2/2  =
(theta + lambda) - (ln(theta) + delta chi^2/2 - F),
with the gradient term entering the energy with +1/2 and the entropy
with -1/2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .grid_ops import MassVectors, StiffnessOp
from .potentials import LatentHeat, Potential, evaluate, latent_eval


@dataclass
class State:
    """Fields at one time level: entropy variable u = -1/theta (u < 0) and phase chi.

    Boundary rows of both arrays are the surface unknowns; the temperature
    trace and the surface temperature coincide in this regular discrete
    setting, so no duplicated boundary field exists.
    """

    t: float
    u: np.ndarray
    chi: np.ndarray

    @property
    def theta(self) -> np.ndarray:
        return -1.0 / self.u

    def copy(self) -> "State":
        return State(self.t, self.u.copy(), self.chi.copy())

    def validate(self, p_bulk: Potential, p_surf: Potential, surf_mask: np.ndarray) -> None:
        """Raise DomainError unless u < 0, everything finite, chi inside both domains."""
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.chi))):
            raise DomainError("state contains non-finite entries")
        if not np.all(self.u < 0.0):
            raise DomainError("entropy variable must satisfy u < 0 (theta > 0)")
        if not p_bulk.contains(self.chi):
            raise DomainError("phase field leaves the bulk potential domain")
        if not p_surf.contains(self.chi[surf_mask]):
            raise DomainError("boundary phase field leaves the surface potential domain")


@dataclass
class DiagnosticsRow:
    """Per-step scalars written as one diagnostics CSV row."""

    step: int
    t: float
    mu: float
    energy: float
    entropy: float
    dissipation_cum: float
    source_cum: float
    energy_id_residual: float
    theta_min: float
    theta_max: float
    chi_min: float
    chi_max: float
    u_spatial_std: float
    newton_iters_chi: int
    newton_iters_theta: int


def dm_mean(v: np.ndarray, m: MassVectors) -> float:
    """Mean of a nodal field with respect to the combined measure."""
    return float(np.sum(m.m_comb * v) / m.total)


def dm_std(v: np.ndarray, m: MassVectors) -> float:
    """Standard deviation of a nodal field with respect to the combined measure."""
    mean = dm_mean(v, m)
    d = v - mean
    return float(np.sqrt(np.sum(m.m_comb * d * d) / m.total))


def mass_mu(s: State, l_bulk: LatentHeat, l_surf: LatentHeat, m: MassVectors) -> float:
    """Internal-energy mass: integral of theta + lambda(chi), bulk plus surface."""
    theta = s.theta
    lam_b, _, _ = latent_eval(l_bulk, s.chi)
    lam_s, _, _ = latent_eval(l_surf, s.chi)
    return float(np.sum(m.m_bulk * (theta + lam_b)) + np.sum(m.m_surf * (theta + lam_s)))


def energy(s: State, p_bulk: Potential, p_surf: Potential,
           l_bulk: LatentHeat, l_surf: LatentHeat,
           m: MassVectors, k: StiffnessOp) -> float:
    """Integral of theta - ln theta + lambda(chi) + F(chi) - delta chi^2/2, plus
    the combined gradient term chi^T K chi / 2."""
    if not np.all(s.u < 0.0):
        raise DomainError("energy requires u < 0")
    theta = s.theta
    log_theta = np.log(theta)
    chi = s.chi
    surf = m.m_surf > 0.0

    big_f_b, _, _ = evaluate(p_bulk, chi)
    lam_b, _, _ = latent_eval(l_bulk, chi)
    bulk_density = theta - log_theta + lam_b + big_f_b - 0.5 * p_bulk.delta * chi * chi
    total = float(np.sum(m.m_bulk * bulk_density))

    chi_s = chi[surf]
    big_f_s, _, _ = evaluate(p_surf, chi_s)
    lam_s, _, _ = latent_eval(l_surf, chi_s)
    surf_density = (theta[surf] - log_theta[surf] + lam_s + big_f_s
                    - 0.5 * p_surf.delta * chi_s * chi_s)
    total += float(np.sum(m.m_surf[surf] * surf_density))
    return total + 0.5 * k.quad(chi)


def entropy(s: State, p_bulk: Potential, p_surf: Potential,
            m: MassVectors, k: StiffnessOp) -> float:
    """Integral of ln theta + s0(chi) minus the gradient term, with
    s0(r) = delta r^2/2 - F(r) normalized by s0(0) = 0."""
    if not np.all(s.u < 0.0):
        raise DomainError("entropy requires u < 0")
    log_theta = np.log(s.theta)
    chi = s.chi
    surf = m.m_surf > 0.0

    big_f_b, _, _ = evaluate(p_bulk, chi)
    s0_b = 0.5 * p_bulk.delta * chi * chi - big_f_b
    total = float(np.sum(m.m_bulk * (log_theta + s0_b)))

    chi_s = chi[surf]
    big_f_s, _, _ = evaluate(p_surf, chi_s)
    s0_s = 0.5 * p_surf.delta * chi_s * chi_s - big_f_s
    total += float(np.sum(m.m_surf[surf] * (log_theta[surf] + s0_s)))
    return total - 0.5 * k.quad(chi)


def dissipation_increment(u_new: np.ndarray, chi_old: np.ndarray, chi_new: np.ndarray,
                          tau: float, m: MassVectors, k: StiffnessOp) -> float:
    """One step of the entropy production integral: tau (u^T K u + ||chi_t||^2).

    Both terms are sums of nonnegative products, so the increment is >= 0
    exactly in floating point.
    """
    r = (chi_new - chi_old) / tau
    return tau * (k.quad(u_new) + float(np.sum(m.m_comb * r * r)))


def energy_identity_residual(rows) -> float:
    """Defect of the discrete energy identity over a diagnostics trajectory:
    energy(T) + dissipation_cum(T) - energy(0) - source_cum(T)."""
    first, last = rows[0], rows[-1]
    return last.energy + last.dissipation_cum - first.energy - last.source_cum
