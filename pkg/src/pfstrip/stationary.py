"""Steady-state solver and omega-limit verification.

A steady state has a constant positive temperature theta_inf = -1/u_inf and
a phase field chi_inf solving the semilinear elliptic system

    K chi + m_bulk (f(chi) - delta chi - lambda_b'(chi) u_inf)
          + m_surf (f_s(chi) - delta chi - lambda_s'(chi) u_inf) = 0,

subject to the mass constraint that theta_inf + lambda(chi_inf) integrates
to the prescribed mass.  The scalar unknown u_inf is found by bisection on
the mass gap (robust: the gap need not be monotone when lambda' != 0), with
the inner phase solve warm-started along the bisection path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AdmissibilityError, BracketError, SolverError
from .functionals import State, dm_mean, dm_std, mass_mu
from .grid_ops import solve_spd
from .potentials import evaluate, latent_eval, latent_range, separating_slope_margin
from .timestepper import MIN_BACKTRACK, Model, measure_norm

STATIONARY_GUARD_EPS = 1.0e-12
BRACKET_EXPANSIONS = 10
BISECTION_STEPS = 200


@dataclass(frozen=True)
class HypothesisReport:
    """Numerical evaluation of the mass admissibility and separation hypotheses.

    mass_lower_bound / mass_upper_bound are the integrals of the latent
    extrema over bulk and boundary; a mass target above the lower bound
    admits a constant positive temperature, and one above the upper bound
    keeps the steady temperature above a uniform positive level regardless
    of the phase.  slope_margin > 0 is the alternative route to the same
    conclusion through the sign of lambda' at the pure states.
    """

    mass_admissible: bool
    mass_lower_bound: float
    mass_dominates: bool
    mass_upper_bound: float
    slope_separates: bool
    slope_margin: float


@dataclass
class StationaryResult:
    u_inf: float
    theta_inf: float
    chi_inf: np.ndarray
    phase_residual: float
    mass_gap: float
    mu_target: float
    separation: float
    hypothesis_report: HypothesisReport


def _lambda_bound(model: Model, which) -> float:
    """|Omega| extremum(lambda_b) + |Gamma| extremum(lambda_s) over the pure-state
    interval [-1, 1]."""
    g = model.grid
    area, perimeter = g.lx * g.ly, 2.0 * g.lx
    lo_b, hi_b = latent_range(model.l_bulk)
    lo_s, hi_s = latent_range(model.l_surf)
    if which == "min":
        return area * lo_b + perimeter * lo_s
    return area * hi_b + perimeter * hi_s


def hypothesis_report(model: Model, mu_target: float) -> HypothesisReport:
    min_bound = _lambda_bound(model, "min")
    max_bound = _lambda_bound(model, "max")
    margin = min(separating_slope_margin(model.l_bulk),
                 separating_slope_margin(model.l_surf))
    return HypothesisReport(
        mass_admissible=mu_target > min_bound, mass_lower_bound=min_bound,
        mass_dominates=mu_target > max_bound, mass_upper_bound=max_bound,
        slope_separates=margin > 0.0, slope_margin=margin,
    )


def stationary_phase_residual(chi: np.ndarray, u_inf: float, model: Model) -> np.ndarray:
    """Residual vector of the stationary phase system at (chi, u_inf)."""
    k, m = model.stiffness, model.masses
    bnd = model.grid.boundary
    _, f_b, _ = evaluate(model.p_bulk, chi)
    _, lamp_b, _ = latent_eval(model.l_bulk, chi)
    r = k.apply(chi) + m.m_bulk * (f_b - model.p_bulk.delta * chi - lamp_b * u_inf)
    chi_b = chi[bnd]
    _, f_s, _ = evaluate(model.p_surf, chi_b)
    _, lamp_s, _ = latent_eval(model.l_surf, chi_b)
    r[bnd] += m.m_surf[bnd] * (f_s - model.p_surf.delta * chi_b - lamp_s * u_inf)
    return r


def solve_chi_given_u(u_inf: float, guess: np.ndarray, model: Model, tol: float = 1.0e-12,
                      max_iter: int = 200) -> tuple[np.ndarray, float]:
    """Damped Newton for the stationary phase system at fixed u_inf.

    The true Jacobian diagonal m (f' - delta - lambda'' u_inf) can lose
    positivity; it is clamped from below at a small multiple of the combined
    measure so every inner system stays SPD, trading quadratic convergence
    for robustness only where the clamp is active.  Residuals are measured
    in the L^2(dm) density norm and driven below the absolute tol.
    """
    k, m = model.stiffness, model.masses
    mc = m.m_comb
    bnd = model.grid.boundary
    lo, hi = model.chi_bounds(STATIONARY_GUARD_EPS)
    lam2_b = -2.0 * model.l_bulk.a
    lam2_s = -2.0 * model.l_surf.a
    floor = 1.0e-10 * mc

    def jac_diag(chi):
        _, _, fp_b = evaluate(model.p_bulk, chi)
        d = m.m_bulk * (fp_b - model.p_bulk.delta - lam2_b * u_inf)
        _, _, fp_s = evaluate(model.p_surf, chi[bnd])
        d[bnd] += m.m_surf[bnd] * (fp_s - model.p_surf.delta - lam2_s * u_inf)
        return np.maximum(d, floor)

    x = np.clip(np.asarray(guess, dtype=float), lo, hi)
    r = stationary_phase_residual(x, u_inf, model)
    norm = measure_norm(r, mc)
    for _ in range(max_iter):
        if norm <= tol:
            return x, norm
        d = jac_diag(x)
        step = solve_spd(lambda z: k.apply(z) + d * z, k.diag + d, -r, tol=1.0e-12)
        alpha = 1.0
        xt = np.clip(x + step, lo, hi)
        rt = stationary_phase_residual(xt, u_inf, model)
        nt = measure_norm(rt, mc)
        while nt > (1.0 - 1.0e-4 * alpha) * norm:
            alpha *= 0.5
            if alpha < MIN_BACKTRACK:
                raise SolverError(f"stationary Newton stalled at residual {norm:.3e}")
            xt = np.clip(x + alpha * step, lo, hi)
            rt = stationary_phase_residual(xt, u_inf, model)
            nt = measure_norm(rt, mc)
        x, r, norm = xt, rt, nt
    raise SolverError(f"stationary Newton did not converge in {max_iter} iterations "
                      f"(residual {norm:.3e})")


def mass_gap(u_inf: float, chi_inf: np.ndarray, mu_target: float, model: Model) -> float:
    """Mass of the candidate steady state minus the target mass."""
    m = model.masses
    theta_inf = -1.0 / u_inf
    lam_b, _, _ = latent_eval(model.l_bulk, chi_inf)
    lam_s, _, _ = latent_eval(model.l_surf, chi_inf)
    return float(np.sum(m.m_bulk * (theta_inf + lam_b))
                 + np.sum(m.m_surf * (theta_inf + lam_s)) - mu_target)


def solve_stationary(mu_target: float, theta_bracket: tuple[float, float],
                     guesses, model: Model, tol: float = 1.0e-12) -> StationaryResult:
    """Find one steady state with the prescribed mass.

    Outer bisection on g(u) = mass_gap(u, chi(u)) over u = -1/theta, with up
    to 10 symmetric bracket expansions (halving theta_lo, doubling theta_hi)
    before requiring a sign change; the inner phase solve is warm-started
    from the previous chi along the path.  Guesses are tried in order and
    the first convergent one wins.
    """
    hyp = hypothesis_report(model, mu_target)
    if not hyp.mass_admissible:
        raise AdmissibilityError(
            f"mass target {mu_target:.6g} is not above the admissibility bound "
            f"{hyp.mass_lower_bound:.6g}")
    theta_lo, theta_hi = theta_bracket
    if not (0.0 < theta_lo < theta_hi):
        raise AdmissibilityError("theta bracket must satisfy 0 < lo < hi")
    guesses = list(guesses)
    if not guesses:
        raise ValueError("at least one phase guess is required")

    last_error = None
    for guess in guesses:
        try:
            return _solve_from_guess(mu_target, theta_lo, theta_hi, guess, model, tol, hyp)
        except (SolverError, BracketError) as exc:
            last_error = exc
    raise last_error


def _solve_from_guess(mu_target, theta_lo, theta_hi, guess, model, tol, hyp):
    warm = np.asarray(guess, dtype=float).copy()

    def gap_at(u):
        nonlocal warm
        chi, _ = solve_chi_given_u(u, warm, model, tol)
        warm = chi
        return mass_gap(u, chi, mu_target, model), chi

    lo_t, hi_t = theta_lo, theta_hi
    for _ in range(BRACKET_EXPANSIONS + 1):
        u_lo, u_hi = -1.0 / lo_t, -1.0 / hi_t
        g_lo, chi_lo = gap_at(u_lo)
        g_hi, chi_hi = gap_at(u_hi)
        if g_lo == 0.0:
            return _finish(u_lo, chi_lo, mu_target, model, tol, hyp)
        if g_hi == 0.0:
            return _finish(u_hi, chi_hi, mu_target, model, tol, hyp)
        if g_lo * g_hi < 0.0:
            break
        lo_t, hi_t = 0.5 * lo_t, 2.0 * hi_t
    else:
        raise BracketError(
            f"no sign change of the mass gap for theta in ({lo_t:.3g}, {hi_t:.3g}) "
            f"after {BRACKET_EXPANSIONS} expansions")

    u_a, u_b = u_lo, u_hi
    g_a = g_lo
    u_mid, chi_mid, g_mid = u_a, chi_lo, g_a
    for _ in range(BISECTION_STEPS):
        u_mid = 0.5 * (u_a + u_b)
        g_mid, chi_mid = gap_at(u_mid)
        if abs(g_mid) <= tol:
            break
        if g_a * g_mid < 0.0:
            u_b = u_mid
        else:
            u_a, g_a = u_mid, g_mid
    if abs(g_mid) > tol:
        raise SolverError(f"mass gap {g_mid:.3e} above tolerance after "
                          f"{BISECTION_STEPS} bisection steps")
    return _finish(u_mid, chi_mid, mu_target, model, tol, hyp)


def _finish(u_inf, chi_inf, mu_target, model, tol, hyp) -> StationaryResult:
    chi_inf, residual = solve_chi_given_u(u_inf, chi_inf, model, tol)
    gap = mass_gap(u_inf, chi_inf, mu_target, model)
    return StationaryResult(
        u_inf=float(u_inf), theta_inf=float(-1.0 / u_inf), chi_inf=chi_inf,
        phase_residual=residual, mass_gap=gap, mu_target=mu_target,
        separation=float(1.0 - np.max(np.abs(chi_inf))),
        hypothesis_report=hyp,
    )


@dataclass(frozen=True)
class OmegaLimitReport:
    """Residual-based omega-limit membership check of a long-run final state."""

    u_spatial_std: float
    phase_residual: float
    mu_gap: float
    chi_distance: float
    u_mean_distance: float
    converged: bool


def omega_limit_report(final: State, result: StationaryResult, model: Model,
                       std_tol: float = 1.0e-6, residual_tol: float = 1.0e-6,
                       mu_tol: float = 1.0e-8) -> OmegaLimitReport:
    """Check how close a trajectory endpoint is to solving the stationary system.

    Membership is decided by residuals (spatial spread of u, stationary phase
    residual at the mean u, mass gap), not by distance to the particular
    root in `result`; the distances are reported for information only.
    """
    u_mean = dm_mean(final.u, model.masses)
    residual = measure_norm(
        stationary_phase_residual(final.chi, u_mean, model), model.masses.m_comb)
    u_std = dm_std(final.u, model.masses)
    mu_gap_val = abs(mass_mu(final, model.l_bulk, model.l_surf, model.masses)
                     - result.mu_target)
    return OmegaLimitReport(
        u_spatial_std=u_std,
        phase_residual=residual,
        mu_gap=mu_gap_val,
        chi_distance=float(np.max(np.abs(final.chi - result.chi_inf))),
        u_mean_distance=abs(u_mean - result.u_inf),
        converged=(u_std <= std_tol and residual <= residual_tol and mu_gap_val <= mu_tol),
    )
