"""Structure-preserving implicit time stepping for the coupled system.

Each time step performs two SPD Newton solves:

  phase step   (chi implicit in the monotone part f, the concave -delta*chi
                and the temperature coupling lambda'(chi) u lagged at t_n)
  heat step    (unknown u = -1/theta; the latent coupling enters as the exact
                difference quotient (lambda(chi_new) - lambda(chi_n)) / tau)

The exact difference quotient is what makes the internal-energy mass exact
up to solver tolerance: testing the heat residual with the constant vector
telescopes the latent term, and constants are in the kernel of K.

Newton iterates are globalized by residual backtracking (factor 1/2) inside
a domain guard: u <= -guard_eps always, and for singular potentials the
phase stays a guard_eps distance from the domain endpoints.  The guard box
is convex, so once a damped step is feasible every shorter step is, too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, FatalSolverError, SolverError
from .functionals import (DiagnosticsRow, State, dissipation_increment, dm_std,
                          energy, entropy, mass_mu)
from .grid_ops import Grid, MassVectors, StiffnessOp, solve_spd
from .potentials import LatentHeat, Potential, evaluate, latent_eval, scalar_f

NEWTON_ABS_FLOOR = 1.0e-12
NEWTON_NOISE_FACTOR = 8.0
MIN_BACKTRACK = 2.0 ** -60


@dataclass(eq=False)
class Model:
    """Grid, measures, stiffness, and the four constitutive ingredients."""

    grid: Grid
    masses: MassVectors
    stiffness: StiffnessOp
    p_bulk: Potential
    p_surf: Potential
    l_bulk: LatentHeat
    l_surf: LatentHeat
    surf_mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.surf_mask = self.masses.m_surf > 0.0

    def chi_bounds(self, guard_eps: float) -> tuple[np.ndarray, np.ndarray]:
        """Per-node guard box for the phase field (surface domain on boundary rows)."""
        lo_b, hi_b = self.p_bulk.guarded_bounds(guard_eps)
        lo_s, hi_s = self.p_surf.guarded_bounds(guard_eps)
        lo = np.full(self.grid.n_nodes, lo_b)
        hi = np.full(self.grid.n_nodes, hi_b)
        bnd = self.grid.boundary
        lo[bnd] = max(lo_b, lo_s)
        hi[bnd] = min(hi_b, hi_s)
        return lo, hi


@dataclass
class StepperConfig:
    """Time step, Newton controls, and the adaptive floor.

    newton_tol applies to the residual 2-norm weighted by the combined
    measure (the discrete L^2(dm) norm of the residual density), relative to
    the initial residual and floored at an absolute 1e-12.  A second floor
    at roundoff level of the residual terms keeps tiny steps solvable: the
    m/tau mass term grows as tau shrinks and cancellation noise with it.
    """

    tau: float
    newton_tol: float = 1.0e-10
    newton_max_iter: int = 50
    guard_eps: float = 1.0e-12
    min_tau: float | None = None
    backtrack_factor: float = 0.5
    cg_tol: float = 1.0e-10
    cg_max_iter: int | None = None

    def __post_init__(self):
        if self.tau <= 0.0:
            raise ConfigError("tau must be positive")
        if self.min_tau is None:
            self.min_tau = self.tau / 1024.0
        if not 0.0 < self.min_tau <= self.tau:
            raise ConfigError("min_tau must satisfy 0 < min_tau <= tau")
        if not 0.0 < self.guard_eps < 1.0:
            raise ConfigError("guard_eps must lie in (0, 1)")


def measure_norm(r: np.ndarray, m_comb: np.ndarray) -> float:
    """sqrt(sum r_i^2 / m_i): the L^2(dm) norm of the residual density."""
    return float(np.sqrt(np.sum(r * r / m_comb)))


def _newton(x0, residual, jac_diag, k: StiffnessOp, m_comb, cfg: StepperConfig,
            lo, hi, res_scale: float = 0.0) -> tuple[np.ndarray, int]:
    """Damped Newton with Jacobi-PCG inner solves and a convex domain guard.

    res_scale is the caller's estimate of the magnitude of the individual
    residual terms before cancellation; the convergence target is floored at
    a machine-epsilon multiple of it, since roundoff in the residual
    evaluation prevents any iterate from doing better.  For small tau the
    mass term m/tau dominates and this floor rises above the absolute one.
    """
    x = np.clip(x0, lo, hi)
    r = residual(x)
    norm = measure_norm(r, m_comb)
    noise = NEWTON_NOISE_FACTOR * np.finfo(float).eps * res_scale
    target = max(cfg.newton_tol * norm, NEWTON_ABS_FLOOR, noise)
    iters = 0
    while norm > target:
        if iters >= cfg.newton_max_iter:
            raise SolverError(
                f"Newton did not reach tolerance in {cfg.newton_max_iter} "
                f"iterations (residual {norm:.3e}, target {target:.3e})")
        d = jac_diag(x)
        step = solve_spd(lambda z: k.apply(z) + d * z, k.diag + d, -r,
                         tol=cfg.cg_tol, max_iter=cfg.cg_max_iter)
        alpha = 1.0
        xt = x + step
        while not (np.all(xt >= lo) and np.all(xt <= hi)):
            alpha *= cfg.backtrack_factor
            if alpha < MIN_BACKTRACK:
                raise SolverError("Newton step cannot enter the domain guard box")
            xt = x + alpha * step
        rt = residual(xt)
        nt = measure_norm(rt, m_comb)
        while nt > (1.0 - 1.0e-4 * alpha) * norm:
            alpha *= cfg.backtrack_factor
            if alpha < MIN_BACKTRACK:
                raise SolverError(f"Newton backtracking stalled at residual {norm:.3e}")
            xt = x + alpha * step
            rt = residual(xt)
            nt = measure_norm(rt, m_comb)
        x, r, norm = xt, rt, nt
        iters += 1
    return x, iters


def step_chi(s: State, tau: float, cfg: StepperConfig, model: Model) -> tuple[np.ndarray, int]:
    """Convex-split backward-Euler phase step with the temperature lagged at t_n.

    Solves, per node,
      m_comb (chi - chi_n)/tau + K chi + m_bulk f(chi) + m_surf f_s(chi)
        = m_bulk (delta_b chi_n + lambda_b'(chi_n) u_n)
        + m_surf (delta_s chi_n + lambda_s'(chi_n) u_n).
    """
    k, m = model.stiffness, model.masses
    mb, ms, mc = m.m_bulk, m.m_surf, m.m_comb
    bnd = model.grid.boundary
    ms_b = ms[bnd]
    chi_n, u_n = s.chi, s.u

    _, lamp_b, _ = latent_eval(model.l_bulk, chi_n)
    _, lamp_s, _ = latent_eval(model.l_surf, chi_n[bnd])
    rhs = mb * (model.p_bulk.delta * chi_n + lamp_b * u_n)
    rhs[bnd] += ms_b * (model.p_surf.delta * chi_n[bnd] + lamp_s * u_n[bnd])

    def residual(chi):
        _, f_b, _ = evaluate(model.p_bulk, chi)
        r = mc * (chi - chi_n) / tau + k.apply(chi) + mb * f_b - rhs
        _, f_s, _ = evaluate(model.p_surf, chi[bnd])
        r[bnd] += ms_b * f_s
        return r

    def jac_diag(chi):
        _, _, fp_b = evaluate(model.p_bulk, chi)
        d = mc / tau + mb * fp_b
        _, _, fp_s = evaluate(model.p_surf, chi[bnd])
        d[bnd] += ms_b * fp_s
        return d

    lo, hi = model.chi_bounds(cfg.guard_eps)
    scale = measure_norm(mc * np.abs(chi_n) / tau + np.abs(rhs), mc)
    return _newton(chi_n, residual, jac_diag, k, mc, cfg, lo, hi, scale)


def step_theta(s: State, chi_new: np.ndarray, source_vec: np.ndarray | None,
               tau: float, cfg: StepperConfig, model: Model) -> tuple[np.ndarray, int]:
    """Backward-Euler heat step in the entropy variable u.

    Solves m_comb (-1/u - theta_n)/tau + K u + G - H = 0 where G is the exact
    latent difference quotient and H the measure-weighted source.  The
    Jacobian m_comb/(tau u^2) + K is SPD for any u < 0.
    """
    k, m = model.stiffness, model.masses
    mb, ms, mc = m.m_bulk, m.m_surf, m.m_comb
    bnd = model.grid.boundary
    chi_n, u_n = s.chi, s.u
    theta_n = -1.0 / u_n

    lam_b_new, _, _ = latent_eval(model.l_bulk, chi_new)
    lam_b_old, _, _ = latent_eval(model.l_bulk, chi_n)
    lam_s_new, _, _ = latent_eval(model.l_surf, chi_new[bnd])
    lam_s_old, _, _ = latent_eval(model.l_surf, chi_n[bnd])
    shift = mb * (lam_b_new - lam_b_old) / tau
    shift[bnd] += ms[bnd] * (lam_s_new - lam_s_old) / tau
    if source_vec is not None:
        shift = shift - source_vec

    def residual(u):
        return mc * (-1.0 / u - theta_n) / tau + k.apply(u) + shift

    def jac_diag(u):
        return mc / (tau * u * u)

    lo = np.full(model.grid.n_nodes, -math.inf)
    hi = np.full(model.grid.n_nodes, -cfg.guard_eps)
    scale = measure_norm(mc * np.abs(theta_n) / tau + np.abs(shift), mc)
    return _newton(u_n, residual, jac_diag, k, mc, cfg, lo, hi, scale)


@dataclass(frozen=True, eq=False)
class HeatSource:
    """Separable source h(x, t) = profile(x) cos(omega t), applied on bulk and
    boundary alike; the profile carries zero combined-measure mean."""

    profile: np.ndarray
    omega: float
    projected_mean: float

    def value(self, t: float) -> np.ndarray:
        return self.profile * math.cos(self.omega * t)


def make_source(grid: Grid, masses: MassVectors, kind: str,
                amplitude: float = 0.0, kx: int = 1, omega: float = 0.0) -> HeatSource | None:
    """Build a heat source; the dm-mean of the spatial profile is projected out."""
    if kind == "zero":
        return None
    if kind != "sinusoid":
        raise ConfigError(f"unknown source kind '{kind}'")
    profile = amplitude * np.cos(2.0 * math.pi * kx * grid.x / grid.lx)
    mean = float(np.sum(masses.m_comb * profile) / masses.total)
    return HeatSource(profile=profile - mean, omega=omega, projected_mean=abs(mean))


class Stepper:
    """Owns the adaptive step size and the cumulative diagnostic sums of one run."""

    def __init__(self, model: Model, cfg: StepperConfig, source: HeatSource | None = None):
        self.model = model
        self.cfg = cfg
        self.source = source
        self.tau_cur = cfg.tau
        self.successes = 0
        self.dissipation_cum = 0.0
        self.source_cum = 0.0
        self.energy0 = None

    def _source_vec(self, t: float) -> np.ndarray | None:
        if self.source is None:
            return None
        return self.model.masses.m_comb * self.source.value(t)

    def _row(self, step: int, s: State, iters_chi: int, iters_theta: int) -> DiagnosticsRow:
        md = self.model
        e = energy(s, md.p_bulk, md.p_surf, md.l_bulk, md.l_surf, md.masses, md.stiffness)
        if self.energy0 is None:
            self.energy0 = e
        theta = s.theta
        return DiagnosticsRow(
            step=step, t=s.t,
            mu=mass_mu(s, md.l_bulk, md.l_surf, md.masses),
            energy=e,
            entropy=entropy(s, md.p_bulk, md.p_surf, md.masses, md.stiffness),
            dissipation_cum=self.dissipation_cum,
            source_cum=self.source_cum,
            energy_id_residual=e + self.dissipation_cum - self.energy0 - self.source_cum,
            theta_min=float(theta.min()), theta_max=float(theta.max()),
            chi_min=float(s.chi.min()), chi_max=float(s.chi.max()),
            u_spatial_std=dm_std(s.u, md.masses),
            newton_iters_chi=iters_chi, newton_iters_theta=iters_theta,
        )

    def initial_row(self, s: State) -> DiagnosticsRow:
        return self._row(0, s, 0, 0)

    def advance(self, s: State, step_index: int, tau_cap: float | None = None
                ) -> tuple[State, DiagnosticsRow]:
        """One accepted step: phase then heat, halving tau on solver failure."""
        tau_try = self.tau_cur if tau_cap is None else min(self.tau_cur, tau_cap)
        while True:
            try:
                chi_new, iters_chi = step_chi(s, tau_try, self.cfg, self.model)
                source_vec = self._source_vec(s.t + tau_try)
                u_new, iters_theta = step_theta(s, chi_new, source_vec, tau_try,
                                                self.cfg, self.model)
                break
            except SolverError as exc:
                self.successes = 0
                half = 0.5 * tau_try
                if half < self.cfg.min_tau:
                    raise FatalSolverError(
                        f"step {step_index} failed at the minimum step size "
                        f"(t = {s.t:.6g}): {exc}", step=step_index, t=s.t) from exc
                tau_try = half
                self.tau_cur = min(self.tau_cur, tau_try)
        self.successes += 1
        if self.successes >= 10 and self.tau_cur < self.cfg.tau:
            self.tau_cur = min(2.0 * self.tau_cur, self.cfg.tau)
            self.successes = 0
        new = State(s.t + tau_try, u_new, chi_new)
        self.dissipation_cum += dissipation_increment(
            u_new, s.chi, chi_new, tau_try, self.model.masses, self.model.stiffness)
        if source_vec is not None:
            self.source_cum += tau_try * float(source_vec @ u_new)
        return new, self._row(step_index, new, iters_chi, iters_theta)


def run(model: Model, cfg: StepperConfig, state0: State, t_end: float,
        source: HeatSource | None = None, snapshot_every: int = 0,
        on_row=None, on_snapshot=None) -> tuple[list[DiagnosticsRow], State]:
    """Integrate from t = 0 to t_end, emitting one diagnostics row per step.

    Snapshots fire at step 0, every snapshot_every accepted steps, and at the
    final step (when snapshot_every > 0).  Deterministic for fixed inputs.
    """
    state0.validate(model.p_bulk, model.p_surf, model.surf_mask)
    stepper = Stepper(model, cfg, source)
    s = state0.copy()
    rows = [stepper.initial_row(s)]
    if on_row:
        on_row(rows[0])
    if snapshot_every > 0 and on_snapshot:
        on_snapshot(0, s)
    eps_t = 1.0e-9 * cfg.tau
    step = 0
    while s.t < t_end - eps_t:
        step += 1
        s, row = stepper.advance(s, step, tau_cap=t_end - s.t)
        rows.append(row)
        if on_row:
            on_row(row)
        if snapshot_every > 0 and on_snapshot:
            if step % snapshot_every == 0 or s.t >= t_end - eps_t:
                on_snapshot(step, s)
    return rows, s


def integrate_homogeneous(theta0: float, chi0: float, pot: Potential, lat: LatentHeat,
                          tau_ref: float, t_end: float, sample_stride: int | None = None):
    """Classical RK4 oracle for the spatially homogeneous reduction.

    With f_surf = f and lambda_surf = lambda_bulk, every node obeys the
    scalar law chi' = -f(chi) + delta chi + lambda'(chi) (-1/theta) with
    theta' = -lambda'(chi) chi'.  The combination theta + lambda(chi) is a
    first integral, so the system is integrated as a scalar ODE for chi and
    theta is reconstructed from the invariant: conservation is exact by
    construction.  Returns (t, theta, chi) sample arrays.
    """
    if theta0 <= 0.0:
        raise DomainError("theta0 must be positive")
    if not pot.contains(chi0):
        raise DomainError("chi0 outside the potential domain")
    a, b, c0 = lat.a, lat.b, lat.c
    lam0 = -a * chi0 * chi0 + b * chi0 + c0
    e0 = theta0 + lam0
    f = scalar_f(pot)
    delta = pot.delta
    lo, hi = pot.domain_lo, pot.domain_hi

    def rhs(c: float) -> float:
        if not lo < c < hi:
            raise DomainError("trajectory left the potential domain; reduce tau_ref")
        th = e0 + a * c * c - b * c - c0
        if th <= 0.0:
            raise DomainError("temperature reached zero along the trajectory; reduce tau_ref")
        return -f(c) + delta * c - (-2.0 * a * c + b) / th

    if t_end <= 0.0:
        return np.array([0.0]), np.array([theta0]), np.array([chi0])
    n = max(1, round(t_end / tau_ref))
    h = t_end / n
    stride = sample_stride if sample_stride else max(1, n // 1000)
    ts, chis = [0.0], [chi0]
    c = chi0
    h6 = h / 6.0
    for i in range(1, n + 1):
        k1 = rhs(c)
        k2 = rhs(c + 0.5 * h * k1)
        k3 = rhs(c + 0.5 * h * k2)
        k4 = rhs(c + h * k3)
        c = c + h6 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not lo < c < hi:
            raise DomainError("trajectory left the potential domain; reduce tau_ref")
        if i % stride == 0 or i == n:
            ts.append(i * h)
            chis.append(c)
    chi_arr = np.array(chis)
    theta_arr = e0 + a * chi_arr * chi_arr - b * chi_arr - c0
    return np.array(ts), theta_arr, chi_arr


def preset_field(grid: Grid, kind: str, *, value: float = 0.0, amplitude: float = 0.0,
                 kx: int = 1, width: float = 0.1, seed: int = 0, modes: int = 3) -> np.ndarray:
    """Initial-data presets: constant, x-sinusoid, y-tanh stripe, seeded smooth noise."""
    if kind == "constant":
        return np.full(grid.n_nodes, value)
    if kind == "sinusoid":
        return value + amplitude * np.cos(2.0 * math.pi * kx * grid.x / grid.lx)
    if kind == "tanh_stripe":
        if width <= 0.0:
            raise ConfigError("tanh_stripe width must be positive")
        return value + amplitude * np.tanh((grid.y - 0.5 * grid.ly) / width)
    if kind == "random":
        rng = np.random.default_rng(seed)
        fld = np.zeros(grid.n_nodes)
        for mx in range(modes + 1):
            for my in range(modes + 1):
                if mx == 0 and my == 0:
                    continue
                wgt = 1.0 / (1.0 + mx * mx + my * my)
                cx, sx = rng.standard_normal(2)
                phase_x = 2.0 * math.pi * mx * grid.x / grid.lx
                fld += wgt * (cx * np.cos(phase_x) + sx * np.sin(phase_x)) \
                    * np.cos(math.pi * my * grid.y / grid.ly)
        peak = float(np.max(np.abs(fld)))
        if peak > 0.0:
            fld *= amplitude / peak
        return value + fld
    raise ConfigError(f"unknown preset kind '{kind}'")
