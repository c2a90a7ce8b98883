"""Periodic-strip geometry, bulk/surface measures, and the coupled stiffness operator.

The domain is the strip (0,Lx) x (0,Ly), periodic in x, with the two boundary
circles y = 0 and y = Ly carrying their own surface unknowns.  Nodes are
vertex-centered: nx periodic columns, ny+1 rows, flattened row-major
(idx = j*nx + i), so boundary unknowns coincide with trace values.

The stiffness operator K assembles the combined bulk + surface Dirichlet
form.  The normal derivative never appears as a stencil: boundary rows
couple to the interior only through the vertical difference terms of the
weak form, which is what makes constants an exact kernel vector and the
form symmetric positive semidefinite by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, SolverError


@dataclass(frozen=True, eq=False)
class Grid:
    lx: float
    ly: float
    nx: int
    ny: int
    hx: float
    hy: float
    n_nodes: int
    x: np.ndarray = field(repr=False)   # flat node x coordinates
    y: np.ndarray = field(repr=False)   # flat node y coordinates
    boundary: np.ndarray = field(repr=False)   # flat indices of rows j=0 and j=ny

    def reshape(self, z: np.ndarray) -> np.ndarray:
        """View a flat nodal vector as (ny+1, nx), row j first."""
        return np.asarray(z).reshape(self.ny + 1, self.nx)


def build_grid(lx: float, ly: float, nx: int, ny: int) -> Grid:
    """Validate bounds and precompute node coordinates and boundary indices."""
    if not (lx > 0.0 and ly > 0.0):
        raise ConfigError("domain lengths must be positive")
    if nx < 4:
        raise ConfigError(f"nx must be >= 4, got {nx}")
    if ny < 2:
        raise ConfigError(f"ny must be >= 2, got {ny}")
    hx, hy = lx / nx, ly / ny
    n = (ny + 1) * nx
    i = np.tile(np.arange(nx), ny + 1)
    j = np.repeat(np.arange(ny + 1), nx)
    boundary = np.concatenate([np.arange(nx), np.arange(ny * nx, n)])
    return Grid(lx=lx, ly=ly, nx=nx, ny=ny, hx=hx, hy=hy, n_nodes=n,
                x=i * hx, y=j * hy, boundary=boundary)


@dataclass(frozen=True, eq=False)
class MassVectors:
    """Quadrature weights realizing the combined volume + surface measure."""

    m_bulk: np.ndarray
    m_surf: np.ndarray
    m_comb: np.ndarray

    @property
    def total(self) -> float:
        return float(np.sum(self.m_comb))


def assemble_masses(g: Grid) -> MassVectors:
    """Trapezoidal-in-y bulk weights plus surface weights on the boundary rows."""
    m_bulk = np.full(g.n_nodes, g.hx * g.hy)
    m_bulk[: g.nx] = 0.5 * g.hx * g.hy
    m_bulk[g.ny * g.nx:] = 0.5 * g.hx * g.hy
    m_surf = np.zeros(g.n_nodes)
    m_surf[: g.nx] = g.hx
    m_surf[g.ny * g.nx:] = g.hx
    return MassVectors(m_bulk=m_bulk, m_surf=m_surf, m_comb=m_bulk + m_surf)


@dataclass(frozen=True, eq=False)
class StiffnessOp:
    """Sparse symmetric PSD operator K = K_bulk + K_surf with its edge list.

    The edge list (a, b, w) stores every difference pair once with its total
    weight, so the quadratic form can be evaluated as a sum of squares,
    exactly nonnegative in floating point.
    """

    matrix: sp.csr_matrix
    surf: sp.csr_matrix
    diag: np.ndarray
    edge_a: np.ndarray
    edge_b: np.ndarray
    edge_w: np.ndarray
    surf_edge_a: np.ndarray
    surf_edge_b: np.ndarray
    surf_edge_w: np.ndarray

    def apply(self, z: np.ndarray) -> np.ndarray:
        return self.matrix @ z

    def apply_surf(self, z: np.ndarray) -> np.ndarray:
        return self.surf @ z

    def quad(self, z: np.ndarray) -> float:
        """z^T K z as sum of w (z_a - z_b)^2; >= 0 exactly."""
        d = z[self.edge_a] - z[self.edge_b]
        return float(np.sum(self.edge_w * d * d))

    def quad_surf(self, z: np.ndarray) -> float:
        d = z[self.surf_edge_a] - z[self.surf_edge_b]
        return float(np.sum(self.surf_edge_w * d * d))


def _edges_to_matrix(a, b, w, n) -> sp.csr_matrix:
    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([a, b, b, a])
    vals = np.concatenate([w, w, -w, -w])
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def assemble_stiffness(g: Grid) -> StiffnessOp:
    """Assemble the combined form from its x-difference and y-difference edges.

    x edges on row j carry weight hy*alpha_j/hx with alpha_j = 1/2 on the
    boundary rows (half bulk cell) plus 1/hx there for the surface Dirichlet
    form; y edges carry hx/hy.
    """
    nx, ny, n = g.nx, g.ny, g.n_nodes
    i = np.arange(nx)
    inext = (i + 1) % nx

    xa, xb, xw = [], [], []
    sa, sb, sw = [], [], []
    for j in range(ny + 1):
        base = j * nx
        alpha = 0.5 if j in (0, ny) else 1.0
        w = np.full(nx, g.hy * alpha / g.hx)
        xa.append(base + i)
        xb.append(base + inext)
        if j in (0, ny):
            sa.append(base + i)
            sb.append(base + inext)
            sw.append(np.full(nx, 1.0 / g.hx))
            w = w + 1.0 / g.hx
        xw.append(w)

    ya = np.concatenate([j * nx + i for j in range(ny)])
    yb = ya + nx
    yw = np.full(ny * nx, g.hx / g.hy)

    edge_a = np.concatenate(xa + [ya])
    edge_b = np.concatenate(xb + [yb])
    edge_w = np.concatenate(xw + [yw])
    surf_a = np.concatenate(sa)
    surf_b = np.concatenate(sb)
    surf_w = np.concatenate(sw)

    matrix = _edges_to_matrix(edge_a, edge_b, edge_w, n)
    surf = _edges_to_matrix(surf_a, surf_b, surf_w, n)
    return StiffnessOp(
        matrix=matrix, surf=surf, diag=matrix.diagonal(),
        edge_a=edge_a, edge_b=edge_b, edge_w=edge_w,
        surf_edge_a=surf_a, surf_edge_b=surf_b, surf_edge_w=surf_w,
    )


def solve_spd(apply, diag: np.ndarray, rhs: np.ndarray,
              tol: float = 1.0e-10, max_iter: int | None = None,
              x0: np.ndarray | None = None) -> np.ndarray:
    """Jacobi-preconditioned conjugate gradients for an SPD operator.

    Stops when the true residual satisfies ||apply(x) - rhs||_2 <= tol ||rhs||_2.
    Sequential and deterministic for fixed inputs.
    """
    rhs = np.asarray(rhs, dtype=float)
    n = rhs.size
    if max_iter is None:
        max_iter = 10 * n
    if np.any(diag <= 0.0):
        raise ValueError("Jacobi preconditioner requires a strictly positive diagonal")
    bnorm = float(np.linalg.norm(rhs))
    if bnorm == 0.0:
        return np.zeros_like(rhs)
    if x0 is None:
        x = np.zeros_like(rhs)
        r = rhs.copy()
    else:
        x = np.array(x0, dtype=float)
        r = rhs - apply(x)
    inv_diag = 1.0 / diag
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    for _ in range(max_iter):
        if np.linalg.norm(r) <= tol * bnorm:
            # confirm against the true residual; the recurrence may have drifted
            r_true = rhs - apply(x)
            if np.linalg.norm(r_true) <= tol * bnorm:
                return x
            r = r_true
            z = inv_diag * r
            p = z.copy()
            rz = float(r @ z)
        q = apply(p)
        pq = float(p @ q)
        if pq <= 0.0:
            raise SolverError("conjugate gradients: operator not positive definite")
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        z = inv_diag * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    if np.linalg.norm(rhs - apply(x)) <= tol * bnorm:
        return x
    raise SolverError(f"conjugate gradients did not converge in {max_iter} iterations")
