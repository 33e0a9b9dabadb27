"""Gradient-norm constraints, with an optional lower obstacle (intersection).

Discretisation: P1 primal ``u`` on interior vertices, DG0 latent ``psi``
(one vector per cell, stored component-major), and for the intersection a P1
latent ``psi0`` on interior vertices tied to ``u`` by vertex quadrature.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .. import discretize as dz
from ..entropy import EXP_CLAMP, LegendreMap, feasibility_margin, grad_R_star, jac_grad_R_star
from ..loop import SaddleProblem
from ..solvers import SingularMatrixError
from ._common import as_field
from .obstacle import BuildError


def _mesh(n, box):
    return dz.build_interval_mesh(n, box) if len(box) == 2 else dz.build_tri_mesh(n, box)


def _cell_major(psi_flat, ncell, d):
    return psi_flat.reshape(d, ncell).T


def _block_jacobian(H):
    """Sparse matrix of per-cell ``(d, d)`` blocks ``H`` in component-major layout."""
    ncell, d, _ = H.shape
    rows, cols, vals = [], [], []
    idx = np.arange(ncell)
    for i in range(d):
        for j in range(d):
            rows.append(i * ncell + idx)
            cols.append(j * ncell + idx)
            vals.append(H[:, i, j])
    n = ncell * d
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )


def condensed_solver(n_global, local_inverse):
    """Linear solver eliminating the cell-local trailing block of a saddle Jacobian.

    ``local_inverse(J_loc)`` must return the (sparse) inverse of the trailing
    block, which is block diagonal with cell-sized blocks.
    """

    def solve(J, b):
        J = sp.csr_matrix(J)
        g = slice(0, n_global)
        l = slice(n_global, J.shape[0])
        Jgg, Jgl = J[g, g], J[g, l]
        Jlg, Jll = J[l, g], J[l, l]
        Linv = local_inverse(Jll)
        S = (Jgg - Jgl @ (Linv @ Jlg)).tocsc()
        bl = Linv @ b[l]
        xg = spla.splu(S).solve(b[g] - Jgl @ bl)
        xl = bl - Linv @ (Jlg @ xg)
        return np.concatenate([xg, xl])

    return solve


def _invert_blocks(Jll, groups):
    """Invert a block-diagonal sparse matrix; ``groups`` is ``(nblk, s)`` indices."""
    Jll = sp.csr_matrix(Jll)
    nblk, s = groups.shape
    blocks = np.empty((nblk, s, s))
    for i in range(s):
        for j in range(s):
            blocks[:, i, j] = np.asarray(Jll[groups[:, i], groups[:, j]]).ravel()
    try:
        inv = np.linalg.inv(blocks)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("singular cell block in the latent Jacobian") from exc
    rows = np.repeat(groups, s, axis=1).ravel()
    cols = np.tile(groups, (1, s)).ravel()
    n = Jll.shape[0]
    return sp.csr_matrix((inv.ravel(), (rows, cols)), shape=(n, n))


class _GradientSaddle:
    """Shared assembly for problems with ``B = grad`` (and optionally ``B = id``)."""

    def __init__(self, mesh, radius, stiffness_coef, load, obstacle=None):
        self.mesh = mesh
        self.stiffness_coef = float(stiffness_coef)
        self.d = mesh.dim
        I = mesh.interior
        self.I = I
        self.nu = I.size
        self.ncell = mesh.num_cells
        K = dz.assemble_p1_stiffness(mesh)
        self.K0 = K[I][:, I].tocsr()
        self.K = stiffness_coef * self.K0
        self.M = dz.assemble_p1_mass(mesh)[I][:, I].tocsr()
        self.ml = dz.lumped_mass_vector(mesh)[I]
        self.F = load[I]
        G = dz.p1_cell_gradient_operator(mesh)
        self.G = sp.vstack([g[:, I] for g in G]).tocsr()  # (d*ncell, nu)
        self.vol = np.tile(mesh.volumes, self.d)
        self.centroids = mesh.centroids
        self.ball = LegendreMap.hellinger(radius=radius, dim=self.d)
        self.lower = None if obstacle is None else LegendreMap.shannon_lower(obstacle)
        self.node_pts = mesh.points[I]
        self._Klu = None

        nu, npsi = self.nu, self.d * self.ncell
        self.blocks = {"u": slice(0, nu)}
        off = nu
        if self.lower is not None:
            self.blocks["psi0"] = slice(off, off + nu)
            off += nu
        self.blocks["psi"] = slice(off, off + npsi)
        self.size = off + npsi
        # indices (relative to the latent block) of each cell's psi components
        self._groups = np.arange(self.ncell)[:, None] + self.ncell * np.arange(self.d)[None, :]

    # -- pieces -----------------------------------------------------------
    def psi_cells(self, x):
        return _cell_major(x[self.blocks["psi"]], self.ncell, self.d)

    def ball_map(self, x):
        return grad_R_star(self.ball, self.centroids, self.psi_cells(x))

    def residual(self, x, alpha, xp):
        u = x[self.blocks["u"]]
        P = self.blocks["psi"]
        dpsi = x[P] - xp[P]
        r1 = alpha * (self.K @ u - self.F) + self.G.T @ (self.vol * dpsi)
        parts = [r1]
        if self.lower is not None:
            P0 = self.blocks["psi0"]
            r1 += self.ml * (x[P0] - xp[P0])
            low = grad_R_star(self.lower, self.node_pts, x[P0][:, None])[:, 0]
            parts.append(self.ml * (u - low))
        h = self.ball_map(x).T.ravel()
        parts.append(self.vol * (self.G @ u - h))
        return np.concatenate(parts)

    def jacobian(self, x, alpha, xp):
        V = sp.diags(self.vol)
        H = jac_grad_R_star(self.ball, self.centroids, self.psi_cells(x))
        Jpp = -(V @ _block_jacobian(H))
        GtV = (V @ self.G).T
        VG = V @ self.G
        if self.lower is None:
            return sp.bmat([[alpha * self.K, GtV], [VG, Jpp]], format="csr")
        P0 = self.blocks["psi0"]
        e = jac_grad_R_star(self.lower, self.node_pts, x[P0][:, None])[:, 0, 0]
        ML = sp.diags(self.ml)
        return sp.bmat(
            [
                [alpha * self.K, ML, GtV],
                [ML, sp.diags(-self.ml * e), None],
                [VG, None, Jpp],
            ],
            format="csr",
        )

    def linear_solve(self):
        """Condensed solver when the latent block is purely cell-local.

        With a nodal Shannon latent the trailing block can hold entries of
        size ``exp(psi0)`` near zero, so that case keeps the plain sparse LU.
        """
        if self.lower is not None:
            return None
        groups = self._groups
        return condensed_solver(self.nu, lambda J: _invert_blocks(J, groups))

    def merit(self, x, alpha, xp):
        """Negated dual value ``-min_u L(u, psi)`` of the subproblem's saddle function.

        ``u`` is eliminated exactly (the ``u`` rows are linear), so the
        returned point has its ``u`` block replaced. The dual is concave in
        the latent unknowns, which makes it a sound line-search merit where
        the residual norm stalls on saturated cells.
        """
        if self._Klu is None:
            self._Klu = spla.splu(sp.csc_matrix(self.K0))
        if not self.stiffness_coef:
            return self._projected_merit(x, alpha, xp)
        P = self.blocks["psi"]
        dpsi = x[P] - xp[P]
        rhs = self.G.T @ (self.vol * dpsi)
        psi = self.psi_cells(x)
        conj = self.mesh.volumes @ (self.ball.radius * np.sqrt(1.0 + np.sum(psi * psi, axis=1)))
        if self.lower is not None:
            P0 = self.blocks["psi0"]
            dpsi0 = x[P0] - xp[P0]
            rhs = rhs + self.ml * dpsi0
            lo = self.lower.bound("phi_lower", self.node_pts, (self.nu,))
            z = np.clip(x[P0], -EXP_CLAMP, EXP_CLAMP)
            conj = conj + self.ml @ (lo * x[P0] + np.exp(z))
        u = self._Klu.solve(self.F - rhs / alpha) / self.stiffness_coef
        value = alpha * (0.5 * u @ (self.K @ u) - self.F @ u) + u @ rhs - conj
        out = x.copy()
        out[self.blocks["u"]] = u
        return -float(value), out

    def _projected_merit(self, x, alpha, xp):
        """Merit for the stiffness-free case: ``sum_c |c| R*(psi_c)`` after projection.

        The ``u`` rows are then a linear constraint on ``psi`` alone and ``u``
        is its multiplier. ``psi`` is moved onto the constraint by adding
        ``G z``; this is exact because ``G^T V G`` is the stiffness matrix.
        """
        P = self.blocks["psi"]
        r1 = self.G.T @ (self.vol * (x[P] - xp[P])) - alpha * self.F
        out = x.copy()
        out[P] = x[P] - self.G @ self._Klu.solve(r1)
        psi = self.psi_cells(out)
        value = self.mesh.volumes @ (self.ball.radius * np.sqrt(1.0 + np.sum(psi * psi, axis=1)))
        return float(value), out

    def recover(self, x):
        return self.ball_map(x)

    def margin(self, x):
        m = float(np.min(feasibility_margin(self.ball, self.centroids, self.ball_map(x))))
        if self.lower is not None:
            P0 = self.blocks["psi0"]
            low = grad_R_star(self.lower, self.node_pts, x[P0][:, None])
            m = min(m, float(np.min(feasibility_margin(self.lower, self.node_pts, low))))
        return m

    def l2_increment(self, x, xp):
        U = self.blocks["u"]
        d = x[U] - xp[U]
        return float(np.sqrt(d @ (self.M @ d)))

    def full(self, values):
        out = np.zeros(self.mesh.num_points)
        out[self.I] = values
        return out

    def problem(self, **extra):
        data = {"mesh": self.mesh, "assembly": self, "legendre": self.ball, "full": self.full}
        data.update(extra)
        U = self.blocks["u"]
        return SaddleProblem(
            blocks=self.blocks,
            residual=self.residual,
            jacobian=self.jacobian,
            recover=self.recover,
            increment_norm=self.l2_increment,
            margin=self.margin,
            energy=lambda x: float(0.5 * x[U] @ (self.K @ x[U]) - self.F @ x[U]),
            linear_solve=self.linear_solve(),
            merit=self.merit,
            x0=np.zeros(self.size),
            data=data,
        )


def gradient_reference_force(xy):
    return 15.0 * np.sin(np.pi * xy[..., 0]) ** 2


def gradient_reference_bound(xy):
    return 0.1 + 0.2 * xy[..., 0] + 0.4 * xy[..., 1]


def build_gradient_constraint(n=64, f=gradient_reference_force, phi=gradient_reference_bound, box=(0.0, 1.0, 0.0, 1.0)):
    """``min 1/2|grad u|^2 - (f, u)`` over ``|grad u| <= phi`` with ``u = 0`` on the boundary."""
    mesh = _mesh(n, box)
    radius = as_field(phi, mesh.centroids)
    if np.any(radius <= 0):
        raise BuildError("gradient bound phi must be positive")
    load = dz.assemble_load(mesh, lambda p: as_field(f, p))
    asm = _GradientSaddle(mesh, radius, 1.0, load)
    return asm.problem(radius=radius)


def intersection_bump(x):
    """Smooth bump supported on (0.2, 0.8), normalised to 1 at x = 0.5."""
    x = np.asarray(x, dtype=float)
    inside = (x > 0.2) & (x < 0.8)
    out = np.zeros_like(x)
    xi = x[inside]
    c = np.exp(1.0 / (10.0 * 0.3 * 0.3))
    out[inside] = c * np.exp(-1.0 / (10.0 * (xi - 0.2) * (0.8 - xi)))
    return out


def intersection_slope(phi_c):
    def phi(x):
        x = np.asarray(x, dtype=float)
        return np.where((x <= 0.2) | (x >= 0.8), float(phi_c), 100.0)

    return phi


def build_intersection(n=200, phi_c=2.0, obstacle=None, slope=None, endpoints=(0.0, 1.0)):
    """1D obstacle plus slope constraint: ``u >= phi0`` and ``|u'| <= phi``."""
    mesh = dz.build_interval_mesh(n, endpoints)
    obstacle = obstacle or (lambda p: intersection_bump(p[..., 0]))
    slope = slope or (lambda p: intersection_slope(phi_c)(p[..., 0]))
    radius = as_field(slope, mesh.centroids)
    if np.any(radius <= 0):
        raise BuildError("slope bound must be positive")
    asm = _GradientSaddle(mesh, radius, 1.0, np.zeros(mesh.num_points), obstacle=obstacle)
    return asm.problem(radius=radius, obstacle=obstacle)
