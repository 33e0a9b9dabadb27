"""Unilateral and bilateral obstacle problems (FD and P1 backends)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .. import discretize as dz
from ..entropy import LegendreMap, feasibility_margin, grad_R_star, jac_grad_R_star
from ..loop import SaddleProblem
from ._common import as_field, zero_field


class BuildError(ValueError):
    pass


@dataclass
class ObstacleData:
    """Obstacle problem ``min 1/2|grad u|^2 - (f, u)`` over ``phi_lower <= u (<= phi_upper)``."""

    phi_lower: Callable
    phi_upper: Optional[Callable] = None
    f: object = 0.0
    g: Optional[Callable] = None
    box: tuple = (0.0, 1.0, 0.0, 1.0)  # (x0, x1) selects an interval (p1 only)
    backend: str = "fd"
    n: int = 31


def benchmark_obstacle(xy):
    """Radially symmetric obstacle: a spherical cap joined to a tangent cone."""
    b = 9.0 / 20.0
    d = np.sqrt(0.25 - b * b)
    r = np.hypot(xy[..., 0], xy[..., 1])
    cap = np.sqrt(np.maximum(0.25 - r * r, 0.0))
    cone = d + b * b / d - b * r / d
    return np.where(r <= b, cap, cone)


def benchmark_data(n=31, backend="fd"):
    return ObstacleData(
        phi_lower=benchmark_obstacle,
        f=0.0,
        box=(-1.0, 1.0, -1.0, 1.0),
        backend=backend,
        n=n,
    )


def _box_boundary_samples(box, n=65):
    x0, x1, y0, y1 = box
    t = np.linspace(0.0, 1.0, n)
    xs, ys = x0 + (x1 - x0) * t, y0 + (y1 - y0) * t
    return np.concatenate(
        [
            np.column_stack([xs, np.full(n, y0)]),
            np.column_stack([xs, np.full(n, y1)]),
            np.column_stack([np.full(n, x0), ys]),
            np.column_stack([np.full(n, x1), ys]),
        ]
    )


def _legendre(data):
    if data.phi_upper is None:
        return LegendreMap.shannon_lower(data.phi_lower)
    return LegendreMap.fermi_dirac(data.phi_lower, data.phi_upper)


def _check_boundary(data, pts):
    g = zero_field(pts) if data.g is None else np.asarray(data.g(pts), dtype=float)
    if np.any(g < data.phi_lower(pts)):
        raise BuildError("boundary data lies below the lower obstacle")
    if data.phi_upper is not None:
        if np.any(g > data.phi_upper(pts)):
            raise BuildError("boundary data lies above the upper obstacle")


def bound_saddle(A, w, rhs, lmap, pts, extra=None):
    """Saddle problem for ``B = id`` with nodal latent relation.

    Rows: ``alpha (A u - rhs) + w (psi - psi_prev)`` and
    ``w (u - grad R*(psi))``, ``w`` a positive nodal weight vector.
    """
    N = A.shape[0]
    w = np.broadcast_to(np.asarray(w, dtype=float), (N,)).copy()
    U, P = slice(0, N), slice(N, 2 * N)
    W = sp.diags(w)

    def residual(x, alpha, xp):
        u, psi = x[U], x[P]
        r1 = alpha * (A @ u - rhs) + w * (psi - xp[P])
        r2 = w * (u - grad_R_star(lmap, pts, psi[:, None])[:, 0])
        return np.concatenate([r1, r2])

    def jacobian(x, alpha, xp):
        d = jac_grad_R_star(lmap, pts, x[P][:, None])[:, 0, 0]
        return sp.bmat([[alpha * A, W], [W, sp.diags(-w * d)]], format="csc")

    def recover(x):
        return grad_R_star(lmap, pts, x[P][:, None])[:, 0]

    def margin(x):
        return float(np.min(feasibility_margin(lmap, pts, recover(x)[:, None])))

    return dict(
        blocks={"u": U, "psi": P},
        residual=residual,
        jacobian=jacobian,
        recover=recover,
        margin=margin,
        x0=np.zeros(2 * N),
    )


def build_obstacle(data: ObstacleData) -> SaddleProblem:
    lmap = _legendre(data)
    if data.backend == "fd":
        grid = dz.build_grid2d(data.n, data.box)
        _check_boundary(data, _box_boundary_samples(data.box))
        pts = grid.points()
        A = dz.fd_laplacian(grid)
        rhs = as_field(data.f, pts)
        if data.g is not None:
            rhs = rhs + grid.boundary_lift(data.g)
        parts = bound_saddle(A, 1.0, rhs, lmap, pts)
        cell = grid.hx * grid.hy
        U = parts["blocks"]["u"]
        p = SaddleProblem(
            increment_norm=lambda x, xp: float(np.linalg.norm(x[U] - xp[U])),
            energy=lambda x: float(0.5 * cell * x[U] @ (A @ x[U]) - cell * rhs @ x[U]),
            data={"grid": grid, "points": pts, "A": A, "legendre": lmap, "weights": np.ones(grid.size)},
            **parts,
        )
        return p
    if data.backend == "p1":
        if len(data.box) == 2:
            mesh = dz.build_interval_mesh(data.n, data.box)
        else:
            mesh = dz.build_tri_mesh(data.n, data.box)
        _check_boundary(data, mesh.points[mesh.boundary])
        I = mesh.interior
        B = np.flatnonzero(mesh.boundary)
        K = dz.assemble_p1_stiffness(mesh)
        ml = dz.lumped_mass_vector(mesh)
        F = dz.assemble_load(mesh, lambda p: as_field(data.f, p))
        gB = np.zeros(B.size) if data.g is None else data.g(mesh.points[B])
        KII = K[I][:, I].tocsr()
        rhs = F[I] - K[I][:, B] @ gB
        pts = mesh.points[I]
        parts = bound_saddle(KII, ml[I], rhs, lmap, pts)
        U = parts["blocks"]["u"]
        M = dz.assemble_p1_mass(mesh)[I][:, I].tocsr()

        def l2(x, xp):
            d = x[U] - xp[U]
            return float(np.sqrt(d @ (M @ d)))

        def full(values):
            out = np.zeros(mesh.num_points)
            out[I] = values
            out[B] = gB
            return out

        return SaddleProblem(
            increment_norm=l2,
            energy=lambda x: float(0.5 * x[U] @ (KII @ x[U]) - rhs @ x[U]),
            data={"mesh": mesh, "points": pts, "A": KII, "legendre": lmap, "weights": ml[I], "full": full},
            **parts,
        )
    raise BuildError(f"unknown backend {data.backend!r}")


def complementarity(problem: SaddleProblem, x, x_prev, alpha) -> float:
    """Largest ``|min(lambda_i, u~_i - phi_i)|`` with ``lambda = (psi_prev - psi)/alpha``."""
    P = problem.blocks["psi"]
    lam = (x_prev[P] - x[P]) / alpha
    lmap = problem.data["legendre"]
    pts = problem.data["points"]
    gap = feasibility_margin(lmap, pts, problem.recover(x)[:, None])
    return float(np.max(np.abs(np.minimum(lam, gap))))
