"""Multiphase Cahn-Hilliard-type flow on the Gibbs simplex.

Each backward-Euler time step minimises a Ginzburg-Landau energy over
``{u : sum_i u_i = 1, u_i >= 0}``; the step is solved by LVPP with a softmax
latent relation and the slack ``z_i = eps^2 Lap u_i - dW/du_i`` so that only
P1 elements are needed. Boundaries are natural (homogeneous Neumann).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .. import discretize as dz
from ..entropy import LegendreMap, feasibility_margin, grad_R_star, jac_grad_R_star
from ..loop import LvppConfig, LvppResult, SaddleProblem, run_lvpp
from .obstacle import BuildError

SIMPLEX_TOL = 1e-10


def block_initial_phases(points, eps, box=(0.0, 1.0, 0.0, 1.0)):
    """Four phases in a 2x2 block arrangement with ``tanh``-mollified edges.

    Returns an ``(N, 4)`` array whose rows are strictly positive and sum to one.
    """
    pts = np.asarray(points, dtype=float)
    xm = 0.5 * (box[0] + box[1])
    ym = 0.5 * (box[2] + box[3])
    width = np.sqrt(2.0) * eps
    ax = 0.5 * (1.0 - np.tanh((pts[:, 0] - xm) / width))
    ay = 0.5 * (1.0 - np.tanh((pts[:, 1] - ym) / width))
    bx, by = 1.0 - ax, 1.0 - ay
    return np.column_stack([ax * ay, bx * ay, ax * by, bx * by])


@dataclass
class MultiphaseData:
    """Parameters of the multiphase flow.

    ``u0`` (if given) is an ``(N, m)`` array of nodal phase fractions;
    otherwise the mollified 2x2 block arrangement is used (``m = 4``).
    """

    m: int = 4
    eps: float = 1.0 / 32.0
    tau: float = 1e-5
    n: int = 64
    steps: int = 10
    box: tuple = (0.0, 1.0, 0.0, 1.0)
    u0: np.ndarray = None
    mesh: dz.Mesh = field(default=None, repr=False)

    def __post_init__(self):
        if self.m < 2:
            raise BuildError("need at least two phases")
        if not (self.eps > 0 and self.tau > 0):
            raise BuildError("eps and tau must be positive")
        if self.mesh is None:
            self.mesh = dz.build_tri_mesh(self.n, self.box)
        if self.u0 is None:
            if self.m != 4:
                raise BuildError("default initial data has four phases; pass u0")
            self.u0 = block_initial_phases(self.mesh.points, self.eps, self.box)
        self.u0 = np.asarray(self.u0, dtype=float)
        if self.u0.shape != (self.mesh.num_points, self.m):
            raise BuildError(f"u0 must have shape ({self.mesh.num_points}, {self.m})")


def check_simplex(u, tol=SIMPLEX_TOL):
    u = np.asarray(u, dtype=float)
    return bool(np.all(u >= -tol) and np.all(np.abs(u.sum(axis=1) - 1.0) <= tol))


def build_multiphase_step(data: MultiphaseData, u_prev) -> SaddleProblem:
    """Saddle system for one time step started from ``u_prev`` (shape ``(N, m)``).

    Unknown layout: ``u``, ``z`` and ``psi``, each phase-major (``m`` blocks of
    ``N`` nodal values). The additive constant shared by all ``z_i`` and
    ``psi_i`` is not determined by the equations (softmax ignores it and
    natural boundaries leave ``z`` free up to a constant), so the ``z_0``
    row at node 0 is replaced by the gauge ``z_0(x_0) = 0``. The dropped row
    is implied by the others when ``u_prev`` lies on the simplex.
    """
    u_prev = np.asarray(u_prev, dtype=float)
    mesh = data.mesh
    N, m = mesh.num_points, data.m
    if u_prev.shape != (N, m):
        raise BuildError(f"u_prev must have shape ({N}, {m})")
    if not check_simplex(u_prev):
        raise BuildError("u_prev is not in the Gibbs simplex")

    K = dz.assemble_p1_stiffness(mesh)
    M = dz.assemble_p1_mass(mesh)
    ml = dz.lumped_mass_vector(mesh)
    ML = sp.diags(ml)
    ones = M @ np.ones(N)
    eps2, tau = data.eps ** 2, data.tau
    lmap = LegendreMap.simplex(m)
    Mu_prev = M @ u_prev  # (N, m)
    gauge_scale = ml[0]

    n = m * N
    U, Z, P = slice(0, n), slice(n, 2 * n), slice(2 * n, 3 * n)
    gauge_row = n  # first row of the z-block: phase 0, node 0

    def fields(v):
        return v.reshape(m, N).T  # (N, m)

    def residual(x, alpha, xp):
        u, z, psi = fields(x[U]), fields(x[Z]), fields(x[P])
        dpsi = psi - fields(xp[P])
        ra = alpha * (M @ z + eps2 * (K @ u) - 2.0 * (M @ u) + ones[:, None]) + ml[:, None] * dpsi
        rb = M @ u - tau * (K @ z) - Mu_prev
        rb[0, 0] = gauge_scale * z[0, 0]
        rc = ml[:, None] * (u - grad_R_star(lmap, None, psi))
        return np.concatenate([ra.T.ravel(), rb.T.ravel(), rc.T.ravel()])

    A_uu = eps2 * K - 2.0 * M
    Bz = -tau * K

    def jacobian(x, alpha, xp):
        psi = fields(x[P])
        Js = jac_grad_R_star(lmap, None, psi)  # (N, m, m)
        I_m = sp.identity(m, format="csr")
        Jau = sp.kron(I_m, alpha * A_uu)
        Jaz = sp.kron(I_m, alpha * M)
        Jap = sp.kron(I_m, ML)
        Jbu = sp.kron(I_m, M).tolil()
        Jbz = sp.kron(I_m, Bz).tolil()
        Jbu[0, :] = 0.0
        Jbz[0, :] = 0.0
        Jbz[0, 0] = gauge_scale
        Jcu = sp.kron(I_m, ML)
        Jcp = sp.bmat(
            [[sp.diags(-ml * Js[:, i, j]) for j in range(m)] for i in range(m)]
        )
        return sp.bmat(
            [[Jau, Jaz, Jap], [Jbu.tocsr(), Jbz.tocsr(), None], [Jcu, None, Jcp]],
            format="csc",
        )

    def recover(x):
        return grad_R_star(lmap, None, fields(x[P]))

    def margin(x):
        return float(np.min(feasibility_margin(lmap, None, recover(x))))

    def increment(x, xp):
        d = fields(x[U] - xp[U])
        return float(np.sqrt(np.sum(d * (M @ d))))

    x0 = np.zeros(3 * n)
    x0[U] = u_prev.T.ravel()
    return SaddleProblem(
        blocks={"u": U, "z": Z, "psi": P},
        residual=residual,
        jacobian=jacobian,
        recover=recover,
        increment_norm=increment,
        margin=margin,
        x0=x0,
        data={"mesh": mesh, "mass": M, "lumped": ml, "fields": fields, "gauge_row": gauge_row},
    )


@dataclass
class MultiphaseRun:
    times: list
    phases: list  # primal u per step, (N, m)
    latent: list  # softmax recovery per step, (N, m)
    results: list  # LvppResult per step

    @property
    def proximal_counts(self):
        return [len(r.trace) for r in self.results]


def run_multiphase(data: MultiphaseData, cfg: LvppConfig, steps=None, callback=None) -> MultiphaseRun:
    """March ``steps`` backward-Euler steps; each starts LVPP from ``psi = 0``.

    The next step starts from the primal ``u`` of the previous step. It
    conserves each phase's mass exactly and matches the softmax recovery
    nodally up to the Newton tolerance.
    """
    steps = data.steps if steps is None else steps
    u = data.u0.copy()
    run = MultiphaseRun([0.0], [u.copy()], [u.copy()], [])
    for s in range(1, steps + 1):
        cfg.schedule.reset()
        prob = build_multiphase_step(data, u)
        res: LvppResult = run_lvpp(prob, cfg)
        if not res.trace.converged:
            raise RuntimeError(f"time step {s}: LVPP did not converge")
        fields = prob.data["fields"]
        latent = res.recovered
        u = fields(res.u).copy()
        run.times.append(s * data.tau)
        run.phases.append(u.copy())
        run.latent.append(latent)
        run.results.append(res)
        if callback is not None:
            callback(s, run)
    return run
