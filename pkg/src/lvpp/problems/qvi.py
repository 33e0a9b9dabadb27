"""Thermoforming quasi-variational inequality.

A membrane ``u`` (zero on the boundary) is pushed up by a force ``f`` into a
mold ``Phi = Phi0 + xi T`` whose shape depends on the temperature ``T``:

    (grad T, grad q) + beta (T, q) = (g(Phi0 + xi T - u), q),
    u <= Phi0 + xi T,   (grad u, grad(v - u)) >= (f, v - u).

LVPP handles the upper bound with the Shannon entropy written for an upper
obstacle, so the latent relation reads ``u + exp(-psi) = Phi0 + xi T`` and
the gap ``Phi - u`` in the heat source is replaced by ``exp(-psi)``. All three
fields are P1; ``u`` and ``psi`` live on interior nodes, ``T`` on all nodes
(natural boundary). Nodal relations use the lumped mass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .. import discretize as dz
from ..entropy import LegendreMap, feasibility_margin, grad_R_star, jac_grad_R_star
from ..loop import SaddleProblem
from ..schedule import AlphaSchedule
from ._common import as_field
from .obstacle import BuildError

STABILIZATION = 1e-10
QVI_TOL = 1e-5


def qvi_xi(p):
    return np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1])


def qvi_mold(p):
    return 1.0 - 2.0 * np.maximum(np.abs(p[:, 0] - 0.5), np.abs(p[:, 1] - 0.5))


@dataclass(frozen=True)
class HeatTransfer:
    """Piecewise-linear nonincreasing heat-transfer curve.

    ``g(s) = 1`` for ``s <= 0``, ``1 - s/width`` on ``(0, width)`` and ``0``
    beyond. At the two kinks the derivative is the left one-sided value.
    """

    width: float = 1e-2

    def __post_init__(self):
        if not self.width > 0:
            raise BuildError("g-curve ramp width must be positive (g must be nonincreasing)")

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return np.clip(1.0 - s / self.width, 0.0, 1.0)

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        return np.where((s > 0.0) & (s <= self.width), -1.0 / self.width, 0.0)


def qvi_schedule():
    return AlphaSchedule.geometric(2.0 ** -6, 4.0)


@dataclass
class QviData:
    """Thermoforming data on the unit square; defaults are the reference set."""

    beta: float = 1.0
    xi: Callable = qvi_xi
    mold: Callable = qvi_mold
    f: object = 25.0
    g: Callable = HeatTransfer()
    n: int = 50
    T0: float = 1.0

    def __post_init__(self):
        if not self.beta > 0:
            raise BuildError("conduction coefficient beta must be positive")
        if self.n < 2:
            raise BuildError("need n >= 2")
        if not hasattr(self.g, "derivative"):
            raise BuildError("g must provide a derivative")
        s = np.linspace(-1.0, 1.0, 2001)
        if np.any(np.diff(self.g(s)) > 1e-14) or np.any(self.g.derivative(s) > 0):
            raise BuildError("g-curve must be nonincreasing")


def build_qvi_thermoforming(data: QviData) -> SaddleProblem:
    """Saddle system with unknown layout ``[u (interior), psi (interior), T (all nodes)]``.

    The Jacobian includes the stabilisation ``-1e-10/alpha (grad psi, grad w)``
    in the latent block; the residual does not.
    """
    mesh = dz.build_tri_mesh(data.n)
    I = mesh.interior
    Np, Ni = mesh.num_points, I.size
    pts = mesh.points
    K = dz.assemble_p1_stiffness(mesh)
    M = dz.assemble_p1_mass(mesh)
    ml = dz.lumped_mass_vector(mesh)
    KII = K[I][:, I].tocsr()
    H = (K + data.beta * M).tocsr()
    F = dz.assemble_load(mesh, lambda p: as_field(data.f, p))[I]
    xi = as_field(data.xi, pts)
    mold0 = as_field(data.mold, pts)
    w = ml[I]
    W = sp.diags(w)
    g = data.g

    U, P, T = slice(0, Ni), slice(Ni, 2 * Ni), slice(2 * Ni, 2 * Ni + Np)
    # T enters the latent relation only through interior nodes
    XiT = sp.csr_matrix((-w * xi[I], (np.arange(Ni), I)), shape=(Ni, Np))
    # the gap Phi - u vanishes on the boundary, where g = g(0)
    g_bdry = float(g(0.0))

    def mold(x):
        return mold0 + xi * x[T]

    def gap(x):
        return np.exp(-x[P])

    def heat_source(x):
        s = np.full(Np, g_bdry)
        s[I] = g(gap(x))
        return s

    def residual(x, alpha, xp):
        u, psi = x[U], x[P]
        ru = alpha * (KII @ u - F) + w * (psi - xp[P])
        rp = w * (u + gap(x) - mold(x)[I])
        rT = H @ x[T] - ml * heat_source(x)
        return np.concatenate([ru, rp, rT])

    def jacobian(x, alpha, xp):
        e = gap(x)
        dsrc = sp.csr_matrix((ml[I] * g.derivative(e) * e, (I, np.arange(Ni))), shape=(Np, Ni))
        Jpp = sp.diags(-w * e) - (STABILIZATION / alpha) * KII
        return sp.bmat(
            [
                [alpha * KII, W, None],
                [W, Jpp, XiT],
                [None, dsrc, H],
            ],
            format="csc",
        )

    def legendre(x):
        return LegendreMap.shannon_upper(mold(x)[I])

    def recover(x):
        return grad_R_star(legendre(x), None, x[P][:, None])[:, 0]

    def margin(x):
        return float(np.min(feasibility_margin(legendre(x), None, recover(x)[:, None])))

    Hu = (KII + M[I][:, I]).tocsr()

    def h1(x, xp):
        d = x[U] - xp[U]
        return float(np.sqrt(d @ (Hu @ d)))

    def full(values):
        out = np.zeros(Np)
        out[I] = values
        return out

    x0 = np.zeros(2 * Ni + Np)
    x0[T] = data.T0
    return SaddleProblem(
        blocks={"u": U, "psi": P, "T": T},
        residual=residual,
        jacobian=jacobian,
        recover=recover,
        increment_norm=h1,
        margin=margin,
        x0=x0,
        data={
            "mesh": mesh,
            "qvi": data,
            "full": full,
            "mold": lambda x: mold(x),
            "stiffness": K,
            "mass": M,
            "lumped": ml,
            "load": F,
            "jac_entropy": lambda x: jac_grad_R_star(legendre(x), None, x[P][:, None]),
        },
    )


def _dual_norm(r, G):
    """``sqrt(r^T G^{-1} r)`` for an SPD Gram matrix ``G``."""
    return float(np.sqrt(max(r @ spla.spsolve(G.tocsc(), r), 0.0)))


def qvi_residuals(problem: SaddleProblem, x) -> dict:
    """Residuals of the original thermoforming system at ``(u, T)``.

    Returns a dict with

    ``heat``
        dual (``H^1``) norm of the heat equation with source ``g(Phi - u)``.
    ``feasibility``
        largest violation of ``u <= Phi`` over the nodes.
    ``sign``
        dual (``H^1_0``) norm of the part of ``f + Lap u`` that would pull the
        membrane down away from the mold (it must be a nonnegative measure
        supported on the contact set).
    ``complementarity``
        ``sum_i |mu_i| (Phi - u)_i`` with ``mu = f + Lap u`` in the lumped
        nodal sense.
    """
    d = problem.data
    data, mesh = d["qvi"], d["mesh"]
    I = mesh.interior
    K, M, ml = d["stiffness"], d["mass"], d["lumped"]
    u = d["full"](problem.block(x, "u"))
    T = problem.block(x, "T")
    phi = d["mold"](x)
    H = K + data.beta * M
    heat = H @ T - ml * data.g(phi - u)
    mu = (d["load"] - (K @ u)[I])  # contact force pushing the membrane down
    KII = K[I][:, I] + M[I][:, I]
    wrong_sign = np.minimum(mu, 0.0)
    return {
        "heat": _dual_norm(heat, H),
        "feasibility": float(max(np.max(u - phi), 0.0)),
        "sign": _dual_norm(wrong_sign, KII),
        "complementarity": float(np.sum(np.abs(mu) * (phi - u)[I])),
    }
