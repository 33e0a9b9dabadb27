"""Sparse direct solves and a damped Newton method."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import minimize_scalar

log = logging.getLogger(__name__)


class SingularMatrixError(RuntimeError):
    pass


class NewtonDivergence(RuntimeError):
    pass


def solve_sparse(A, b) -> np.ndarray:
    """Sparse LU solve (SuperLU, COLAMD ordering, partial pivoting)."""
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got {A.shape}")
    if b.shape[0] != A.shape[0]:
        raise ValueError("right-hand side has the wrong length")
    try:
        x = spla.splu(A).solve(b)
    except RuntimeError as exc:  # SuperLU reports exact singularity this way
        raise SingularMatrixError(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularMatrixError("non-finite solution (numerically singular matrix)")
    return x


@dataclass
class NewtonConfig:
    tol: float = 1e-8
    rtol: float = 0.0
    max_iter: int = 50
    max_halvings: int = 20
    damping: bool = True

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if not 0.0 <= self.rtol < 1.0:
            raise ValueError("rtol must lie in [0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class NewtonReport:
    converged: bool
    iterations: int
    linear_solves: int
    residual_norm: float
    history: list = field(default_factory=list)


def newton_solve(
    residual: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], object],
    x0,
    cfg: Optional[NewtonConfig] = None,
    linear_solve: Callable = solve_sparse,
    merit: Optional[Callable] = None,
):
    """Damped Newton iteration ``x <- x + s * dx`` with ``J dx = -r``.

    Stops once ``|r| <= max(tol, rtol * |r_0|)`` (Euclidean norms).

    Without ``merit`` the step length ``s`` is halved until the residual norm
    decreases; if ``max_halvings`` halvings do not help, the full step is
    taken.

    ``merit(x) -> (value, x_adj)`` supplies a problem-specific merit function
    together with an adjusted point (for instance with linearly eliminated
    unknowns re-solved). Then ``s`` minimises the merit along the Newton
    direction over ``[2**-max_halvings, 1]`` (bounded Brent search); the
    full step is kept unless the minimiser is strictly better.

    Returns
    -------
    x : ndarray
    report : NewtonReport
    """
    cfg = cfg or NewtonConfig()
    x = np.array(x0, dtype=float, copy=True)
    r = np.asarray(residual(x), dtype=float)
    rn = float(np.linalg.norm(r))
    history = [rn]
    if not np.isfinite(rn):
        raise NewtonDivergence("non-finite residual at the initial guess")
    stop = max(cfg.tol, cfg.rtol * rn)
    it = solves = 0
    while rn > stop and it < cfg.max_iter:
        J = jacobian(x)
        try:
            dx = linear_solve(J, -r)
        except SingularMatrixError as exc:
            raise SingularMatrixError(f"Newton iteration {it + 1}: {exc}") from exc
        solves += 1
        it += 1
        if merit is None:
            x, r, rn, s = _residual_search(residual, x, dx, rn, cfg)
        else:
            x, r, rn, s = _merit_search(residual, merit, x, dx, cfg)
        history.append(rn)
        log.debug("newton %d: |r| = %.3e (step %.3g)", it, rn, s)
        if not np.isfinite(rn):
            raise NewtonDivergence(f"non-finite residual at Newton iteration {it}")
    return x, NewtonReport(rn <= stop, it, solves, rn, history)


def _residual_search(residual, x, dx, rn, cfg):
    x_new = x + dx
    r_new = np.asarray(residual(x_new), dtype=float)
    rn_new = float(np.linalg.norm(r_new))
    s = 1.0
    if cfg.damping and not rn_new < rn:
        step = 1.0
        for _ in range(cfg.max_halvings):
            step *= 0.5
            x_try = x + step * dx
            r_try = np.asarray(residual(x_try), dtype=float)
            rn_try = float(np.linalg.norm(r_try))
            if rn_try < rn:
                return x_try, r_try, rn_try, step
        # no halving helped: the full step stands
    return x_new, r_new, rn_new, s


def _merit_search(residual, merit, x, dx, cfg):
    m_full, x_full = merit(x + dx)
    step = 1.0
    if cfg.damping:
        res = minimize_scalar(
            lambda t: merit(x + t * dx)[0],
            bounds=(2.0 ** -cfg.max_halvings, 1.0),
            method="bounded",
            options={"xatol": 1e-3},
        )
        if res.fun < m_full:
            step = float(res.x)
    x_new = x_full if step == 1.0 else merit(x + step * dx)[1]
    r_new = np.asarray(residual(x_new), dtype=float)
    return x_new, r_new, float(np.linalg.norm(r_new)), step
