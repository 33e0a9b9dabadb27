"""Linear equality constraints as the limit of a scaled Hellinger regularisation.

For ``min 1/2 a(u, u) - F(u)`` subject to ``B u = 0`` the LVPP subproblem
with the unit-ball Hellinger entropy scaled by ``eps`` reads

    alpha A u + B^T psi = alpha F + B^T psi0,
    B u = eps * psi / sqrt(1 + |psi|^2),

and as ``eps -> 0`` the pair ``(u_eps, (psi_eps - psi0)/alpha)`` tends to the
KKT pair ``(u, lambda)`` of

    A u + B^T lambda = F,   B u = 0.

Everything here is finite dimensional; matrices are supplied directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .entropy import LegendreMap, grad_R_star, jac_grad_R_star
from .loop import LvppConfig, SaddleProblem, run_lvpp
from .schedule import AlphaSchedule
from .solvers import NewtonConfig, newton_solve

SYMMETRY_TOL = 1e-12


class EqualityError(ValueError):
    pass


@dataclass
class EqualityProblem:
    """Quadratic energy with linear equality constraints.

    Attributes
    ----------
    A : (n, n) array
        Symmetric positive definite matrix of the bilinear form.
    B : (m, n) array
        Constraint operator of full row rank.
    F : (n,) array
    psi0 : (m,) array, optional
        Initial latent variable (zero by default).
    alpha1 : float
        Proximal parameter of the single subproblem.
    """

    A: np.ndarray
    B: np.ndarray
    F: np.ndarray
    psi0: np.ndarray = None
    alpha1: float = 1.0
    _beta: float = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        self.F = np.asarray(self.F, dtype=float).ravel()
        n = self.A.shape[0]
        m = self.B.shape[0]
        self.psi0 = np.zeros(m) if self.psi0 is None else np.asarray(self.psi0, dtype=float).ravel()
        if self.A.shape != (n, n):
            raise EqualityError("A must be square")
        if self.B.shape[1] != n or self.F.shape != (n,) or self.psi0.shape != (m,):
            raise EqualityError("inconsistent dimensions of A, B, F and psi0")
        if not self.alpha1 > 0:
            raise EqualityError("alpha1 must be positive")
        scale = max(1.0, np.abs(self.A).max())
        if np.abs(self.A - self.A.T).max() > SYMMETRY_TOL * scale:
            raise EqualityError("A is not symmetric")
        eig = np.linalg.eigvalsh(self.A)
        if eig[0] <= 0:
            raise EqualityError("A is not positive definite")
        self._beta = float(eig[0])
        if m > n or np.linalg.matrix_rank(self.B) < m:
            raise EqualityError("B does not have full row rank")

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[0]

    @property
    def coercivity(self) -> float:
        """Smallest eigenvalue of ``A`` (the coercivity constant)."""
        return self._beta


def solve_kkt(p: EqualityProblem):
    """Solve ``[A B^T; B 0] (u, lambda) = (F, 0)`` directly."""
    n, m = p.n, p.m
    K = np.block([[p.A, p.B.T], [p.B, np.zeros((m, m))]])
    sol = sla.solve(K, np.concatenate([p.F, np.zeros(m)]), assume_a="sym")
    return sol[:n], sol[n:]


def _ball(m):
    return LegendreMap.hellinger(1.0, m)


def equality_saddle(p: EqualityProblem, eps: float) -> SaddleProblem:
    """The regularised system as an LVPP subproblem family (unknown ``[u, psi]``)."""
    if not 0 < eps < 1:
        raise EqualityError("eps must lie in (0, 1)")
    n, m = p.n, p.m
    U, P = slice(0, n), slice(n, n + m)
    lmap = _ball(m)

    def residual(x, alpha, xp):
        u, psi = x[U], x[P]
        r1 = alpha * (p.A @ u - p.F) + p.B.T @ (psi - xp[P])
        r2 = p.B @ u - eps * grad_R_star(lmap, None, psi)
        return np.concatenate([r1, r2])

    def jacobian(x, alpha, xp):
        D = jac_grad_R_star(lmap, None, x[P])
        return np.block([[alpha * p.A, p.B.T], [p.B, -eps * D]])

    def recover(x):
        return eps * grad_R_star(lmap, None, x[P])

    def margin(x):
        return float(eps - np.linalg.norm(recover(x)))

    x0 = np.concatenate([np.zeros(n), p.psi0])
    return SaddleProblem(
        blocks={"u": U, "psi": P},
        residual=residual,
        jacobian=jacobian,
        recover=recover,
        increment_norm=lambda x, xp: float(np.linalg.norm(x[U] - xp[U])),
        margin=margin,
        x0=x0,
        linear_solve=lambda J, b: np.linalg.solve(J, b),
        data={"eps": eps},
    )


def solve_regularized(p: EqualityProblem, eps: float, newton: NewtonConfig = None):
    """Newton solve of the ``eps``-regularised subproblem started at ``(0, psi0)``.

    Returns ``(u_eps, psi_eps)``. The residual satisfies ``|B u_eps| < eps``
    because the Hellinger map sends every ``psi`` into the open unit ball.
    """
    sp_ = equality_saddle(p, eps)
    x0 = sp_.x0
    cfg = newton or NewtonConfig(tol=1e-13, max_iter=100)
    x, rep = newton_solve(
        lambda z: sp_.residual(z, p.alpha1, x0),
        lambda z: sp_.jacobian(z, p.alpha1, x0),
        x0,
        cfg,
        linear_solve=sp_.linear_solve,
    )
    if not rep.converged:
        raise EqualityError(
            f"Newton did not converge for eps={eps:g} (|r|={rep.residual_norm:.3e}); "
            f"history {rep.history}"
        )
    return x[: p.n].copy(), x[p.n:].copy()


def multiplier(p: EqualityProblem, psi):
    """Multiplier estimate ``(psi - psi0) / alpha1``."""
    return (np.asarray(psi) - p.psi0) / p.alpha1


def apriori_bound(p: EqualityProblem):
    """Right-hand side ``|F| + |B^T psi0| / alpha1`` of the uniform bound on ``beta |u_eps|``."""
    return float(np.linalg.norm(p.F) + np.linalg.norm(p.B.T @ p.psi0) / p.alpha1)


SWEEP_COLUMNS = ("eps", "u_error", "lambda_error", "constraint_norm", "beta_u_norm", "bound", "psi_Bu")


def eps_sweep(p: EqualityProblem, eps_values):
    """Regularised solutions over ``eps_values`` compared with the KKT pair.

    Returns a list of dicts keyed by :data:`SWEEP_COLUMNS`.
    """
    u_ref, lam_ref = solve_kkt(p)
    bound = apriori_bound(p)
    rows = []
    for eps in eps_values:
        u, psi = solve_regularized(p, float(eps))
        rows.append(
            {
                "eps": float(eps),
                "u_error": float(np.linalg.norm(u - u_ref)),
                "lambda_error": float(np.linalg.norm(multiplier(p, psi) - lam_ref)),
                "constraint_norm": float(np.linalg.norm(p.B @ u)),
                "beta_u_norm": p.coercivity * float(np.linalg.norm(u)),
                "bound": bound,
                "psi_Bu": float(psi @ (p.B @ u)),
            }
        )
    return rows


def parse_eps_sweep(spec: str, per_decade: int = 1):
    """Parse ``"1e-1:1e-6"`` into a geometric sequence with ``per_decade`` points per decade."""
    try:
        a, b = (float(s) for s in spec.split(":"))
    except ValueError as exc:
        raise EqualityError(f"bad eps sweep {spec!r}; expected START:STOP") from exc
    if not (0 < a < 1 and 0 < b < 1):
        raise EqualityError("eps values must lie in (0, 1)")
    decades = abs(np.log10(a) - np.log10(b))
    count = int(round(decades * per_decade)) + 1
    return np.geomspace(a, b, max(count, 2))


def one_shot(p: EqualityProblem, eps: float, tol: float = 1e-6, max_iter: int = 10):
    """Run the outer LVPP loop with the KKT solution in the stopping test.

    The stopping quantity is ``|u_k - u_kkt|`` rather than the increment, so
    a trace of length one means the first subproblem already reproduces the
    constrained minimiser to ``tol``.
    """
    u_ref, _ = solve_kkt(p)
    prob = equality_saddle(p, eps)
    U = prob.blocks["u"]
    prob.increment_norm = lambda x, xp: float(np.linalg.norm(x[U] - u_ref))
    cfg = LvppConfig(
        AlphaSchedule.constant(p.alpha1),
        tol=tol,
        max_iter=max_iter,
        newton=NewtonConfig(tol=1e-13, max_iter=100),
    )
    return run_lvpp(prob, cfg)


def read_dense_matrix(path):
    """Read ``rows cols`` on the first line, then row-major entries."""
    with open(path) as fh:
        tokens = fh.read().split()
    if len(tokens) < 2:
        raise EqualityError(f"{path}: missing 'rows cols' header")
    try:
        r, c = int(tokens[0]), int(tokens[1])
        vals = np.array([float(t) for t in tokens[2:]])
    except ValueError as exc:
        raise EqualityError(f"{path}: {exc}") from exc
    if r < 1 or c < 1 or vals.size != r * c:
        raise EqualityError(f"{path}: expected {r}x{c} entries, found {vals.size}")
    return vals.reshape(r, c)


def read_equality_file(path) -> EqualityProblem:
    """Read an equality problem stored as ``[A | B^T | F]`` blocks.

    The file holds one dense matrix with ``n`` rows and ``n + m + 1``
    columns: the first ``n`` columns are ``A``, the next ``m`` are ``B^T``
    and the last one is ``F``.
    """
    Mx = read_dense_matrix(path)
    n, c = Mx.shape
    m = c - n - 1
    if m < 1:
        raise EqualityError(f"{path}: need at least {n + 2} columns for n={n}")
    return EqualityProblem(Mx[:, :n], Mx[:, n:n + m].T, Mx[:, -1])
