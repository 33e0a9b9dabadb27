"""The latent variable proximal point outer loop."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .schedule import AlphaSchedule
from .solvers import NewtonConfig, NewtonDivergence, SingularMatrixError, newton_solve, solve_sparse

log = logging.getLogger(__name__)


@dataclass
class SaddleProblem:
    """One discrete LVPP subproblem family.

    The unknown is a single stacked vector; ``blocks`` names its slices
    (``"u"`` for the primal field, ``"psi"`` for the latent field, and any
    auxiliary blocks). The callbacks receive the current state, the proximal
    parameter and the previous outer iterate (from which the ``psi_{k-1}``
    terms are read).

    Attributes
    ----------
    residual, jacobian : callable ``(x, alpha, x_prev) -> array / sparse``
    recover : callable ``x -> array``
        Feasible latent recovery ``grad R*(psi)`` (shape problem specific).
    increment_norm : callable ``(x, x_prev) -> float``
        Norm of the primal increment used by the outer stopping test.
    margin : callable ``x -> float``, optional
        Smallest constraint slack of the latent recovery.
    x0 : array
        Initial state (all zeros unless the problem says otherwise).
    linear_solve : callable, optional
        Replacement for :func:`solve_sparse` in Newton (e.g. static
        condensation of a cell-local block).
    merit : callable ``(x, alpha, x_prev) -> (value, x_adj)``, optional
        Line-search merit for Newton; see :func:`newton_solve`.
    """

    blocks: dict
    residual: Callable
    jacobian: Callable
    recover: Callable
    increment_norm: Callable
    x0: np.ndarray
    margin: Optional[Callable] = None
    energy: Optional[Callable] = None
    linear_solve: Optional[Callable] = None
    merit: Optional[Callable] = None
    data: dict = field(default_factory=dict)

    @property
    def size(self):
        return self.x0.size

    def block(self, x, name):
        return x[self.blocks[name]]

    def primal(self, x):
        return self.block(x, "u")


@dataclass
class LvppConfig:
    schedule: AlphaSchedule
    tol: float = 1e-8
    max_iter: int = 100
    newton: NewtonConfig = field(default_factory=NewtonConfig)

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("outer tolerance must be positive")


@dataclass
class TraceRow:
    k: int
    alpha: float
    newton_iters: int
    linear_solves: int
    increment_norm: float
    min_margin: float


TRACE_COLUMNS = ("k", "alpha", "newton_iters", "linear_solves", "increment_norm", "min_margin")


@dataclass
class LvppTrace:
    rows: list = field(default_factory=list)
    converged: bool = False

    def __len__(self):
        return len(self.rows)

    @property
    def outer_iterations(self):
        return len(self.rows)

    @property
    def newton_iterations(self):
        return sum(r.newton_iters for r in self.rows)

    @property
    def linear_solves(self):
        return sum(r.linear_solves for r in self.rows)

    @property
    def final_increment(self):
        return self.rows[-1].increment_norm if self.rows else float("nan")

    @property
    def min_margin(self):
        return min((r.min_margin for r in self.rows), default=float("nan"))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for r in self.rows:
                w.writerow(
                    [
                        r.k,
                        f"{r.alpha:.17g}",
                        r.newton_iters,
                        r.linear_solves,
                        f"{r.increment_norm:.17g}",
                        f"{r.min_margin:.17g}",
                    ]
                )


class LvppError(RuntimeError):
    """Newton failed inside the outer loop; carries the partial trace."""

    def __init__(self, msg, trace, state):
        super().__init__(msg)
        self.trace = trace
        self.state = state


@dataclass
class LvppResult:
    state: np.ndarray
    previous: np.ndarray
    alpha: float
    trace: LvppTrace
    problem: SaddleProblem

    @property
    def u(self):
        return self.problem.primal(self.state)

    @property
    def recovered(self):
        return self.problem.recover(self.state)


def run_lvpp(problem: SaddleProblem, cfg: LvppConfig, callback=None, x0=None) -> LvppResult:
    """Iterate the saddle-point subproblems until the primal increment is small.

    Subproblem ``k`` draws ``alpha_k`` from the schedule (fed the Newton count
    of subproblem ``k-1``) and is solved by damped Newton warm-started at the
    previous outer iterate. ``callback(k, state, alpha)`` runs after each
    accepted subproblem.
    """
    x = np.array(problem.x0 if x0 is None else x0, dtype=float, copy=True)
    trace = LvppTrace()
    prev_iters = 0
    alpha = float("nan")
    x_prev = x.copy()
    linsolve = problem.linear_solve or solve_sparse
    for k in range(1, cfg.max_iter + 1):
        alpha = cfg.schedule.next_alpha(k, prev_iters)
        x_prev = x
        try:
            x, rep = newton_solve(
                lambda z: problem.residual(z, alpha, x_prev),
                lambda z: problem.jacobian(z, alpha, x_prev),
                x_prev,
                cfg.newton,
                linear_solve=linsolve,
                merit=None if problem.merit is None else (lambda z: problem.merit(z, alpha, x_prev)),
            )
        except (NewtonDivergence, SingularMatrixError) as exc:
            raise LvppError(f"subproblem {k} (alpha={alpha:g}) failed: {exc}", trace, x_prev) from exc
        if not rep.converged:
            raise LvppError(
                f"Newton did not converge on subproblem {k} (alpha={alpha:g}, "
                f"|r|={rep.residual_norm:.3e})",
                trace,
                x,
            )
        prev_iters = rep.iterations
        inc = float(problem.increment_norm(x, x_prev))
        margin = float(problem.margin(x)) if problem.margin else float("nan")
        trace.rows.append(TraceRow(k, alpha, rep.iterations, rep.linear_solves, inc, margin))
        log.info("k=%d alpha=%.4g newton=%d inc=%.3e margin=%.3e", k, alpha, rep.iterations, inc, margin)
        if callback is not None:
            callback(k, x, alpha)
        if inc <= cfg.tol:
            trace.converged = True
            break
    return LvppResult(x, x_prev, alpha, trace, problem)
