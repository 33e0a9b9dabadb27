"""Eikonal equation ``|grad u| = 1`` as the limit of a gradient-constrained LVPP.

The distance function to the boundary maximises ``(1, u)`` over
``{u in H^1_0 : |grad u| <= 1}``, so each subproblem is the gradient-constraint
system with no stiffness term and a unit load.
"""

from __future__ import annotations

import numpy as np

from .. import discretize as dz
from ..schedule import AlphaSchedule
from .gradient import _GradientSaddle, _mesh


def eikonal_schedule() -> AlphaSchedule:
    """``alpha_k = 10 min(2^k, 5)``, i.e. 20, 40, 50, 50, ..."""
    return AlphaSchedule.geometric(20.0, 2.0, 50.0)


EIKONAL_TOL = 1e-4


def build_eikonal(n=32, box=(0.0, 1.0, 0.0, 1.0)):
    """Eikonal subproblem family on the unit square (or an interval if ``box`` has 2 entries).

    Parameters
    ----------
    n : int
        Cells per axis.
    box : tuple
        ``(x0, x1)`` for 1D or ``(x0, x1, y0, y1)`` for 2D.
    """
    mesh = _mesh(n, box)
    load = dz.assemble_load(mesh, lambda p: np.ones(p.shape[0]))
    asm = _GradientSaddle(mesh, 1.0, 0.0, load)
    return asm.problem(radius=np.ones(mesh.num_cells))
