"""Named reference configurations for each experiment.

A preset bundles a problem builder with the proximal schedule, stopping
tolerance and Newton settings of the reference run. ``default_n`` is a
reduced desk-scale resolution; ``reference_n`` restores the reference one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .loop import LvppConfig
from .problems.eikonal import EIKONAL_TOL, build_eikonal, eikonal_schedule
from .problems.gradient import build_gradient_constraint, build_intersection
from .problems.multiphase import MultiphaseData
from .problems.obstacle import benchmark_data, build_obstacle
from .problems.qvi import QVI_TOL, QviData, build_qvi_thermoforming, qvi_schedule
from .schedule import AlphaSchedule
from .solvers import NewtonConfig

MULTIPHASE_TOL = 4e-5


@dataclass
class Preset:
    name: str
    description: str
    build: Optional[Callable]  # n -> SaddleProblem (None for non-LVPP presets)
    schedule: Callable  # () -> AlphaSchedule
    tol: float
    newton: dict = field(default_factory=dict)
    default_n: int = 32
    reference_n: int = 32
    max_iter: int = 100

    def config(self, schedule=None, tol=None, newton_tol=None, newton_rtol=None, max_iter=None) -> LvppConfig:
        """LVPP settings of the preset with optional overrides."""
        nw = dict(self.newton)
        if newton_tol is not None:
            nw["tol"] = newton_tol
        if newton_rtol is not None:
            nw["rtol"] = newton_rtol
        return LvppConfig(
            schedule if schedule is not None else self.schedule(),
            tol=self.tol if tol is None else tol,
            max_iter=self.max_iter if max_iter is None else max_iter,
            newton=NewtonConfig(**nw),
        )

    def resolution(self, n=None, reference_scale=False) -> int:
        if n is not None:
            if n < 1:
                raise ValueError("resolution must be at least 1")
            return int(n)
        return self.reference_n if reference_scale else self.default_n


def fd_spacing_to_n(h: float) -> int:
    """Interior points per axis of the FD benchmark grid on ``(-1, 1)^2`` with spacing ``h``."""
    return int(round(2.0 / h)) - 1


PRESETS = {
    p.name: p
    for p in [
        Preset(
            "obstacle-fd",
            "benchmark unilateral obstacle, 5-point finite differences on (-1, 1)^2",
            lambda n: build_obstacle(benchmark_data(n, "fd")),
            AlphaSchedule.double_exponential,
            1e-9,
            {"tol": 1e-8, "rtol": 1e-3},
            default_n=63,
            reference_n=127,
        ),
        Preset(
            "obstacle-fem",
            "benchmark unilateral obstacle, P1 elements on (-1, 1)^2",
            lambda n: build_obstacle(benchmark_data(n, "p1")),
            AlphaSchedule.double_exponential,
            1e-9,
            {"tol": 1e-8},
            default_n=32,
            reference_n=64,
        ),
        Preset(
            "gradient",
            "gradient-norm constraint |grad u| <= 0.1 + 0.2x + 0.4y with f = 15 sin^2(pi x)",
            lambda n: build_gradient_constraint(n),
            lambda: AlphaSchedule.geometric(1.0, 2.0),
            1e-8,
            {"tol": 1e-8, "rtol": 1e-8},
            default_n=64,
            reference_n=200,
        ),
        Preset(
            "intersection",
            "1D obstacle and slope constraint together (phi_c = 2)",
            lambda n: build_intersection(n),
            lambda: AlphaSchedule.geometric(1.0, 2.0),
            1e-8,
            {"tol": 1e-10, "rtol": 1e-8},
            default_n=200,
            reference_n=200,
        ),
        Preset(
            "eikonal",
            "distance to the boundary of the unit square",
            lambda n: build_eikonal(n),
            eikonal_schedule,
            EIKONAL_TOL,
            {"tol": 1e-8, "rtol": 1e-8},
            default_n=32,
            reference_n=64,
        ),
        Preset(
            "qvi",
            "thermoforming quasi-variational inequality",
            lambda n: build_qvi_thermoforming(QviData(n=n)),
            qvi_schedule,
            QVI_TOL,
            {"tol": 1e-8},
            default_n=50,
            reference_n=100,
        ),
        Preset(
            "multiphase",
            "four-phase flow on the Gibbs simplex, one LVPP solve per time step",
            None,
            lambda: AlphaSchedule.constant(1.0),
            MULTIPHASE_TOL,
            {"tol": 1e-8},
            default_n=32,
            reference_n=64,
        ),
    ]
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None


def multiphase_data(n: int, steps: int = 10) -> MultiphaseData:
    return MultiphaseData(n=n, steps=steps)
