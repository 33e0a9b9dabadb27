"""Legendre functions for pointwise constraint geometries.

Each :class:`LegendreMap` bundles a Legendre function ``R`` with its gradient,
the inverse gradient ``grad R* = (grad R)^{-1}`` that sends an unconstrained
latent vector into the interior of the feasible image ``C``, and the Jacobian
of that inverse map (needed by Newton).

All functions are vectorised over points: ``x`` has shape ``(..., d)`` (or is
``None`` when every bound is a constant) and the vector arguments have shape
``(..., m)`` with ``m == map.dim``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

Bound = Union[float, Callable[[np.ndarray], np.ndarray]]

#: exp arguments are clamped to this range so nothing overflows
EXP_CLAMP = 700.0


class Kind(enum.Enum):
    SHANNON_LOWER = "shannon_lower"
    SHANNON_UPPER = "shannon_upper"
    FERMI_DIRAC = "fermi_dirac"
    HELLINGER = "hellinger"
    SIMPLEX = "simplex"


class DomainError(ValueError):
    """Raised when a point lies on or outside the boundary of ``dom R``."""


def _exp(z):
    return np.exp(np.clip(z, -EXP_CLAMP, EXP_CLAMP))


def _xlogx(z):
    # 0 ln 0 = 0
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    pos = z > 0
    out[pos] = z[pos] * np.log(z[pos])
    return out


def _norm(v):
    """Euclidean norm over the last axis without overflow."""
    v = np.asarray(v, dtype=float)
    m = np.max(np.abs(v), axis=-1)
    safe = np.where(m > 0, m, 1.0)
    return m * np.sqrt(np.sum((v / safe[..., None]) ** 2, axis=-1))


def _unit_scaled(psi):
    """``psi / sqrt(1 + |psi|^2)`` evaluated without overflow."""
    n = _norm(psi)
    big = n > 1.0
    nb = np.where(big, n, 1.0)
    denom = np.where(big, nb * np.sqrt(1.0 + (1.0 / nb) ** 2), np.sqrt(1.0 + np.minimum(n, 1.0) ** 2))
    return psi / denom[..., None]


@dataclass(frozen=True)
class LegendreMap:
    """One entry of the entropy catalogue.

    Parameters
    ----------
    kind : Kind
        Constraint geometry.
    phi_lower : float or callable, optional
        Lower bound (``SHANNON_LOWER``, ``FERMI_DIRAC``).
    phi_upper : float or callable, optional
        Upper bound (``SHANNON_UPPER``, ``FERMI_DIRAC``).
    radius : float or callable, optional
        Ball radius (``HELLINGER``).
    dim : int
        Length ``m`` of the latent vector.

    Callables receive an array of points of shape ``(..., d)`` and must
    return an array of shape ``(...)``.
    """

    kind: Kind
    phi_lower: Optional[Bound] = None
    phi_upper: Optional[Bound] = None
    radius: Optional[Bound] = None
    dim: int = 1

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        scalar = (Kind.SHANNON_LOWER, Kind.SHANNON_UPPER, Kind.FERMI_DIRAC)
        if self.kind in scalar and self.dim != 1:
            raise ValueError(f"{self.kind.value} is a scalar entropy (dim=1)")
        need = {
            Kind.SHANNON_LOWER: ("phi_lower",),
            Kind.SHANNON_UPPER: ("phi_upper",),
            Kind.FERMI_DIRAC: ("phi_lower", "phi_upper"),
            Kind.HELLINGER: ("radius",),
            Kind.SIMPLEX: (),
        }[self.kind]
        for name in need:
            if getattr(self, name) is None:
                raise ValueError(f"{self.kind.value} requires {name}")

    # convenience constructors
    @classmethod
    def shannon_lower(cls, phi=0.0):
        return cls(Kind.SHANNON_LOWER, phi_lower=phi)

    @classmethod
    def shannon_upper(cls, phi=0.0):
        return cls(Kind.SHANNON_UPPER, phi_upper=phi)

    @classmethod
    def fermi_dirac(cls, lower=0.0, upper=1.0):
        return cls(Kind.FERMI_DIRAC, phi_lower=lower, phi_upper=upper)

    @classmethod
    def hellinger(cls, radius=1.0, dim=2):
        return cls(Kind.HELLINGER, radius=radius, dim=dim)

    @classmethod
    def simplex(cls, dim):
        return cls(Kind.SIMPLEX, dim=dim)

    def bound(self, name, x, shape):
        """Evaluate bound ``name`` at the points ``x``, broadcast to ``shape``."""
        b = getattr(self, name)
        if callable(b):
            if x is None:
                raise ValueError(f"{name} depends on the point; x is required")
            val = np.asarray(b(np.asarray(x, dtype=float)), dtype=float)
        else:
            val = np.asarray(b, dtype=float)
        return np.broadcast_to(val, shape)


def _check(lmap, v, name="argument"):
    v = np.asarray(v, dtype=float)
    if v.ndim == 0 or v.shape[-1] != lmap.dim:
        raise ValueError(
            f"{name} must have trailing dimension {lmap.dim}, got shape {v.shape}"
        )
    return v


def _bounds(lmap, x, lead):
    k = lmap.kind
    if k is Kind.SHANNON_LOWER:
        return lmap.bound("phi_lower", x, lead), None
    if k is Kind.SHANNON_UPPER:
        return None, lmap.bound("phi_upper", x, lead)
    if k is Kind.FERMI_DIRAC:
        lo = lmap.bound("phi_lower", x, lead)
        hi = lmap.bound("phi_upper", x, lead)
        if np.any(lo >= hi):
            raise DomainError("Fermi-Dirac entropy requires phi_lower < phi_upper")
        return lo, hi
    if k is Kind.HELLINGER:
        r = lmap.bound("radius", x, lead)
        if np.any(r <= 0):
            raise DomainError("Hellinger entropy requires a positive radius")
        return r, None
    return None, None


def eval_R(lmap: LegendreMap, x, a) -> np.ndarray:
    """Legendre function value; ``+inf`` outside ``dom R``."""
    a = _check(lmap, a)
    lead = a.shape[:-1]
    lo, hi = _bounds(lmap, x, lead)
    k = lmap.kind
    with np.errstate(invalid="ignore", divide="ignore"):
        if k is Kind.SHANNON_LOWER:
            s = a[..., 0] - lo
            val = _xlogx(np.maximum(s, 0.0)) - s
            return np.where(s >= 0, val, np.inf)
        if k is Kind.SHANNON_UPPER:
            s = hi - a[..., 0]
            val = _xlogx(np.maximum(s, 0.0)) - s
            return np.where(s >= 0, val, np.inf)
        if k is Kind.FERMI_DIRAC:
            s, t = a[..., 0] - lo, hi - a[..., 0]
            val = _xlogx(np.maximum(s, 0.0)) + _xlogx(np.maximum(t, 0.0))
            return np.where((s >= 0) & (t >= 0), val, np.inf)
        if k is Kind.HELLINGER:
            gap = lo**2 - np.sum(a * a, axis=-1)
            return np.where(gap >= 0, -np.sqrt(np.maximum(gap, 0.0)), np.inf)
        # simplex
        ok = np.all(a >= 0, axis=-1) & (np.abs(np.sum(a, axis=-1) - 1.0) <= 1e-12)
        val = np.sum(_xlogx(np.maximum(a, 0.0)), axis=-1)
        return np.where(ok, val, np.inf)


def grad_R(lmap: LegendreMap, x, a) -> np.ndarray:
    """Gradient of ``R`` at an interior point of ``dom R``.

    For the simplex entropy the gradient is only defined up to a multiple of
    the all-ones vector; the zero-mean representative is returned.
    """
    a = _check(lmap, a)
    lead = a.shape[:-1]
    lo, hi = _bounds(lmap, x, lead)
    k = lmap.kind
    if k is Kind.SHANNON_LOWER:
        s = a[..., 0] - lo
        if np.any(s <= 0):
            raise DomainError("point is not above the lower bound")
        return np.log(s)[..., None]
    if k is Kind.SHANNON_UPPER:
        s = hi - a[..., 0]
        if np.any(s <= 0):
            raise DomainError("point is not below the upper bound")
        return -np.log(s)[..., None]
    if k is Kind.FERMI_DIRAC:
        s, t = a[..., 0] - lo, hi - a[..., 0]
        if np.any(s <= 0) or np.any(t <= 0):
            raise DomainError("point is not strictly between the bounds")
        return (np.log(s) - np.log(t))[..., None]
    if k is Kind.HELLINGER:
        gap = lo**2 - np.sum(a * a, axis=-1)
        if np.any(gap <= 0):
            raise DomainError("point is not inside the ball")
        return a / np.sqrt(gap)[..., None]
    if np.any(a <= 0) or np.any(np.abs(np.sum(a, axis=-1) - 1.0) > 1e-12):
        raise DomainError("point is not in the relative interior of the simplex")
    g = np.log(a)
    return g - g.mean(axis=-1, keepdims=True)


def grad_R_star(lmap: LegendreMap, x, psi) -> np.ndarray:
    """Map latent values into the interior of the feasible image."""
    psi = _check(lmap, psi, "psi")
    lead = psi.shape[:-1]
    lo, hi = _bounds(lmap, x, lead)
    k = lmap.kind
    # Once the exponential drops below half an ulp of the bound the sum rounds
    # onto the bound itself; the results are kept one ulp inside instead.
    if k is Kind.SHANNON_LOWER:
        out = np.maximum(lo + _exp(psi[..., 0]), np.nextafter(lo, np.inf))
        return out[..., None]
    if k is Kind.SHANNON_UPPER:
        out = np.minimum(hi - _exp(-psi[..., 0]), np.nextafter(hi, -np.inf))
        return out[..., None]
    if k is Kind.FERMI_DIRAC:
        # logistic written so that neither branch overflows
        p = np.clip(psi[..., 0], -EXP_CLAMP, EXP_CLAMP)
        e = np.exp(-np.abs(p))
        sig = np.where(p >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        cosig = np.where(p >= 0, e / (1.0 + e), 1.0 / (1.0 + e))
        out = np.clip(lo * cosig + hi * sig, np.nextafter(lo, np.inf), np.nextafter(hi, -np.inf))
        return out[..., None]
    if k is Kind.HELLINGER:
        out = lo[..., None] * _unit_scaled(psi)
        # rounding can land on the sphere for huge |psi|; pull such points inside
        # (the rescaled norm can round up again, hence the short loop)
        for _ in range(8):
            r = _norm(out)
            over = r >= lo
            if not np.any(over):
                break
            shrink = np.where(over, lo / np.where(over, r, 1.0) * (1.0 - 2.0**-51), 1.0)
            out = out * shrink[..., None]
        return out
    z = psi - psi.max(axis=-1, keepdims=True)
    e = np.exp(np.maximum(z, -EXP_CLAMP))
    return e / e.sum(axis=-1, keepdims=True)


def jac_grad_R_star(lmap: LegendreMap, x, psi) -> np.ndarray:
    """Jacobian of :func:`grad_R_star`, shape ``(..., m, m)``."""
    psi = _check(lmap, psi, "psi")
    lead = psi.shape[:-1]
    lo, hi = _bounds(lmap, x, lead)
    k = lmap.kind
    if k is Kind.SHANNON_LOWER:
        return _exp(psi[..., 0])[..., None, None]
    if k is Kind.SHANNON_UPPER:
        return _exp(-psi[..., 0])[..., None, None]
    if k is Kind.FERMI_DIRAC:
        p = np.clip(psi[..., 0], -EXP_CLAMP, EXP_CLAMP)
        e = np.exp(-np.abs(p))
        dsig = e / (1.0 + e) ** 2
        return ((hi - lo) * dsig)[..., None, None]
    if k is Kind.HELLINGER:
        m = lmap.dim
        v = _unit_scaled(psi)  # psi / s with s = sqrt(1 + |psi|^2)
        n = _norm(psi)
        # 1/s computed without forming |psi|^2 (which overflows for huge psi)
        inv_s = np.where(n > 1e8, 1.0 / np.maximum(n, 1e-300), 1.0 / np.sqrt(1.0 + np.minimum(n, 1e8) ** 2))
        eye = np.broadcast_to(np.eye(m), lead + (m, m))
        outer = v[..., :, None] * v[..., None, :]
        return lo[..., None, None] * inv_s[..., None, None] * (eye - outer)
    p = grad_R_star(lmap, x, psi)
    # diagonal p_i (1 - p_i) with 1 - p_i summed from the other components
    # (positive terms only), so rows sum to zero without cancellation
    zero = np.zeros(p.shape[:-1] + (1,))
    before = np.concatenate([zero, np.cumsum(p[..., :-1], axis=-1)], axis=-1)
    after = np.concatenate([np.cumsum(p[..., :0:-1], axis=-1)[..., ::-1], zero], axis=-1)
    J = -(p[..., :, None] * p[..., None, :])
    idx = np.arange(lmap.dim)
    J[..., idx, idx] = p * (before + after)
    return J


def _kl_term(sa, sb):
    """``sa ln(sa/sb) - sa + sb`` for ``sa >= 0``, ``sb > 0`` without cancellation.

    With ``delta = sa/sb - 1`` this is ``sb g(delta)``, ``g(delta) = (1 + delta)
    log1p(delta) - delta``; near ``delta = 0`` a short series replaces the
    subtraction so the result stays positive whenever ``sa != sb``.
    """
    delta = (sa - sb) / sb
    small = np.abs(delta) < 1e-3
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = _xlogx(1.0 + delta) - delta
    d = np.where(small, delta, 0.0)
    series = d * d * (0.5 - d * (1.0 / 6.0 - d * (1.0 / 12.0 - d / 20.0)))
    return sb * np.where(small, series, direct)


def bregman(lmap: LegendreMap, x, a, b) -> np.ndarray:
    """Bregman divergence ``R(a) - R(b) - grad R(b) . (a - b)``.

    ``b`` must be interior; if ``a`` leaves ``dom R`` the result is ``+inf``.
    Each kind uses an algebraically rearranged closed form free of the
    cancellation in the defining expression, so the value is positive for
    any ``a != b`` that differ by more than rounding.
    """
    a = _check(lmap, a, "a")
    b = _check(lmap, b, "b")
    grad_R(lmap, x, b)  # raises unless b is interior
    ra = eval_R(lmap, x, a)
    lead = a.shape[:-1]
    lo, hi = _bounds(lmap, x, lead)
    k = lmap.kind
    inside = np.isfinite(ra)
    with np.errstate(invalid="ignore", divide="ignore"):
        if k is Kind.SHANNON_LOWER:
            d = _kl_term(np.maximum(a[..., 0] - lo, 0.0), b[..., 0] - lo)
        elif k is Kind.SHANNON_UPPER:
            d = _kl_term(np.maximum(hi - a[..., 0], 0.0), hi - b[..., 0])
        elif k is Kind.FERMI_DIRAC:
            d = _kl_term(np.maximum(a[..., 0] - lo, 0.0), b[..., 0] - lo) + _kl_term(
                np.maximum(hi - a[..., 0], 0.0), hi - b[..., 0]
            )
        elif k is Kind.HELLINGER:
            # D = (ga^2 |a-b|^2 + (a.(b-a))^2) / (gb (r^2 - a.b + ga gb))
            r2 = lo**2
            ga = np.sqrt(np.maximum(r2 - np.sum(a * a, axis=-1), 0.0))
            gb = np.sqrt(r2 - np.sum(b * b, axis=-1))
            dv = b - a
            num = ga**2 * np.sum(dv * dv, axis=-1) + np.sum(a * dv, axis=-1) ** 2
            d = num / (gb * (r2 - np.sum(a * b, axis=-1) + ga * gb))
        else:
            d = np.sum(_kl_term(np.maximum(a, 0.0), b), axis=-1)
    return np.where(inside, np.maximum(d, 0.0), np.inf)


def feasibility_margin(lmap: LegendreMap, x, a) -> np.ndarray:
    """Signed slack of ``a`` with respect to the constraint defining ``C``.

    Positive means strictly feasible. For the simplex the margin is the
    smallest component (the sum constraint holds by construction of the
    softmax).
    """
    a = _check(lmap, a)
    lead = a.shape[:-1]
    lo, hi = _bounds(lmap, x, lead)
    k = lmap.kind
    if k is Kind.SHANNON_LOWER:
        return a[..., 0] - lo
    if k is Kind.SHANNON_UPPER:
        return hi - a[..., 0]
    if k is Kind.FERMI_DIRAC:
        return np.minimum(a[..., 0] - lo, hi - a[..., 0])
    if k is Kind.HELLINGER:
        return lo - _norm(a)
    return a.min(axis=-1)
