"""Closed-form reference solutions used for verification."""

from __future__ import annotations

import numpy as np


def distance_to_boundary(points, box=(0.0, 1.0, 0.0, 1.0)):
    """Euclidean distance from ``points`` to the boundary of an interval or rectangle.

    Raises
    ------
    ValueError
        If a point lies outside the closed box.
    """
    pts = np.asarray(points, dtype=float)
    dim = len(box) // 2
    if pts.ndim == 1:
        pts = pts[:, None] if dim == 1 else pts[None, :]
    if pts.shape[-1] != dim:
        raise ValueError(f"points must have {dim} coordinates")
    lo = np.asarray(box[0::2], dtype=float)
    hi = np.asarray(box[1::2], dtype=float)
    tol = 1e-12 * np.max(hi - lo)
    if np.any(pts < lo - tol) or np.any(pts > hi + tol):
        raise ValueError("point outside the domain")
    return np.maximum(np.min(np.minimum(pts - lo, hi - pts), axis=-1), 0.0)
