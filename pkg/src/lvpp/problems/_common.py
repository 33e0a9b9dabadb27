import numpy as np


def zero_field(pts):
    return np.zeros(np.asarray(pts).shape[0])


def as_field(f, pts):
    """Evaluate a constant or callable coefficient at ``pts``."""
    pts = np.asarray(pts, dtype=float)
    if callable(f):
        return np.broadcast_to(np.asarray(f(pts), dtype=float), pts.shape[:1]).copy()
    return np.full(pts.shape[0], float(f))
