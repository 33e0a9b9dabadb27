"""Plain-text writers for fields and LVPP traces.

All floating-point values are written with 17 significant digits so that
they round-trip exactly, and nothing time- or platform-dependent is
emitted, so identical inputs give identical bytes.
"""

from __future__ import annotations

import numpy as np

from .discretize import Grid2D, Mesh

VTK_HEADER = "# vtk DataFile Version 3.0"
_VTK_TRIANGLE = 5
_VTK_LINE = 3


def _fmt(v) -> str:
    return f"{float(v):.17g}"


def _points_of(layout, size):
    """Node coordinates (padded to 2D) for a grid, a mesh or an explicit array."""
    if isinstance(layout, Grid2D):
        pts = layout.points()
    elif isinstance(layout, Mesh):
        pts = layout.points
    else:
        pts = np.asarray(layout, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
    if pts.shape[0] != size:
        raise ValueError(f"field has {size} values but the layout has {pts.shape[0]} nodes")
    if pts.shape[1] == 1:
        pts = np.column_stack([pts[:, 0], np.zeros(size)])
    return pts


def write_field_csv(field, layout, path):
    """Write a nodal field as ``x,y,value`` or a cell field as ``cell,value``.

    Parameters
    ----------
    field : (N,) array
    layout : Grid2D, Mesh, (N, d) array of points, or ``"cells"``
        ``"cells"`` writes one row per entry indexed by position. A mesh
        whose cell count (but not node count) matches ``field`` is treated
        the same way.
    path : str or path-like
    """
    values = np.asarray(field, dtype=float).ravel()
    by_cell = isinstance(layout, str) and layout == "cells"
    if isinstance(layout, Mesh) and values.size == layout.num_cells and values.size != layout.num_points:
        by_cell = True
    with open(path, "w", newline="") as fh:
        if by_cell:
            fh.write("cell,value\n")
            for i, v in enumerate(values):
                fh.write(f"{i},{_fmt(v)}\n")
            return
        if isinstance(layout, str):
            raise ValueError(f"unknown layout {layout!r}")
        pts = _points_of(layout, values.size)
        fh.write("x,y,value\n")
        for (x, y), v in zip(pts[:, :2], values):
            fh.write(f"{_fmt(x)},{_fmt(y)},{_fmt(v)}\n")


def _scalars(fh, name, values):
    ncomp = 1 if values.ndim == 1 else values.shape[1]
    if not 1 <= ncomp <= 4:
        raise ValueError("VTK scalars take 1 to 4 components")
    fh.write(f"SCALARS {name} double {ncomp}\nLOOKUP_TABLE default\n")
    rows = values.reshape(values.shape[0], -1)
    for row in rows:
        fh.write(" ".join(_fmt(v) for v in row) + "\n")


def write_vtk_legacy(field, layout, path, name="u", title="lvpp field"):
    """Write a legacy ASCII VTK file.

    A :class:`Grid2D` gives ``STRUCTURED_POINTS`` over its interior nodes; a
    :class:`Mesh` gives an ``UNSTRUCTURED_GRID`` of triangles (or segments in
    1D) with ``POINT_DATA`` or ``CELL_DATA`` depending on the field length.
    ``field`` may have up to four components per entry (shape ``(N, k)``).
    """
    values = np.asarray(field, dtype=float)
    if values.ndim > 2:
        raise ValueError("field must be one- or two-dimensional")
    with open(path, "w", newline="") as fh:
        fh.write(f"{VTK_HEADER}\n{title}\nASCII\n")
        if isinstance(layout, Grid2D):
            if values.shape[0] != layout.size:
                raise ValueError(f"field has {values.shape[0]} values, grid has {layout.size}")
            xs, ys = layout.axes()
            fh.write("DATASET STRUCTURED_POINTS\n")
            fh.write(f"DIMENSIONS {layout.nx} {layout.ny} 1\n")
            fh.write(f"ORIGIN {_fmt(xs[0])} {_fmt(ys[0])} 0\n")
            fh.write(f"SPACING {_fmt(layout.hx)} {_fmt(layout.hy)} 1\n")
            fh.write(f"POINT_DATA {layout.size}\n")
            _scalars(fh, name, values)
            return
        if not isinstance(layout, Mesh):
            raise TypeError("layout must be a Grid2D or a Mesh")
        mesh = layout
        pts = mesh.points
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.num_points} double\n")
        for p in pts:
            xyz = list(p) + [0.0] * (3 - p.size)
            fh.write(" ".join(_fmt(c) for c in xyz) + "\n")
        nv = mesh.cells.shape[1]
        fh.write(f"CELLS {mesh.num_cells} {mesh.num_cells * (nv + 1)}\n")
        for c in mesh.cells:
            fh.write(f"{nv} " + " ".join(str(int(i)) for i in c) + "\n")
        fh.write(f"CELL_TYPES {mesh.num_cells}\n")
        ctype = _VTK_TRIANGLE if nv == 3 else _VTK_LINE
        fh.write(f"{ctype}\n" * mesh.num_cells)
        if values.shape[0] == mesh.num_points:
            fh.write(f"POINT_DATA {mesh.num_points}\n")
        elif values.shape[0] == mesh.num_cells:
            fh.write(f"CELL_DATA {mesh.num_cells}\n")
        else:
            raise ValueError(
                f"field has {values.shape[0]} values; mesh has {mesh.num_points} nodes "
                f"and {mesh.num_cells} cells"
            )
        _scalars(fh, name, values)


def write_trace_csv(trace, path):
    """Write an :class:`~lvpp.loop.LvppTrace` with one row per outer iteration."""
    trace.to_csv(path)
