"""Finite-difference grids and P1 finite elements on structured simplex meshes.

Sparse matrices are :class:`scipy.sparse.csr_matrix` throughout (sorted,
duplicate-free indices).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class AssemblyError(ValueError):
    pass


def _csr(A):
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.sort_indices()
    return A


# ---------------------------------------------------------------------------
# finite differences


@dataclass(frozen=True)
class Grid2D:
    """Uniform grid of ``nx * ny`` interior nodes in a box.

    Interior nodes are numbered lexicographically with ``x`` fastest.
    """

    nx: int
    ny: int
    box: tuple = (0.0, 1.0, 0.0, 1.0)

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid needs at least one interior point per axis")
        x0, x1, y0, y1 = self.box
        if not (x1 > x0 and y1 > y0):
            raise ValueError("degenerate box")

    @property
    def hx(self):
        return (self.box[1] - self.box[0]) / (self.nx + 1)

    @property
    def hy(self):
        return (self.box[3] - self.box[2]) / (self.ny + 1)

    @property
    def size(self):
        return self.nx * self.ny

    def axes(self):
        x0, _, y0, _ = self.box
        xs = x0 + self.hx * np.arange(1, self.nx + 1)
        ys = y0 + self.hy * np.arange(1, self.ny + 1)
        return xs, ys

    def points(self):
        xs, ys = self.axes()
        X, Y = np.meshgrid(xs, ys)
        return np.column_stack([X.ravel(), Y.ravel()])

    def boundary_lift(self, g):
        """Right-hand-side contribution of Dirichlet data ``g`` to the 5-point stencil."""
        x0, x1, y0, y1 = self.box
        xs, ys = self.axes()
        b = np.zeros((self.ny, self.nx))
        ones_x, ones_y = np.ones_like(xs), np.ones_like(ys)
        b[:, 0] += g(np.column_stack([x0 * ones_y, ys])) / self.hx**2
        b[:, -1] += g(np.column_stack([x1 * ones_y, ys])) / self.hx**2
        b[0, :] += g(np.column_stack([xs, y0 * ones_x])) / self.hy**2
        b[-1, :] += g(np.column_stack([xs, y1 * ones_x])) / self.hy**2
        return b.ravel()


def build_grid2d(n, box=(0.0, 1.0, 0.0, 1.0), ny=None) -> Grid2D:
    if n < 1 or (ny is not None and ny < 1):
        raise ValueError("n must be at least 1")
    return Grid2D(int(n), int(ny if ny is not None else n), tuple(box))


def _second_difference(n, h):
    e = np.ones(n)
    return sp.diags([-e[1:], 2 * e, -e[1:]], [-1, 0, 1]) / h**2


def fd_laplacian(grid: Grid2D) -> sp.csr_matrix:
    """Five-point stencil for ``-Laplace`` with the Dirichlet boundary eliminated."""
    Dx = _second_difference(grid.nx, grid.hx)
    Dy = _second_difference(grid.ny, grid.hy)
    A = sp.kron(sp.identity(grid.ny), Dx) + sp.kron(Dy, sp.identity(grid.nx))
    return _csr(A)


# ---------------------------------------------------------------------------
# simplex meshes


@dataclass
class Mesh:
    """Conforming simplex mesh (intervals in 1D, triangles in 2D).

    Attributes
    ----------
    points : (N, d) array
    cells : (M, d+1) int array
        Vertex indices; triangles are counterclockwise.
    boundary : (N,) bool array
        Vertices on the boundary of the bounding box.
    """

    points: np.ndarray
    cells: np.ndarray
    boundary: np.ndarray
    box: tuple = ()
    _geom: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def num_points(self):
        return self.points.shape[0]

    @property
    def num_cells(self):
        return self.cells.shape[0]

    @property
    def interior(self):
        return np.flatnonzero(~self.boundary)

    @property
    def volumes(self):
        return self.geometry()[0]

    @property
    def centroids(self):
        return self.points[self.cells].mean(axis=1)

    def geometry(self):
        """Cell measures and barycentric-coordinate gradients ``(M, d+1, d)``."""
        if "vol" not in self._geom:
            self._geom["vol"], self._geom["grad"] = _barycentric(self.points, self.cells)
        return self._geom["vol"], self._geom["grad"]


def _barycentric(points, cells):
    d = points.shape[1]
    P = points[cells]  # (M, d+1, d)
    E = P[:, 1:, :] - P[:, :1, :]  # (M, d, d) edge vectors as rows
    det = np.linalg.det(E) if d > 1 else E[:, 0, 0]
    bad = np.flatnonzero(det <= 1e-14 * np.max(np.abs(E)) ** d)
    if bad.size:
        raise AssemblyError(f"degenerate or inverted cell {int(bad[0])}")
    vol = det / (1.0 if d == 1 else 2.0)
    # rows of inv(E)^T are gradients of barycentric coords 1..d
    Einv = np.linalg.inv(E)  # (M, d, d)
    g = np.transpose(Einv, (0, 2, 1))
    grads = np.empty((cells.shape[0], d + 1, d))
    grads[:, 1:, :] = g
    grads[:, 0, :] = -g.sum(axis=1)
    return vol, grads


def build_tri_mesh(n, box=(0.0, 1.0, 0.0, 1.0), ny=None) -> Mesh:
    """Uniform ``n x n`` grid of squares, each split along its SW-NE diagonal."""
    if n < 1 or (ny is not None and ny < 1):
        raise ValueError("n must be at least 1")
    nx, ny = int(n), int(ny if ny is not None else n)
    x0, x1, y0, y1 = box
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    sw, se = idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel()
    nw, ne = idx[1:, :-1].ravel(), idx[1:, 1:].ravel()
    lower = np.column_stack([sw, se, ne])
    upper = np.column_stack([sw, ne, nw])
    cells = np.empty((2 * nx * ny, 3), dtype=np.int64)
    cells[0::2], cells[1::2] = lower, upper
    i, j = np.divmod(np.arange(pts.shape[0]), nx + 1)
    bnd = (i == 0) | (i == ny) | (j == 0) | (j == nx)
    return Mesh(pts, cells, bnd, tuple(box))


def build_interval_mesh(n, endpoints=(0.0, 1.0)) -> Mesh:
    if n < 1:
        raise ValueError("n must be at least 1")
    a, b = endpoints
    pts = np.linspace(a, b, int(n) + 1)[:, None]
    cells = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    bnd = np.zeros(n + 1, dtype=bool)
    bnd[[0, -1]] = True
    return Mesh(pts, cells, bnd, (a, b))


# ---------------------------------------------------------------------------
# P1 assembly


def _scatter(mesh, local):
    """Assemble element matrices ``local`` of shape (M, k, k)."""
    c = mesh.cells
    k = c.shape[1]
    rows = np.repeat(c, k, axis=1).ravel()
    cols = np.tile(c, (1, k)).ravel()
    N = mesh.num_points
    return _csr(sp.coo_matrix((local.ravel(), (rows, cols)), shape=(N, N)))


def assemble_p1_stiffness(mesh: Mesh) -> sp.csr_matrix:
    vol, grads = mesh.geometry()
    local = vol[:, None, None] * np.einsum("mid,mjd->mij", grads, grads)
    return _scatter(mesh, local)


def assemble_p1_mass(mesh: Mesh, lumped: bool = False) -> sp.csr_matrix:
    vol, _ = mesh.geometry()
    k = mesh.cells.shape[1]
    if lumped:
        diag = np.zeros(mesh.num_points)
        np.add.at(diag, mesh.cells.ravel(), np.repeat(vol / k, k))
        return _csr(sp.diags(diag))
    # exact P1 mass: vol / ((k)(k+1)) * (1 + delta_ij)
    ref = (np.ones((k, k)) + np.eye(k)) / (k * (k + 1))
    return _scatter(mesh, vol[:, None, None] * ref)


def lumped_mass_vector(mesh: Mesh) -> np.ndarray:
    return assemble_p1_mass(mesh, lumped=True).diagonal()


def p1_cell_gradient_operator(mesh: Mesh):
    """Per-cell constant gradient of a nodal P1 field, one matrix per component."""
    _, grads = mesh.geometry()
    M, k = mesh.cells.shape
    rows = np.repeat(np.arange(M), k)
    cols = mesh.cells.ravel()
    ops = []
    for comp in range(mesh.dim):
        G = sp.coo_matrix(
            (grads[:, :, comp].ravel(), (rows, cols)), shape=(M, mesh.num_points)
        )
        ops.append(_csr(G))
    return tuple(ops)


def assemble_load(mesh: Mesh, f) -> np.ndarray:
    """Vertex-quadrature load vector: ``f(x_i)`` times the lumped mass."""
    fv = f(mesh.points) if callable(f) else np.full(mesh.num_points, float(f))
    return lumped_mass_vector(mesh) * np.asarray(fv, dtype=float)
