"""Uniform Cartesian meshes in 1D and 2D with reference maps and boundary faces."""

import numpy as np


class BoundaryFace:
    """One face of the domain boundary.

    Attributes:
        side: 'west' or 'east' in 1D; also 'south'/'north' in 2D.
        cell: owning cell index (int in 1D, (i, j) pair in 2D).
        points: physical quadrature points on the face; shape (1,) in 1D
            (the endpoint), (p, 2) in 2D (the p Gauss nodes along the face).
    """

    def __init__(self, side, cell, points):
        self.side = side
        self.cell = cell
        self.points = np.asarray(points, dtype=float)

    def __repr__(self):
        return "BoundaryFace(%r, %r)" % (self.side, self.cell)


class Mesh1D:
    """N equal cells tiling [a, b]."""

    dim = 1

    def __init__(self, a, b, n):
        if n < 1:
            raise ValueError("Mesh1D: need at least one cell, got n=%r" % (n,))
        if not b > a:
            raise ValueError("Mesh1D: bounds must be ordered, got [%r, %r]" % (a, b))
        self.a = float(a)
        self.b = float(b)
        self.n = int(n)
        self.dx = (self.b - self.a) / self.n
        self.min_width = self.dx

    def breaks(self):
        return self.a + self.dx * np.arange(self.n + 1)

    def centers(self):
        return self.a + self.dx * (np.arange(self.n) + 0.5)

    def reference_map(self, i):
        """Affine map of cell i: T(xi) on [-1,1] and its inverse."""
        if not 0 <= i < self.n:
            raise ValueError("reference_map: cell %r out of range" % (i,))
        c = self.a + self.dx * (i + 0.5)
        h = 0.5 * self.dx
        return (lambda xi: c + h * xi), (lambda x: (x - c) / h)

    def node_coords(self, basis):
        """Physical quadrature-node coordinates, shape (n, p)."""
        return self.centers()[:, None] + 0.5 * self.dx * basis.nodes[None, :]

    def boundary_faces(self, basis=None):
        return [BoundaryFace('west', 0, [self.a]),
                BoundaryFace('east', self.n - 1, [self.b])]


class Mesh2D:
    """N x M equal rectangles tiling [a1, b1] x [a2, b2]."""

    dim = 2

    def __init__(self, a1, b1, a2, b2, n, m):
        if n < 1 or m < 1:
            raise ValueError("Mesh2D: need at least one cell per direction")
        if not (b1 > a1 and b2 > a2):
            raise ValueError("Mesh2D: bounds must be ordered")
        self.x = Mesh1D(a1, b1, n)
        self.y = Mesh1D(a2, b2, m)
        self.n = self.x.n
        self.m = self.y.n
        self.dx = self.x.dx
        self.dy = self.y.dx
        self.min_width = min(self.dx, self.dy)

    def reference_map(self, cell):
        """Per-direction affine maps of cell (i, j)."""
        i, j = cell
        tx, txinv = self.x.reference_map(i)
        ty, tyinv = self.y.reference_map(j)
        return (lambda xi, eta: (tx(xi), ty(eta))), (lambda x, y: (txinv(x), tyinv(y)))

    def node_coords(self, basis):
        """Physical node coordinates (X, Y), each of shape (n, m, p, p)."""
        xn = self.x.node_coords(basis)  # (n, p)
        yn = self.y.node_coords(basis)  # (m, p)
        shape = (self.n, self.m, basis.p, basis.p)
        x = np.broadcast_to(xn[:, None, :, None], shape).copy()
        y = np.broadcast_to(yn[None, :, None, :], shape).copy()
        return x, y

    def boundary_faces(self, basis):
        """2(N + M) boundary faces, each carrying its p face nodes."""
        xn = self.x.node_coords(basis)
        yn = self.y.node_coords(basis)
        faces = []
        for j in range(self.m):
            pts = np.column_stack([np.full(basis.p, self.x.a), yn[j]])
            faces.append(BoundaryFace('west', (0, j), pts))
        for j in range(self.m):
            pts = np.column_stack([np.full(basis.p, self.x.b), yn[j]])
            faces.append(BoundaryFace('east', (self.n - 1, j), pts))
        for i in range(self.n):
            pts = np.column_stack([xn[i], np.full(basis.p, self.y.a)])
            faces.append(BoundaryFace('south', (i, 0), pts))
        for i in range(self.n):
            pts = np.column_stack([xn[i], np.full(basis.p, self.y.b)])
            faces.append(BoundaryFace('north', (i, self.m - 1), pts))
        return faces


def build_mesh(bounds, counts):
    """Build a uniform Cartesian mesh.

    Args:
        bounds: (a, b) for 1D or ((a1, b1), (a2, b2)) for 2D.
        counts: N for 1D or (N, M) for 2D.

    Returns:
        Mesh1D or Mesh2D.
    """
    if np.ndim(bounds[0]) == 0:
        return Mesh1D(bounds[0], bounds[1], counts)
    (a1, b1), (a2, b2) = bounds
    n, m = counts
    return Mesh2D(a1, b1, a2, b2, n, m)


def reference_map(mesh, cell):
    """Affine map T (reference -> physical) of a cell and its inverse."""
    return mesh.reference_map(cell)


def boundary_faces(mesh, basis=None):
    """All boundary faces of the mesh with their quadrature points."""
    return mesh.boundary_faces(basis)
