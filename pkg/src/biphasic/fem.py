"""Lagrange P1/P2 spaces, nodal interpolation, and quadrature norms.

Nodes are numbered vertex-major: mesh vertices first, then (P2) one node
per mesh edge.  A vector space interleaves components, so the global dof
of free node ``i`` and component ``c`` is ``i * value_dim + c``.
Constrained spaces drop every node on the boundary.
"""
from __future__ import annotations

import numpy as np

from .exceptions import DimensionMismatch, UnsupportedElement
from .mesh import Mesh, local_edges
from .quadrature import simplex_rule

__all__ = [
    "FunctionSpace",
    "FieldFunction",
    "build_space",
    "interpolate",
    "l2_norm",
    "h1_norm",
    "h1_seminorm",
    "div_l2",
    "symmetric_gradient_at",
    "basis",
    "DEFAULT_DEGREE",
]

DEFAULT_DEGREE = 4
_DEGREE = {"P1": 1, "P2": 2}


def basis(family, dim, bary):
    """Reference basis values and their derivatives w.r.t. barycentrics.

    Returns ``phi`` with shape (nq, nloc) and ``dphi`` with shape
    (nq, nloc, dim+1).
    """
    L = np.atleast_2d(bary)
    nq, nb = L.shape
    if family == "P1":
        return L.copy(), np.broadcast_to(np.eye(nb), (nq, nb, nb)).copy()
    if family != "P2":
        raise UnsupportedElement(f"unknown element family {family!r}")
    pairs = local_edges(dim)
    nloc = nb + len(pairs)
    phi = np.empty((nq, nloc))
    dphi = np.zeros((nq, nloc, nb))
    for i in range(nb):
        phi[:, i] = L[:, i] * (2.0 * L[:, i] - 1.0)
        dphi[:, i, i] = 4.0 * L[:, i] - 1.0
    for e, (i, j) in enumerate(pairs):
        phi[:, nb + e] = 4.0 * L[:, i] * L[:, j]
        dphi[:, nb + e, i] = 4.0 * L[:, j]
        dphi[:, nb + e, j] = 4.0 * L[:, i]
    return phi, dphi


class FunctionSpace:
    """Scalar or vector Lagrange space on a mesh."""

    def __init__(self, mesh: Mesh, family="P1", value_dim=1, constrained=False):
        if family not in _DEGREE:
            raise UnsupportedElement(f"unknown element family {family!r}")
        if value_dim not in (1, mesh.dim):
            raise UnsupportedElement(f"value_dim must be 1 or {mesh.dim}")
        self.mesh = mesh
        self.family = family
        self.degree = _DEGREE[family]
        self.value_dim = value_dim
        self.constrained = bool(constrained)

        nv = mesh.n_vertices
        if family == "P1":
            self.node_coords = mesh.vertices
            self.cell_nodes = mesh.cells
            boundary = mesh.boundary_vertices
        else:
            e = mesh.edges
            mid = 0.5 * (mesh.vertices[e[:, 0]] + mesh.vertices[e[:, 1]])
            self.node_coords = np.vstack([mesh.vertices, mid])
            self.cell_nodes = np.hstack([mesh.cells, nv + mesh.cell_edges])
            boundary = np.concatenate([mesh.boundary_vertices, nv + mesh.boundary_edges])
        self.n_nodes = len(self.node_coords)
        self.boundary_nodes = np.sort(boundary)

        free = np.ones(self.n_nodes, dtype=bool)
        if self.constrained:
            free[self.boundary_nodes] = False
        self.free_nodes = np.nonzero(free)[0]
        self.node_to_free = np.full(self.n_nodes, -1, dtype=np.int64)
        self.node_to_free[self.free_nodes] = np.arange(len(self.free_nodes))

        vd = value_dim
        fi = self.node_to_free[self.cell_nodes]                    # (M, nloc)
        dm = fi[:, :, None] * vd + np.arange(vd)[None, None, :]
        dm[fi < 0] = -1
        self.dof_map = dm.reshape(mesh.n_cells, -1)

    @property
    def n_dofs(self):
        return len(self.free_nodes) * self.value_dim

    @property
    def n_local(self):
        return self.cell_nodes.shape[1]

    def __repr__(self):
        kind = "vector" if self.value_dim > 1 else "scalar"
        tag = ", constrained" if self.constrained else ""
        return f"FunctionSpace({self.family} {kind}{tag}, dofs={self.n_dofs})"

    def tabulate(self, bary):
        """Basis values (nq, nloc) and physical gradients (M, nq, nloc, d)
        at the given barycentric points."""
        phi, dphi = basis(self.family, self.mesh.dim, bary)
        grad = np.einsum("qak,mkx->mqax", dphi, self.mesh.barycentric_gradients)
        return phi, grad

    def zero(self) -> "FieldFunction":
        return FieldFunction(self, np.zeros(self.n_dofs))


class FieldFunction:
    """Coefficient vector on a :class:`FunctionSpace`."""

    def __init__(self, space: FunctionSpace, coefficients):
        coefficients = np.asarray(coefficients, dtype=float)
        if coefficients.shape != (space.n_dofs,):
            raise DimensionMismatch(
                f"expected {space.n_dofs} coefficients, got {coefficients.shape}"
            )
        self.space = space
        self.coefficients = coefficients

    def __repr__(self):
        return f"FieldFunction({self.space!r})"

    def __add__(self, other):
        return FieldFunction(self.space, self.coefficients + other.coefficients)

    def __sub__(self, other):
        return FieldFunction(self.space, self.coefficients - other.coefficients)

    def __mul__(self, c):
        return FieldFunction(self.space, c * self.coefficients)

    __rmul__ = __mul__

    def nodal_values(self):
        """Values at every node, (n_nodes, value_dim); constrained nodes are 0."""
        sp = self.space
        out = np.zeros((sp.n_nodes, sp.value_dim))
        out[sp.free_nodes] = self.coefficients.reshape(-1, sp.value_dim)
        return out

    def cell_coefficients(self):
        """(M, nloc, value_dim)."""
        return self.nodal_values()[self.space.cell_nodes]

    def at_quadrature(self, bary):
        """Values (M, nq, vd) and gradients (M, nq, vd, d) at barycentric points."""
        phi, grad = self.space.tabulate(bary)
        c = self.cell_coefficients()
        val = np.einsum("qa,mav->mqv", phi, c)
        g = np.einsum("mqax,mav->mqvx", grad, c)
        return val, g

    def __call__(self, points):
        """Point evaluation; NaN outside the mesh."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        mesh = self.space.mesh
        cells = mesh.locate(points)
        out = np.full((len(points), self.space.value_dim), np.nan)
        c = self.cell_coefficients()
        for k, (cell, x) in enumerate(zip(cells, points)):
            if cell < 0:
                continue
            phi, _ = basis(self.space.family, mesh.dim, mesh.barycentric(cell, x))
            out[k] = phi[0] @ c[cell]
        return out


def build_space(mesh, family="P1", value_dim=1, constrained=False) -> FunctionSpace:
    return FunctionSpace(mesh, family, value_dim, constrained)


def interpolate(space: FunctionSpace, f) -> FieldFunction:
    """Nodal interpolant of ``f(x) -> (n,) or (n, value_dim)``.

    Values at constrained nodes are discarded.
    """
    vals = np.asarray(f(space.node_coords), dtype=float)
    vals = vals.reshape(space.n_nodes, space.value_dim)
    return FieldFunction(space, vals[space.free_nodes].ravel())


def _integrate(mesh, integrand_cells, weights):
    """Sum over cells of ``|T| * sum_q w_q * integrand[m, q]``."""
    return float(np.einsum("mq,q,m->", integrand_cells, weights, np.abs(mesh.volumes)))


def l2_norm(u: FieldFunction, degree=None) -> float:
    mesh = u.space.mesh
    bary, w = simplex_rule(mesh.dim, degree or 2 * u.space.degree)
    val, _ = u.at_quadrature(bary)
    return float(np.sqrt(_integrate(mesh, (val**2).sum(axis=2), w)))


def h1_seminorm(u: FieldFunction, degree=None) -> float:
    """``|| grad u ||_0``."""
    mesh = u.space.mesh
    bary, w = simplex_rule(mesh.dim, degree or max(2 * (u.space.degree - 1), 1))
    _, g = u.at_quadrature(bary)
    return float(np.sqrt(_integrate(mesh, (g**2).sum(axis=(2, 3)), w)))


def h1_norm(u: FieldFunction, degree=None) -> float:
    return float(np.hypot(l2_norm(u, degree), h1_seminorm(u, degree)))


def div_l2(u: FieldFunction, degree=None) -> float:
    sp = u.space
    if sp.value_dim != sp.mesh.dim:
        raise DimensionMismatch("divergence needs a vector field")
    bary, w = simplex_rule(sp.mesh.dim, degree or max(2 * (sp.degree - 1), 1))
    _, g = u.at_quadrature(bary)
    div = np.trace(g, axis1=2, axis2=3)
    return float(np.sqrt(_integrate(sp.mesh, div**2, w)))


def symmetric_gradient_at(u: FieldFunction, cell: int, x) -> np.ndarray:
    """``D(u) = (grad u + grad u^T) / 2`` at physical point ``x`` of ``cell``."""
    sp = u.space
    if sp.value_dim != sp.mesh.dim:
        raise DimensionMismatch("symmetric gradient needs a vector field")
    bary = sp.mesh.barycentric(cell, x)
    _, dphi = basis(sp.family, sp.mesh.dim, bary)
    grad_phi = dphi[0] @ sp.mesh.barycentric_gradients[cell]      # (nloc, d)
    G = u.cell_coefficients()[cell].T @ grad_phi                  # (vd, d)
    return 0.5 * (G + G.T)
