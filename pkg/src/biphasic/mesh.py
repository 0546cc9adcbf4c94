"""Simplicial meshes (triangles in 2D, tetrahedra in 3D) with tagged
boundary facets, generators for the unit square and the unit disk/ball,
and the plain-text mesh format.

File format::

    dim n_vertices n_cells n_facets
    x y [z]                 (n_vertices lines)
    i0 i1 i2 [i3]           (n_cells lines, 0-based)
    j0 j1 [j2] tag          (n_facets lines)
"""
from __future__ import annotations

import itertools
import math
from functools import cached_property
from pathlib import Path

import numpy as np

from .exceptions import ParseError, ValidationError

__all__ = [
    "Mesh",
    "generate_unit_square",
    "generate_unit_ball",
    "load_mesh",
    "save_mesh",
    "validate",
    "local_edges",
]


def local_edges(dim):
    """Local vertex pairs of a simplex, lexicographic."""
    return list(itertools.combinations(range(dim + 1), 2))


def _signed_volumes(vertices, cells):
    x = vertices[cells]                      # (M, d+1, d)
    J = x[:, 1:, :] - x[:, :1, :]            # rows are edge vectors
    d = vertices.shape[1]
    return np.linalg.det(J) / math.factorial(d)


def _orient(vertices, cells):
    cells = np.array(cells, dtype=np.int64, copy=True)
    neg = _signed_volumes(vertices, cells) < 0
    cells[neg, 0], cells[neg, 1] = cells[neg, 1].copy(), cells[neg, 0].copy()
    return cells


def _facets_of(cells):
    """All facets of all cells: (M*(d+1), d) sorted vertex tuples plus the
    owning cell and the local index of the opposite vertex."""
    M, nv = cells.shape
    facets, owner, opposite = [], [], []
    for k in range(nv):
        keep = [j for j in range(nv) if j != k]
        facets.append(np.sort(cells[:, keep], axis=1))
        owner.append(np.arange(M))
        opposite.append(np.full(M, k))
    return np.vstack(facets), np.concatenate(owner), np.concatenate(opposite)


def _boundary_facets(cells):
    facets, _, _ = _facets_of(cells)
    uniq, counts = np.unique(facets, axis=0, return_counts=True)
    return uniq[counts == 1]


class Mesh:
    """Immutable simplicial mesh.

    Parameters
    ----------
    vertices : (N, d) array_like
    cells : (M, d+1) array_like of int
        Re-oriented so every cell has positive signed volume.
    boundary_facets : (F, d) array_like of int, optional
        Computed from ``cells`` when omitted.
    facet_tags : (F,) array_like of int, optional
        Defaults to 1 everywhere.
    """

    def __init__(self, vertices, cells, boundary_facets=None, facet_tags=None):
        vertices = np.array(vertices, dtype=float)
        if vertices.ndim != 2 or vertices.shape[1] not in (2, 3):
            raise ValueError("vertices must have shape (N, 2) or (N, 3)")
        self.dim = vertices.shape[1]
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, self.dim + 1)
        cells = _orient(vertices, cells)
        if boundary_facets is None:
            boundary_facets = _boundary_facets(cells)
        boundary_facets = np.asarray(boundary_facets, dtype=np.int64).reshape(-1, self.dim)
        if facet_tags is None:
            facet_tags = np.ones(len(boundary_facets), dtype=np.int64)
        facet_tags = np.asarray(facet_tags, dtype=np.int64).reshape(-1)
        for arr in (vertices, cells, boundary_facets, facet_tags):
            arr.setflags(write=False)
        self.vertices = vertices
        self.cells = cells
        self.boundary_facets = boundary_facets
        self.facet_tags = facet_tags

    def __repr__(self):
        return (
            f"Mesh(dim={self.dim}, vertices={self.n_vertices}, cells={self.n_cells}, "
            f"boundary_facets={len(self.boundary_facets)})"
        )

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    @cached_property
    def volumes(self):
        return _signed_volumes(self.vertices, self.cells)

    @property
    def volume(self):
        return float(self.volumes.sum())

    @cached_property
    def barycentric_gradients(self):
        """Constant gradients of the barycentric coordinates, (M, d+1, d)."""
        x = self.vertices[self.cells]
        J = np.swapaxes(x[:, 1:, :] - x[:, :1, :], 1, 2)   # columns are edges
        inv = np.linalg.inv(J)                             # rows: grad lambda_1..d
        g0 = -inv.sum(axis=1, keepdims=True)
        return np.concatenate([g0, inv], axis=1)

    def barycentric(self, cell, x):
        """Barycentric coordinates of physical points ``x`` in ``cell``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        x0 = self.vertices[self.cells[cell, 0]]
        lam = (x - x0) @ self.barycentric_gradients[cell][1:].T
        return np.column_stack([1.0 - lam.sum(axis=1), lam])

    def locate(self, points, tol=1e-10):
        """Index of a cell containing each point, -1 when outside."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        G = self.barycentric_gradients[:, 1:, :]            # (M, d, d)
        x0 = self.vertices[self.cells[:, 0]]
        out = np.full(len(points), -1, dtype=np.int64)
        for start in range(0, len(points), 256):
            p = points[start:start + 256]
            lam = np.einsum("mij,pmj->pmi", G, p[:, None, :] - x0[None])
            lam = np.concatenate([1.0 - lam.sum(axis=2, keepdims=True), lam], axis=2)
            inside = (lam >= -tol).all(axis=2)
            hit = inside.any(axis=1)
            out[start:start + 256][hit] = inside[hit].argmax(axis=1)
        return out

    @cached_property
    def h(self):
        """Largest edge length."""
        e = self.edges
        return float(np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1).max())

    @cached_property
    def _edge_data(self):
        pairs = local_edges(self.dim)
        all_edges = np.sort(
            np.stack([self.cells[:, [i, j]] for i, j in pairs], axis=1), axis=2
        )  # (M, n_loc, 2)
        flat = all_edges.reshape(-1, 2)
        edges, inverse = np.unique(flat, axis=0, return_inverse=True)
        return edges, inverse.reshape(self.n_cells, len(pairs))

    @property
    def edges(self):
        """Unique edges as sorted vertex pairs, (E, 2)."""
        return self._edge_data[0]

    @property
    def cell_edges(self):
        """Global edge index of each local edge, (M, n_local_edges)."""
        return self._edge_data[1]

    @cached_property
    def facet_owner(self):
        """For each boundary facet: (owning cell, local index of the vertex
        opposite the facet)."""
        facets, owner, opposite = _facets_of(self.cells)
        lookup = {tuple(f): (c, o) for f, c, o in zip(facets.tolist(), owner, opposite)}
        out = np.empty((len(self.boundary_facets), 2), dtype=np.int64)
        for i, f in enumerate(np.sort(self.boundary_facets, axis=1).tolist()):
            out[i] = lookup[tuple(f)]
        return out

    @cached_property
    def boundary_vertices(self):
        return np.unique(self.boundary_facets)

    @cached_property
    def boundary_edges(self):
        """Indices into :attr:`edges` of edges lying on a boundary facet."""
        if self.dim == 2:
            fe = np.sort(self.boundary_facets, axis=1)
        else:
            f = self.boundary_facets
            fe = np.sort(np.vstack([f[:, [0, 1]], f[:, [0, 2]], f[:, [1, 2]]]), axis=1)
        fe = np.unique(fe, axis=0)
        edges = self.edges
        key = edges[:, 0] * self.n_vertices + edges[:, 1]
        fkey = fe[:, 0] * self.n_vertices + fe[:, 1]
        return np.nonzero(np.isin(key, fkey))[0]

    def facet_measures_and_normals(self):
        """Measures and outward unit normals of the boundary facets."""
        v = self.vertices
        f = self.boundary_facets
        if self.dim == 2:
            t = v[f[:, 1]] - v[f[:, 0]]
            meas = np.linalg.norm(t, axis=1)
            n = np.stack([t[:, 1], -t[:, 0]], axis=1) / meas[:, None]
        else:
            c = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
            norm = np.linalg.norm(c, axis=1)
            meas = 0.5 * norm
            n = c / norm[:, None]
        cell, opp = self.facet_owner.T
        away = v[f[:, 0]] - v[self.cells[cell, opp]]
        flip = np.einsum("ij,ij->i", n, away) < 0
        n[flip] *= -1
        return meas, n

    @property
    def boundary_measure(self):
        return float(self.facet_measures_and_normals()[0].sum())

    def euler_characteristic(self):
        if self.dim == 2:
            return self.n_vertices - len(self.edges) + self.n_cells
        faces = np.unique(_facets_of(self.cells)[0], axis=0)
        return self.n_vertices - len(self.edges) + len(faces) - self.n_cells


def generate_unit_square(n: int) -> Mesh:
    """Structured mesh of [0, 1]^2: n x n squares, each cut along its
    (0,0)-(1,1) diagonal into two triangles."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(x, x, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[:-1, 1:].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[1:, :-1].ravel()
    cells = np.vstack([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return Mesh(vertices, cells)


def _refine(vertices, cells, dim, project):
    """Uniform refinement; midpoints of boundary edges are pushed to the
    unit sphere when ``project`` is set."""
    mesh = Mesh(vertices, cells)
    edges, cell_edges = mesh.edges, mesh.cell_edges
    mid = 0.5 * (vertices[edges[:, 0]] + vertices[edges[:, 1]])
    if project:
        be = mesh.boundary_edges
        mid[be] /= np.linalg.norm(mid[be], axis=1)[:, None]
    nv = len(vertices)
    new_vertices = np.vstack([vertices, mid])
    m = nv + cell_edges          # midpoint index per local edge
    c = mesh.cells
    if dim == 2:
        # local edges: (0,1), (0,2), (1,2)
        m01, m02, m12 = m[:, 0], m[:, 1], m[:, 2]
        new = [
            (c[:, 0], m01, m02),
            (m01, c[:, 1], m12),
            (m02, m12, c[:, 2]),
            (m01, m12, m02),
        ]
    else:
        # local edges: (0,1), (0,2), (0,3), (1,2), (1,3), (2,3)
        m01, m02, m03, m12, m13, m23 = (m[:, k] for k in range(6))
        new = [
            (c[:, 0], m01, m02, m03),
            (m01, c[:, 1], m12, m13),
            (m02, m12, c[:, 2], m23),
            (m03, m13, m23, c[:, 3]),
            (m01, m02, m03, m13),
            (m01, m02, m12, m13),
            (m02, m03, m13, m23),
            (m02, m12, m13, m23),
        ]
    new_cells = np.vstack([np.column_stack(t) for t in new])
    return new_vertices, new_cells


def generate_unit_ball(n: int, dim: int = 3, sectors: int = 6) -> Mesh:
    """Polyhedral approximation of the unit disk (dim=2) or ball (dim=3).

    Level 0 is a regular ``sectors``-gon fan (2D) or an octahedron split
    into 8 tetrahedra around the origin (3D).  Each level splits every
    cell uniformly and projects new boundary vertices onto the sphere.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if dim == 2:
        t = 2.0 * np.pi * np.arange(sectors) / sectors
        vertices = np.vstack([[0.0, 0.0], np.column_stack([np.cos(t), np.sin(t)])])
        k = np.arange(sectors)
        cells = np.column_stack([np.zeros(sectors, dtype=int), 1 + k, 1 + (k + 1) % sectors])
    elif dim == 3:
        vertices = np.array(
            [[0, 0, 0], [1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]],
            dtype=float,
        )
        cells = np.array(
            [[0, x, y, z] for x in (1, 2) for y in (3, 4) for z in (5, 6)], dtype=int
        )
    else:
        raise ValueError("dim must be 2 or 3")
    for _ in range(n):
        vertices, cells = _refine(vertices, cells, dim, project=True)
    return Mesh(vertices, cells)


def validate(mesh: Mesh, raise_on_error: bool = True) -> list:
    """Check a mesh for degenerate cells, orphan facets and inconsistent
    dimensions.  Returns a list of problem descriptions; with
    ``raise_on_error`` the first category found raises ValidationError."""
    problems = []
    d = mesh.dim
    if mesh.cells.shape[1] != d + 1 or mesh.boundary_facets.shape[1] != d:
        problems.append(("inconsistent dimension", []))
    vol = np.abs(mesh.volumes)
    mean = vol.mean() if len(vol) else 0.0
    bad = np.nonzero(vol < 1e-14 * mean)[0]
    repeated = [i for i, c in enumerate(mesh.cells.tolist()) if len(set(c)) < len(c)]
    bad = np.union1d(bad, repeated).astype(int)
    if len(bad):
        problems.append((f"degenerate cells {bad.tolist()}", bad))
    facets, _, _ = _facets_of(mesh.cells)
    uniq, counts = np.unique(facets, axis=0, return_counts=True)
    boundary = {tuple(f) for f in uniq[counts == 1].tolist()}
    interior = {tuple(f) for f in uniq[counts > 1].tolist()}
    orphans = [
        i
        for i, f in enumerate(np.sort(mesh.boundary_facets, axis=1).tolist())
        if tuple(f) not in boundary
    ]
    if orphans:
        problems.append((f"orphan facets {orphans}", orphans))
    overshared = np.nonzero(counts > 2)[0]
    if len(overshared):
        problems.append((f"facets shared by more than two cells: {len(overshared)}", overshared))
    tagged = {tuple(f) for f in np.sort(mesh.boundary_facets, axis=1).tolist()}
    untagged = boundary - tagged - interior
    if untagged and not orphans:
        problems.append((f"{len(untagged)} boundary facets carry no tag", []))
    if raise_on_error and problems:
        msg, idx = problems[0]
        raise ValidationError(msg, idx)
    return [msg for msg, _ in problems]


def save_mesh(mesh: Mesh, path) -> None:
    lines = [f"{mesh.dim} {mesh.n_vertices} {mesh.n_cells} {len(mesh.boundary_facets)}"]
    lines += [" ".join(repr(float(x)) for x in v) for v in mesh.vertices]
    lines += [" ".join(str(int(i)) for i in c) for c in mesh.cells]
    lines += [
        " ".join(str(int(i)) for i in f) + f" {int(t)}"
        for f, t in zip(mesh.boundary_facets, mesh.facet_tags)
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path) -> Mesh:
    """Read and validate a mesh file.

    Raises
    ------
    FileNotFoundError
    ParseError
        Malformed lines or indices out of range; carries the line number.
    ValidationError
        Structurally invalid mesh.
    """
    text = Path(path).read_text().splitlines()
    rows = [(i + 1, ln.split()) for i, ln in enumerate(text) if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise ParseError("empty mesh file", 1)
    lineno, head = rows[0]
    try:
        dim, nv, nc, nf = (int(t) for t in head)
    except ValueError:
        raise ParseError("header must be 'dim n_vertices n_cells n_facets'", lineno) from None
    if dim not in (2, 3):
        raise ParseError(f"unsupported dimension {dim}", lineno)
    body = rows[1:]
    if len(body) != nv + nc + nf:
        raise ParseError(
            f"expected {nv + nc + nf} data lines, found {len(body)}",
            body[-1][0] if body else lineno,
        )

    def parse(chunk, width, conv):
        out = []
        for ln, toks in chunk:
            if len(toks) != width:
                raise ParseError(f"expected {width} values, got {len(toks)}", ln)
            try:
                out.append([conv(t) for t in toks])
            except ValueError:
                raise ParseError(f"cannot parse {' '.join(toks)!r}", ln) from None
        return out

    verts = np.array(parse(body[:nv], dim, float), dtype=float).reshape(nv, dim)
    cells = np.array(parse(body[nv:nv + nc], dim + 1, int), dtype=np.int64).reshape(nc, dim + 1)
    fac = np.array(parse(body[nv + nc:], dim + 1, int), dtype=np.int64).reshape(nf, dim + 1)
    for k, (ln, _) in enumerate(body[nv:nv + nc]):
        if cells[k].min() < 0 or cells[k].max() >= nv:
            raise ParseError(f"cell {k} references a nonexistent vertex", ln)
    for k, (ln, _) in enumerate(body[nv + nc:]):
        if fac[k, :dim].min() < 0 or fac[k, :dim].max() >= nv:
            raise ParseError(f"facet {k} references a nonexistent vertex", ln)
    mesh = Mesh(verts, cells, fac[:, :dim], fac[:, dim])
    validate(mesh)
    return mesh
