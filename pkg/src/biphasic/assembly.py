"""Block operator and load vector of the coupled fluid/solid/pressure
problem with a frozen resistivity field, and the energy pairing
``<H(V), V>`` evaluated directly by quadrature.

Unknown ordering is ``[V_f | U_s | P]``.  Bilinear terms, row = test:

====  ===========================================================
V,V   2 (D V : D W) + lambda (div V, div W) + (1/Da)(K V, W)
V,P   -phi_f (P, div W)
U,U   2 alpha1 (D U : D Z) + alpha2 (div U, div Z)
U,P   -phi_s (P, div Z)
U,V   -(1/Da)(K V, Z)
P,V   phi_f (div V, q)
P,P   a0 (P, q)
====  ===========================================================

Loads: ``(b_f, W) + (t, W)_boundary``, ``(b_s, Z)`` and ``(s, q)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp

from .exceptions import SpaceMismatch
from .fem import DEFAULT_DEGREE, FieldFunction, FunctionSpace, basis, h1_norm, h1_seminorm, l2_norm
from .quadrature import simplex_rule
from .resistivity import check_spd

__all__ = [
    "MixedSpaces",
    "make_spaces",
    "LoadData",
    "SolutionTriple",
    "BlockSystem",
    "assemble",
    "energy_pairing",
    "weak_residual",
    "resistivity_at_quadrature",
    "quadrature_points",
    "y_norm",
    "load_norms",
]

PAIRINGS = {"P2P1": ("P2", "P1"), "P1P1": ("P1", "P1")}


@dataclass(frozen=True)
class MixedSpaces:
    V: FunctionSpace      # fluid velocity, unconstrained vector
    U: FunctionSpace      # solid displacement, clamped vector
    P: FunctionSpace      # pressure, scalar

    @property
    def mesh(self):
        return self.V.mesh

    @property
    def sizes(self):
        return self.V.n_dofs, self.U.n_dofs, self.P.n_dofs

    @property
    def n_dofs(self):
        return sum(self.sizes)

    def slices(self):
        nV, nU, nP = self.sizes
        return {"V": slice(0, nV), "U": slice(nV, nV + nU), "P": slice(nV + nU, nV + nU + nP)}


def make_spaces(mesh, pairing="P2P1") -> MixedSpaces:
    """Velocity/displacement and pressure spaces; ``P2P1`` (default) or
    equal-order ``P1P1``."""
    try:
        vel, pres = PAIRINGS[pairing]
    except KeyError:
        raise SpaceMismatch(f"unknown pairing {pairing!r}; choose from {sorted(PAIRINGS)}") from None
    d = mesh.dim
    return MixedSpaces(
        FunctionSpace(mesh, vel, d, constrained=False),
        FunctionSpace(mesh, vel, d, constrained=True),
        FunctionSpace(mesh, pres, 1, constrained=False),
    )


VectorData = Union[None, float, tuple, list, np.ndarray, Callable]


@dataclass
class LoadData:
    """Right-hand-side data.

    ``b_f``, ``b_s``: ``None`` (zero), a constant vector, or ``f(x) -> (n, d)``.
    ``T_inf``: ``None``, a scalar ``T`` meaning traction ``T n``, a constant
    vector, or ``f(x, n) -> (n, d)``.
    ``source``: ``None`` for the constant ``a0`` of the model, a scalar, or
    ``f(x) -> (n,)``.
    """

    b_f: VectorData = None
    b_s: VectorData = None
    T_inf: VectorData = None
    source: Union[None, float, Callable] = None

    @classmethod
    def zero(cls):
        return cls(source=0.0)

    def scaled(self, c):
        def sc(v, arity=1):
            if v is None:
                return None
            if callable(v):
                return (lambda x: c * np.asarray(v(x))) if arity == 1 else (
                    lambda x, n: c * np.asarray(v(x, n)))
            return c * np.asarray(v, dtype=float) if np.ndim(v) else c * float(v)

        return LoadData(sc(self.b_f), sc(self.b_s), sc(self.T_inf, 2), sc(self.source))

    def difference(self, other: "LoadData", a0) -> "LoadData":
        """Pointwise ``self - other`` as callables (``a0`` resolves the
        default source)."""
        a, b = self, other
        return LoadData(
            b_f=lambda x: _vector_values(a.b_f, x) - _vector_values(b.b_f, x),
            b_s=lambda x: _vector_values(a.b_s, x) - _vector_values(b.b_s, x),
            T_inf=lambda x, n: _traction_values(a.T_inf, x, n) - _traction_values(b.T_inf, x, n),
            source=lambda x: _source_values(a.source, x, a0) - _source_values(b.source, x, a0),
        )


def _vector_values(v, x):
    n, d = x.shape
    if v is None:
        return np.zeros((n, d))
    if callable(v):
        return np.asarray(v(x), dtype=float).reshape(n, d)
    return np.broadcast_to(np.asarray(v, dtype=float), (n, d))


def _traction_values(t, x, normals):
    n, d = x.shape
    if t is None:
        return np.zeros((n, d))
    if callable(t):
        return np.asarray(t(x, normals), dtype=float).reshape(n, d)
    t = np.asarray(t, dtype=float)
    if t.ndim == 0:
        return float(t) * normals
    return np.broadcast_to(t, (n, d))


def _source_values(s, x, a0):
    if s is None:
        return np.full(len(x), a0)
    if callable(s):
        return np.asarray(s(x), dtype=float).reshape(len(x))
    return np.full(len(x), float(s))


def quadrature_points(mesh, degree=DEFAULT_DEGREE):
    """Barycentric points, weights, and physical points (M, nq, d)."""
    bary, w = simplex_rule(mesh.dim, degree)
    x = np.einsum("qk,mkx->mqx", bary, mesh.vertices[mesh.cells])
    return bary, w, x


def _facet_quadrature(mesh, space, degree):
    """Cell-basis values at boundary facet quadrature points.

    Returns owning cells (F,), basis values (F, nqf, nloc), physical
    points (F, nqf, d), weights times facet measure (F, nqf), and outward
    normals (F, d).
    """
    return _facet_rule(mesh, space.family, max(2 * space.degree, DEFAULT_DEGREE))


@lru_cache(maxsize=16)
def _facet_rule(mesh, family, degree):
    d = mesh.dim
    fb, fw = simplex_rule(d - 1, degree)
    meas, normals = mesh.facet_measures_and_normals()
    cells = mesh.facet_owner[:, 0]
    F, nqf = len(cells), len(fw)
    # local position of each facet vertex inside its owning cell
    owner = mesh.cells[cells]
    local = (owner[:, None, :] == mesh.boundary_facets[:, :, None]).argmax(axis=2)   # (F, d)
    cb = np.zeros((F, nqf, d + 1))
    rows = np.arange(F)[:, None]
    for j in range(d):
        cb[rows, :, local[:, j : j + 1]] = fb[None, :, j]
    phi = basis(family, d, cb.reshape(-1, d + 1))[0].reshape(F, nqf, -1)
    x = np.einsum("fqk,fkx->fqx", cb, mesh.vertices[owner])
    for arr in (phi, x, cells, normals):
        arr.setflags(write=False)
    return cells, phi, x, fw[None, :] * meas[:, None], normals


@dataclass(frozen=True)
class SolutionTriple:
    V_f: FieldFunction
    U_s: FieldFunction
    P: FieldFunction

    @property
    def vector(self):
        return np.concatenate([self.V_f.coefficients, self.U_s.coefficients, self.P.coefficients])

    @classmethod
    def from_vector(cls, spaces: MixedSpaces, x):
        s = spaces.slices()
        x = np.asarray(x, dtype=float)
        return cls(
            FieldFunction(spaces.V, x[s["V"]].copy()),
            FieldFunction(spaces.U, x[s["U"]].copy()),
            FieldFunction(spaces.P, x[s["P"]].copy()),
        )

    @classmethod
    def zeros(cls, spaces):
        return cls.from_vector(spaces, np.zeros(spaces.n_dofs))

    def __sub__(self, other):
        return SolutionTriple(self.V_f - other.V_f, self.U_s - other.U_s, self.P - other.P)

    def norms(self):
        """(||V||_1, ||grad U||_0, ||P||_0)."""
        return h1_norm(self.V_f), h1_seminorm(self.U_s), l2_norm(self.P)


def y_norm(triple: SolutionTriple) -> float:
    """``(||V_f||_1^2 + ||grad U_s||_0^2 + ||P||_0^2)^(1/2)``."""
    v, u, p = triple.norms()
    return float(np.sqrt(v**2 + u**2 + p**2))


@dataclass
class BlockSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    spaces: MixedSpaces
    ndp: object
    meta: dict = field(default_factory=dict)

    @property
    def blocks(self):
        return self.spaces.slices()

    def block(self, row, col):
        s = self.blocks
        return self.matrix[s[row], :][:, s[col]]


def resistivity_at_quadrature(model, U: Optional[FieldFunction], mesh, degree=DEFAULT_DEGREE):
    """Evaluate ``K`` at the quadrature points from a displacement iterate.

    ``U=None`` freezes ``K`` at zero argument.  Returns (M, nq, d, d).
    """
    bary, _ = simplex_rule(mesh.dim, degree)
    M, nq, d = mesh.n_cells, len(bary), mesh.dim
    if model.argument == "dilatation":
        if U is None:
            arg = np.zeros((M, nq))
        else:
            _, g = U.at_quadrature(bary)
            arg = np.trace(g, axis1=2, axis2=3)
    else:
        arg = np.zeros((M, nq, d)) if U is None else U.at_quadrature(bary)[0]
    return model.eval(arg, d)


def _broadcast_K(K, mesh, nq):
    K = np.asarray(K, dtype=float)
    d = mesh.dim
    if K.shape == (d, d):
        K = np.broadcast_to(K, (mesh.n_cells, nq, d, d))
    if K.shape != (mesh.n_cells, nq, d, d):
        raise SpaceMismatch(
            f"resistivity field has shape {K.shape}, expected {(mesh.n_cells, nq, d, d)}"
        )
    return K


def _scatter(rows_map, cols_map, local, r0, c0):
    """COO triplets of local matrices (M, nr, nc), dropping constrained dofs."""
    M, nr, nc = local.shape
    R = np.broadcast_to(rows_map[:, :, None], (M, nr, nc))
    C = np.broadcast_to(cols_map[:, None, :], (M, nr, nc))
    keep = (R >= 0) & (C >= 0)
    return R[keep] + r0, C[keep] + c0, local[keep]


def _vector_blocks(G, phi, w, vol, d):
    """Local symmetric-gradient, divergence and vector mass pieces.

    Returns DD, DIV with shape (M, nloc*d, nloc*d) and the scalar mass
    integrals (M, nq, nloc, nloc) weighted per quadrature point.
    """
    T = np.einsum("q,m,mqax,mqby->mabxy", w, vol, G, G)      # (M,a,b,x,y)
    M, nloc = T.shape[:2]
    S = np.einsum("mabxx->mab", T)
    I = np.eye(d)
    # test (a,c), trial (b,e):  D:D = (delta_ce S_ab + T_ab[e,c]) / 2
    DD = 0.5 * (np.einsum("mab,ce->macbe", S, I) + np.einsum("mabec->macbe", T))
    DIV = np.einsum("mabce->macbe", T)
    return DD.reshape(M, nloc * d, nloc * d), DIV.reshape(M, nloc * d, nloc * d)


def assemble(spaces: MixedSpaces, ndp, resistivity_field, data: Optional[LoadData] = None,
             degree=DEFAULT_DEGREE, check=True) -> BlockSystem:
    """Assemble the block system for a frozen resistivity field.

    Parameters
    ----------
    spaces : MixedSpaces
        ``U`` must be the clamped space.
    ndp : NondimParams
    resistivity_field : array_like
        ``K`` at the quadrature points of ``simplex_rule(dim, degree)``,
        shape (M, nq, d, d), or one (d, d) matrix for all points.
    data : LoadData, optional
        Defaults to zero forces, zero traction and source ``a0``.
    check : bool
        Verify every ``K`` value is SPD (raises LossOfPositivity).
    """
    if not spaces.U.constrained or spaces.V.constrained:
        raise SpaceMismatch("velocity space must be free and displacement space clamped")
    if spaces.V.family != spaces.U.family:
        raise SpaceMismatch("velocity and displacement must share an element family")
    data = data or LoadData()
    mesh = spaces.mesh
    d = mesh.dim
    bary, w, xq = quadrature_points(mesh, degree)
    nq = len(w)
    K = _broadcast_K(resistivity_field, mesh, nq)
    if check:
        check_spd(K)
    vol = np.abs(mesh.volumes)

    phi, G = spaces.V.tabulate(bary)              # (nq, a), (M, nq, a, d)
    psi, _ = spaces.P.tabulate(bary)              # (nq, b)
    M, nloc = mesh.n_cells, phi.shape[1]
    DD, DIV = _vector_blocks(G, phi, w, vol, d)
    drag = np.einsum("q,m,qa,qb,mqce->macbe", w, vol, phi, phi, K).reshape(M, nloc * d, nloc * d)
    # B[(a,c), b] = int psi_b d_c phi_a
    B = np.einsum("q,m,mqac,qb->macb", w, vol, G, psi).reshape(M, nloc * d, psi.shape[1])
    mass_p = np.einsum("q,m,qa,qb->mab", w, vol, psi, psi)

    nV, nU, nP = spaces.sizes
    oV, oU, oP = 0, nV, nV + nU
    dmV, dmU, dmP = spaces.V.dof_map, spaces.U.dof_map, spaces.P.dof_map
    p = ndp
    parts = [
        _scatter(dmV, dmV, 2.0 * DD + p.lambda_ * DIV + drag / p.Da, oV, oV),
        _scatter(dmV, dmP, -p.phi_f * B, oV, oP),
        _scatter(dmU, dmU, 2.0 * p.alpha1 * DD + p.alpha2 * DIV, oU, oU),
        _scatter(dmU, dmP, -p.phi_s * B, oU, oP),
        _scatter(dmU, dmV, -drag / p.Da, oU, oV),
        _scatter(dmP, dmV, p.phi_f * np.swapaxes(B, 1, 2), oP, oV),
        _scatter(dmP, dmP, p.a0 * mass_p, oP, oP),
    ]
    rows = np.concatenate([q[0] for q in parts])
    cols = np.concatenate([q[1] for q in parts])
    vals = np.concatenate([q[2] for q in parts])
    n = spaces.n_dofs
    A = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()

    rhs = np.zeros(n)
    flat_x = xq.reshape(-1, d)
    bf = _vector_values(data.b_f, flat_x).reshape(M, nq, d)
    bs = _vector_values(data.b_s, flat_x).reshape(M, nq, d)
    s = _source_values(data.source, flat_x, p.a0).reshape(M, nq)
    lf = np.einsum("q,m,qa,mqc->mac", w, vol, phi, bf).reshape(M, -1)
    ls = np.einsum("q,m,qa,mqc->mac", w, vol, phi, bs).reshape(M, -1)
    lp = np.einsum("q,m,qb,mq->mb", w, vol, psi, s)
    _add_load(rhs, dmV, lf, oV)
    _add_load(rhs, dmU, ls, oU)
    _add_load(rhs, dmP, lp, oP)

    if data.T_inf is not None and len(mesh.boundary_facets):
        cells, fphi, fx, fw, normals = _facet_quadrature(mesh, spaces.V, degree)
        F, nqf = fw.shape
        nrm = np.repeat(normals[:, None, :], nqf, axis=1).reshape(-1, d)
        t = _traction_values(data.T_inf, fx.reshape(-1, d), nrm).reshape(F, nqf, d)
        lt = np.einsum("fq,fqa,fqc->fac", fw, fphi, t).reshape(F, -1)
        _add_load(rhs, dmV[cells], lt, oV)

    meta = {"degree": degree, "n_dofs": n, "sizes": spaces.sizes}
    return BlockSystem(A, rhs, spaces, ndp, meta)


def _add_load(rhs, dof_map, local, offset):
    keep = dof_map >= 0
    np.add.at(rhs, dof_map[keep] + offset, local[keep])


def weak_residual(system: BlockSystem, solution) -> float:
    """``||A x - b|| / max(1, ||b||)``."""
    x = solution.vector if isinstance(solution, SolutionTriple) else np.asarray(solution)
    r = system.matrix @ x - system.rhs
    return float(np.linalg.norm(r) / max(1.0, np.linalg.norm(system.rhs)))


def energy_pairing(triple: SolutionTriple, ndp, resistivity_field, data: Optional[LoadData] = None,
                   degree=DEFAULT_DEGREE) -> float:
    """``<H(V), V>`` by direct quadrature of the fields (no matrices)."""
    data = data or LoadData()
    mesh = triple.V_f.space.mesh
    d = mesh.dim
    bary, w, xq = quadrature_points(mesh, degree)
    K = _broadcast_K(resistivity_field, mesh, len(w))
    vol = np.abs(mesh.volumes)
    V, gV = triple.V_f.at_quadrature(bary)
    U, gU = triple.U_s.at_quadrature(bary)
    P = triple.P.at_quadrature(bary)[0][..., 0]
    DV = 0.5 * (gV + np.swapaxes(gV, 2, 3))
    DU = 0.5 * (gU + np.swapaxes(gU, 2, 3))
    divV = np.trace(gV, axis1=2, axis2=3)
    divU = np.trace(gU, axis1=2, axis2=3)
    KV = np.einsum("mqij,mqj->mqi", K, V)
    p = ndp
    dens = (
        2.0 * (DV**2).sum(axis=(2, 3))
        + p.lambda_ * divV**2
        - p.phi_f * P * divV
        + (KV * V).sum(axis=2) / p.Da
        + 2.0 * p.alpha1 * (DU**2).sum(axis=(2, 3))
        + p.alpha2 * divU**2
        - p.phi_s * P * divU
        - (KV * U).sum(axis=2) / p.Da
        + p.phi_f * divV * P
        + p.a0 * P**2
    )
    flat = xq.reshape(-1, d)
    M, nq = P.shape
    bf = _vector_values(data.b_f, flat).reshape(M, nq, d)
    bs = _vector_values(data.b_s, flat).reshape(M, nq, d)
    s = _source_values(data.source, flat, p.a0).reshape(M, nq)
    dens = dens - (bf * V).sum(axis=2) - (bs * U).sum(axis=2) - s * P
    total = float(np.einsum("q,m,mq->", w, vol, dens))

    if data.T_inf is not None and len(mesh.boundary_facets):
        sp_V = triple.V_f.space
        cells, fphi, fx, fw, normals = _facet_quadrature(mesh, sp_V, degree)
        F, nqf = fw.shape
        nrm = np.repeat(normals[:, None, :], nqf, axis=1).reshape(-1, d)
        t = _traction_values(data.T_inf, fx.reshape(-1, d), nrm).reshape(F, nqf, d)
        Vb = np.einsum("fqa,fac->fqc", fphi, triple.V_f.cell_coefficients()[cells])
        total -= float(np.einsum("fq,fqc,fqc->", fw, t, Vb))
    return total


def load_norms(data: Optional[LoadData], mesh, a0, degree=6):
    """L2 norms of the load data by quadrature, as :class:`DataNorms`.

    The source entry is the norm of ``s`` (``a0 sqrt|Omega|`` by default).
    """
    from .params import DataNorms

    data = data or LoadData()
    d = mesh.dim
    _, w, xq = quadrature_points(mesh, degree)
    vol = np.abs(mesh.volumes)
    flat = xq.reshape(-1, d)
    M, nq = xq.shape[:2]

    def vol_norm(vals):
        return float(np.sqrt(np.einsum("q,m,mq->", w, vol, vals.reshape(M, nq))))

    nbf = vol_norm((_vector_values(data.b_f, flat) ** 2).sum(axis=1))
    nbs = vol_norm((_vector_values(data.b_s, flat) ** 2).sum(axis=1))
    ns = vol_norm(_source_values(data.source, flat, a0) ** 2)
    meas, normals = mesh.facet_measures_and_normals()
    nT = 0.0
    if data.T_inf is not None and len(meas):
        fb, fw = simplex_rule(d - 1, degree)
        f = mesh.boundary_facets
        fx = np.einsum("qk,fkx->fqx", fb, mesh.vertices[f])
        F, nqf = fx.shape[:2]
        nrm = np.repeat(normals[:, None, :], nqf, axis=1).reshape(-1, d)
        t = _traction_values(data.T_inf, fx.reshape(-1, d), nrm).reshape(F, nqf, d)
        nT = float(np.sqrt(np.einsum("q,f,fq->", fw, meas, (t**2).sum(axis=2))))
    return DataNorms(
        norm_bf=nbf, norm_bs=nbs, norm_Tinf=nT, norm_a0=ns,
        vol_Omega=mesh.volume, area_boundary=float(meas.sum()),
    )
