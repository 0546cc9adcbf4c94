"""Quadrature on simplices in barycentric form.

Rules are collapsed (conical) products of Gauss-Jacobi rules, so any
polynomial degree can be integrated exactly in any dimension.
"""
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

__all__ = ["simplex_rule"]


@lru_cache(maxsize=None)
def simplex_rule(dim: int, degree: int):
    """Quadrature rule on the reference ``dim``-simplex.

    Returns
    -------
    bary : (nq, dim+1) ndarray
        Barycentric coordinates of the points.
    weights : (nq,) ndarray
        Weights summing to one; multiply by the cell measure.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    n = max(1, (degree + 2) // 2)
    rules = []
    for k in range(1, dim + 1):
        t, w = roots_jacobi(n, dim - k, 0.0)
        rules.append(((1.0 + t) / 2.0, w))
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wgrid = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    u = np.column_stack([g.ravel() for g in grids])
    w = np.prod(np.column_stack([g.ravel() for g in wgrid]), axis=1)
    x = np.empty_like(u)
    scale = np.ones(len(u))
    for k in range(dim):
        x[:, k] = u[:, k] * scale
        scale = scale * (1.0 - u[:, k])
    bary = np.column_stack([1.0 - x.sum(axis=1), x])
    w = w / w.sum()
    bary.setflags(write=False)
    w.setflags(write=False)
    return bary, w
