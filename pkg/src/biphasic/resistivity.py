"""Hydraulic resistivity laws ``K(varsigma)`` and sampled checks of their
structural assumptions (positivity, boundedness, Lipschitz, growth).

Every model evaluates vectorised over leading axes.  Displacement
models take ``(..., d)`` arrays, dilatation models ``(...)`` arrays; both
return ``(..., d, d)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .exceptions import DimensionMismatch, LossOfPositivity

__all__ = [
    "Bounds",
    "ResistivityModel",
    "Constant",
    "DisplacementAnisotropic",
    "DilatationAffine",
    "Truncated",
    "StructureReport",
    "verify_structure",
    "check_spd",
    "matrix_norm",
    "with_bounds",
]


@dataclass(frozen=True)
class Bounds:
    """Declared structural constants; ``None`` means unknown, ``inf``
    means unbounded."""

    k1: Optional[float] = None
    k2: Optional[float] = None
    k_L: Optional[float] = None
    k0: Optional[float] = None

    def as_dict(self):
        return {"k1": self.k1, "k2": self.k2, "k_L": self.k_L, "k0": self.k0}


def matrix_norm(K, norm="spectral"):
    """Norm of the trailing d x d matrices."""
    if norm == "spectral":
        return np.linalg.norm(K, ord=2, axis=(-2, -1))
    if norm in ("fro", "frobenius"):
        return np.sqrt((K**2).sum(axis=(-2, -1)))
    raise ValueError(f"unknown norm {norm!r}")


def check_spd(K, what="resistivity"):
    """Raise LossOfPositivity unless every trailing matrix is SPD."""
    K = np.asarray(K)
    flat = K.reshape(-1, K.shape[-2], K.shape[-1])
    asym = np.abs(flat - np.swapaxes(flat, 1, 2)).max(initial=0.0)
    scale = np.abs(flat).max(initial=1.0)
    if asym > 1e-12 * scale:
        raise LossOfPositivity(f"{what} is not symmetric (asymmetry {asym:.3g})")
    lam = np.linalg.eigvalsh(flat)[:, 0]
    if lam.size and lam.min() <= 0:
        where = int(lam.argmin())
        raise LossOfPositivity(
            f"{what} lost positive definiteness: eigenvalue {lam.min():.6g} at entry {where}"
        )


class ResistivityModel:
    """Common interface; concrete laws are the frozen dataclasses below."""

    #: "displacement" (argument U_s) or "dilatation" (argument div U_s)
    argument = "displacement"

    def eval(self, varsigma, dim=None):  # pragma: no cover - interface
        raise NotImplementedError

    def __call__(self, varsigma, dim=None):
        return self.eval(varsigma, dim)

    def default_bounds(self) -> Bounds:
        return Bounds()

    @property
    def declared(self) -> Bounds:
        override = getattr(self, "bounds", None)
        base = self.default_bounds()
        if override is None:
            return base
        return Bounds(
            *(o if o is not None else b for o, b in zip(
                (override.k1, override.k2, override.k_L, override.k0),
                (base.k1, base.k2, base.k_L, base.k0),
            ))
        )

    @property
    def iterate_independent(self) -> bool:
        return False

    def _split(self, varsigma, dim):
        """Leading shape and dimension of the argument."""
        x = np.asarray(varsigma, dtype=float)
        if self.argument == "displacement":
            if x.ndim == 0:
                raise DimensionMismatch("displacement law needs a d-vector argument")
            d = x.shape[-1]
            if dim is not None and d != dim:
                raise DimensionMismatch(f"argument has dimension {d}, expected {dim}")
            return x, x.shape[:-1], d
        if dim is None:
            dim = getattr(self, "dim", None)
        if dim is None:
            raise DimensionMismatch("dilatation law needs the space dimension")
        return x, x.shape, dim


@dataclass(frozen=True)
class Constant(ResistivityModel):
    """Argument-independent SPD matrix."""

    matrix: tuple
    argument: str = "displacement"
    bounds: Optional[Bounds] = None

    def __post_init__(self):
        A = np.asarray(self.matrix, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionMismatch("matrix must be square")
        if not np.array_equal(A, A.T):
            raise ValueError("matrix must be symmetric")
        object.__setattr__(self, "matrix", tuple(map(tuple, A.tolist())))

    @classmethod
    def identity(cls, dim, scale=1.0, argument="displacement"):
        return cls(tuple(map(tuple, (scale * np.eye(dim)).tolist())), argument)

    @property
    def iterate_independent(self):
        return True

    def eval(self, varsigma, dim=None):
        A = np.asarray(self.matrix)
        x, lead, d = self._split(varsigma, dim if dim is not None else len(A))
        if d != len(A):
            raise DimensionMismatch(f"matrix is {len(A)}x{len(A)}, argument dimension {d}")
        return np.broadcast_to(A, lead + A.shape).copy()

    def default_bounds(self):
        lam = np.linalg.eigvalsh(np.asarray(self.matrix))
        k2 = float(np.abs(lam).max())
        return Bounds(k1=float(lam.min()), k2=k2, k_L=0.0, k0=k2)


@dataclass(frozen=True)
class DisplacementAnisotropic(ResistivityModel):
    """``K(U) = (a|U| + c) I + (a - b) U U^T / |U|``, with ``c I`` at U = 0.

    ``a = b`` gives the isotropic linear-growth law ``(a|U| + c) I``.
    """

    a: float
    b: float
    c: float
    bounds: Optional[Bounds] = None
    argument: str = field(default="displacement", init=False)

    def __post_init__(self):
        if self.a < 0 or self.b < 0 or not self.c > 0:
            raise ValueError("need a >= 0, b >= 0, c > 0")

    def eval(self, varsigma, dim=None):
        U, lead, d = self._split(varsigma, dim)
        n = np.linalg.norm(U, axis=-1)
        safe = np.where(n > 0, n, 1.0)
        outer = U[..., :, None] * U[..., None, :] / safe[..., None, None]
        I = np.eye(d)
        return (self.a * n + self.c)[..., None, None] * I + (self.a - self.b) * outer

    def default_bounds(self):
        slope = max(self.a, abs(2 * self.a - self.b))
        unbounded = self.a > 0 or 2 * self.a - self.b > 0
        k1 = self.c if 2 * self.a >= self.b else -math.inf
        return Bounds(
            k1=k1,
            k2=math.inf if unbounded else self.c,
            # spectral Lipschitz constant of U -> U U^T/|U| is 2/sqrt(3)
            k_L=self.a + 2.0 / math.sqrt(3.0) * abs(self.a - self.b),
            k0=max(self.c, slope),
        )


@dataclass(frozen=True)
class DilatationAffine(ResistivityModel):
    """``K(div U) = (gamma1 + gamma2 div U) I``."""

    gamma1: float
    gamma2: float
    dim: Optional[int] = None
    bounds: Optional[Bounds] = None
    argument: str = field(default="dilatation", init=False)

    def __post_init__(self):
        if not self.gamma1 > 0 or self.gamma2 < 0:
            raise ValueError("need gamma1 > 0 and gamma2 >= 0")

    @property
    def iterate_independent(self):
        return self.gamma2 == 0

    def eval(self, varsigma, dim=None):
        s, lead, d = self._split(varsigma, dim)
        return (self.gamma1 + self.gamma2 * s)[..., None, None] * np.eye(d)

    def default_bounds(self):
        # k1, k2 depend on the admissible dilatation range: declare them
        return Bounds(k_L=self.gamma2, k0=max(self.gamma1, self.gamma2))


@dataclass(frozen=True)
class Truncated(ResistivityModel):
    """Componentwise ``min(m, K_ij)`` of an inner law."""

    inner: ResistivityModel
    m: float
    bounds: Optional[Bounds] = None

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError("truncation level m must be positive")

    @property
    def argument(self):
        return self.inner.argument

    @property
    def dim(self):
        return getattr(self.inner, "dim", None)

    @property
    def iterate_independent(self):
        return self.inner.iterate_independent

    def eval(self, varsigma, dim=None):
        return np.minimum(self.m, self.inner.eval(varsigma, dim))

    def _diagonal_inner(self):
        inner = self.inner
        if isinstance(inner, DisplacementAnisotropic):
            return inner.a == inner.b
        if isinstance(inner, Constant):
            A = np.asarray(inner.matrix)
            return bool(np.all(A[~np.eye(len(A), dtype=bool)] == 0))
        return isinstance(inner, DilatationAffine)

    def default_bounds(self):
        b = self.inner.declared
        if self._diagonal_inner():
            # diagonal values: min() caps every eigenvalue at m
            k2 = self.m if b.k2 is None else min(b.k2, self.m)
            k1 = None if b.k1 is None else min(b.k1, self.m)
        else:
            # entrywise capping can break definiteness or exceed m in norm
            k2 = b.k2 if b.k2 is not None and b.k2 <= self.m else None
            k1 = b.k1 if k2 is not None else None
        return Bounds(k1=k1, k2=k2, k_L=b.k_L, k0=b.k0)


def with_bounds(model, **kw):
    """Copy of ``model`` with some declared bounds overridden."""
    current = model.bounds or Bounds()
    return replace(model, bounds=replace(current, **kw))


@dataclass
class StructureReport:
    k1_hat: float
    k2_hat: float
    kL_hat: float
    k0_hat: float
    spd_ok: bool
    contradictions: list

    @property
    def ok(self):
        return self.spd_ok and not self.contradictions


def verify_structure(model, sample_count=1000, sample_radius=1.0, *, dim=2,
                     norm="spectral", seed=0, tol=1e-10) -> StructureReport:
    """Monte-Carlo estimates of the structural constants of ``model``.

    Arguments are drawn uniformly from the ball of radius ``sample_radius``
    (an interval for dilatation laws).  Lipschitz ratios use random pairs
    plus close pairs.  Estimates that contradict the declared bounds are
    listed; declared bounds refer to the spectral norm and are scaled by
    ``sqrt(d)`` when checking Frobenius estimates.
    """
    if sample_count < 1 or not sample_radius > 0:
        raise ValueError("need sample_count >= 1 and sample_radius > 0")
    rng = np.random.default_rng(seed)
    if model.argument == "displacement":
        g = rng.standard_normal((sample_count, dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        x = g * sample_radius * rng.random((sample_count, 1)) ** (1.0 / dim)
        x[0] = 0.0
        step = rng.standard_normal((sample_count, dim)) * 1e-3 * sample_radius
        dist = lambda a, b: np.linalg.norm(a - b, axis=-1)
        size = np.linalg.norm(x, axis=1)
    else:
        x = rng.uniform(-sample_radius, sample_radius, sample_count)
        x[0] = 0.0
        step = rng.standard_normal(sample_count) * 1e-3 * sample_radius
        dist = lambda a, b: np.abs(a - b)
        size = np.abs(x)

    K = model.eval(x, dim)
    sym = 0.5 * (K + np.swapaxes(K, -1, -2))
    eig = np.linalg.eigvalsh(sym)
    nK = matrix_norm(K, norm)
    k1_hat = float(eig[:, 0].min())
    k2_hat = float(nK.max())
    k0_hat = float((nK / (1.0 + size)).max())

    perm = rng.permutation(sample_count)
    y_far, y_near = x[perm], x + step
    ratios = []
    for y in (y_far, y_near):
        d = dist(x, y)
        ok = d > 0
        diff = matrix_norm(K - model.eval(y, dim), norm)
        ratios.append((diff[ok] / d[ok]).max(initial=0.0))
    kL_hat = float(max(ratios))

    declared = model.declared
    scale = math.sqrt(dim) if norm in ("fro", "frobenius") else 1.0
    problems = []
    if declared.k1 is not None and k1_hat < declared.k1 - tol:
        problems.append(f"k1: sampled {k1_hat:.6g} < declared {declared.k1:.6g}")
    if declared.k2 is not None and k2_hat > declared.k2 * scale + tol:
        problems.append(f"k2: sampled {k2_hat:.6g} > declared {declared.k2:.6g}")
    if declared.k_L is not None and kL_hat > declared.k_L * scale + tol:
        problems.append(f"k_L: sampled {kL_hat:.6g} > declared {declared.k_L:.6g}")
    if declared.k0 is not None and k0_hat > declared.k0 * scale + tol:
        problems.append(f"k0: sampled {k0_hat:.6g} > declared {declared.k0:.6g}")
    return StructureReport(
        k1_hat=k1_hat, k2_hat=k2_hat, kL_hat=kL_hat, k0_hat=k0_hat,
        spd_ok=bool(eig[:, 0].min() > 0), contradictions=problems,
    )
