"""Linear solves and the fixed-point constructions for the nonlinear
resistivity: Picard on the displacement, Picard on the dilatation, and
truncation continuation for unbounded laws.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse.linalg as sla

from .assembly import (
    BlockSystem,
    LoadData,
    MixedSpaces,
    SolutionTriple,
    assemble,
    load_norms,
    resistivity_at_quadrature,
    weak_residual,
    y_norm,
)
from .exceptions import (
    MaxIterationsExceeded,
    ScheduleExhausted,
    SingularSystem,
    SpaceMismatch,
    ToleranceNotReached,
)
from .fem import DEFAULT_DEGREE
from .params import FunctionalConstants, coercivity_constants, starred_constants
from .resistivity import DilatationAffine, Truncated

__all__ = [
    "PicardReport",
    "IterateRecord",
    "TruncationLevel",
    "solve_linear",
    "picard_case_a",
    "picard_case_b",
    "solve_truncated_continuation",
]

log = logging.getLogger(__name__)

RTOL = 1e-10


def solve_linear(system: BlockSystem, method="direct", rtol=RTOL, maxiter=2000) -> SolutionTriple:
    """Solve the assembled block system.

    Parameters
    ----------
    method : {"direct", "gmres"}
        Sparse LU, or GMRES preconditioned by an incomplete LU.
    rtol : float
        Required bound on :func:`weak_residual`.
    """
    A = system.matrix.tocsc()
    b = system.rhs
    if method == "direct":
        try:
            x = sla.splu(A).solve(b)
        except RuntimeError as exc:
            raise SingularSystem(f"sparse LU failed: {exc}") from exc
        if not np.all(np.isfinite(x)):
            raise SingularSystem("non-finite solution")
        res = weak_residual(system, x)
        if res > rtol:
            # one step of iterative refinement before giving up
            lu = sla.splu(A)
            x = x - lu.solve(A @ x - b)
            res = weak_residual(system, x)
            if res > rtol:
                raise SingularSystem(f"residual {res:.3e} exceeds {rtol:.1e}; system nearly singular")
    elif method == "gmres":
        try:
            ilu = sla.spilu(A, drop_tol=1e-5, fill_factor=20)
        except RuntimeError as exc:
            raise SingularSystem(f"incomplete LU failed: {exc}") from exc
        Mop = sla.LinearOperator(A.shape, ilu.solve)
        scale = max(1.0, float(np.linalg.norm(b)))
        x, info = sla.gmres(A, b, M=Mop, rtol=0.1 * rtol * scale / max(np.linalg.norm(b), 1e-300),
                            atol=0.1 * rtol * scale, restart=200, maxiter=maxiter)
        res = weak_residual(system, x)
        if info != 0 or res > rtol:
            raise ToleranceNotReached(f"GMRES stopped with residual {res:.3e} (info={info})")
    else:
        raise ValueError(f"unknown method {method!r}")
    return SolutionTriple.from_vector(system.spaces, x)


@dataclass
class IterateRecord:
    norm_V: float          # ||V||_1
    norm_gradU: float      # ||grad U||_0
    norm_P: float          # ||P||_0
    step_diff: float
    linear_residual: float
    within_apriori: Optional[bool] = None

    def as_dict(self):
        return dict(self.__dict__)


@dataclass
class PicardReport:
    iterates: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    contraction_estimate: float = math.nan
    apriori_radius: Optional[float] = None

    @property
    def step_diffs(self):
        return [r.step_diff for r in self.iterates[1:]]

    def as_dict(self):
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "contraction_estimate": self.contraction_estimate,
            "apriori_radius": self.apriori_radius,
            "iterates": [r.as_dict() for r in self.iterates],
        }


def _contraction(diffs):
    diffs = [d for d in diffs]
    if len(diffs) < 2:
        return 0.0
    if diffs[0] <= 0.0:
        return 0.0
    if diffs[-1] <= 0.0:
        return 0.0
    return float((diffs[-1] / diffs[0]) ** (1.0 / (len(diffs) - 1)))


def _record(t: SolutionTriple, step, res, radius):
    v, u, p = t.norms()
    within = None
    if radius is not None:
        within = bool(v * v + u * u + p * p <= radius * radius * (1 + 1e-12))
    return IterateRecord(v, u, p, step, res, within)


def _picard(spaces, ndp, data, model, tol, max_iter, initial, relaxation, degree,
            apriori_radius, strict, method):
    if not 0.0 < relaxation <= 1.0:
        raise ValueError("relaxation must lie in (0, 1]")
    if not tol > 0:
        raise ValueError("tol must be positive")
    mesh = spaces.mesh
    report = PicardReport(apriori_radius=apriori_radius)

    def step_solve(U):
        K = resistivity_at_quadrature(model, U, mesh, degree)
        system = assemble(spaces, ndp, K, data, degree)
        return solve_linear(system, method=method), system

    if initial is None:
        current, system = step_solve(None)
        res0 = weak_residual(system, current)
    else:
        current = initial
        res0 = math.nan
    report.iterates.append(_record(current, 0.0, res0, apriori_radius))

    for n in range(1, max_iter + 1):
        new, system = step_solve(current.U_s)
        if relaxation < 1.0:
            new = SolutionTriple.from_vector(
                spaces, relaxation * new.vector + (1.0 - relaxation) * current.vector
            )
        res = weak_residual(system, new)
        diff = y_norm(new - current)
        current = new
        rec = _record(current, diff, res, apriori_radius)
        report.iterates.append(rec)
        report.iterations = n
        log.debug("picard %d: step %.3e residual %.3e", n, diff, res)
        if diff <= tol * max(1.0, y_norm(current)):
            report.converged = True
            break

    report.contraction_estimate = _contraction(report.step_diffs)
    if apriori_radius is not None and not all(r.within_apriori for r in report.iterates):
        warnings.warn(
            f"an iterate left the a-priori ball of radius {apriori_radius:.6g}",
            RuntimeWarning,
            stacklevel=3,
        )
    if not report.converged and strict:
        raise MaxIterationsExceeded(
            f"Picard did not reach tol={tol:g} in {max_iter} iterations "
            f"(last step {report.iterates[-1].step_diff:.3e})",
            report,
            current,
        )
    return current, report


def _apriori_radius(fc, ndp, data, mesh, model):
    """``alpha4/alpha3`` from the declared bounds, or None if unavailable."""
    if fc is None:
        return None
    b = model.declared
    if b.k1 is None or b.k2 is None or not math.isfinite(b.k2):
        return None
    dn = load_norms(data, mesh, ndp.a0)
    _, a3, a4 = coercivity_constants(ndp, fc, dn, b.k1, b.k2)
    return a4 / a3 if a3 > 0 else None


def picard_case_a(spaces: MixedSpaces, ndp, data: Optional[LoadData], model, tol=1e-8, max_iter=50,
                  *, initial: Optional[SolutionTriple] = None, relaxation=1.0,
                  fc: Optional[FunctionalConstants] = None, degree=DEFAULT_DEGREE,
                  strict=True, method="direct"):
    """Picard iteration with ``K`` frozen at the previous displacement.

    The first iterate solves the problem with ``K`` evaluated at zero
    argument unless ``initial`` is given.  Iteration stops once
    ``||V^{n+1} - V^n||_Y <= tol * max(1, ||V^{n+1}||_Y)``.

    Parameters
    ----------
    relaxation : float
        ``V^{n+1} <- w * solve + (1 - w) * V^n``; 1 means plain Picard.
    fc : FunctionalConstants, optional
        When given (and the model declares finite ``k1``, ``k2``), each
        iterate is compared with the a-priori radius ``alpha4/alpha3``;
        departures are reported and warned about, never raised.
    strict : bool
        Raise :class:`MaxIterationsExceeded` (carrying report and last
        iterate) when not converged; otherwise return them.

    Returns
    -------
    (SolutionTriple, PicardReport)
    """
    if model.argument != "displacement":
        raise SpaceMismatch("case (a) needs a displacement-dependent resistivity")
    radius = _apriori_radius(fc, ndp, data, spaces.mesh, model)
    return _picard(spaces, ndp, data, model, tol, max_iter, initial, relaxation, degree,
                   radius, strict, method)


def picard_case_b(spaces: MixedSpaces, ndp, data: Optional[LoadData], model, tol=1e-8, max_iter=50,
                  *, initial: Optional[SolutionTriple] = None, relaxation=1.0,
                  fc: Optional[FunctionalConstants] = None, degree=DEFAULT_DEGREE,
                  strict=True, method="direct"):
    """Picard iteration with ``K`` frozen at the previous dilatation
    ``div U`` at each quadrature point.  ``model`` must be
    :class:`DilatationAffine`; otherwise as :func:`picard_case_a`.
    """
    if not isinstance(model, DilatationAffine):
        raise SpaceMismatch("case (b) needs a DilatationAffine resistivity")
    radius = _apriori_radius(fc, ndp, data, spaces.mesh, model)
    return _picard(spaces, ndp, data, model, tol, max_iter, initial, relaxation, degree,
                   radius, strict, method)


@dataclass
class TruncationLevel:
    m: float
    active: bool
    max_K: float
    norm_VP: float         # (||V||_1^2 + ||P||_0^2)^(1/2)
    norm_gradU: float
    vp_bound: Optional[float]
    u_bound: Optional[float]
    picard: PicardReport

    @property
    def within_bounds(self) -> Optional[bool]:
        if self.vp_bound is None:
            return None
        ok = self.norm_VP <= self.vp_bound
        if self.u_bound is not None:
            ok = ok and self.norm_gradU <= self.u_bound
        return bool(ok)

    def as_dict(self):
        d = {k: getattr(self, k) for k in
             ("m", "active", "max_K", "norm_VP", "norm_gradU", "vp_bound", "u_bound")}
        d["within_bounds"] = self.within_bounds
        d["picard"] = self.picard.as_dict()
        return d


def default_schedule(model, length=11):
    """Powers of two from ``ceil(k2)`` (when declared finite) or 1."""
    k2 = model.declared.k2
    start = math.ceil(k2) if k2 is not None and math.isfinite(k2) and k2 > 0 else 1
    return [float(start * 2**i) for i in range(length)]


def solve_truncated_continuation(spaces: MixedSpaces, ndp, data: Optional[LoadData], model,
                                 m_schedule: Optional[Sequence[float]] = None, *, tol=1e-8,
                                 max_iter=50, fc: Optional[FunctionalConstants] = None,
                                 degree=DEFAULT_DEGREE, relaxation=1.0, method="direct"):
    """Solve with ``Truncated(model, m)`` for increasing ``m``.

    Stops at the first ``m`` for which the untruncated law, evaluated on
    the computed displacement at every quadrature point, has all entries
    below ``m`` (truncation inactive).  With ``fc`` given, each level
    carries the m-independent bounds on ``|(V, P)|`` and ``|grad U|``
    built from the declared ``k1`` and ``k0``.

    Returns
    -------
    (SolutionTriple, list of TruncationLevel)

    Raises
    ------
    ScheduleExhausted
        Truncation still active at the largest ``m``.
    """
    sched = list(m_schedule) if m_schedule is not None else default_schedule(model)
    if not sched:
        raise ValueError("empty m_schedule")
    if any(b <= a for a, b in zip(sched, sched[1:])):
        raise ValueError("m_schedule must be increasing")
    vp_bound = u_bound = None
    if fc is not None:
        b = model.declared
        if b.k1 is not None and b.k0 is not None:
            st = starred_constants(ndp, fc, load_norms(data, spaces.mesh, ndp.a0), b.k1, b.k0)
            vp_bound = st["vp_bound"]
            u_bound = st["alpha5_star"] if math.isfinite(st["alpha5_star"]) else None

    levels = []
    sol = None
    for m in sched:
        sol, rep = picard_case_a(spaces, ndp, data, Truncated(model, m), tol, max_iter,
                                 relaxation=relaxation, degree=degree, method=method)
        K = resistivity_at_quadrature(model, sol.U_s, spaces.mesh, degree)
        max_K = float(K.max())
        v, u, p = sol.norms()
        lvl = TruncationLevel(m, max_K >= m, max_K, math.hypot(v, p), u, vp_bound, u_bound, rep)
        levels.append(lvl)
        if lvl.within_bounds is False:
            warnings.warn(
                f"m={m:g}: norms ({lvl.norm_VP:.6g}, {u:.6g}) exceed bounds "
                f"({vp_bound:.6g}, {u_bound})",
                RuntimeWarning,
                stacklevel=2,
            )
        if not lvl.active:
            return sol, levels
    raise ScheduleExhausted(
        f"truncation still active at m={sched[-1]:g} (max K entry {levels[-1].max_K:.6g})",
        levels,
        sol,
    )
