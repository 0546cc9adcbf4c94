"""Physical and dimensionless parameters, coercivity constants and the
parameter inequalities that gate existence and uniqueness.

Everything here is pure arithmetic over frozen dataclasses.
"""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional, Sequence

from .exceptions import NonPositiveAlpha3, PoissonRatioSingular

__all__ = [
    "PhysicalParams",
    "NondimParams",
    "FunctionalConstants",
    "DataNorms",
    "Inequality",
    "ConstraintReport",
    "StokesHypothesisWarning",
    "derive_nondimensional",
    "lame_groups",
    "coercivity_constants",
    "starred_constants",
    "check_theorems",
    "tumour_ball_combination",
]


class StokesHypothesisWarning(UserWarning):
    """lambda < 0: the coercivity restrictions checked here do not apply."""


@dataclass(frozen=True)
class PhysicalParams:
    """Dimensional inputs (SI units)."""

    mu_f: float
    lambda_f: float
    young_Y: float
    nu_p: float
    rho_f: float
    R: float
    P_F: float
    L_p: float
    AoverV: float
    LrAr: float
    K_d: float

    def __post_init__(self):
        for name in ("mu_f", "young_Y", "R", "K_d"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass(frozen=True)
class NondimParams:
    """Dimensionless coefficient set of the steady model.

    ``lambda_`` carries the fluid viscosity ratio (``lambda`` is a keyword).
    """

    lambda_: float
    alpha1: float
    alpha2: float
    a0: float
    Da: float
    phi_f: float
    phi_s: Optional[float] = None

    def __post_init__(self):
        if self.phi_s is None:
            object.__setattr__(self, "phi_s", 1.0 - self.phi_f)
        if not (0.0 < self.phi_f < 1.0 and 0.0 < self.phi_s < 1.0):
            raise ValueError("volume fractions must lie in (0, 1)")
        if abs(self.phi_f + self.phi_s - 1.0) > 1e-12:
            raise ValueError(
                f"saturation violated: phi_f + phi_s = {self.phi_f + self.phi_s}"
            )
        if not self.alpha1 > 0:
            raise ValueError("alpha1 must be positive")
        if not self.alpha2 >= 0:
            raise ValueError("alpha2 must be non-negative")
        if not self.a0 > 0:
            raise ValueError("a0 must be positive")
        if not self.Da > 0:
            raise ValueError("Da must be positive")
        if self.lambda_ < 0:
            warnings.warn(
                f"lambda = {self.lambda_} < 0 (Stokes hypothesis); coercivity "
                "then needs alpha > 2/3 instead of the checked restrictions",
                StokesHypothesisWarning,
                stacklevel=3,
            )

    @classmethod
    def from_groups(cls, rho_t, nu_p, alpha_t, LrAr, Da, phi_s, lambda_=0.0):
        """Build from the dimensionless groups used in parameter tables."""
        alpha1, alpha2 = lame_groups(rho_t, nu_p)
        return cls(
            lambda_=lambda_,
            alpha1=alpha1,
            alpha2=alpha2,
            a0=alpha_t**2 * (1.0 + LrAr),
            Da=Da,
            phi_f=1.0 - phi_s,
            phi_s=phi_s,
        )


@dataclass(frozen=True)
class FunctionalConstants:
    """Korn, Poincare, trace and Sobolev (H1 -> L4) constants."""

    c_k: float = 3.0
    c_p: float = 0.5
    c_t: float = 2.0
    c_s: float = 0.5

    def __post_init__(self):
        for name in ("c_k", "c_p", "c_t", "c_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class DataNorms:
    norm_bf: float = 0.0
    norm_bs: float = 0.0
    norm_Tinf: float = 0.0
    norm_a0: float = 0.0
    vol_Omega: float = 1.0
    area_boundary: float = 0.0

    def __post_init__(self):
        for name in ("norm_bf", "norm_bs", "norm_Tinf", "norm_a0", "area_boundary"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")
        if not self.vol_Omega > 0:
            raise ValueError("vol_Omega must be positive")

    @classmethod
    def from_constants(cls, b_f=0.0, b_s=0.0, T_inf=0.0, a0=0.0, *, vol, area):
        """Norms of spatially constant data.

        Vectors contribute ``|v| sqrt(measure)``; a scalar traction means a
        constant-magnitude normal traction, hence ``|T| sqrt(|dOmega|)``.
        """
        def mag(v):
            if isinstance(v, (int, float)):
                return abs(float(v))
            return math.sqrt(sum(float(c) ** 2 for c in v))

        return cls(
            norm_bf=mag(b_f) * math.sqrt(vol),
            norm_bs=mag(b_s) * math.sqrt(vol),
            norm_Tinf=mag(T_inf) * math.sqrt(area),
            norm_a0=abs(a0) * math.sqrt(vol),
            vol_Omega=vol,
            area_boundary=area,
        )


def lame_groups(rho_t: float, nu_p: float) -> tuple[float, float]:
    """Return (alpha1, alpha2) from the dimensionless Young's modulus."""
    if nu_p == 0.5:
        raise PoissonRatioSingular("nu_p = 0.5 makes alpha2 singular")
    if not 0.0 <= nu_p < 0.5:
        raise ValueError(f"nu_p must lie in [0, 0.5), got {nu_p}")
    alpha1 = rho_t / (2.0 * (1.0 + nu_p))
    alpha2 = nu_p * rho_t / ((1.0 + nu_p) * (1.0 - 2.0 * nu_p))
    return alpha1, alpha2


def derive_nondimensional(p: PhysicalParams, phi_f: float) -> NondimParams:
    rho_t = p.young_Y * p.R**2 * p.rho_f / p.mu_f**2
    alpha1, alpha2 = lame_groups(rho_t, p.nu_p)
    alpha_t_sq = p.L_p * p.AoverV * p.mu_f
    return NondimParams(
        lambda_=p.lambda_f / p.mu_f,
        alpha1=alpha1,
        alpha2=alpha2,
        a0=alpha_t_sq * (1.0 + p.LrAr),
        Da=p.K_d * p.mu_f / p.R**2,
        phi_f=phi_f,
        phi_s=1.0 - phi_f,
    )


def coercivity_constants(ndp, fc, dn, k1, k2, *, strict=False):
    """Return ``(alpha, alpha3, alpha4)`` of the lower bound
    ``<H(V), V> >= alpha3 |V|_Y^2 - alpha4 |V|_Y``.

    With ``strict=True`` a non-positive ``alpha3`` raises
    :class:`NonPositiveAlpha3`; otherwise it is returned as is.
    """
    if not k1 > 0:
        raise ValueError("k1 must be positive")
    if k2 < k1:
        raise ValueError("k2 must be >= k1")
    alpha = min(2.0, k1 / (2.0 * ndp.Da)) / fc.c_k
    elastic = 2.0 * ndp.alpha1 / fc.c_k - fc.c_p * k2**2 / (2.0 * k1 * ndp.Da)
    alpha3 = min(alpha, elastic, ndp.a0 / 2.0)
    alpha4 = math.sqrt(
        (dn.norm_bf + math.sqrt(fc.c_t) * dn.norm_Tinf) ** 2
        + dn.norm_a0**2
        + fc.c_p * dn.norm_bs**2
    )
    if strict and alpha3 <= 0:
        raise NonPositiveAlpha3(f"alpha3 = {alpha3} <= 0: coercivity fails")
    return alpha, alpha3, alpha4


def starred_constants(ndp, fc, dn, k1, k0):
    """Constants of the unbounded-resistivity estimates.

    Returns a dict with ``alpha_star``, ``alpha3_star``, ``alpha4_star``,
    ``alpha5_star`` and the bound on ``|(V, P)|`` (``vp_bound``).
    ``alpha5_star`` is ``inf`` when its denominator is not positive.
    """
    alpha_star = min(2.0, k1 / ndp.Da) / fc.c_k
    alpha3_star = min(alpha_star, ndp.a0)
    alpha4_star = math.sqrt(
        (dn.norm_bf + math.sqrt(fc.c_t) * dn.norm_Tinf) ** 2
        + ndp.a0**2 * dn.vol_Omega
    )
    ratio = alpha4_star / alpha3_star
    denom = 2.0 * ndp.alpha1 / fc.c_k - fc.c_s * k0 * math.sqrt(fc.c_p) * ratio / ndp.Da
    num = math.sqrt(fc.c_p) * dn.norm_bs + ratio * (
        ndp.phi_s + fc.c_s * k0 * dn.vol_Omega / ndp.Da
    )
    alpha5_star = num / denom if denom > 0 else math.inf
    return {
        "alpha_star": alpha_star,
        "alpha3_star": alpha3_star,
        "alpha4_star": alpha4_star,
        "alpha5_star": alpha5_star,
        "vp_bound": ratio,
    }


@dataclass(frozen=True)
class Inequality:
    """One printed inequality ``lhs REL rhs`` with REL in {'>', '>='}."""

    name: str
    lhs: float
    rhs: float
    relation: str = ">"

    @property
    def satisfied(self) -> bool:
        if math.isnan(self.lhs) or math.isnan(self.rhs):
            return False
        if self.relation == ">":
            return self.lhs > self.rhs
        if self.relation == ">=":
            return self.lhs >= self.rhs
        raise ValueError(f"unknown relation {self.relation!r}")

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs

    def flipped(self) -> "Inequality":
        return Inequality(self.name, self.rhs, self.lhs, self.relation)


# Theorem -> member inequalities.  A verdict is the conjunction of members.
VERDICT_MEMBERS = {
    "T1": ("assu_1", "assu_2"),
    "THM1": ("P4_1", "P4_2", "P4_3"),
    "THM2_exist": ("Rassup1",),
    "THM2_unique": ("Nasum1_1", "Nasum1_2", "Nasum2"),
    "CaseB": ("P14_1", "P14_2", "P14_3"),
}


@dataclass
class ConstraintReport:
    inequalities: list
    constants: dict = field(default_factory=dict)

    def __getitem__(self, name) -> Inequality:
        for ineq in self.inequalities:
            if ineq.name == name:
                return ineq
        raise KeyError(name)

    @property
    def verdicts(self) -> dict:
        return {
            thm: all(self[name].satisfied for name in members)
            for thm, members in VERDICT_MEMBERS.items()
        }

    def failed(self) -> list:
        return [ineq.name for ineq in self.inequalities if not ineq.satisfied]

    def to_dict(self) -> dict:
        return {
            "inequalities": [
                {**asdict(i), "satisfied": i.satisfied} for i in self.inequalities
            ],
            "constants": dict(self.constants),
            "verdicts": self.verdicts,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data) -> "ConstraintReport":
        ineqs = [
            Inequality(d["name"], float(d["lhs"]), float(d["rhs"]), d["relation"])
            for d in data["inequalities"]
        ]
        return cls(ineqs, {k: float(v) for k, v in data["constants"].items()})

    @classmethod
    def from_json(cls, text) -> "ConstraintReport":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["name", "lhs", "rhs", "satisfied"])
        for i in self.inequalities:
            writer.writerow([i.name, f"{i.lhs:.17g}", f"{i.rhs:.17g}", str(i.satisfied).lower()])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = ["Parameter constraints", ""]
        width = max(len(i.name) for i in self.inequalities)
        for i in self.inequalities:
            mark = "ok  " if i.satisfied else "FAIL"
            lines.append(
                f"  [{mark}] {i.name:<{width}}  {i.lhs:.6g} {i.relation} {i.rhs:.6g}"
            )
        lines += ["", "Derived constants"]
        for key, value in self.constants.items():
            lines.append(f"  {key:<12} {value:.10g}")
        lines += ["", "Verdicts"]
        for thm, ok in self.verdicts.items():
            lines.append(f"  {thm:<12} {'holds' if ok else 'not verified'}")
        return "\n".join(lines) + "\n"


def _get(meta, key):
    value = meta.get(key) if isinstance(meta, Mapping) else getattr(meta, key, None)
    return math.nan if value is None else float(value)


def check_theorems(ndp, fc, dn, model_meta) -> ConstraintReport:
    """Evaluate every parameter inequality with explicit sides.

    ``model_meta`` maps ``k1``, ``k2``, ``k_L``, ``k0`` and ``gamma2`` to
    numbers (mapping or attribute access).  Absent values make the
    dependent inequalities NaN, hence unsatisfied.
    """
    k1, k2 = _get(model_meta, "k1"), _get(model_meta, "k2")
    k_L, k0, g2 = (_get(model_meta, k) for k in ("k_L", "k0", "gamma2"))
    Da, a1, a2, a0, phi_s = ndp.Da, ndp.alpha1, ndp.alpha2, ndp.a0, ndp.phi_s
    c_k, c_p, c_s = fc.c_k, fc.c_p, fc.c_s
    sqcp = math.sqrt(c_p)

    alpha, alpha3, alpha4 = coercivity_constants(ndp, fc, dn, k1, k2)
    st = starred_constants(ndp, fc, dn, k1, k0 if not math.isnan(k0) else 0.0)
    if math.isnan(k0):
        st["alpha5_star"] = math.nan
    r = alpha4 / alpha3
    r_star = st["alpha4_star"] / st["alpha3_star"]
    drag = c_p * k2**2 / k1
    growth = math.sqrt(2.0) * k0 * (math.sqrt(dn.vol_Omega) + sqcp * st["alpha5_star"])

    ineqs = [
        Inequality("assu_1", 2 * a1 / c_k, drag / (2 * Da), ">"),
        Inequality("assu_2", a2, phi_s**2 / (2 * a0), ">="),
        Inequality("P4_1", 2 * alpha * Da, k_L * r * c_s, ">"),
        Inequality("P4_2", 4 * a1 * Da / c_k, drag + k_L * r * c_s * (c_p + 2 * sqcp), ">"),
        Inequality("P4_3", 2 * a2, phi_s**2 / a0, ">="),
        Inequality("Rassup1", 2 * a1 / c_k, c_s * k0 * sqcp * r_star / Da, ">"),
        Inequality("Nasum1_1", 2 * st["alpha_star"] * Da / c_s, k_L * r_star + growth, ">"),
        Inequality("Nasum1_2", a2, phi_s**2 / (2 * a0), ">="),
        Inequality(
            "Nasum2", 4 * a1 * Da / (c_k * c_s), k_L * r_star * (c_p + 2 * sqcp) + growth, ">"
        ),
        Inequality("P14_1", 2 * alpha * Da, g2 * c_s * r, ">"),
        Inequality("P14_2", 4 * a1 * Da / c_k, drag + g2 * c_s * r, ">"),
        Inequality("P14_3", a2, phi_s**2 / (2 * a0) + g2 * c_s * r / Da, ">="),
    ]

    elastic = 2 * a1 / c_k - drag / (2 * Da)
    alpha6 = min(
        alpha - k_L * r * c_s / (2 * Da),
        elastic - k_L * r * c_s * (c_p + 2 * sqcp) / (2 * Da),
        a0 / 2,
    )
    alpha6_b = min(
        alpha - g2 * c_s * r / (2 * Da),
        elastic - g2 * c_s * r / (2 * Da),
        a0 / 2,
    )
    constants = {
        "alpha": alpha,
        "alpha3": alpha3,
        "alpha4": alpha4,
        "alpha_star": st["alpha_star"],
        "alpha3_star": st["alpha3_star"],
        "alpha4_star": st["alpha4_star"],
        "alpha5_star": st["alpha5_star"],
        "alpha6": alpha6,
        "alpha6_b": alpha6_b,
    }
    return ConstraintReport(ineqs, constants)


def tumour_ball_combination(c_k: float = 3.0, k0: float = 1.0, Da: float = 1e-3):
    """The tumour-tissue parameter combination on the unit 3-ball.

    Returns ``(ndp, fc, dn, meta)`` with zero body forces and unit normal
    traction.  ``k0`` is only bounded as ``0 < k0 <= 1`` in the
    parameter table; the upper end is the default.
    """
    ndp = NondimParams.from_groups(
        rho_t=1e4, nu_p=0.45, alpha_t=1.0, LrAr=1.0, Da=Da, phi_s=0.4
    )
    fc = FunctionalConstants(c_k=c_k, c_p=0.5, c_t=2.0, c_s=0.5)
    vol, area = 4.0 * math.pi / 3.0, 4.0 * math.pi
    dn = DataNorms.from_constants(T_inf=1.0, a0=ndp.a0, vol=vol, area=area)
    meta = {"k1": 0.5, "k2": 1.4, "k_L": 2e-3, "k0": k0, "gamma2": 2e-3}
    return ndp, fc, dn, meta
