"""Acceptance criteria; each test prints one ``[PASS]``/``[FAIL]`` line."""
from __future__ import annotations

import json
import math
import time

import numpy as np
import pytest

from biphasic.assembly import (
    LoadData,
    SolutionTriple,
    assemble,
    load_norms,
    make_spaces,
    resistivity_at_quadrature,
    y_norm,
)
from biphasic.mesh import generate_unit_ball, generate_unit_square
from biphasic.params import (
    FunctionalConstants,
    NondimParams,
    check_theorems,
    starred_constants,
    tumour_ball_combination,
)
from biphasic.resistivity import (
    Bounds,
    Constant,
    DilatationAffine,
    DisplacementAnisotropic,
    Truncated,
    with_bounds,
)
from biphasic.solver import picard_case_a, picard_case_b, solve_truncated_continuation
from biphasic.verify import (
    apriori_audit,
    build_mms,
    coercivity_sample,
    convergence_study,
    dependence_study,
    trig_bubble_fields,
)

FC = FunctionalConstants()
# small-growth parameter set on the unit square (all case-(a) hypotheses hold)
SQ_NDP = NondimParams(0.0, 10.0, 10.0, 1.0, 1.0, 0.5)
SQ_MODEL = Truncated(DisplacementAnisotropic(0.01, 0.01, 1.0), 2.0)
SQ_DATA = LoadData(b_f=(1.0, 0.0), T_inf=0.3)


def _report(capsys, number, title, ok, detail=""):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}"
              + (f" -- {detail}" if detail else ""))
    assert ok, detail


@pytest.fixture(scope="module")
def square16():
    return make_spaces(generate_unit_square(16))


# --------------------------------------------------------------------------
# 1. constraint checker against an independent arithmetic oracle
# --------------------------------------------------------------------------

def _oracle(c_k, k0=1.0):
    """Every inequality side, computed directly from the closed-form definitions."""
    Da, alpha_t, rho_t, nu_p = 1e-3, 1.0, 1e4, 0.45
    k1, k2, phi_s, LrAr, k_L, g2 = 0.5, 1.4, 0.4, 1.0, 2e-3, 2e-3
    c_p = c_s = 0.5
    c_t = 2.0
    vol, area = 4 * math.pi / 3, 4 * math.pi
    a1 = rho_t / (2 * (1 + nu_p))
    a2 = nu_p * rho_t / ((1 + nu_p) * (1 - 2 * nu_p))
    a0 = alpha_t**2 * (1 + LrAr)
    nb, nT = 0.0, math.sqrt(area)          # b = 0, |T n| = 1 on the sphere
    alpha = min(2, k1 / (2 * Da)) / c_k
    alpha3 = min(alpha, 2 * a1 / c_k - c_p * k2**2 / (2 * k1 * Da), a0 / 2)
    alpha4 = math.sqrt((nb + math.sqrt(c_t) * nT) ** 2 + a0**2 * vol + c_p * nb**2)
    r = alpha4 / alpha3
    a_st = min(2, k1 / Da) / c_k
    a3_st = min(a_st, a0)
    a4_st = math.sqrt((nb + math.sqrt(c_t) * nT) ** 2 + a0**2 * vol)
    rs = a4_st / a3_st
    den5 = 2 * a1 / c_k - c_s * k0 * math.sqrt(c_p) * rs / Da
    a5_st = (math.sqrt(c_p) * nb + rs * (phi_s + c_s * k0 * vol / Da)) / den5 if den5 > 0 else math.inf
    grow = math.sqrt(2) * k0 * (math.sqrt(vol) + math.sqrt(c_p) * a5_st)
    sides = {
        "assu_1": (2 * a1 / c_k, c_p * k2**2 / (2 * k1 * Da)),
        "assu_2": (a2, phi_s**2 / (2 * a0)),
        "P4_1": (2 * alpha * Da, k_L * alpha4 * c_s / alpha3),
        "P4_2": (4 * a1 * Da / c_k, c_p * k2**2 / k1 + k_L * alpha4 * c_s * (c_p + 2 * math.sqrt(c_p)) / alpha3),
        "P4_3": (2 * a2, phi_s**2 / a0),
        "Rassup1": (2 * a1 / c_k, c_s * k0 * math.sqrt(c_p) * a4_st / (a3_st * Da)),
        "Nasum1_1": (2 * a_st * Da / c_s, k_L * a4_st / a3_st + grow),
        "Nasum1_2": (a2, phi_s**2 / (2 * a0)),
        "Nasum2": (4 * a1 * Da / (c_k * c_s), k_L * rs * (c_p + 2 * math.sqrt(c_p)) + grow),
        "P14_1": (2 * alpha * Da, g2 * c_s * r),
        "P14_2": (4 * a1 * Da / c_k, c_p * k2**2 / k1 + g2 * c_s * r),
        "P14_3": (a2, phi_s**2 / (2 * a0) + g2 * c_s * r / Da),
    }
    return sides, {"alpha1": a1, "alpha2": a2, "a0": a0}


def _rel(a, b):
    if a == b:
        return 0.0
    return abs(a - b) / max(abs(a), abs(b))


def test_criterion1_constraint_oracle(capsys):
    t0 = time.perf_counter()
    worst, lines = 0.0, []
    for c_k in (2.0, 3.0):
        ndp, fc, dn, meta = tumour_ball_combination(c_k=c_k)
        rep = check_theorems(ndp, fc, dn, meta)
        sides, groups = _oracle(c_k)
        assert [i.name for i in rep.inequalities] == list(sides)
        for ineq in rep.inequalities:
            lhs, rhs = sides[ineq.name]
            worst = max(worst, _rel(ineq.lhs, lhs), _rel(ineq.rhs, rhs))
            lines.append(f"c_k={c_k:g} {ineq.name}: {ineq.lhs:.10g} vs {ineq.rhs:.10g}")
        worst = max(worst, _rel(ndp.alpha1, groups["alpha1"]), _rel(ndp.alpha2, groups["alpha2"]),
                    _rel(ndp.a0, groups["a0"]))
    elapsed = time.perf_counter() - t0
    ndp, fc, dn, meta = tumour_ball_combination(c_k=3.0)
    rep = check_theorems(ndp, fc, dn, meta)
    spots = (
        abs(ndp.alpha1 - 3448.2759) < 1e-4 and abs(ndp.alpha2 - 31034.483) < 1e-3
        and ndp.a0 == 2.0
        and abs(rep["assu_1"].lhs - 2298.85) < 1e-2 and abs(rep["assu_1"].rhs - 980.0) < 1e-9
        and abs(rep["assu_2"].lhs - 31034.483) < 1e-3 and abs(rep["assu_2"].rhs - 0.04) < 1e-15
    )
    with capsys.disabled():
        print("\n  " + "\n  ".join(lines))
    ok = worst <= 1e-12 and spots and elapsed < 1.0
    _report(capsys, 1, "constraint checker == independent oracle", ok,
            f"max rel diff {worst:.2e} (<= 1e-12), spot values {'ok' if spots else 'WRONG'}, "
            f"{elapsed * 1e3:.1f} ms")


# --------------------------------------------------------------------------
# 2. coercivity sampling
# --------------------------------------------------------------------------

COERCIVE_SETS = [
    ("small-growth set", SQ_NDP, SQ_MODEL, SQ_DATA),
    ("constant-K set", NondimParams(0.5, 5.0, 5.0, 2.0, 0.5, 0.3),
     with_bounds(Constant(np.array([[2.0, 0.5], [0.5, 1.0]])), k1=0.79, k2=2.21),
     LoadData(b_f=lambda x: np.sin(np.pi * x), T_inf=0.5)),
]


@pytest.mark.parametrize("name, ndp, model, data", COERCIVE_SETS, ids=[c[0] for c in COERCIVE_SETS])
def test_criterion2_coercivity(capsys, square16, name, ndp, model, data):
    dn = load_norms(data, square16.mesh, ndp.a0)
    assert check_theorems(ndp, FC, dn, model.declared).verdicts["T1"]
    t0 = time.perf_counter()
    full = coercivity_sample(square16, ndp, FC, data, model, 100, seed=0)
    t1 = time.perf_counter()
    zero = coercivity_sample(square16, ndp, FC, LoadData.zero(), model, 100, seed=1)
    t2 = time.perf_counter()
    ok = (full.all_positive and zero.min_ratio >= 0.9
          and t1 - t0 < 30 and t2 - t1 < 30)
    _report(capsys, 2, f"coercivity sampling ({name})", ok,
            f"min pairing {full.min_pairing:.4g} at r0=1.1*alpha4/alpha3={full.r0:.4g}; "
            f"zero data min pairing/(alpha3 |V|^2) = {zero.min_ratio:.4g} (>= 0.9); "
            f"{t1 - t0:.1f} s + {t2 - t1:.1f} s")


# --------------------------------------------------------------------------
# 3. manufactured-solution convergence
# --------------------------------------------------------------------------

def test_criterion3_mms_rates(capsys):
    t0 = time.perf_counter()
    mms = build_mms(trig_bubble_fields(), SQ_NDP, DisplacementAnisotropic(0.5, 0.2, 1.0))
    th = convergence_study(mms, (8, 16, 32), "P2P1", tol=1e-10)
    p1 = convergence_study(mms, (8, 16, 32), "P1P1", tol=1e-10)
    elapsed = time.perf_counter() - t0
    ok_th = all(1.75 <= th.rates[k] <= 2.4 for k in ("V_H1", "U_H1", "P_L2"))
    ok_p1 = all(0.75 <= p1.rates[k] <= 1.25 for k in ("V_H1", "U_H1"))
    fmt = lambda t, ks: ", ".join(f"{k}={t.rates[k]:.3f}" for k in ks)
    _report(capsys, 3, "MMS convergence rates", ok_th and ok_p1 and elapsed < 300,
            f"P2P1 {fmt(th, ('V_H1', 'U_H1', 'P_L2'))} in [1.75, 2.4]; "
            f"P1P1 {fmt(p1, ('V_H1', 'U_H1'))} in [0.75, 1.25]; {elapsed:.1f} s")


# --------------------------------------------------------------------------
# 4. Picard behaviour
# --------------------------------------------------------------------------

def test_criterion4_picard(capsys, square16):
    tol = 1e-8
    _, r1 = picard_case_a(square16, SQ_NDP, SQ_DATA, Constant.identity(2), tol)
    ok1 = r1.converged and r1.iterations == 1
    dn = load_norms(SQ_DATA, square16.mesh, SQ_NDP.a0)
    assert check_theorems(SQ_NDP, FC, dn, SQ_MODEL.declared).verdicts["THM1"]
    s0, r2 = picard_case_a(square16, SQ_NDP, SQ_DATA, SQ_MODEL, tol, 50)
    ok2 = r2.converged and r2.iterations <= 50 and r2.contraction_estimate < 1
    rng = np.random.default_rng(0)
    gaps = []
    for _ in range(2):
        start = SolutionTriple.from_vector(square16, rng.standard_normal(square16.n_dofs))
        s, _ = picard_case_a(square16, SQ_NDP, SQ_DATA, SQ_MODEL, tol, 50, initial=start)
        gaps.append(y_norm(s - s0))
    ok3 = max(gaps) <= 10 * tol
    _report(capsys, 4, "Picard iteration", ok1 and ok2 and ok3,
            f"(i) constant K: {r1.iterations} iteration; (ii) {r2.iterations} iterations, "
            f"contraction {r2.contraction_estimate:.3g} < 1; (iii) max gap {max(gaps):.2e} "
            f"<= {10 * tol:g}")


# --------------------------------------------------------------------------
# 5. truncation continuation
# --------------------------------------------------------------------------

def test_criterion5_truncation(capsys, square16):
    tol = 1e-10
    ref, _ = picard_case_a(square16, SQ_NDP, SQ_DATA, SQ_MODEL, tol)
    k2 = SQ_MODEL.declared.k2
    gaps = []
    for m in (k2, 2 * k2, 4 * k2):
        s, _ = picard_case_a(square16, SQ_NDP, SQ_DATA, Truncated(SQ_MODEL, m), tol)
        gaps.append(y_norm(s - ref) / y_norm(ref))
    ok_bounded = max(gaps) <= tol

    growth = DisplacementAnisotropic(1.0, 1.0, 1.0)
    dn = load_norms(SQ_DATA, square16.mesh, SQ_NDP.a0)
    assert check_theorems(SQ_NDP, FC, dn, growth.declared).verdicts["THM2_exist"]
    st = starred_constants(SQ_NDP, FC, dn, growth.declared.k1, growth.declared.k0)
    _, levels = solve_truncated_continuation(square16, SQ_NDP, SQ_DATA, growth, [1.0, 2.0, 4.0, 8.0],
                                             tol=1e-8, fc=FC)
    ok_growth = all(
        lv.norm_VP <= st["vp_bound"] and lv.norm_gradU <= st["alpha5_star"]
        and lv.vp_bound == st["vp_bound"] and lv.u_bound == st["alpha5_star"]
        for lv in levels
    )
    per_m = "; ".join(f"m={lv.m:g}: |(V,P)|={lv.norm_VP:.4g}<={st['vp_bound']:.4g}, "
                      f"|grad U|={lv.norm_gradU:.4g}<={st['alpha5_star']:.4g}" for lv in levels)
    _report(capsys, 5, "truncation continuation", ok_bounded and ok_growth,
            f"bounded model max rel gap {max(gaps):.1e}; linear growth {per_m}")


# --------------------------------------------------------------------------
# 6. continuous dependence
# --------------------------------------------------------------------------

def test_criterion6_dependence(capsys, square16):
    pert = np.array([1.0, 0.5])
    rows = []
    for eps in (1e-2, 5e-3, 2.5e-3):
        d2 = LoadData(b_f=np.array([1.0, 0.0]) + eps * pert, T_inf=0.3)
        res = dependence_study(square16, SQ_DATA, d2, SQ_NDP, SQ_MODEL, FC, "frozen")
        rows.append((eps, res.sol_diff_sq, res.bound, res.holds))
    ratios = [r[1] / r[0] ** 2 for r in rows]
    spread = max(ratios) / min(ratios) - 1
    ok = spread <= 0.05 and all(r[3] for r in rows)
    sides = "; ".join(f"eps={e:g}: {d:.4e} <= {b:.4e}" for e, d, b, _ in rows)
    _report(capsys, 6, "continuous dependence", ok,
            f"ratio sol_diff_sq/eps^2 = {ratios[0]:.6g} (spread {spread:.1e} <= 5%); {sides}")


# --------------------------------------------------------------------------
# 7. structural invariants
# --------------------------------------------------------------------------

def test_criterion7_structure(capsys):
    rng = np.random.default_rng(0)
    skew = 0.0
    for mesh in (generate_unit_square(6), generate_unit_ball(1, 2), generate_unit_ball(1, 3)):
        for pairing in ("P2P1", "P1P1"):
            sp = make_spaces(mesh, pairing)
            U = SolutionTriple.from_vector(sp, rng.standard_normal(sp.n_dofs)).U_s
            K = resistivity_at_quadrature(DisplacementAnisotropic(0.3, 0.1, 1.0), U, mesh)
            S = assemble(sp, SQ_NDP, K, LoadData(b_f=np.sin, T_inf=0.3))
            vp, pv = S.block("V", "P"), S.block("P", "V")
            skew = max(skew, abs(pv + vp.T).max() / abs(vp).max())
    models = [
        Constant(np.array([[2.0, 0.3], [0.3, 1.0]])),
        DisplacementAnisotropic(0.7, 0.2, 1.0),
        DisplacementAnisotropic(0.1, 0.9, 2.0),
        DilatationAffine(1.0, 0.4),
        Truncated(DisplacementAnisotropic(0.7, 0.2, 1.0), 1.5),
        Truncated(DilatationAffine(1.0, 0.4), 1.2),
    ]
    asym, excess = 0.0, -math.inf
    for model in models:
        for d in (2, 3):
            if isinstance(model, Constant) and d == 3:
                continue
            arg = rng.normal(scale=3.0, size=(500,) if model.argument == "dilatation" else (500, d))
            K = model.eval(np.abs(arg) if model.argument == "dilatation" else arg, d)
            asym = max(asym, float(np.abs(K - np.swapaxes(K, -1, -2)).max()))
            if isinstance(model, Truncated):
                excess = max(excess, float((K - model.m).max()))
    zero_ok = all(
        np.array_equal(DisplacementAnisotropic(0.4, 0.1, c).eval(np.zeros((3, d)), d),
                       np.broadcast_to(c * np.eye(d), (3, d, d)))
        for c in (1.0, 2.5) for d in (2, 3)
    )
    ok = skew <= 1e-12 and asym <= 1e-14 and excess <= 0 and zero_ok
    _report(capsys, 7, "structural invariants", ok,
            f"skew {skew:.1e} <= 1e-12; K asymmetry {asym:.1e} <= 1e-14; "
            f"max(K_trunc - m) = {excess:.3g} <= 0; K(0) == cI exactly: {zero_ok}")


# --------------------------------------------------------------------------
# 8. a-priori audit
# --------------------------------------------------------------------------

def test_criterion8_apriori_audit(capsys, tmp_path, square16):
    sol, _ = picard_case_a(square16, SQ_NDP, LoadData.zero(), SQ_MODEL)
    dn0 = load_norms(LoadData.zero(), square16.mesh, SQ_NDP.a0)
    audit0 = apriori_audit(sol, SQ_NDP, FC, dn0, SQ_MODEL)
    zero_ok = not sol.vector.any() and audit0.lhs == 0.0 and audit0.holds

    ndp, fc, dn, meta = tumour_ball_combination()
    bounds = Bounds(**{k: meta[k] for k in ("k1", "k2", "k_L", "k0")})
    model = DilatationAffine(1.0, meta["gamma2"], bounds=bounds)
    sp = make_spaces(generate_unit_ball(2, 3))
    sol_b, rep = picard_case_b(sp, ndp, LoadData(T_inf=1.0), model, 1e-8)
    audit = apriori_audit(sol_b, ndp, fc, dn, bounds)
    path = tmp_path / "tumour_ball_audit.json"
    path.write_text(json.dumps({"audit": audit.as_dict(), "picard": rep.as_dict()}, indent=2))
    archived = json.loads(path.read_text())["audit"]["lhs"] == audit.lhs
    _report(capsys, 8, "a-priori audit", zero_ok and archived,
            f"zero data: solution == 0, lhs = {audit0.lhs:g}; tumour-ball run: "
            f"lhs {audit.lhs:.4g} vs rhs {audit.rhs:.4g} (holds={audit.holds}, informational), "
            f"archived to {path.name}")
