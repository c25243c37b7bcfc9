"""The invariant suite behind ``quatma verify``.

Each check returns a :class:`CheckResult`.  Modules are looked up at call
time so that a test fixture can inject a deliberate bug.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from . import estimates, forms, gauduchon, grid, hessian, hlinalg, quaternion, solver

__all__ = ["CheckResult", "CHECKS", "run_checks"]


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    seconds: float = 0.0
    detail: str = ""

    def as_dict(self):
        return asdict(self)


def _result(name, value, tol, detail="", higher_is_better=False):
    ok = value >= tol if higher_is_better else value <= tol
    return CheckResult(name, bool(ok and np.isfinite(value)), float(value), float(tol), detail=detail)


def check_quaternion_algebra(rng):
    q = quaternion
    p, r = rng.standard_normal((2, 2000, 4))
    conj_err = np.abs(q.qmul(q.qconj(p), p) - q.qnorm2(p)[:, None] * q.ONE).max()
    anti = np.abs(q.qconj(q.qmul(p, r)) - q.qmul(q.qconj(r), q.qconj(p))).max()
    Im, Jm, Km = q.complex_structures(2)
    squares = max(np.abs(M @ M + np.eye(8)).max() for M in (Im, Jm, Km))
    comp = np.abs(Jm @ Im - Km).max()
    A, B = rng.standard_normal((2, 200, 3, 3, 4))
    hom_r = np.abs(q.real_embed(q.qmatmul(A, B)) - q.real_embed(A) @ q.real_embed(B)).max()
    hom_c = np.abs(q.complex_embed(q.qmatmul(A, B)) - q.complex_embed(A) @ q.complex_embed(B)).max()
    scale = max(1.0, np.abs(q.real_embed(q.qmatmul(A, B))).max())
    err = max(conj_err, anti, squares, comp, (hom_r + hom_c) / scale)
    return _result("quaternion_algebra", err, 1e-10)


def check_moore_conformance(rng, count=300):
    worst_real = 0.0
    worst_complex = 0.0
    for k in range(count):
        n = 1 + k % 4
        A = hlinalg.random_hyperhermitian(rng, n)
        d = hlinalg.moore_det(A)
        ref = np.linalg.det(quaternion.real_embed(A))
        worst_real = max(worst_real, abs(d**4 - ref) / max(abs(ref), 1e-300))
        C = hlinalg.random_complex_hermitian(rng, n)
        cref = np.linalg.det(C[..., 0] + 1j * C[..., 1]).real
        worst_complex = max(worst_complex, abs(hlinalg.moore_det(C) - cref) / max(1.0, abs(cref)))
    return _result("moore_conformance", max(worst_real / 1e-8, worst_complex / 1e-9), 1.0,
                   f"rel real {worst_real:.2e}, complex {worst_complex:.2e}")


def check_moore_eigenproduct(rng, count=100):
    worst = 0.0
    for k in range(count):
        A = hlinalg.random_hyperhermitian(rng, 1 + k % 4, positive=True)
        lam, _ = hlinalg.spectral_decompose(A)
        d = hlinalg.moore_det(A)
        worst = max(worst, abs(d - np.prod(lam)) / max(1.0, abs(d)))
    return _result("moore_eigenproduct", worst, 1e-8)


def check_su2_average(rng, forms_count=20, samples=20000):
    """Four-term formula against a Monte-Carlo Haar average (z-score)."""
    worst = 0.0
    qs = quaternion.sample_unit_quaternions(rng, samples)
    Rs = quaternion.right_matrix(qs)  # (samples, 4, 4)
    for _ in range(forms_count):
        Q = rng.standard_normal((4, 4))
        Q = Q + Q.T
        avg = hlinalg.su2_average(Q)
        h = rng.standard_normal(4)
        vals = np.einsum("si,ij,sj->s", Rs @ h, Q, Rs @ h)
        mc = vals.mean()
        se = vals.std(ddof=1) / np.sqrt(samples)
        worst = max(worst, abs(mc - h @ avg @ h) / max(se, 1e-300))
    Q = rng.standard_normal((8, 8))
    Q = Q + Q.T
    avg = hlinalg.su2_average(Q)
    idem = np.abs(hlinalg.su2_average(avg) - avg).max()
    comm = max(np.abs(M.T @ avg @ M - avg).max() for M in quaternion.complex_structures(2))
    if idem > 1e-12 or comm > 1e-12:
        return CheckResult("su2_average", False, float(max(idem, comm)), 1e-12, detail="not a projection")
    return _result("su2_average", worst, 5.0, "max z-score of the Monte-Carlo comparison")


def check_operator_identities(rng, side=8, fields=4):
    g = grid.TorusGrid.cube(1, side)
    diff = grid.make_diff(g)
    space = forms.FormSpace(1, diff)
    worst = 0.0
    for _ in range(fields):
        u = grid.random_trig_field(g, rng, max_mode=1)
        f = space.function(u)
        a = space.d(space.dJ(f))
        b = space.dJ(space.d(f))
        anti = max((a + b).max_abs(), 0.0) / max(1.0, a.max_abs())
        dd = space.ddJ(f)
        real = space.reality_defect(dd) / max(1.0, dd.max_abs())
        types = space.J(space.d(f)).bidegree == (0, 1)
        H = hessian.quat_hessian(diff, u)
        avg = hlinalg.su2_average(diff.hessian(u))
        hess = np.abs(quaternion.real_embed(H) - avg).max() / max(1.0, np.abs(avg).max())
        tiso = np.abs(space.t_iso(dd, check=False) - H).max() / max(1.0, np.abs(H).max())
        worst = max(worst, anti, real, hess, tiso, 0.0 if types else 1.0)
    return _result("operator_identities", worst, 1e-8)


def check_split_hessian(rng, count=50):
    worst = 0.0
    for k in range(count):
        n = 1 + k % 2
        D2 = rng.standard_normal((4 * n, 4 * n))
        worst = max(worst, hessian.hess_split_residual(D2 + D2.T, rng=rng))
    return _result("split_hessian", worst, 1e-9)


def check_det_inequality(rng, count=300):
    Q = rng.standard_normal((count, 8, 8))
    Q = Q @ np.swapaxes(Q, 1, 2)
    rep = estimates.det_inequality(Q)
    inv = hlinalg.su2_average(Q)
    eq = estimates.det_inequality(inv)
    eq_err = float(np.abs(eq.margins).max())
    if eq_err > 1e-10:
        return CheckResult("det_inequality", False, eq_err, 1e-10, detail="equality case fails")
    return _result("det_inequality", -rep.min_margin, 1e-9, f"{rep.checked} points")


def check_solver(rng, side=8):
    g = grid.TorusGrid.cube(1, side)
    one = solver.solve(solver.MAProblem(g, np.ones(g.shape)))
    trivial = max(np.abs(one.phi).max(), abs(one.A - 1))
    f = 1 + 0.1 * np.cos(2 * np.pi * g.coords(0))
    sol = solver.solve(solver.MAProblem(g, f))
    res = sol.residual_norm / 1e-9
    return _result("solver", max(trivial / 1e-12, res, sol.iterations / 30), 1.0,
                   f"{sol.iterations} Newton steps, residual {sol.residual_norm:.2e}")


def _perturbed(side, rng, eps=0.1):
    g = grid.TorusGrid.cube(1, side)
    diff = grid.make_diff(g)
    space = forms.FormSpace(1, diff)
    s = grid.random_trig_field(g, rng, max_mode=1, n_terms=4)
    s = s * (3.0 / forms.ddj_function(space, s).max_abs())
    omega = gauduchon.perturbed_omega(space, s, eps)
    return diff, space, *gauduchon.reference_forms(space, omega)


def check_gauduchon(rng, side=6):
    diff, space, omega, theta0 = _perturbed(side, rng)
    A = gauduchon.assemble_A(diff, omega, theta0)
    Astar = gauduchon.assemble_Astar(diff, omega, theta0, A=A)
    res = gauduchon.gauduchon_generator(diff, omega, theta0, A=A, Astar=Astar)
    ones = np.abs(A.apply(np.ones(diff.grid.shape))).max()
    ok = res.ratio > 1e3 and res.G.min() > 0 and res.margin > 1e-3 and ones < 1e-10
    value = res.residual if ok else np.inf
    return _result("gauduchon", value, 1e-8, f"sigma ratio {res.ratio:.2e}, min/max G {res.min_over_max:.3f}")


def check_green(rng, side=6):
    diff, space, omega, theta0 = _perturbed(side, rng)
    gen = gauduchon.gauduchon_generator(diff, omega, theta0)
    _, theta = gauduchon.reference_forms(space, omega, psi=gen.G)
    A = gauduchon.assemble_A(diff, omega, theta)
    phis = [grid.random_trig_field(diff.grid, rng, max_mode=2) for _ in range(10)]
    K = gauduchon.green_function(A)
    err = gauduchon.green_reproduction_error(K, A, phis)
    flat_diff = grid.make_diff(grid.TorusGrid.cube(1, side))
    fs = forms.FormSpace(1, flat_diff)
    A0 = gauduchon.assemble_A(flat_diff, *gauduchon.reference_forms(fs))
    circ = np.abs(gauduchon.green_function(A0).G - gauduchon.circulant_green(flat_diff)).max()
    worst = max(err / 1e-8, circ / 1e-9, 0.0 if K.G.min() >= 0 else np.inf)
    return _result("green", worst, 1.0, f"reproduction {err:.2e}, circulant {circ:.2e}, D2 {K.D2:.4f}")


def check_estimates(rng, count=20):
    fam = [estimates.random_profile(1, rng) for _ in range(count)]
    prop = estimates.key_proposition_check(fam)
    lemma = estimates.key_lemma_check(fam, prop_report=prop)
    anchor = estimates.RadialProfile(1, R=0.3, c1=1.7)
    anchor_err = abs(estimates.proposition_ratio(anchor) - estimates.quadratic_anchor_ratio(1))
    scale_err = abs(estimates.proposition_ratio(fam[0].scaled(3.3)) / estimates.proposition_ratio(fam[0]) - 1)
    ok = prop.passed and lemma.passed
    value = max(anchor_err, scale_err) if ok else np.inf
    return _result("abp_chain", value, 1e-12, f"max ratio {prop.constants['max_ratio']:.4f} <= cap {prop.constants['cap']:.4f}")


def check_c0_sweep(rng, side=8):
    g = grid.TorusGrid.cube(1, side)
    s = 1.2 * grid.random_trig_field(g, rng, max_mode=1, n_terms=4)
    rep = estimates.c0_sweep(g, estimates.exp_family(g, s, range(4)))
    const = rep.cases[0].phi_sup
    value = const if rep.passed else np.inf
    return _result("c0_sweep", value, 1e-12, f"c1 {rep.c1}, c2 {rep.c2}")


def check_l1_bound(rng, side=6, count=10):
    diff, space, omega, theta0 = _perturbed(side, rng)
    gen = gauduchon.gauduchon_generator(diff, omega, theta0)
    A = gauduchon.assemble_A(diff, omega, theta0 * gen.G)
    K = gauduchon.green_function(A)
    worst = -np.inf
    for _ in range(count):
        rep = gauduchon.l1_bound(diff, gauduchon.admissible_phi(space, omega, rng), omega, A, K)
        worst = max(worst, rep.lhs / rep.rhs)
    return _result("l1_bound", worst, 1.0, "largest lhs / rhs")


CHECKS = {
    "quaternion_algebra": check_quaternion_algebra,
    "moore_conformance": check_moore_conformance,
    "moore_eigenproduct": check_moore_eigenproduct,
    "su2_average": check_su2_average,
    "operator_identities": check_operator_identities,
    "split_hessian": check_split_hessian,
    "det_inequality": check_det_inequality,
    "solver": check_solver,
    "gauduchon": check_gauduchon,
    "green": check_green,
    "abp_chain": check_estimates,
    "c0_sweep": check_c0_sweep,
    "l1_bound": check_l1_bound,
}


def run_checks(seed=0, names=None, on_result=None):
    """Run the suite; each check gets its own generator derived from ``seed``."""
    out = []
    for i, name in enumerate(names or CHECKS):
        rng = np.random.default_rng([seed, i])
        t0 = time.perf_counter()
        try:
            res = CHECKS[name](rng)
        except Exception as exc:  # a crashing check is a failed check
            res = CheckResult(name, False, float("nan"), float("nan"), detail=f"{type(exc).__name__}: {exc}")
        res.seconds = time.perf_counter() - t0
        out.append(res)
        if on_result is not None:
            on_result(res)
    return out
