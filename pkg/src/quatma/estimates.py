"""Numerical checks of the ABP-type estimate chain.

* :func:`det_inequality` compares ``det D^2 u`` with ``det(Hess_H u)^4`` where
  ``D^2 u`` is positive semidefinite.
* :func:`key_proposition_check` evaluates
  ``|u|_inf / (diam(D) |f|_{L^4}^{1/n})`` on radial plurisubharmonic functions
  vanishing on the boundary of a ball.
* :func:`key_lemma_check` evaluates both sides of
  ``|u|_inf <= a + C (diam/a)^{4n} |u|_1 |f|_inf^4``.
* :func:`c0_sweep` solves a family of equations with growing ``|f|_inf`` and
  fits the envelope ``c1 + c2 x^4``.
"""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import gamma, pi

import numpy as np
from scipy.integrate import quad
from scipy.optimize import nnls

from .hessian import hess_from_real_hessian
from .hlinalg import hh_eigvalsh, moore_det_batch, positivity_tol
from .solver import ConvergenceError, MAProblem, solve

__all__ = [
    "DetInequalityReport",
    "det_inequality",
    "det_inequality_field",
    "RadialProfile",
    "random_profile",
    "ball_volume",
    "abp_constant",
    "EstimateReport",
    "key_proposition_check",
    "key_lemma_check",
    "SweepCase",
    "SweepReport",
    "fit_envelope",
    "exp_family",
    "c0_sweep",
    "write_sweep_csv",
]

log = logging.getLogger(__name__)


# -- pointwise determinant inequality ----------------------------------------


@dataclass
class DetInequalityReport:
    margins: np.ndarray  # relative margins, NaN where D^2 u is not >= 0
    checked: int
    excluded: int

    @property
    def min_margin(self):
        m = self.margins[np.isfinite(self.margins)]
        return float(m.min()) if m.size else float("inf")

    @property
    def passed(self):
        return self.min_margin >= -1e-9


def det_inequality(D2):
    """Relative margins ``(det(Hess_H)^4 - det D^2) / max(1, det(Hess_H)^4)``.

    ``D2`` is a batch of real symmetric ``(..., 4n, 4n)`` Hessians.  Points
    where ``D2`` is not positive semidefinite (relaxed tolerance) get NaN.
    """
    D2 = np.asarray(D2, dtype=float)
    D2 = 0.5 * (D2 + np.swapaxes(D2, -1, -2))
    lam = np.linalg.eigvalsh(D2)
    ok = lam[..., 0] >= -positivity_tol(lam)
    lhs = np.prod(lam, axis=-1)
    rhs = moore_det_batch(hess_from_real_hessian(D2)) ** 4
    margins = (rhs - lhs) / np.maximum(1.0, np.abs(rhs))
    margins = np.where(ok, margins, np.nan)
    return DetInequalityReport(margins, int(ok.sum()), int((~ok).sum()))


def det_inequality_field(diff, u, shift=0.0):
    """:func:`det_inequality` on the grid Hessian of ``u + shift |h|^2 / 2``."""
    D2 = diff.hessian(u)
    if shift:
        D2 = D2 + shift * np.eye(diff.grid.dim)
    return det_inequality(D2)


# -- radial test functions ---------------------------------------------------


def ball_volume(dim, R=1.0):
    return pi ** (dim / 2) / gamma(dim / 2 + 1) * R**dim


def sphere_area(dim):
    """Area of the unit sphere in R^dim."""
    return 2 * pi ** (dim / 2) / gamma(dim / 2)


def abp_constant(n):
    """``omega_N^{-1/N}`` with ``N = 4n``: the classical ABP constant of the
    estimate ``sup u^- <= diam / omega_N^{1/N} |det D^2 u|^{1/N}_{L^N}``."""
    N = 4 * n
    return ball_volume(N) ** (-1.0 / N)


@dataclass
class RadialProfile:
    """``u(h) = c1 (r^2 - R^2) + c2 (e^{b r^2} - e^{b R^2}) + c3 (r^{2p} - R^{2p})``.

    Nonnegative coefficients and ``p >= 2`` (or ``p = 1``) make ``u`` plurisubharmonic: it is
    a convex nondecreasing function of ``r^2``.
    """

    n: int
    R: float = 1.0
    c1: float = 1.0
    c2: float = 0.0
    b: float = 1.0
    c3: float = 0.0
    p: float = 2.0
    label: str = "quadratic"

    def __post_init__(self):
        if min(self.c1, self.c2, self.c3) < 0 or self.c1 + self.c2 + self.c3 <= 0:
            raise ValueError("profile coefficients must be nonnegative, not all zero")
        if not (self.p == 1 or self.p >= 2) or self.R <= 0 or self.b < 0:
            raise ValueError("need p = 1 or p >= 2, R > 0, b >= 0")

    def scaled(self, lam):
        return RadialProfile(self.n, self.R, lam * self.c1, lam * self.c2, self.b, lam * self.c3, self.p, self.label)

    def value(self, r):
        s = np.asarray(r, dtype=float) ** 2
        S = self.R**2
        return (
            self.c1 * (s - S)
            + self.c2 * (np.exp(self.b * s) - np.exp(self.b * S))
            + self.c3 * (s**self.p - S**self.p)
        )

    def _derivs(self, s):
        """First and second derivatives in ``s = r^2``."""
        g1 = self.c1 + self.c2 * self.b * np.exp(self.b * s) + self.c3 * self.p * s ** (self.p - 1)
        g2 = self.c2 * self.b**2 * np.exp(self.b * s) + self.c3 * self.p * (self.p - 1) * s ** (self.p - 2)
        return g1, g2

    def real_hessian(self, x):
        """Exact ``D^2 u`` at points ``x`` of R^{4n}: ``2 g' Id + 4 g'' x x^T``."""
        x = np.asarray(x, dtype=float)
        g1, g2 = self._derivs(np.sum(x * x, axis=-1))
        g1 = np.asarray(g1)[..., None, None]
        g2 = np.asarray(g2)[..., None, None]
        return 2 * g1 * np.eye(x.shape[-1]) + 4 * g2 * (x[..., :, None] * x[..., None, :])

    def _axis_points(self, r):
        r = np.asarray(r, dtype=float)
        x = np.zeros(r.shape + (4 * self.n,))
        x[..., 0] = r
        return x

    def density(self, r):
        """``f = det(Hess_H u)`` at radius ``r`` (Moore route on the exact Hessian)."""
        f = moore_det_batch(hess_from_real_hessian(self.real_hessian(self._axis_points(r))))
        return float(f) if np.ndim(f) == 0 else f

    # norms over the ball
    def sup_norm(self):
        return float(-self.value(0.0))

    def l1_norm(self):
        N = 4 * self.n
        val, _ = quad(lambda r: -self.value(r) * r ** (N - 1), 0.0, self.R, epsabs=0, epsrel=1e-12, limit=200)
        return sphere_area(N) * val

    def lp_density(self, p=4):
        N = 4 * self.n
        val, _ = quad(lambda r: self.density(r) ** p * r ** (N - 1), 0.0, self.R, epsabs=0, epsrel=1e-12, limit=200)
        return (sphere_area(N) * val) ** (1.0 / p)

    def sup_density(self, samples=2001):
        # f is nondecreasing in r for these profiles; sampled for safety
        return float(np.max(self.density(np.linspace(0.0, self.R, samples))))

    def is_psh(self, samples=64):
        x = self._axis_points(np.linspace(0.0, self.R, samples))
        H = hess_from_real_hessian(self.real_hessian(x))
        return bool(np.all(hh_eigvalsh(H)[..., 0] > 0))


def random_profile(n, rng, R=None):
    """Random member of the radial family (the "bump" profiles)."""
    rng = np.random.default_rng(rng)
    R = float(rng.uniform(0.2, 0.45)) if R is None else R
    c = rng.uniform(0.0, 1.0, size=3) * (rng.uniform(size=3) < 0.8)
    c[0] = max(c[0], 0.05)  # strictly psh at the center
    return RadialProfile(
        n,
        R=R,
        c1=float(c[0]),
        c2=float(c[1]),
        b=float(rng.uniform(0.5, 6.0)),
        c3=float(c[2]),
        p=float(rng.uniform(2.0, 4.0)),
        label="random",
    )


@dataclass
class EstimateReport:
    family: str
    records: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    passed: bool = True
    skipped: list = field(default_factory=list)


def proposition_ratio(profile: RadialProfile):
    """``|u|_inf / (diam |f|_{L^4}^{1/n})`` for a radial profile on its ball."""
    return profile.sup_norm() / (2 * profile.R * profile.lp_density(4) ** (1.0 / profile.n))


def quadratic_anchor_ratio(n):
    """Closed form of :func:`proposition_ratio` for ``c (r^2 - R^2)``."""
    return 1.0 / (4.0 * ball_volume(4 * n) ** (1.0 / (4 * n)))


def key_proposition_check(profiles, cap=None):
    """Ratios of the key proposition over a family; ``cap`` defaults to :func:`abp_constant`."""
    profiles = list(profiles)
    if not profiles:
        raise ValueError("empty family")
    n = profiles[0].n
    cap = abp_constant(n) if cap is None else cap
    rep = EstimateReport("key_proposition")
    for i, prof in enumerate(profiles):
        if not prof.is_psh():
            rep.skipped.append((i, "not plurisubharmonic"))
            continue
        ratio = proposition_ratio(prof)
        rep.records.append(
            {
                "case": i,
                "label": prof.label,
                "sup_u": prof.sup_norm(),
                "f_L4": prof.lp_density(4),
                "diam": 2 * prof.R,
                "ratio": ratio,
            }
        )
    ratios = np.array([r["ratio"] for r in rep.records])
    rep.constants = {"cap": cap, "max_ratio": float(ratios.max()), "min_ratio": float(ratios.min())}
    rep.passed = bool(np.all(ratios <= cap))
    return rep


def lemma_sides(profile: RadialProfile, a, C):
    """``(lhs, rhs)`` of the key lemma on the profile's ball with depth ``a``."""
    depth = profile.sup_norm()
    if not 0 < a < depth:
        raise ValueError(f"need 0 < a < sup|u| = {depth:.3e}")
    n = profile.n
    diam = 2 * profile.R
    rhs = a + C * (diam / a) ** (4 * n) * profile.l1_norm() * profile.sup_density() ** 4
    return depth, rhs


def key_lemma_check(profiles, a_fraction=0.5, C=None, prop_report=None):
    """Key lemma on each profile with ``a = a_fraction * sup|u|``.

    ``C`` defaults to ``K^{4n}`` with ``K`` the largest proposition ratio of
    ``prop_report`` (computed on the same family when not given).
    """
    profiles = list(profiles)
    n = profiles[0].n
    if C is None:
        if prop_report is None:
            prop_report = key_proposition_check(profiles)
        C = prop_report.constants["max_ratio"] ** (4 * n)
    rep = EstimateReport("key_lemma", constants={"C": C, "a_fraction": a_fraction})
    for i, prof in enumerate(profiles):
        depth = prof.sup_norm()
        a = a_fraction * depth
        # the sublevel set {u < inf u + a} is a ball of radius < R
        if not prof.value(prof.R) > -depth + a:
            rep.skipped.append((i, "sublevel set not relatively compact"))
            continue
        lhs, rhs = lemma_sides(prof, a, C)
        rep.records.append({"case": i, "a": a, "lhs": lhs, "rhs": rhs, "ok": lhs <= rhs})
    rep.passed = all(r["ok"] for r in rep.records)
    return rep


# -- C0 sweep -----------------------------------------------------------------


@dataclass
class SweepCase:
    label: str
    f: np.ndarray
    f_sup: float = None
    f_l4: float = None
    phi_sup: float = None
    A: float = None
    iterations: int = None
    residual: float = None
    status: str = "pending"


@dataclass
class SweepReport:
    cases: list
    c1: float = None
    c2: float = None
    passed: bool = False

    def envelope(self, x):
        return self.c1 + self.c2 * np.asarray(x) ** 4


def fit_envelope(x, y):
    """Least squares ``c1 + c2 x^4`` (nonnegative), then ``c1`` raised so no point lies above."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    M = np.stack([np.ones_like(x), x**4], axis=1)
    (c1, c2), _ = nnls(M, y)
    c1 += max(0.0, float(np.max(y - (c1 + c2 * x**4))))
    return float(c1), float(c2)


def exp_family(grid, s, ks=range(6)):
    """``f_k = exp(k s) / mean(exp(k s))``."""
    out = []
    for k in ks:
        f = np.exp(k * np.asarray(s))
        out.append((f"k={k}", f / f.mean()))
    return out


def c0_sweep(grid, family, scheme="spectral", tol=None, max_iter=50, workers=1, on_iterate=None):
    """Solve each ``(label, f)`` with the max-zero gauge and fit the envelope."""
    cases = [SweepCase(label, np.asarray(f, dtype=float)) for label, f in family]

    def run(case):
        case.f_sup = float(np.abs(case.f).max())
        case.f_l4 = float(grid.integrate(case.f**4) ** 0.25)
        try:
            sol = solve(MAProblem(grid, case.f, scheme=scheme, normalization="max"), tol=tol, max_iter=max_iter,
                        on_iterate=on_iterate)
        except (ConvergenceError, ValueError) as exc:
            case.status = f"failed: {exc}"
            log.warning("sweep case %s failed: %s", case.label, exc)
            return case
        case.phi_sup = float(np.abs(sol.phi).max())
        case.A = sol.A
        case.iterations = sol.iterations
        case.residual = sol.residual_norm
        case.status = "ok"
        return case

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            cases = list(ex.map(run, cases))
    else:
        cases = [run(c) for c in cases]
    good = [c for c in cases if c.status == "ok"]
    rep = SweepReport(cases)
    if len(good) >= 2:
        x = np.array([c.f_sup for c in good])
        y = np.array([c.phi_sup for c in good])
        rep.c1, rep.c2 = fit_envelope(x, y)
        rep.passed = bool(np.all(y <= rep.envelope(x) * (1 + 1e-12) + 1e-15)) and len(good) == len(cases)
    return rep


SWEEP_COLUMNS = ["case", "f_sup", "f_L4", "phi_sup", "A", "iterations", "residual", "envelope", "below", "status"]


def write_sweep_csv(path, rep: SweepReport):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS + ["c1", "c2"])
        for c in rep.cases:
            env = rep.envelope(c.f_sup) if rep.c1 is not None and c.f_sup is not None else None
            below = None if env is None or c.phi_sup is None else bool(c.phi_sup <= env * (1 + 1e-12) + 1e-15)
            row = [c.label, c.f_sup, c.f_l4, c.phi_sup, c.A, c.iterations, c.residual, env, below, c.status, rep.c1, rep.c2]
            w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for v in row])
