"""Discrete Gauduchon theory on the flat torus.

For a strictly positive real (2,0)-form ``Omega`` (not necessarily
del-closed) and a positive (2n,0)-form ``Theta0``,

    A f  = ddJ f ^ Omega^{n-1} ^ conj(Theta0) / (Omega^n ^ conj(Theta0))
    A* g = ddJ(g Omega^{n-1} ^ conj(Theta0)) / (Omega^n ^ conj(Theta0))

with respect to ``<f, g> = int f g Omega^n ^ conj(Theta0)``.  A generator of
``ker A*`` is one-signed, and ``Theta = G Theta0`` satisfies
``ddJ(Omega^{n-1} ^ conj(Theta)) = 0``.  With that ``Theta`` the operator A
has a Green kernel that is bounded below; shifting it by a constant makes it
non-negative.

Both operators are assembled as matrices over the row-major flattened grid:
dense for the spectral scheme, sparse for ``fd2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .forms import Form, FormSpace, _canonical, ddj_function, ddj_symbol, wedge
from .grid import random_trig_field
from .hlinalg import hh_eigvalsh

__all__ = [
    "GauduchonError",
    "DegenerateFormError",
    "EllipticOperator",
    "GauduchonResult",
    "GreenKernel",
    "L1Report",
    "reference_forms",
    "perturbed_omega",
    "scaling_check",
    "assemble_A",
    "assemble_Astar",
    "gauduchon_generator",
    "gauduchon_residual",
    "green_function",
    "circulant_green",
    "l1_bound",
    "admissible_phi",
]

DENSE_LIMIT = 4096


class GauduchonError(RuntimeError):
    pass


class DegenerateFormError(GauduchonError, ValueError):
    """A form that must be pointwise positive is not."""


def reference_forms(space: FormSpace, omega=None, psi=None):
    """``Omega`` (flat by default) and ``Theta0 = psi Omega^n``; ``psi`` defaults to 1."""
    omega = space.flat_omega() if omega is None else omega
    theta0 = space.power(omega, space.n)
    if psi is not None:
        theta0 = theta0 * psi
    return omega, theta0


def perturbed_omega(space: FormSpace, s, eps=0.1):
    """``Omega_flat + eps ddJ s``."""
    return space.flat_omega() + ddj_function(space, s) * eps


def _positive_or_raise(density, what):
    density = np.asarray(density)
    imag = np.abs(np.imag(density)).max() if np.iscomplexobj(density) else 0.0
    re = np.real(density)
    if imag > 1e-9 * max(1.0, np.abs(re).max()):
        raise DegenerateFormError(f"{what} is not real (imaginary part {imag:.2e})")
    if np.min(re) <= 0:
        idx = tuple(int(i) for i in np.unravel_index(int(np.argmin(re)), re.shape))
        raise DegenerateFormError(f"{what} is not positive: value {re[idx]:.3e} at grid index {idx}")
    return re


@dataclass
class EllipticOperator:
    """Matrix of a second-order operator plus the weights of its inner product."""

    grid: object
    matrix: object  # ndarray or scipy sparse
    weights: np.ndarray  # flattened, includes the cell volume
    density: np.ndarray  # (Omega^n ^ conj Theta0) / flat reference, grid shaped
    coefficients: dict = None

    @property
    def dense(self):
        return sp.issparse(self.matrix) is False

    def apply(self, f):
        f = np.asarray(f)
        return (self.matrix @ f.ravel()).reshape(self.grid.shape)

    def inner(self, f, g):
        return float(np.sum(np.ravel(f) * np.ravel(g) * self.weights))

    def to_dense(self):
        return self.matrix.toarray() if sp.issparse(self.matrix) else np.asarray(self.matrix)

    def weighted_transpose(self):
        """Adjoint in ``<.,.>_w``: ``W^{-1} A^T W``."""
        w = self.weights
        if sp.issparse(self.matrix):
            return sp.diags(1.0 / w) @ self.matrix.T @ sp.diags(w)
        return (self.matrix.T * w[None, :]) / w[:, None]


def _d2_matrix(diff, a, b):
    return diff.d2_matrix(a, b)


def _mul_diag_left(v, M):
    v = np.ravel(v)
    if sp.issparse(M):
        return sp.diags(v) @ M
    return M * v[:, None]


def _mul_diag_right(M, v):
    v = np.ravel(v)
    if sp.issparse(M):
        return M @ sp.diags(v)
    return M * v[None, :]


def _zeros(N, sparse):
    return sp.csr_matrix((N, N)) if sparse else np.zeros((N, N))


def _densities(space, omega, theta0):
    n = space.n
    lam = hh_eigvalsh(space.t_iso(omega, check=False))[..., 0]
    if np.min(lam) <= 0:
        idx = tuple(int(i) for i in np.unravel_index(int(np.argmin(lam)), np.shape(lam)))
        raise DegenerateFormError(f"Omega is not positive: eigenvalue {np.min(lam):.3e} at grid index {idx}")
    theta_bar = theta0.conj()
    beta = wedge(space.power(omega, n - 1), theta_bar)
    flat = space.flat_omega()
    ref = space.top_density(wedge(space.power(flat, n), space.power(flat, n).conj()))
    D = _positive_or_raise(space.top_density(wedge(space.power(omega, n), theta_bar)) / ref, "Omega^n ^ conj(Theta0)")
    D = np.broadcast_to(D, space.diff.grid.shape).copy()
    return beta, D, ref


def _wedge_sign(S, T):
    sign, _ = _canonical(tuple(S) + tuple(T))
    return sign


def operator_coefficients(space, omega, theta0):
    """Real coefficient fields ``a_ab`` with ``A f = sum_ab a_ab d_a d_b f`` (a <= b)."""
    beta, D, ref = _densities(space, omega, theta0)
    symbols = ddj_symbol(space.n)
    d = 4 * space.n
    C = 0
    for S, CS in symbols.items():
        kappa = 0
        for T, bT in beta.terms.items():
            s = _wedge_sign(S, T)
            if s:
                kappa = kappa + s * np.asarray(bT)
        if np.isscalar(kappa) and kappa == 0:
            continue
        C = C + np.asarray(kappa)[..., None, None] * CS
    C = C / (ref * D)[..., None, None]
    imag = np.abs(np.imag(C)).max()
    if imag > 1e-9 * max(1.0, np.abs(C).max()):
        raise GauduchonError(f"operator coefficients are not real ({imag:.2e})")
    C = np.real(C)
    coeffs = {}
    for a in range(d):
        for b in range(a, d):
            v = C[..., a, b] if a == b else C[..., a, b] + C[..., b, a]
            if np.abs(v).max() > 1e-14:
                coeffs[(a, b)] = np.broadcast_to(v, space.diff.grid.shape).copy()
    return coeffs, D


def assemble_A(diff, omega: Form, theta0: Form) -> EllipticOperator:
    """Matrix of ``f -> ddJ f ^ Omega^{n-1} ^ conj(Theta0) / Omega^n ^ conj(Theta0)``.

    Row sums are removed from the diagonal so that ``A 1 = 0`` holds to
    machine precision.
    """
    grid = diff.grid
    space = FormSpace(grid.n, diff)
    coeffs, D = operator_coefficients(space, omega, theta0)
    N = grid.npoints
    sparse = diff.sparse
    if not sparse and N > DENSE_LIMIT:
        raise GauduchonError(f"dense assembly limited to {DENSE_LIMIT} points (got {N}); use scheme 'fd2'")
    M = _zeros(N, sparse)
    for (a, b), c in coeffs.items():
        M = M + _mul_diag_left(c, _d2_matrix(diff, a, b))
    rowsum = np.asarray(M.sum(axis=1)).ravel()
    if sparse:
        M = (M - sp.diags(rowsum)).tocsr()
    else:
        M[np.arange(N), np.arange(N)] -= rowsum
    weights = D.ravel() * grid.cell_volume
    return EllipticOperator(grid, M, weights, D, coeffs)


def assemble_Astar(diff, omega: Form, theta0: Form, A: EllipticOperator = None, tol=1e-9):
    """``g -> ddJ(g Omega^{n-1} ^ conj Theta0) / Omega^n ^ conj Theta0`` by the form route.

    Each coefficient ``beta_T`` of ``Omega^{n-1} ^ conj(Theta0)`` is multiplied
    by ``g`` first and differentiated afterwards.  When ``A`` is given, the
    result is checked against the weighted transpose of ``A``.
    """
    grid = diff.grid
    space = FormSpace(grid.n, diff)
    beta, D, ref = _densities(space, omega, theta0)
    symbols = ddj_symbol(grid.n)
    N = grid.npoints
    sparse = diff.sparse
    d = 4 * grid.n
    M = sp.csr_matrix((N, N), dtype=complex) if sparse else np.zeros((N, N), dtype=complex)
    d2cache = {}
    for T, bT in beta.terms.items():
        bT = np.broadcast_to(np.asarray(bT), grid.shape)
        for S, CS in symbols.items():
            s = _wedge_sign(S, T)
            if not s:
                continue
            for a in range(d):
                for b in range(a, d):
                    c = CS[a, b] if a == b else CS[a, b] + CS[b, a]
                    if abs(c) < 1e-14:
                        continue
                    if (a, b) not in d2cache:
                        d2cache[(a, b)] = _d2_matrix(diff, a, b)
                    M = M + (s * c) * _mul_diag_right(d2cache[(a, b)], bT)
    M = _mul_diag_left(1.0 / (ref * D), M)
    Mi = M.imag
    Mr = M.real
    scale = max(1.0, float(abs(Mr).max()))
    if float(abs(Mi).max()) > 1e-9 * scale:
        raise GauduchonError("adjoint operator has an imaginary part; convention bug")
    Mr = Mr.tocsr() if sparse else np.ascontiguousarray(Mr)
    Astar = EllipticOperator(grid, Mr, D.ravel() * grid.cell_volume, D)
    if A is not None:
        T = A.weighted_transpose()
        gap = abs(T - Mr).max() if sparse else np.abs(T - Mr).max()
        if float(gap) > tol * scale:
            raise GauduchonError(f"form-route adjoint disagrees with weighted transpose ({float(gap):.2e})")
    return Astar


@dataclass
class GauduchonResult:
    G: np.ndarray  # grid shaped, positive
    theta: Form
    singular_values: np.ndarray  # two smallest, ascending
    ratio: float  # sigma_2 / sigma_1
    integral: float  # <G, 1>_w
    margin: float  # <G,1>_w / (|G|_w |1|_w)
    min_over_max: float
    residual: float  # sup |ddJ(Omega^{n-1} ^ conj Theta)| / scale


def _smallest_singular(M, k=2):
    if sp.issparse(M):
        if M.shape[0] <= DENSE_LIMIT:
            M = M.toarray()
        else:
            u, s, vt = spla.svds(M.tocsc(), k=k, which="SM", tol=1e-12, maxiter=20000)
            order = np.argsort(s)
            return s[order], vt[order]
    u, s, vt = sla.svd(M, lapack_driver="gesdd")
    order = np.argsort(s)[:k]
    return s[order], vt[order]


def _d2_bound(diff):
    """Upper bound for the sup norm of any pure second derivative operator."""
    out = 0.0
    for a in range(diff.grid.dim):
        m = diff.d2_matrix_1d(a)
        out = max(out, float(abs(m).sum(axis=1).max()))
    return out


def gauduchon_residual(diff, omega, theta):
    """Sup norm of the top coefficient of ``ddJ(Omega^{n-1} ^ conj Theta)``.

    Normalized by ``max|coefficients| * ||d^2||`` so that it is scale free.
    """
    space = FormSpace(diff.grid.n, diff)
    beta = wedge(space.power(omega, diff.grid.n - 1), theta.conj())
    total = 0
    scale = 0.0
    for T, bT in beta.terms.items():
        bT = np.broadcast_to(np.asarray(bT), diff.grid.shape)
        scale = max(scale, float(np.abs(bT).max()))
        piece = wedge(ddj_function(space, bT), space.monomial(T))
        if piece.terms:
            total = total + space.top_density(piece)
    return float(np.abs(total).max()) / max(scale * _d2_bound(diff), 1e-300)


def gauduchon_generator(diff, omega, theta0, A=None, Astar=None, ratio_min=1e3) -> GauduchonResult:
    """Sign-definite generator of ``ker A*`` and the Gauduchon form ``G Theta0``."""
    if A is None:
        A = assemble_A(diff, omega, theta0)
    if Astar is None:
        Astar = assemble_Astar(diff, omega, theta0, A=A)
    s, vt = _smallest_singular(Astar.matrix)
    ratio = float(s[1] / max(s[0], 1e-300))
    if ratio <= ratio_min:
        raise GauduchonError(f"kernel of A* not numerically one-dimensional: sigma = {s}")
    G = vt[0].real.copy()
    ones = np.ones_like(G)
    integral = A.inner(G, ones)
    if integral < 0:
        G, integral = -G, -integral
    if G.min() <= 0:
        raise GauduchonError(f"kernel generator changes sign: min {G.min():.3e}, max {G.max():.3e}")
    scale = integral / A.inner(ones, ones)
    G /= scale
    integral = A.inner(G, ones)
    margin = integral / np.sqrt(A.inner(G, G) * A.inner(ones, ones))
    G = G.reshape(diff.grid.shape)
    theta = theta0 * G
    res = gauduchon_residual(diff, omega, theta)
    return GauduchonResult(G, theta, s, ratio, integral, float(margin), float(G.min() / G.max()), res)


@dataclass
class GreenKernel:
    G: np.ndarray  # (N, N), G[x, y]
    weights: np.ndarray
    D1: float  # shift added so that min G = 0
    D2: float  # max_x sum_y |G(x, y)| w(y)

    def reproduce(self, A: EllipticOperator, phi):
        """``-sum_y G(x, y) A phi(y) w(y)``."""
        Aphi = A.apply(phi).ravel()
        return -(self.G @ (Aphi * self.weights)).reshape(np.shape(phi))


def green_function(A: EllipticOperator, check_phis=None, tol=1e-8) -> GreenKernel:
    """Green kernel of ``A`` on the complement of the constants.

    Solves ``-G W A = I - 1 w^T / sum(w)`` through the transposed bordered
    system, fixes the free additive constant by zero row sums, then shifts by
    a constant so that ``min G = 0``.
    """
    M = A.to_dense()
    w = A.weights
    N = M.shape[0]
    MW = M * w[:, None]  # rows of W A
    left_defect = np.abs(MW.sum(axis=0)).max() / max(1.0, np.abs(MW).max())
    if left_defect > 1e-9:
        raise GauduchonError(
            f"sum_x w(x) A(x, .) = {left_defect:.2e}: Theta is not Gauduchon for this Omega"
        )
    bordered = np.zeros((N + 1, N + 1))
    bordered[:N, :N] = MW.T
    bordered[:N, N] = 1.0
    bordered[N, :N] = 1.0
    rhs = np.zeros((N + 1, N))
    rhs[:N] = -(np.eye(N) - np.outer(w, np.ones(N)) / w.sum())
    sol = sla.lu_solve(sla.lu_factor(bordered), rhs)
    G = sol[:N].T.copy()
    D1 = float(-G.min())
    G += D1
    D2 = float(np.max(np.abs(G) @ w))
    kernel = GreenKernel(G, w, D1, D2)
    if check_phis is not None:
        err = green_reproduction_error(kernel, A, check_phis)
        if err > tol:
            raise GauduchonError(f"Green reproduction error {err:.2e}")
    return kernel


def green_reproduction_error(kernel: GreenKernel, A: EllipticOperator, phis):
    worst = 0.0
    w = kernel.weights
    for phi in phis:
        phi = np.asarray(phi)
        target = phi - np.sum(phi.ravel() * w) / w.sum()
        got = kernel.reproduce(A, phi)
        worst = max(worst, float(np.abs(got - target).max() / max(1.0, np.abs(phi).max())))
    return worst


def circulant_green(diff, density=1.0):
    """Closed-form Green kernel of ``A = c Laplacian`` for flat ``Omega`` and ``Theta0``.

    Diagonalizes the translation-invariant operator by the DFT.  Returned with
    zero row sums and shifted so the minimum is 0.
    """
    grid = diff.grid
    space = FormSpace(grid.n, diff)
    omega, theta0 = reference_forms(space)
    coeffs, D = operator_coefficients(space, omega, theta0)
    from .solver import _d2_symbol

    lam = np.zeros(grid.shape)
    for (a, b), c in coeffs.items():
        lam = lam + float(np.mean(c)) * _d2_symbol(diff, grid, a, b)
    w = grid.cell_volume * density
    lam_flat = lam.copy()
    lam_flat.flat[0] = 1.0
    ghat = -1.0 / (w * lam_flat)
    ghat.flat[0] = 0.0
    g = np.fft.ifftn(ghat).real.ravel()
    pts = np.indices(grid.shape).reshape(grid.dim, -1).T
    diffidx = (pts[:, None, :] - pts[None, :, :]) % np.array(grid.shape)
    flat_index = np.ravel_multi_index(tuple(diffidx.reshape(-1, grid.dim).T), grid.shape)
    G = g[flat_index].reshape(grid.npoints, grid.npoints)
    return G - G.min()


@dataclass
class L1Report:
    lhs: float  # normalized L1 norm of phi
    rhs: float  # max_x int G(x, .) w
    chain_value: float  # -int G(x0, y) A phi(y) w(y) at the max point x0
    chain_target: float  # phi(x0) - mean_w(phi)
    min_eigenvalue: float

    @property
    def passed(self):
        return self.lhs <= self.rhs * (1 + 1e-12)


def l1_bound(diff, phi, omega, A: EllipticOperator, kernel: GreenKernel) -> L1Report:
    """Evaluate the L1 chain for an admissible ``phi`` (``max phi = 0``)."""
    space = FormSpace(diff.grid.n, diff)
    phi = np.asarray(phi, dtype=float)
    if abs(phi.max()) > 1e-12 * max(1.0, np.abs(phi).max()):
        raise ValueError("phi must be normalized by max phi = 0")
    shifted = omega + ddj_function(space, phi)
    lam = hh_eigvalsh(space.t_iso(shifted, check=False))[..., 0]
    if lam.min() <= 0:
        idx = tuple(int(i) for i in np.unravel_index(int(np.argmin(lam)), lam.shape))
        raise ValueError(f"Omega + ddJ phi not positive at {idx} (eigenvalue {lam[idx]:.3e})")
    w = kernel.weights
    lhs = float(np.sum(np.abs(phi).ravel() * w) / w.sum())
    x0 = int(np.argmax(phi.ravel()))
    chain = float(kernel.reproduce(A, phi).ravel()[x0])
    target = float(phi.ravel()[x0] - np.sum(phi.ravel() * w) / w.sum())
    return L1Report(lhs, kernel.D2, chain, target, float(lam.min()))


def admissible_phi(space: FormSpace, omega: Form, rng, max_mode=2):
    """Random trig field scaled so that ``Omega + ddJ phi > 0``, normalized to ``max phi = 0``."""
    rng = np.random.default_rng(rng)
    phi = random_trig_field(space.diff.grid, rng, max_mode=max_mode)
    lam0 = hh_eigvalsh(space.t_iso(omega, check=False))[..., 0].min()
    dd = hh_eigvalsh(space.t_iso(ddj_function(space, phi), check=False))
    worst = max(float(np.abs(dd).max()), 1e-300)
    phi = phi * (rng.uniform(0.1, 0.9) * lam0 / worst)
    return phi - phi.max()


def scaling_check(diff, omega, theta0, G, phi):
    """``max|A*_phi(phi^{1-n} G)| / scale`` with ``Omega_phi = phi Omega``.

    ``G`` must generate ``ker A*`` for ``(Omega, Theta0)`` and ``phi > 0``.
    For ``n = 1`` the test function is ``G`` itself.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.min() <= 0:
        raise ValueError("scaling function must be positive")
    n = diff.grid.n
    omega_phi = omega * phi
    Astar = assemble_Astar(diff, omega_phi, theta0)
    g = (phi ** (1 - n) * np.asarray(G)).ravel()
    out = Astar.matrix @ g
    scale = float(abs(Astar.matrix).max()) * float(np.abs(g).max())
    return float(np.abs(out).max()) / scale
