"""Dirac-Cauchy-Riemann operators and the quaternionic Hessian.

The quaternionic Hessian of a real function is, by definition here, the
hyper-Hermitian matrix of the SU(2)-average of its real Hessian ``D^2 u``.
The Dirac route computes the same matrix as ``(1/4) d/dqbar_i (d/dq_j u)``;
the factor 1/4 comes from ``d/dqbar d/dq = Laplacian`` on R^4, and the order
(conjugate operator outermost) is the one matching ``h -> Re(h* A h)``.

Quaternion-valued grid functions carry the quaternion component on a
LEADING axis of length 4 so the trailing axes stay the grid axes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forms import FormSpace, ddj_function, wedge
from .hlinalg import (
    hh_eigvalsh,
    invariant_to_hh,
    moore_det_batch,
    positivity_tol,
    q_plus,
    su2_average,
    symmetrize_hh,
)
from .quaternion import left_matrix

__all__ = [
    "dirac_bar",
    "dirac",
    "dirac_hessian",
    "hess_from_real_hessian",
    "quat_hessian",
    "quadratic_hessian",
    "PshResult",
    "is_psh",
    "hess_split_residual",
    "ma_density",
    "ma_density_wedge",
    "identity_field",
    "NotPositiveError",
]

_UNITS = np.eye(4)


class NotPositiveError(ValueError):
    def __init__(self, message, index=None, eigenvalue=None):
        super().__init__(message)
        self.index = index
        self.eigenvalue = eigenvalue


def _lmul_unit(c, F):
    """Left multiplication of a leading-axis quaternion field by the unit ``e_c``."""
    L = left_matrix(_UNITS[c])
    return np.tensordot(L, F, axes=(1, 0))


def _as_quat_field(F, grid_ndim):
    F = np.asarray(F, dtype=float)
    if F.ndim == grid_ndim:
        out = np.zeros((4,) + F.shape)
        out[0] = F
        return out
    return F


def dirac_bar(diff, F, i):
    """``d/dqbar_i F = dF/dt + i dF/dx + j dF/dy + k dF/dz`` in coordinate ``q_i``."""
    F = _as_quat_field(F, diff.grid.dim)
    out = 0
    for c in range(4):
        out = out + _lmul_unit(c, diff.d1(F, 4 * i + c))
    return out


def dirac(diff, F, i):
    """``d/dq_i F``, the quaternionic conjugate operator of :func:`dirac_bar`."""
    F = _as_quat_field(F, diff.grid.dim)
    out = diff.d1(F, 4 * i)
    for c in range(1, 4):
        out = out - _lmul_unit(c, diff.d1(F, 4 * i + c))
    return out


def dirac_hessian(diff, u):
    """``(1/4) d/dqbar_i d/dq_j u`` as an ``(..., n, n, 4)`` field."""
    n = diff.grid.n
    out = np.empty(diff.grid.shape + (n, n, 4))
    for j in range(n):
        Dj = dirac(diff, u, j)
        for i in range(n):
            out[..., i, j, :] = np.moveaxis(dirac_bar(diff, Dj, i), 0, -1) / 4.0
    return out


def hess_from_real_hessian(D2):
    """Quaternionic Hessian from real Hessian matrices ``(..., 4n, 4n)``."""
    return symmetrize_hh(invariant_to_hh(su2_average(D2), check=False))


def quadratic_hessian(Q):
    """Quaternionic Hessian of the quadratic function ``h -> h^T Q h``."""
    Q = np.asarray(Q, dtype=float)
    return hess_from_real_hessian(Q + np.swapaxes(Q, -1, -2))


def quat_hessian(diff, u):
    return hess_from_real_hessian(diff.hessian(u))


def identity_field(grid, n=None):
    n = grid.n if n is None else n
    B = np.zeros(grid.shape + (n, n, 4))
    idx = np.arange(n)
    B[..., idx, idx, 0] = 1.0
    return B


@dataclass
class PshResult:
    ok: bool
    min_eigenvalue: float
    index: tuple = None

    def __bool__(self):
        return self.ok


def is_psh(diff, u, strict=True, background=None):
    """Pointwise positivity of ``background + Hess_H u``.

    Returns a :class:`PshResult`; on failure ``index`` is the grid index of the
    smallest eigenvalue.
    """
    H = quat_hessian(diff, u)
    if background is not None:
        H = H + background
    lam = hh_eigvalsh(H)
    lmin = lam[..., 0]
    idx = tuple(int(i) for i in np.unravel_index(int(np.argmin(lmin)), lmin.shape))
    worst = float(lmin[idx])
    if strict:
        ok = worst > 0
    else:
        ok = worst >= -float(np.max(positivity_tol(lam)))
    return PshResult(bool(ok), worst, None if ok else tuple(int(i) for i in idx))


def _fd_hessian_of(func, h0, dim, step=1.0):
    """Central-difference Hessian; exact (up to rounding) for quadratics."""
    E = np.eye(dim) * step
    H = np.empty((dim, dim))
    f0 = func(h0)
    for a in range(dim):
        H[a, a] = (func(h0 + E[a]) - 2 * f0 + func(h0 - E[a])) / step**2
        for b in range(a + 1, dim):
            H[a, b] = H[b, a] = (
                func(h0 + E[a] + E[b]) - func(h0 + E[a] - E[b]) - func(h0 - E[a] + E[b]) + func(h0 - E[a] - E[b])
            ) / (4 * step**2)
    return H


def hess_split_residual(D2_at_point, h0=None, rng=None):
    """``max |Hess_H p|`` for the quadratic ``p(h) = (D^2 g)_+ (h)``.

    The Hessian of ``p`` is taken by finite differences at ``h0`` (random when
    not given), independently of the projection used to build ``p``.
    """
    D2 = np.asarray(D2_at_point, dtype=float)
    P = q_plus(0.5 * (D2 + D2.T))
    dim = P.shape[0]
    if h0 is None:
        h0 = np.random.default_rng(rng).standard_normal(dim)
    scale = max(1.0, float(np.abs(P).max()))

    def p(h):
        return h @ P @ h

    Hp = _fd_hessian_of(p, np.asarray(h0, dtype=float), dim)
    return float(np.abs(hess_from_real_hessian(Hp)).max()) / scale


def ma_density(diff, u, background, strict=False):
    """Pointwise Moore determinant of ``background + Hess_H u``."""
    X = background + quat_hessian(diff, u)
    if strict:
        lam = hh_eigvalsh(X)[..., 0]
        if np.any(lam <= 0):
            idx = tuple(int(i) for i in np.unravel_index(int(np.argmin(lam)), lam.shape))
            raise NotPositiveError(
                f"background + Hess u not positive at {idx} (eigenvalue {lam[idx]:.3e})",
                index=idx,
                eigenvalue=float(lam[idx]),
            )
    return moore_det_batch(X)


def ma_density_wedge(diff, u, background):
    """``((Omega + ddJ u)^n ^ conj(Theta)) / (Omega_flat^n ^ conj(Theta))``.

    ``Omega`` is the real (2,0)-form of the background metric and ``Theta`` the
    flat reference (2n,0)-form.
    """
    n = diff.grid.n
    space = FormSpace(n, diff)
    omega = space.form_from_hh(background) + ddj_function(space, u)
    theta_bar = space.power(space.flat_omega(), n).conj()
    num = space.top_density(wedge(space.power(omega, n), theta_bar))
    den = space.top_density(wedge(space.power(space.flat_omega(), n), theta_bar))
    return np.real(num) / np.real(den)
