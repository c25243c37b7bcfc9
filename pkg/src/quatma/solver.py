"""Newton solver for the quaternionic Calabi-Yau equation on the flat torus.

Solves ``det(B + Hess_H phi) = A f det(B)`` for ``phi`` and the constant
``A > 0``, where ``det`` is the Moore determinant and ``B`` a positive
hyper-Hermitian background field.  On the flat torus with ``B = Id`` this is
``(Omega + ddJ phi)^n = A f Omega^n``.

The iteration works on the log form ``log det X - log(A f det B)`` with
``X = B + Hess_H phi``.  ``A`` is eliminated each iterate by the compatibility
ratio ``A = int det X / int f det B``; the Newton system carries an extra
scalar unknown and a gauge row so that it is nonsingular.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .grid import TorusGrid, make_diff
from .hessian import NotPositiveError, identity_field, quat_hessian
from .hlinalg import hh_eigvalsh, moore_det_batch
from .quaternion import real_embed

__all__ = [
    "MAProblem",
    "MASolution",
    "ConvergenceError",
    "residual",
    "log_residual",
    "compatibility_constant",
    "linearize",
    "solve",
    "write_iteration_log",
]

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


@dataclass
class MAProblem:
    grid: TorusGrid
    f: np.ndarray
    background: np.ndarray = None
    scheme: str = "spectral"
    normalization: str = "max"
    rhs: str = "f"  # "f": A f Omega^n, "exp": A e^f Omega^n

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float)
        if self.f.shape != self.grid.shape:
            raise ValueError(f"rhs has shape {self.f.shape}, grid is {self.grid.shape}")
        if not np.all(np.isfinite(self.f)):
            raise ValueError("rhs has non-finite values")
        if self.rhs not in ("f", "exp"):
            raise ValueError("rhs must be 'f' or 'exp'")
        if self.rhs == "f" and np.min(self.f) <= 0:
            raise ValueError("rhs f must be strictly positive")
        if self.normalization not in ("max", "mean"):
            raise ValueError("normalization must be 'max' or 'mean'")
        if self.background is None:
            self.background = identity_field(self.grid)
        lam = hh_eigvalsh(self.background)[..., 0]
        if np.min(lam) <= 0:
            raise ValueError("background must be pointwise strictly positive")
        self.diff = make_diff(self.grid, self.scheme)
        self.det_background = moore_det_batch(self.background)

    @property
    def density(self):
        """The positive right-hand side density (``f`` or ``e^f``)."""
        return np.exp(self.f) if self.rhs == "exp" else self.f


@dataclass
class MASolution:
    phi: np.ndarray
    A: float
    residual_norm: float
    history: list = field(default_factory=list)
    converged: bool = True

    @property
    def iterations(self):
        return len(self.history) - 1


def _state(p: MAProblem, phi):
    X = p.background + quat_hessian(p.diff, phi)
    lam_min = hh_eigvalsh(X)[..., 0]
    return X, lam_min


def _require_positive(lam_min):
    if np.min(lam_min) <= 0:
        idx = tuple(int(i) for i in np.unravel_index(int(np.argmin(lam_min)), lam_min.shape))
        raise NotPositiveError(
            f"background + Hess phi loses positivity at {idx} (eigenvalue {lam_min[idx]:.3e})",
            index=idx,
            eigenvalue=float(lam_min[idx]),
        )


def compatibility_constant(p: MAProblem, phi):
    X, lam = _state(p, phi)
    return float(np.sum(moore_det_batch(X)) / np.sum(p.density * p.det_background))


def residual(p: MAProblem, phi, A):
    """``det(B + Hess phi) - A f det B`` pointwise."""
    X, lam = _state(p, phi)
    _require_positive(lam)
    return moore_det_batch(X) - A * p.density * p.det_background


def log_residual(p: MAProblem, phi, A):
    X, lam = _state(p, phi)
    _require_positive(lam)
    return np.log(moore_det_batch(X)) - np.log(A * p.density * p.det_background)


def _coefficients(X):
    """``(1/4) realEmbed(X)^{-1}``: second-order coefficients of the linearization."""
    return 0.25 * np.linalg.inv(real_embed(X))


class _Linearization:
    """``psi -> sum_ab C_ab d_a d_b psi`` with ``C = realEmbed(X)^{-1} / 4``."""

    def __init__(self, p: MAProblem, X):
        self.p = p
        self.C = _coefficients(X)
        d = p.grid.dim
        self.pairs = [(a, b) for a in range(d) for b in range(a, d)]
        self.weights = {
            (a, b): (self.C[..., a, b] if a == b else self.C[..., a, b] + self.C[..., b, a]) for a, b in self.pairs
        }
        self.weights = {k: v for k, v in self.weights.items() if np.abs(v).max() > 1e-15}
        self._symbol = self._mean_symbol()

    def apply(self, psi):
        diff = self.p.diff
        out = np.zeros(self.p.grid.shape)
        for (a, b), w in self.weights.items():
            out += w * diff.d2(psi, a, b)
        return out

    def _mean_symbol(self):
        g = self.p.grid
        diff = self.p.diff
        sym = np.zeros(g.shape)
        for (a, b), w in self.weights.items():
            sym = sym + np.mean(w) * _d2_symbol(diff, g, a, b)
        return sym

    def precondition(self, r):
        """Inverse of the mean-coefficient operator on mean-zero data."""
        rh = np.fft.fftn(r - r.mean())
        sym = self._symbol.copy()
        sym.flat[0] = 1.0
        out = np.fft.ifftn(rh / sym).real
        return out - out.mean()


def _d2_symbol(diff, grid, a, b):
    """Fourier symbol of ``diff.d2(., a, b)`` on the full grid."""
    d = grid.dim
    shape = grid.shape
    N = grid.sides

    def axis_symbol(ax, order):
        e = np.zeros(N[ax])
        e[0] = 1.0
        full = [1] * d
        full[ax] = N[ax]
        if order == 2:
            col = diff.d2_matrix_1d(ax)
        else:
            col = diff.d1_matrix_1d(ax)
        col = np.asarray(col.todense() if hasattr(col, "todense") else col)[:, 0]
        return np.fft.fft(col).reshape(full)

    if a == b:
        return np.broadcast_to(axis_symbol(a, 2), shape).real.copy()
    s = axis_symbol(a, 1) * axis_symbol(b, 1)
    return np.broadcast_to(s, shape).real.copy()


def linearize(p: MAProblem, phi):
    """Derivative of the log residual (``A`` held fixed) at ``phi``.

    Returns a callable ``psi -> L psi`` on grid functions.
    """
    X, lam = _state(p, phi)
    _require_positive(lam)
    lin = _Linearization(p, X)
    return lin.apply


def _newton_direction(lin: _Linearization, rhs, rtol):
    g = lin.p.grid
    N = g.npoints
    shape = g.shape

    def matvec(z):
        psi = z[:N].reshape(shape)
        c = z[N]
        top = lin.apply(psi) + c
        return np.concatenate([top.ravel(), [psi.mean()]])

    def prec(z):
        r = z[:N].reshape(shape)
        s = z[N]
        c = r.mean()
        psi = lin.precondition(r) + s
        return np.concatenate([psi.ravel(), [c]])

    op = LinearOperator((N + 1, N + 1), matvec=matvec, dtype=float)
    M = LinearOperator((N + 1, N + 1), matvec=prec, dtype=float)
    b = np.concatenate([rhs.ravel(), [0.0]])
    z, info = gmres(op, b, M=M, rtol=rtol, atol=0.0, restart=60, maxiter=50)
    if info != 0:
        res = np.linalg.norm(matvec(z) - b) / max(np.linalg.norm(b), 1e-300)
        if res > 1e-6:
            raise ConvergenceError(f"linear solve did not converge (relative residual {res:.2e})")
    return z[:N].reshape(shape)


def _normalize(phi, mode):
    return phi - (phi.max() if mode == "max" else phi.mean())


def solve(p: MAProblem, tol=None, max_iter=50, phi0=None, linear_rtol=1e-13, on_iterate=None):
    """Damped Newton iteration; returns an :class:`MASolution`.

    ``tol`` bounds the sup norm of :func:`residual` and defaults to
    ``1e-9 * max|density|``.  ``on_iterate(phi, A)`` is called on every
    accepted iterate.
    """
    dens = p.density
    if tol is None:
        tol = 1e-9 * float(np.abs(dens).max())
    phi = np.zeros(p.grid.shape) if phi0 is None else np.array(phi0, dtype=float)
    X, lam = _state(p, phi)
    _require_positive(lam)

    def evaluate(phi):
        X, lam = _state(p, phi)
        if np.min(lam) <= 0:
            return None
        det = moore_det_batch(X)
        A = float(np.sum(det) / np.sum(dens * p.det_background))
        target = A * dens * p.det_background
        F = np.log(det) - np.log(target)
        return X, lam, A, F, det - target

    X, lam, A, F, R = evaluate(phi)
    history = [(0, float(np.abs(R).max()), A, float(lam.min()))]
    if on_iterate is not None:
        on_iterate(phi, A)
    for it in range(1, max_iter + 1):
        if np.abs(R).max() < tol:
            break
        lin = _Linearization(p, X)
        psi = _newton_direction(lin, -F, linear_rtol)
        step = 1.0
        fnorm = np.sqrt(np.mean(F**2))
        while True:
            trial = phi + step * psi
            ev = evaluate(trial)
            if ev is not None and np.sqrt(np.mean(ev[3] ** 2)) <= (1 - 1e-4 * step) * fnorm:
                break
            step *= 0.5
            if step < 1e-14:
                raise ConvergenceError("line search failed to keep positivity / decrease", history)
        phi = trial
        X, lam, A, F, R = ev
        history.append((it, float(np.abs(R).max()), A, float(lam.min())))
        log.debug("newton %d: |R| = %.3e, A = %.12g, step = %g", it, history[-1][1], A, step)
        if on_iterate is not None:
            on_iterate(phi, A)
    res = float(np.abs(R).max())
    if res >= tol:
        raise ConvergenceError(f"no convergence after {max_iter} iterations (|R| = {res:.3e})", history)
    return MASolution(_normalize(phi, p.normalization), A, res, history)


def write_iteration_log(path, history):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "residual", "A", "min_eigenvalue"])
        for it, r, A, lmin in history:
            w.writerow([it, repr(float(r)), repr(float(A)), repr(float(lmin))])
