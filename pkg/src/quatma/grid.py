"""The discrete torus T^{4n} and differentiation schemes on it.

Grid functions are numpy arrays whose trailing ``4n`` axes are the grid axes,
ordered like the real coordinates of H^n (``t_1, x_1, y_1, z_1, t_2, ...``).
Any leading axes are treated as a batch.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np
import scipy.sparse as sp

__all__ = [
    "TorusGrid",
    "SpectralDiff",
    "FiniteDiff2",
    "Jet",
    "JetDiff",
    "make_diff",
    "random_trig_field",
]


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid on R^{4n} / (periods)."""

    n: int
    sides: tuple
    periods: tuple = None

    def __post_init__(self):
        sides = tuple(int(s) for s in self.sides)
        if self.n < 1:
            raise ValueError("quaternionic dimension must be >= 1")
        if len(sides) != 4 * self.n:
            raise ValueError(f"need {4 * self.n} side lengths, got {len(sides)}")
        if min(sides) < 4:
            raise ValueError("all grid sides must be >= 4")
        periods = self.periods if self.periods is not None else (1.0,) * len(sides)
        periods = tuple(float(p) for p in periods)
        if len(periods) != len(sides) or min(periods) <= 0:
            raise ValueError("periods must be positive, one per axis")
        object.__setattr__(self, "sides", sides)
        object.__setattr__(self, "periods", periods)

    @classmethod
    def cube(cls, n, side, period=1.0):
        return cls(n, (side,) * (4 * n), (period,) * (4 * n))

    @property
    def dim(self):
        return 4 * self.n

    @property
    def shape(self):
        return self.sides

    @property
    def npoints(self):
        return int(np.prod(self.sides))

    @property
    def spacing(self):
        return tuple(p / s for p, s in zip(self.periods, self.sides))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def volume(self):
        return float(np.prod(self.periods))

    def axis_coords(self, axis):
        return np.arange(self.sides[axis]) * self.spacing[axis]

    def coords(self, axis):
        """Coordinate ``axis`` broadcast to the full grid shape."""
        shape = [1] * self.dim
        shape[axis] = self.sides[axis]
        return np.broadcast_to(self.axis_coords(axis).reshape(shape), self.shape)

    def points(self):
        """All grid points as an ``(npoints, 4n)`` array, row-major."""
        mesh = np.meshgrid(*[self.axis_coords(a) for a in range(self.dim)], indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def wavenumbers(self, axis):
        N = self.sides[axis]
        return 2 * np.pi * np.fft.fftfreq(N, d=self.spacing[axis])

    def shift(self, f, offsets):
        """Translate a grid function by integer grid offsets (periodic)."""
        axes = tuple(range(-self.dim, 0))
        return np.roll(f, tuple(offsets), axis=axes)

    def integrate(self, f, weights=None):
        f = np.asarray(f)
        w = self.cell_volume if weights is None else weights * self.cell_volume
        return np.sum(f * w, axis=tuple(range(-self.dim, 0)))

    def mean(self, f):
        return self.integrate(f) / self.volume

    def wrap_distance(self, x, center):
        """Periodic displacement ``x - center`` reduced to the fundamental cell."""
        P = np.asarray(self.periods)
        d = np.asarray(x) - np.asarray(center)
        return d - P * np.round(d / P)


class _Diff:
    name = "base"

    def __init__(self, grid: TorusGrid):
        self.grid = grid

    def _ax(self, axis):
        return axis - self.grid.dim

    def d2(self, f, a, b):
        raise NotImplementedError

    def hessian(self, u):
        """Real Hessian field, shape ``u.shape + (4n, 4n)``."""
        d = self.grid.dim
        H = np.empty(np.shape(u) + (d, d))
        for a, b in combinations_with_replacement(range(d), 2):
            H[..., a, b] = H[..., b, a] = self.d2(u, a, b)
        return H

    def gradient(self, u):
        return np.stack([self.d1(u, a) for a in range(self.grid.dim)], axis=-1)

    def d2_matrix(self, a, b):
        """Matrix of ``d2(., a, b)`` acting on row-major flattened grid functions."""
        g = self.grid
        if a == b:
            mats = [self.d2_matrix_1d(a) if ax == a else None for ax in range(g.dim)]
        else:
            mats = [self.d1_matrix_1d(ax) if ax in (a, b) else None for ax in range(g.dim)]
        return _kron_chain(mats, g.sides, sparse=self.sparse)

    def d1_matrix(self, a):
        g = self.grid
        mats = [self.d1_matrix_1d(a) if ax == a else None for ax in range(g.dim)]
        return _kron_chain(mats, g.sides, sparse=self.sparse)


def _kron_chain(mats, sides, sparse):
    out = None
    for m, s in zip(mats, sides):
        if m is None:
            m = sp.identity(s, format="csr") if sparse else np.eye(s)
        if out is None:
            out = m
        else:
            out = sp.kron(out, m, format="csr") if sparse else np.kron(out, m)
    return out


class SpectralDiff(_Diff):
    """Fourier differentiation.

    First derivatives drop the Nyquist mode (keeps real data real).  Pure
    second derivatives keep it, so the discrete Laplacian annihilates only
    constants.  Mixed second derivatives are composed first derivatives.
    """

    name = "spectral"
    sparse = False

    def __init__(self, grid):
        super().__init__(grid)
        for s in grid.sides:
            if s % 2:
                raise ValueError(f"spectral scheme needs even grid sides, got {s}")

    def _symbol1(self, axis):
        k = self.grid.wavenumbers(axis).copy()
        k[self.grid.sides[axis] // 2] = 0.0
        return 1j * k

    def _symbol2(self, axis):
        k = self.grid.wavenumbers(axis)
        return -(k**2)

    def _apply(self, f, axis, symbol):
        f = np.asarray(f)
        ax = self._ax(axis)
        shape = [1] * f.ndim
        shape[ax] = symbol.size
        sym = symbol.reshape(shape)
        if np.iscomplexobj(f):
            return np.fft.ifft(np.fft.fft(f, axis=ax) * sym, axis=ax)
        N = symbol.size
        shape[ax] = N // 2 + 1
        sym_r = symbol[: N // 2 + 1].copy()
        return np.fft.irfft(np.fft.rfft(f, axis=ax) * sym_r.reshape(shape), n=N, axis=ax)

    def d1(self, f, axis):
        return self._apply(f, axis, self._symbol1(axis))

    def d2(self, f, a, b):
        if a == b:
            return self._apply(f, a, self._symbol2(a))
        return self.d1(self.d1(f, a), b)

    def _matrix_1d(self, symbol):
        N = symbol.size
        eye = np.eye(N)
        return np.real(np.fft.ifft(np.fft.fft(eye, axis=0) * symbol[:, None], axis=0))

    def d1_matrix_1d(self, axis):
        return self._matrix_1d(self._symbol1(axis))

    def d2_matrix_1d(self, axis):
        return self._matrix_1d(self._symbol2(axis))


class FiniteDiff2(_Diff):
    """Second-order central differences (sparse matrices)."""

    name = "fd2"
    sparse = True

    def d1(self, f, axis):
        ax = self._ax(axis)
        h = self.grid.spacing[axis]
        return (np.roll(f, -1, axis=ax) - np.roll(f, 1, axis=ax)) / (2 * h)

    def d2(self, f, a, b):
        if a == b:
            ax = self._ax(a)
            h = self.grid.spacing[a]
            return (np.roll(f, -1, axis=ax) - 2 * f + np.roll(f, 1, axis=ax)) / h**2
        return self.d1(self.d1(f, a), b)

    def d1_matrix_1d(self, axis):
        N, h = self.grid.sides[axis], self.grid.spacing[axis]
        m = sp.diags([np.ones(N - 1), -np.ones(N - 1)], [1, -1], format="lil")
        m[0, N - 1] = -1.0
        m[N - 1, 0] = 1.0
        return (m.tocsr() / (2 * h))

    def d2_matrix_1d(self, axis):
        N, h = self.grid.sides[axis], self.grid.spacing[axis]
        m = sp.diags([np.ones(N - 1), -2 * np.ones(N), np.ones(N - 1)], [1, 0, -1], format="lil")
        m[0, N - 1] = 1.0
        m[N - 1, 0] = 1.0
        return m.tocsr() / h**2


SCHEMES = {"spectral": SpectralDiff, "fd2": FiniteDiff2}


def make_diff(grid, scheme="spectral"):
    try:
        return SCHEMES[scheme](grid)
    except KeyError:
        raise ValueError(f"unknown differentiation scheme {scheme!r}") from None


class Jet:
    """Formal linear combination of derivative monomials of one scalar field.

    ``Jet({(): 1})`` stands for the field itself, ``Jet({(0, 2): c})`` for
    ``c * d_0 d_2 f``.  Used to read off the constant-coefficient symbol of a
    differential operator built from the form calculus.
    """

    __array_priority__ = 1000

    def __init__(self, terms=None):
        self.terms = {k: v for k, v in (terms or {}).items() if v != 0}

    @classmethod
    def identity(cls):
        return cls({(): 1.0})

    def __add__(self, other):
        if isinstance(other, (int, float, complex)) and other == 0:
            return self
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out.get(k, 0) + v
        return Jet(out)

    __radd__ = __add__

    def __neg__(self):
        return Jet({k: -v for k, v in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, c):
        if isinstance(c, Jet):
            raise TypeError("jets are linear; cannot multiply two jets")
        return Jet({k: v * c for k, v in self.terms.items()})

    __rmul__ = __mul__

    def __truediv__(self, c):
        return Jet({k: v / c for k, v in self.terms.items()})

    def conj(self):
        return Jet({k: np.conj(v) for k, v in self.terms.items()})

    def derivative(self, axis):
        return Jet({tuple(sorted(k + (axis,))): v for k, v in self.terms.items()})

    def coefficient(self, *axes):
        return self.terms.get(tuple(sorted(axes)), 0.0)

    def second_order_matrix(self, dim):
        """Symmetric matrix ``C`` with the jet equal to ``sum_ab C_ab d_a d_b``."""
        C = np.zeros((dim, dim), dtype=complex)
        for k, v in self.terms.items():
            if len(k) != 2:
                raise ValueError("jet is not purely second order")
            a, b = k
            if a == b:
                C[a, a] += v
            else:
                C[a, b] += v / 2
                C[b, a] += v / 2
        return C

    def is_zero(self, tol=0.0):
        return all(abs(v) <= tol for v in self.terms.values())


class JetDiff:
    """Differentiation acting on :class:`Jet` coefficients (no grid)."""

    name = "jet"

    def __init__(self, dim):
        self.dim = dim

    def d1(self, f, axis):
        if isinstance(f, Jet):
            return f.derivative(axis)
        return 0.0

    def d2(self, f, a, b):
        return self.d1(self.d1(f, a), b)


def random_trig_field(grid, rng, max_mode=2, n_terms=6, amplitude=1.0):
    """Random real trigonometric polynomial with modes ``|k_a| <= max_mode``."""
    rng = np.random.default_rng(rng)
    f = np.zeros(grid.shape)
    d = grid.dim
    for _ in range(n_terms):
        k = rng.integers(-max_mode, max_mode + 1, size=d)
        phase = rng.uniform(0, 2 * np.pi)
        arg = sum(2 * np.pi * k[a] * grid.coords(a) / grid.periods[a] for a in range(d))
        f = f + rng.standard_normal() * np.cos(arg + phase)
    return amplitude * f / n_terms
