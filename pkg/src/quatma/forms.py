"""(p,q)-forms on the flat torus in I-holomorphic coordinates.

The complex structure I is right multiplication by ``i``.  For each
quaternionic coordinate ``q_k = t + x i + y j + z k`` the functions

    z_{2k}   = t + i x
    z_{2k+1} = y - i z

are I-holomorphic, i.e. ``q = z_{2k} + j z_{2k+1}``.  A form is stored as a
dict from strictly increasing tuples of generator indices to coefficients;
generator ``g < m`` is ``dz_g`` and ``g >= m`` is ``dzbar_{g-m}`` (``m = 2n``),
so sorted tuples read ``dz_A ^ dzbar_B``.  Coefficients may be numbers, grid
arrays, or :class:`~quatma.grid.Jet` objects.

J acts on forms by pullback, ``(J a)(v) = a(v o j)``, extended multiplicatively
and complex-linearly.  With this choice ``J`` squares to ``(-1)^(p+q)`` on
(p,q)-forms and the flat HKT form equals ``sum_k dz_{2k} ^ dz_{2k+1}``.
"""
from __future__ import annotations

from functools import lru_cache
from math import factorial

import numpy as np

from .grid import Jet, JetDiff
from .hlinalg import invariant_to_hh, symmetrize_hh
from .quaternion import I, J, K, real_embed, right_action

__all__ = [
    "Form",
    "FormSpace",
    "NotRealFormError",
    "coordinate_covectors",
    "generator_pullback",
]


class NotRealFormError(ValueError):
    pass


def _canonical(indices):
    """Sort generator indices; returns (sign, sorted tuple) or (0, None) on repeats."""
    idx = list(indices)
    if len(set(idx)) != len(idx):
        return 0, None
    sign = 1
    # insertion sort, counting transpositions
    for i in range(1, len(idx)):
        j = i
        while j > 0 and idx[j - 1] > idx[j]:
            idx[j - 1], idx[j] = idx[j], idx[j - 1]
            sign = -sign
            j -= 1
    return sign, tuple(idx)


@lru_cache(maxsize=None)
def _coordinate_data(n):
    m = 2 * n
    dim = 4 * n
    X = np.zeros(m, dtype=int)
    Y = np.zeros(m, dtype=int)
    sigma = np.zeros(m)
    for k in range(n):
        X[2 * k], Y[2 * k], sigma[2 * k] = 4 * k, 4 * k + 1, 1.0
        X[2 * k + 1], Y[2 * k + 1], sigma[2 * k + 1] = 4 * k + 2, 4 * k + 3, -1.0
    Z = np.zeros((2 * m, dim), dtype=complex)
    for a in range(m):
        Z[a, X[a]] = 1.0
        Z[a, Y[a]] = 1j * sigma[a]
        Z[m + a] = np.conj(Z[a])
    return X, Y, sigma, Z


def coordinate_covectors(n):
    """Rows are the real covectors of ``dz_0..dz_{m-1}, dzbar_0..dzbar_{m-1}``."""
    return _coordinate_data(n)[3].copy()


@lru_cache(maxsize=None)
def _pullback_table(n, which):
    L = {"I": I, "J": J, "K": K}[which]
    return generator_pullback(n, right_action(L, n))


def generator_pullback(n, R):
    """Matrix ``P`` with ``gen_g o R = sum_h P[g, h] gen_h``."""
    Z = coordinate_covectors(n)
    return (Z @ R) @ np.linalg.inv(Z)


class Form:
    """A homogeneous (p,q)-form."""

    __slots__ = ("n", "bidegree", "terms")

    def __init__(self, n, bidegree, terms=None):
        self.n = n
        self.bidegree = tuple(bidegree)
        self.terms = dict(terms or {})
        m = 2 * n
        for key in self.terms:
            p = sum(1 for g in key if g < m)
            if (p, len(key) - p) != self.bidegree:
                raise ValueError(f"monomial {key} does not have bidegree {self.bidegree}")

    @property
    def degree(self):
        return sum(self.bidegree)

    @classmethod
    def function(cls, n, f):
        return cls(n, (0, 0), {(): f})

    @classmethod
    def zero(cls, n, bidegree):
        return cls(n, bidegree, {})

    def _binary(self, other, op):
        if not isinstance(other, Form):
            raise TypeError("can only add forms to forms")
        if other.bidegree != self.bidegree:
            if not other.terms:
                return Form(self.n, self.bidegree, self.terms)
            if not self.terms:
                return Form(self.n, other.bidegree, {k: op(0, v) for k, v in other.terms.items()})
            raise ValueError(f"bidegree mismatch {self.bidegree} vs {other.bidegree}")
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = op(out[k], v) if k in out else op(0, v)
        return Form(self.n, self.bidegree, out)

    def __add__(self, other):
        return self._binary(other, lambda a, b: a + b)

    def __sub__(self, other):
        return self._binary(other, lambda a, b: a - b)

    def __neg__(self):
        return Form(self.n, self.bidegree, {k: -v for k, v in self.terms.items()})

    def __mul__(self, c):
        """Multiply coefficients by a scalar or a grid function."""
        return Form(self.n, self.bidegree, {k: v * c for k, v in self.terms.items()})

    __rmul__ = __mul__

    def __xor__(self, other):
        return wedge(self, other)

    def coefficient(self, key, default=0.0):
        return self.terms.get(tuple(key), default)

    def conj(self):
        m = 2 * self.n
        out = {}
        for key, v in self.terms.items():
            flipped = [g + m if g < m else g - m for g in key]
            sign, canon = _canonical(flipped)
            cv = v.conj() if isinstance(v, Jet) else np.conj(v)
            out[canon] = out.get(canon, 0) + sign * cv
        p, q = self.bidegree
        return Form(self.n, (q, p), out)

    def max_abs(self):
        vals = [float(np.max(np.abs(v))) for v in self.terms.values() if not isinstance(v, Jet)]
        for v in self.terms.values():
            if isinstance(v, Jet):
                vals.append(max([abs(c) for c in v.terms.values()] or [0.0]))
        return max(vals or [0.0])

    def __repr__(self):
        return f"Form(n={self.n}, bidegree={self.bidegree}, monomials={sorted(self.terms)})"


def wedge(a: Form, b: Form) -> Form:
    if a.n != b.n:
        raise ValueError("forms live on different spaces")
    p = a.bidegree[0] + b.bidegree[0]
    q = a.bidegree[1] + b.bidegree[1]
    m = 2 * a.n
    if p > m or q > m:
        return Form(a.n, (min(p, m), min(q, m)), {})
    out = {}
    for ka, va in a.terms.items():
        for kb, vb in b.terms.items():
            sign, canon = _canonical(ka + kb)
            if sign == 0:
                continue
            term = va * vb if sign > 0 else -(va * vb)
            out[canon] = out[canon] + term if canon in out else term
    return Form(a.n, (p, q), out)


class FormSpace:
    """Differential operators on forms for a given differentiation backend.

    ``diff`` is a grid scheme (:class:`~quatma.grid.SpectralDiff`, ...), a
    :class:`~quatma.grid.JetDiff`, or ``None`` for purely algebraic use.
    """

    def __init__(self, n, diff=None):
        self.n = n
        self.m = 2 * n
        self.diff = diff
        self.X, self.Y, self.sigma, self.Z = _coordinate_data(n)

    # -- pointwise algebra ---------------------------------------------------

    def function(self, f):
        return Form.function(self.n, f)

    def monomial(self, gens, coef=1.0):
        sign, canon = _canonical(gens)
        if sign == 0:
            raise ValueError("repeated generator")
        p = sum(1 for g in canon if g < self.m)
        return Form(self.n, (p, len(canon) - p), {canon: sign * coef})

    def _pullback(self, form, table):
        m = self.m
        out = {}
        for key, v in form.terms.items():
            expansion = [((), 1.0)]
            for g in key:
                row = table[g]
                nxt = []
                for gens, c in expansion:
                    for h in np.flatnonzero(np.abs(row) > 1e-14):
                        nxt.append((gens + (int(h),), c * row[h]))
                expansion = nxt
            for gens, c in expansion:
                sign, canon = _canonical(gens)
                if sign == 0:
                    continue
                c = complex(sign * c)
                if c.imag == 0.0:
                    c = c.real
                term = v * c
                out[canon] = out[canon] + term if canon in out else term
        p, q = form.bidegree
        # pullback by an anti-holomorphic map swaps types
        keys = list(out)
        if keys:
            pp = sum(1 for g in keys[0] if g < m)
            bideg = (pp, len(keys[0]) - pp)
        else:
            bideg = (q, p)
        return Form(self.n, bideg, out)

    def J(self, form):
        return self._pullback(form, _pullback_table(self.n, "J"))

    def Jinv(self, form):
        # J^2 = (-1)^deg on forms of degree deg
        out = self.J(form)
        return -out if form.degree % 2 else out

    def volume_monomial(self):
        return tuple(range(2 * self.m))

    def top20_monomial(self):
        return tuple(range(self.m))

    def flat_omega(self, coef=1.0):
        """``sum_k dz_{2k} ^ dz_{2k+1}``; equals ``-omega_J + i omega_K`` for the flat metric."""
        terms = {(2 * k, 2 * k + 1): coef for k in range(self.n)}
        return Form(self.n, (2, 0), terms)

    def power(self, form, k):
        out = self.function(1.0)
        for _ in range(k):
            out = wedge(out, form)
        return out

    # -- real 2-forms and the t isomorphism -----------------------------------

    def matrix_of_2form(self, form):
        """Complex antisymmetric ``(..., 4n, 4n)`` matrix with ``eta(u, v) = u^T M v``."""
        if form.degree != 2:
            raise ValueError("need a 2-form")
        M = 0
        for (g, h), c in form.terms.items():
            E = np.outer(self.Z[g], self.Z[h])
            M = M + np.asarray(c)[..., None, None] * (E - E.T)
        if isinstance(M, int):
            M = np.zeros((4 * self.n, 4 * self.n), dtype=complex)
        return M

    def form_of_matrix(self, M):
        """Inverse of :meth:`matrix_of_2form` (all bidegrees mixed in)."""
        M = np.asarray(M)
        Zinv = np.linalg.inv(self.Z)
        C = Zinv.T @ M @ Zinv
        by_type = {}
        for g in range(2 * self.m):
            for h in range(g + 1, 2 * self.m):
                c = C[..., g, h]
                p = int(g < self.m) + int(h < self.m)
                by_type.setdefault((p, 2 - p), {})[(g, h)] = c
        return {bd: Form(self.n, bd, t) for bd, t in by_type.items()}

    def form_from_hh(self, B):
        """Real (2,0)-form ``-omega_J + i omega_K`` of the hyper-Hermitian metric ``B``."""
        S = real_embed(np.asarray(B, dtype=float))
        Rj = right_action(J, self.n)
        Rk = right_action(K, self.n)
        M = -S @ Rj + 1j * (S @ Rk)
        parts = self.form_of_matrix(M)
        form = parts[(2, 0)]
        form.terms = {k: _clean(v) for k, v in form.terms.items()}
        return form

    def reality_defect(self, form):
        """``max |J form - conj(form)|``."""
        diff = self.J(form) - form.conj()
        return diff.max_abs()

    def t_iso(self, form, check=True, tol=1e-9):
        """Hyper-Hermitian matrix field of a real (2,0)-form, ``t(eta)(h,h) = eta(h, h o j)``."""
        if form.bidegree != (2, 0):
            raise NotRealFormError(f"t is defined on (2,0)-forms, got {form.bidegree}")
        if check:
            scale = max(1.0, form.max_abs())
            defect = self.reality_defect(form)
            if defect > tol * scale:
                raise NotRealFormError(f"form is not real: |J w - conj w| = {defect:.3e}")
        M = self.matrix_of_2form(form)
        Rj = right_action(J, self.n)
        S = (M @ Rj).real
        S = 0.5 * (S + np.swapaxes(S, -1, -2))
        return symmetrize_hh(invariant_to_hh(S, check=check))

    def top_density(self, form):
        """Coefficient of ``dz_0 ^ ... ^ dzbar_{m-1}`` of a top-degree form."""
        if form.bidegree != (self.m, self.m):
            raise ValueError(f"not a top form: {form.bidegree}")
        return form.coefficient(self.volume_monomial())

    def top20_density(self, form):
        """Real (2n,0)-forms are ``h * Omega_flat^n``; returns ``h``."""
        if form.bidegree != (self.m, 0):
            raise ValueError(f"not a (2n,0)-form: {form.bidegree}")
        return form.coefficient(self.top20_monomial()) / factorial(self.n)

    # -- differential operators ----------------------------------------------

    def _dz(self, c, a, bar=False):
        d1 = self.diff.d1
        s = self.sigma[a] * (1.0 if bar else -1.0)
        return 0.5 * (d1(c, self.X[a]) + 1j * s * d1(c, self.Y[a]))

    def _apply_first_order(self, form, bar):
        if self.diff is None:
            raise ValueError("form space has no differentiation backend")
        p, q = form.bidegree
        bideg = (p, q + 1) if bar else (p + 1, q)
        out = {}
        for key, c in form.terms.items():
            for a in range(self.m):
                g = a + self.m if bar else a
                sign, canon = _canonical((g,) + key)
                if sign == 0:
                    continue
                dc = self._dz(c, a, bar)
                term = dc if sign > 0 else -dc
                out[canon] = out[canon] + term if canon in out else term
        if bideg[0] > self.m or bideg[1] > self.m:
            return Form(self.n, form.bidegree, {})
        return Form(self.n, bideg, out)

    def d(self, form):
        """The holomorphic differential (del)."""
        return self._apply_first_order(form, bar=False)

    def dbar(self, form):
        return self._apply_first_order(form, bar=True)

    def dJ(self, form):
        """``J^{-1} o dbar o J``."""
        return self.Jinv(self.dbar(self.J(form)))

    def ddJ(self, form):
        return self.d(self.dJ(form))


def _clean(v):
    v = np.asarray(v)
    if np.iscomplexobj(v) and np.all(np.abs(v.imag) <= 1e-15 * (1 + np.abs(v.real))):
        v = v.real
    return v if v.ndim else v.item()


@lru_cache(maxsize=None)
def ddj_symbol(n):
    """Second-order symbols of ``f -> del del_J f`` on each (2,0) monomial.

    Returns ``{(g, h): C}`` with ``(ddJ f)_{gh} = sum_ab C[a, b] d_a d_b f``.
    """
    space = FormSpace(n, JetDiff(4 * n))
    form = space.ddJ(space.function(Jet.identity()))
    return {k: v.second_order_matrix(4 * n) for k, v in form.terms.items()}


def ddj_function(space: FormSpace, u):
    """``del del_J u`` for a scalar grid function via exact second derivatives.

    Equal to ``space.ddJ(space.function(u))`` for band-limited data; unlike the
    composed route it keeps the Nyquist modes, so the operators assembled from
    it have only constants in their kernel.
    """
    diff = space.diff
    d = 4 * space.n
    cache = {}

    def d2(a, b):
        key = (min(a, b), max(a, b))
        if key not in cache:
            cache[key] = diff.d2(u, *key)
        return cache[key]

    terms = {}
    for key, C in ddj_symbol(space.n).items():
        acc = 0
        for a in range(d):
            for b in range(a, d):
                c = C[a, b] + (C[b, a] if a != b else 0.0)
                if abs(c) > 1e-14:
                    acc = acc + c * d2(a, b)
        terms[key] = acc
    return Form(space.n, (2, 0), terms)
