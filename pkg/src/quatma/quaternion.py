"""Quaternion arithmetic and the real/complex matrix embeddings.

Quaternions are stored as arrays whose trailing axis holds the four real
coefficients ``(t, x, y, z)`` of ``t + x i + y j + z k``.  Vectors in H^n are
arrays of shape ``(n, 4)`` and matrices ``(n, n, 4)``.  Scalars act on vectors
from the RIGHT; matrices act on column vectors from the left, so the two
actions commute.

Real coordinates on H^n are ordered block-wise: the real index of component
``c`` of quaternionic coordinate ``k`` is ``4 * k + c``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Quaternion",
    "qmul",
    "qconj",
    "qnorm2",
    "qmatmul",
    "qmatvec",
    "right_scale",
    "qadjoint",
    "left_matrix",
    "right_matrix",
    "real_embed",
    "real_unembed",
    "complex_embed",
    "complex_unembed",
    "vec_to_real",
    "real_to_vec",
    "vec_to_complex",
    "complex_to_vec",
    "right_action",
    "complex_structures",
    "sample_unit_quaternion",
    "sample_unit_quaternions",
]

ONE = np.array([1.0, 0.0, 0.0, 0.0])
I = np.array([0.0, 1.0, 0.0, 0.0])
J = np.array([0.0, 0.0, 1.0, 0.0])
K = np.array([0.0, 0.0, 0.0, 1.0])


def qmul(p, q):
    """Hamilton product, broadcasting over leading axes."""
    p = np.asarray(p)
    q = np.asarray(q)
    a1, b1, c1, d1 = np.moveaxis(p, -1, 0)
    a2, b2, c2, d2 = np.moveaxis(q, -1, 0)
    return np.stack(
        [
            a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
            a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
            a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
            a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
        ],
        axis=-1,
    )


def qconj(q):
    q = np.asarray(q)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def qnorm2(q):
    q = np.asarray(q)
    return np.sum(q * q, axis=-1)


@dataclass(frozen=True)
class Quaternion:
    """A single quaternion ``t + x i + y j + z k``."""

    t: float = 0.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    @classmethod
    def from_array(cls, arr) -> "Quaternion":
        t, x, y, z = (float(v) for v in np.asarray(arr, dtype=float))
        return cls(t, x, y, z)

    def to_array(self) -> np.ndarray:
        return np.array([self.t, self.x, self.y, self.z])

    def __add__(self, other):
        return Quaternion.from_array(self.to_array() + _as_qarray(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Quaternion.from_array(self.to_array() - _as_qarray(other))

    def __rsub__(self, other):
        return Quaternion.from_array(_as_qarray(other) - self.to_array())

    def __neg__(self):
        return Quaternion(-self.t, -self.x, -self.y, -self.z)

    def __mul__(self, other):
        return Quaternion.from_array(qmul(self.to_array(), _as_qarray(other)))

    def __rmul__(self, other):
        return Quaternion.from_array(qmul(_as_qarray(other), self.to_array()))

    def __truediv__(self, other):
        if isinstance(other, Quaternion):
            return self * other.inverse()
        return Quaternion.from_array(self.to_array() / float(other))

    def conj(self) -> "Quaternion":
        return Quaternion(self.t, -self.x, -self.y, -self.z)

    def norm2(self) -> float:
        return float(qnorm2(self.to_array()))

    def __abs__(self) -> float:
        return float(np.sqrt(self.norm2()))

    def inverse(self) -> "Quaternion":
        n2 = self.norm2()
        if n2 == 0.0:
            raise ZeroDivisionError("zero quaternion has no inverse")
        return Quaternion.from_array(qconj(self.to_array()) / n2)

    def isclose(self, other, atol=1e-12) -> bool:
        return bool(np.allclose(self.to_array(), _as_qarray(other), rtol=0.0, atol=atol))


def _as_qarray(v) -> np.ndarray:
    if isinstance(v, Quaternion):
        return v.to_array()
    if np.isscalar(v):
        return np.array([float(v), 0.0, 0.0, 0.0])
    return np.asarray(v, dtype=float)


def qmatmul(A, B):
    """Product of quaternion matrices ``(n, m, 4) x (m, p, 4)``; leading axes broadcast."""
    A = np.asarray(A)
    B = np.asarray(B)
    prod = qmul(A[..., :, :, None, :], B[..., None, :, :, :])
    return prod.sum(axis=-3)


def qmatvec(A, v):
    A = np.asarray(A)
    v = np.asarray(v)
    return qmul(A, v[..., None, :, :]).sum(axis=-2)


def right_scale(v, q):
    """The right module action ``v o q`` of a scalar on a vector."""
    return qmul(np.asarray(v), np.asarray(q))


def qadjoint(A):
    """Quaternionic conjugate transpose."""
    return qconj(np.swapaxes(np.asarray(A), -2, -3))


def left_matrix(q):
    """4x4 real matrix of ``p -> q p``."""
    a, b, c, d = np.moveaxis(np.asarray(q, dtype=float), -1, 0)
    rows = [
        [a, -b, -c, -d],
        [b, a, -d, c],
        [c, d, a, -b],
        [d, -c, b, a],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def right_matrix(q):
    """4x4 real matrix of ``p -> p q``."""
    a, b, c, d = np.moveaxis(np.asarray(q, dtype=float), -1, 0)
    rows = [
        [a, -b, -c, -d],
        [b, a, d, -c],
        [c, -d, a, b],
        [d, c, -b, a],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def real_embed(A):
    """Real 4n x 4n matrix of ``v -> A v`` on R^{4n}; leading axes broadcast."""
    A = np.asarray(A, dtype=float)
    n = A.shape[-2]
    blocks = left_matrix(A)  # (..., n, n, 4, 4)
    blocks = np.swapaxes(blocks, -3, -2)  # (..., n, 4, n, 4)
    return blocks.reshape(A.shape[:-3] + (4 * n, 4 * n))


def real_unembed(M):
    """Inverse of :func:`real_embed` for matrices commuting with the right action.

    Only the first column of each 4x4 block is read; callers that need the
    commutation property checked should do so separately.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[-1] // 4
    blocks = M.reshape(M.shape[:-2] + (n, 4, n, 4))
    return np.swapaxes(blocks[..., :, :, :, 0], -1, -2)


def complex_embed(A):
    """Complex 2n x 2n matrix of ``A = A1 + A2 j`` (A1, A2 complex).

    Vectors ``v = v1 + v2 j`` are represented by ``(v1, -conj(v2))``, which
    makes right multiplication by complex scalars complex-linear.  With this
    convention ``j`` maps to ``[[0, 1], [-1, 0]]`` and hyper-Hermitian matrices
    map to complex Hermitian ones.
    """
    A = np.asarray(A, dtype=float)
    A1 = A[..., 0] + 1j * A[..., 1]
    A2 = A[..., 2] + 1j * A[..., 3]
    top = np.concatenate([A1, A2], axis=-1)
    bottom = np.concatenate([-np.conj(A2), np.conj(A1)], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def complex_unembed(C):
    C = np.asarray(C)
    n = C.shape[-1] // 2
    A1 = C[..., :n, :n]
    A2 = C[..., :n, n:]
    return np.stack([A1.real, A1.imag, A2.real, A2.imag], axis=-1)


def vec_to_real(v):
    v = np.asarray(v, dtype=float)
    return v.reshape(v.shape[:-2] + (v.shape[-2] * 4,))


def real_to_vec(x):
    x = np.asarray(x, dtype=float)
    return x.reshape(x.shape[:-1] + (x.shape[-1] // 4, 4))


def vec_to_complex(v):
    v = np.asarray(v, dtype=float)
    v1 = v[..., 0] + 1j * v[..., 1]
    v2 = v[..., 2] + 1j * v[..., 3]
    return np.concatenate([v1, -np.conj(v2)], axis=-1)


def complex_to_vec(psi):
    psi = np.asarray(psi)
    n = psi.shape[-1] // 2
    v1 = psi[..., :n]
    v2 = -np.conj(psi[..., n:])
    return np.stack([v1.real, v1.imag, v2.real, v2.imag], axis=-1)


def right_action(q, n):
    """Real 4n x 4n matrix of ``h -> h o q`` on H^n."""
    return np.kron(np.eye(n), right_matrix(q))


def complex_structures(n):
    """Real matrices of the right actions of i, j, k on R^{4n}.

    Composition follows the right-action order: applying I and then J equals K,
    i.e. ``Jm @ Im == Km`` and ``Im @ Jm == -Km``.
    """
    return right_action(I, n), right_action(J, n), right_action(K, n)


def sample_unit_quaternions(rng, size):
    """Haar-uniform samples on S^3 = SU(2) as normalized Gaussians."""
    rng = np.random.default_rng(rng)
    g = rng.standard_normal((size, 4))
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def sample_unit_quaternion(rng) -> Quaternion:
    return Quaternion.from_array(sample_unit_quaternions(rng, 1)[0])
