"""Hyper-Hermitian matrices, the Moore determinant and SU(2) averaging.

A hyper-Hermitian matrix ``A`` (``a_ji = conj(a_ij)``) is identified with the
SU(2)-invariant quadratic form ``h -> Re(h* A h)`` on H^n = R^{4n}; its real
symmetric matrix is ``real_embed(A)``.  Under this identification the
identity matrix corresponds to ``|h|^2``.

Quadratic forms are plain symmetric ``(4n, 4n)`` arrays ``Q`` with
``Q(h) = h^T Q h``.
"""
from __future__ import annotations

import numpy as np

from .quaternion import (
    I,
    J,
    K,
    complex_embed,
    complex_to_vec,
    qadjoint,
    qconj,
    qmatmul,
    qmatvec,
    qmul,
    real_embed,
    real_unembed,
    right_action,
    right_scale,
)

__all__ = [
    "NotHyperHermitianError",
    "NotInvariantError",
    "hermitian_defect",
    "check_hyperhermitian",
    "symmetrize_hh",
    "random_hyperhermitian",
    "random_complex_hermitian",
    "moore_det",
    "moore_det_batch",
    "moore_det_oracle_real",
    "moore_det_oracle_complex",
    "spectral_decompose",
    "hh_eigvalsh",
    "is_positive",
    "positivity_tol",
    "su2_average",
    "q_plus",
    "invariant_defect",
    "invariant_to_hh",
    "hh_to_invariant",
    "quad_eval",
]

HERMITIAN_TOL = 1e-10


class NotHyperHermitianError(ValueError):
    pass


class NotInvariantError(ValueError):
    pass


def hermitian_defect(A) -> float:
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    return float(np.abs(A - qadjoint(A)).max())


def check_hyperhermitian(A, tol=HERMITIAN_TOL):
    A = np.asarray(A, dtype=float)
    if A.ndim < 3 or A.shape[-1] != 4 or A.shape[-2] != A.shape[-3]:
        raise NotHyperHermitianError(f"expected (..., n, n, 4) array, got shape {A.shape}")
    defect = hermitian_defect(A)
    scale = max(1.0, float(np.abs(A).max()))
    if defect > tol * scale:
        raise NotHyperHermitianError(f"a_ji != conj(a_ij): defect {defect:.3e}")
    return A


def symmetrize_hh(A):
    """Nearest hyper-Hermitian matrix (average with the adjoint)."""
    A = np.asarray(A, dtype=float)
    return 0.5 * (A + qadjoint(A))


def random_hyperhermitian(rng, n, positive=False, size=None):
    rng = np.random.default_rng(rng)
    shape = (n, n, 4) if size is None else (size, n, n, 4)
    A = symmetrize_hh(rng.standard_normal(shape))
    if positive:
        # B* B is positive semidefinite; the shift keeps it well conditioned
        B = rng.standard_normal(shape)
        A = symmetrize_hh(qmatmul(qadjoint(B), B))
        idx = np.arange(n)
        A[..., idx, idx, 0] += 0.5
    return A


def random_complex_hermitian(rng, n, size=None):
    """Random complex Hermitian matrices, returned as quaternion arrays."""
    A = random_hyperhermitian(rng, n, size=size)
    A[..., 2:] = 0.0
    return A


# ---------------------------------------------------------------------------
# Moore determinant


def _schur_step(A):
    a11 = A[0, 0, 0]
    col = A[1:, 0]
    row = A[0, 1:]
    S = A[1:, 1:] - qmul(col[:, None, :], row[None, :, :]) / a11
    return a11, symmetrize_hh(S)


def moore_det(A, check=True) -> float:
    """Moore determinant by pivoted Schur-complement (cofactor) recursion.

    Each step factors out a real diagonal pivot ``a_11`` and continues with
    the hyper-Hermitian Schur complement ``a_ij - a_i1 a_11^{-1} a_1j``.
    Zero diagonals are repaired by a unipotent congruence, which leaves the
    determinant unchanged.
    """
    A = np.array(A, dtype=float)
    if check:
        check_hyperhermitian(A)
    A = symmetrize_hh(A)
    det = 1.0
    while A.shape[0] > 0:
        m = A.shape[0]
        scale = float(np.abs(A).max())
        if scale == 0.0:
            return 0.0
        diag = A[np.arange(m), np.arange(m), 0]
        p = int(np.argmax(np.abs(diag)))
        if abs(diag[p]) <= 1e-14 * scale:
            # all pivots vanish: congruence with row_1 += conj(u) row_k
            i, k = np.unravel_index(np.argmax(qnorm_off(A)), (m, m))
            A = _swap(A, 0, i)
            if k == 0:
                k = i
            a1k = A[0, k]
            u = qconj(a1k) / np.linalg.norm(a1k)
            A = _add_multiple(A, k, u)
            p = 0
        A = _swap(A, 0, p)
        if m == 1:
            return det * A[0, 0, 0]
        a11, A = _schur_step(A)
        det *= a11
    return det


def qnorm_off(A):
    norms = np.linalg.norm(A, axis=-1)
    np.fill_diagonal(norms, 0.0)
    return norms


def _swap(A, i, k):
    if i == k:
        return A
    perm = np.arange(A.shape[0])
    perm[[i, k]] = perm[[k, i]]
    return A[perm][:, perm]


def _add_multiple(A, k, u):
    """Congruence ``C* A C`` with ``C = Id + E_{k0} u`` (column 0 += column k u)."""
    A = A.copy()
    A[:, 0] = A[:, 0] + right_scale(A[:, k], u)
    A[0, :] = A[0, :] + qmul(qconj(u), A[k, :])
    return symmetrize_hh(A)


def moore_det_batch(A):
    """Vectorized Moore determinant over leading axes of ``(..., n, n, 4)``.

    Uses unpivoted elimination, which is exact for matrices with nonzero
    leading pivots (positive definite ones in particular).  Entries whose
    pivots come out tiny are recomputed with the pivoted scalar routine.
    """
    A = np.array(A, dtype=float)
    n = A.shape[-2]
    lead = A.shape[:-3]
    flat = A.reshape((-1, n, n, 4))
    det = np.ones(flat.shape[0])
    bad = np.zeros(flat.shape[0], dtype=bool)
    M = flat
    scale = np.abs(flat).reshape(flat.shape[0], -1).max(axis=1) + 1e-300
    for _ in range(n):
        a11 = M[:, 0, 0, 0]
        bad |= np.abs(a11) <= 1e-12 * scale
        safe = np.where(bad, 1.0, a11)
        det *= a11
        if M.shape[1] == 1:
            break
        col = M[:, 1:, 0]
        row = M[:, 0, 1:]
        M = M[:, 1:, 1:] - qmul(col[:, :, None, :], row[:, None, :, :]) / safe[:, None, None, None]
    for idx in np.flatnonzero(bad):
        det[idx] = moore_det(flat[idx], check=False)
    return det.reshape(lead)


def hh_eigvalsh(A):
    """Eigenvalues (ascending, each once) of hyper-Hermitian matrices, batched."""
    w = np.linalg.eigvalsh(complex_embed(A))
    return w[..., ::2]


def moore_det_oracle_real(A) -> float:
    """Fourth root of ``det(real_embed(A))`` with the sign from eigenvalue parity."""
    A = check_hyperhermitian(A)
    d = np.linalg.det(real_embed(A))
    neg = int(np.sum(hh_eigvalsh(A) < 0))
    return (-1.0) ** neg * max(d, 0.0) ** 0.25


def moore_det_oracle_complex(A) -> float:
    """Square root of ``det(complex_embed(A))`` with the sign from eigenvalue parity."""
    A = check_hyperhermitian(A)
    C = complex_embed(A)
    d = np.linalg.det(C).real
    w = np.linalg.eigvalsh(C)
    neg = int(np.sum(w < 0)) // 2
    return (-1.0) ** neg * np.sqrt(max(d, 0.0))


# ---------------------------------------------------------------------------
# spectral theory


def spectral_decompose(A, tol=1e-8):
    """Eigenvalues ``lam`` and unit eigenvectors ``w`` with ``A w_l = w_l lam_l``.

    Returns ``(lam, W)`` where ``W`` has shape ``(n, n, 4)`` and ``W[l]`` is the
    l-th eigenvector.  The vectors ``w_l o L`` (L = 1, i, j, k) form an
    orthonormal basis of R^{4n}.
    """
    A = check_hyperhermitian(A)
    n = A.shape[0]
    C = complex_embed(A)
    w, V = np.linalg.eigh(C)
    spread = max(1.0, float(np.abs(w).max()))
    if np.abs(w[0::2] - w[1::2]).max() > tol * spread:
        raise NotHyperHermitianError("eigenvalues of the embedding are not paired")
    vecs = []
    for col in range(2 * n):
        v = complex_to_vec(V[:, col])
        for u in vecs:
            # quaternionic Gram-Schmidt: v -= u (u* v)
            coef = qmul(qconj(u), v).sum(axis=0)
            v = v - right_scale(u, coef)
        nrm = np.linalg.norm(v)
        if nrm > 0.5:
            vecs.append(v / nrm)
        if len(vecs) == n:
            break
    W = np.array(vecs)
    lam = np.array([qmul(qconj(u), qmatvec(A, u)).sum(axis=0)[0] for u in W])
    return lam, W


def positivity_tol(lam):
    lam = np.asarray(lam)
    return 1e-10 * (1.0 + np.abs(lam).max(axis=-1))


def is_positive(A, strict=True) -> bool:
    lam = hh_eigvalsh(check_hyperhermitian(A))
    if strict:
        return bool(np.all(lam > 0))
    return bool(np.all(lam >= -positivity_tol(lam)))


# ---------------------------------------------------------------------------
# SU(2) averaging of quadratic forms


def _right_actions(dim):
    n = dim // 4
    return [right_action(L, n) for L in (I, J, K)]


def su2_average(Q):
    """``(Q + I*QI + J*QJ + K*QK) / 4``, batched over leading axes."""
    Q = np.asarray(Q, dtype=float)
    out = Q.copy()
    for R in _right_actions(Q.shape[-1]):
        out = out + R.T @ Q @ R
    return 0.25 * out


def q_plus(Q):
    Q = np.asarray(Q, dtype=float)
    return Q - su2_average(Q)


def invariant_defect(Q) -> float:
    return float(np.abs(q_plus(Q)).max())


def invariant_to_hh(Q, check=True):
    """Hyper-Hermitian matrix of an SU(2)-invariant quadratic form."""
    Q = np.asarray(Q, dtype=float)
    if check:
        scale = max(1.0, float(np.abs(Q).max()))
        defect = invariant_defect(Q)
        if defect > 1e-10 * scale:
            raise NotInvariantError(f"quadratic form is not SU(2)-invariant (defect {defect:.3e})")
    return symmetrize_hh(real_unembed(0.5 * (Q + np.swapaxes(Q, -1, -2))))


def hh_to_invariant(A):
    return real_embed(np.asarray(A, dtype=float))


def quad_eval(Q, h):
    h = np.asarray(h, dtype=float)
    return np.einsum("...i,...ij,...j->...", h, Q, h)


def hh_quadratic(A, v):
    """``Re(v* A v)`` for quaternion vectors ``v``."""
    return qmul(qconj(v), qmatvec(A, v)).sum(axis=-2)[..., 0]
