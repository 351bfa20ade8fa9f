"""Real symplectic linear algebra in the interleaved (x1, p1, ..., xn, pn) ordering."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla
from scipy.stats import unitary_group

__all__ = [
    "ConditioningError",
    "WilliamsonDecomposition",
    "EulerDecomposition",
    "omega",
    "sympl_tol",
    "is_symplectic",
    "symplectic_inverse",
    "williamson",
    "symplectic_eigenvalues",
    "euler",
    "sym_sqrt",
    "sym_inv_sqrt",
    "sym_inv",
    "geometric_mean",
    "matrix_abs",
    "unitary_to_orthosymplectic",
    "random_orthosymplectic",
    "random_symplectic",
    "random_covariance",
]

RECON_TOL = 1e-8
SYM_TOL = 1e-10
EIG_CLAMP = 1e-300
COND_FLOOR = 1e-12


class ConditioningError(np.linalg.LinAlgError):
    """Raised when a positive matrix is too close to singular to invert reliably."""


@dataclass(frozen=True)
class WilliamsonDecomposition:
    """``V = S @ D @ S.T`` with ``S`` symplectic and ``D`` the paired diagonal."""

    S: np.ndarray
    nu: np.ndarray

    @property
    def D(self) -> np.ndarray:
        return np.diag(np.repeat(self.nu, 2))

    @property
    def n(self) -> int:
        return self.nu.size

    def reconstruct(self) -> np.ndarray:
        d = np.repeat(self.nu, 2)
        V = (self.S * d) @ self.S.T
        return 0.5 * (V + V.T)


@dataclass(frozen=True)
class EulerDecomposition:
    """``S = O1 @ Z @ O2`` with orthogonal-symplectic ``O1, O2``."""

    O1: np.ndarray
    z: np.ndarray
    O2: np.ndarray

    @property
    def Z(self) -> np.ndarray:
        return np.diag(np.column_stack([self.z, 1.0 / self.z]).ravel())

    def reconstruct(self) -> np.ndarray:
        zz = np.column_stack([self.z, 1.0 / self.z]).ravel()
        return (self.O1 * zz) @ self.O2


def _check_square_even(M: np.ndarray, name: str = "matrix") -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    if M.shape[0] % 2:
        raise ValueError(f"{name} must have even dimension, got {M.shape[0]}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def _check_symmetric(M: np.ndarray, name: str = "matrix") -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    scale = max(1.0, np.abs(M).max(initial=0.0))
    if np.abs(M - M.T).max(initial=0.0) > SYM_TOL * scale:
        raise ValueError(f"{name} is not symmetric")
    return 0.5 * (M + M.T)


def omega(n: int) -> np.ndarray:
    """Symplectic form for ``n`` modes, ``⊕ [[0, 1], [-1, 0]]``."""
    if int(n) != n or n < 1:
        raise ValueError(f"mode count must be a positive integer, got {n}")
    return np.kron(np.eye(int(n)), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def sympl_tol(S: np.ndarray) -> float:
    return 1e-8 * (1.0 + np.linalg.norm(S, 2))


def is_symplectic(S: np.ndarray, tol: float | None = None) -> bool:
    """True iff ``||S Ω Sᵀ - Ω||_2 <= tol`` (default tolerance scales with ``||S||``)."""
    S = _check_square_even(S, "S")
    if tol is None:
        tol = sympl_tol(S)
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    W = omega(S.shape[0] // 2)
    return bool(np.linalg.norm(S @ W @ S.T - W, 2) <= tol)


def symplectic_inverse(S: np.ndarray) -> np.ndarray:
    """``S⁻¹ = Ω Sᵀ Ωᵀ``, exact for symplectic ``S`` and free of inversion error."""
    S = np.asarray(S, dtype=float)
    W = omega(S.shape[0] // 2)
    return W @ S.T @ W.T


def williamson(V: np.ndarray) -> WilliamsonDecomposition:
    """Williamson normal form of a symmetric positive-definite matrix.

    Uses the Cholesky factor ``V = L Lᵀ`` and the real Schur form of the
    antisymmetric matrix ``Lᵀ Ω L``; each 2x2 block ``[[0, ν], [-ν, 0]]`` gives a
    symplectic eigenvalue, and ``S = L Q D^{-1/2}``. Blocks are flipped to a
    positive upper-right entry and ordered by descending ν. For degenerate ν
    any valid ``S`` is returned.

    Args:
        V: symmetric positive-definite ``2n x 2n`` matrix.

    Returns:
        WilliamsonDecomposition with ``nu`` sorted descending.
    """
    V = _check_square_even(V, "V")
    V = _check_symmetric(V, "V")
    n = V.shape[0] // 2
    try:
        L = np.linalg.cholesky(V)
    except np.linalg.LinAlgError:
        lam = np.linalg.eigvalsh(V)[0]
        raise ValueError(f"V is not positive definite (smallest eigenvalue {lam:.3e})") from None
    A = L.T @ omega(n) @ L
    A = 0.5 * (A - A.T)
    T, Q = sla.schur(A, output="real")
    nu = np.empty(n)
    for j in range(n):
        i = 2 * j
        b, c = T[i, i + 1], T[i + 1, i]
        if b * c >= 0:
            raise np.linalg.LinAlgError("Schur form lacks a 2x2 rotation block")
        nu[j] = np.sqrt(-b * c)
        if b < 0:
            Q[:, i + 1] = -Q[:, i + 1]
    order = np.argsort(-nu, kind="stable")
    cols = np.column_stack([2 * order, 2 * order + 1]).ravel()
    Q = Q[:, cols]
    nu = nu[order]
    S = (L @ Q) / np.sqrt(np.repeat(nu, 2))
    return WilliamsonDecomposition(S=S, nu=nu)


def symplectic_eigenvalues(V: np.ndarray) -> np.ndarray:
    """Symplectic eigenvalues, one per mode, in descending order."""
    return williamson(V).nu


def _lagrangian_frame(U: np.ndarray, vals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthosymplectic ``O`` diagonalising a positive symplectic matrix.

    ``U`` holds orthonormal eigenvectors with eigenvalues ``vals`` sorted
    descending. For eigenvalue ``z > 1``, ``Ωᵀ e`` spans the ``1/z`` space, so
    columns pair as ``(e, Ωᵀ e)``. Unit-eigenvalue subspaces are handled by a
    symplectic Gram-Schmidt pass.
    """
    dim = U.shape[0]
    n = dim // 2
    Wt = omega(n).T
    cols: list[np.ndarray] = []
    for k in range(dim):
        if len(cols) == dim:
            break
        v = U[:, k].copy()
        if cols:
            B = np.column_stack(cols)
            v -= B @ (B.T @ v)
            v -= B @ (B.T @ v)
        nv = np.linalg.norm(v)
        if nv < 0.5:
            continue
        v /= nv
        cols.extend([v, Wt @ v])
    if len(cols) != dim:
        raise np.linalg.LinAlgError("failed to build a symplectic eigenbasis")
    return np.column_stack(cols), vals


def euler(S: np.ndarray, tol: float | None = None) -> EulerDecomposition:
    """Euler (Bloch-Messiah) decomposition ``S = O1 Z O2``.

    Polar route: the SVD ``S = W Σ Xᵀ`` gives ``P = W Σ Wᵀ = (S Sᵀ)^{1/2}`` and
    the orthogonal polar factor ``U = W Xᵀ``. ``P`` is diagonalised by an
    orthosymplectic ``O1`` built from its eigenvectors, and ``O2 = O1ᵀ U``.
    Squeezing factors ``z_j >= 1`` are sorted descending.
    """
    S = _check_square_even(S, "S")
    if not is_symplectic(S, tol):
        raise ValueError("S is not symplectic")
    W, sig, Xt = np.linalg.svd(S)
    U = W @ Xt
    O1, _ = _lagrangian_frame(W, sig)
    P = (W * sig) @ W.T
    P = 0.5 * (P + P.T)
    d = np.einsum("ij,ij->j", O1, P @ O1)
    z = np.maximum(d[0::2], 1.0)
    order = np.argsort(-z, kind="stable")
    cols = np.column_stack([2 * order, 2 * order + 1]).ravel()
    O1 = O1[:, cols]
    z = z[order]
    O2 = O1.T @ U
    return EulerDecomposition(O1=O1, z=z, O2=O2)


def _eigh_pd(A: np.ndarray, name: str) -> tuple[np.ndarray, np.ndarray]:
    A = _check_symmetric(A, name)
    lam, U = np.linalg.eigh(A)
    top = np.abs(lam).max(initial=0.0)
    if lam[0] <= 0:
        raise ValueError(f"{name} is not positive definite (smallest eigenvalue {lam[0]:.3e})")
    if lam[0] < COND_FLOOR * top:
        raise ConditioningError(
            f"{name} is too ill-conditioned: λ_min={lam[0]:.3e}, ||{name}||={top:.3e}"
        )
    return np.maximum(lam, EIG_CLAMP), U


def sym_sqrt(A: np.ndarray) -> np.ndarray:
    lam, U = _eigh_pd(A, "A")
    return (U * np.sqrt(lam)) @ U.T


def sym_inv_sqrt(A: np.ndarray) -> np.ndarray:
    lam, U = _eigh_pd(A, "A")
    return (U / np.sqrt(lam)) @ U.T


def sym_inv(A: np.ndarray) -> np.ndarray:
    lam, U = _eigh_pd(A, "A")
    return (U / lam) @ U.T


def geometric_mean(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Matrix geometric mean ``A # B = √A (A^{-1/2} B A^{-1/2})^{1/2} √A``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise ValueError(f"dimension mismatch: {A.shape} vs {B.shape}")
    lam, U = _eigh_pd(A, "A")
    _eigh_pd(B, "B")
    rA = (U * np.sqrt(lam)) @ U.T
    irA = (U / np.sqrt(lam)) @ U.T
    C = irA @ B @ irA
    mid = sym_sqrt(0.5 * (C + C.T))
    G = rA @ mid @ rA
    return 0.5 * (G + G.T)


def matrix_abs(X: np.ndarray) -> np.ndarray:
    """``|X| = √(X²)`` for symmetric ``X``."""
    X = _check_symmetric(X, "X")
    lam, U = np.linalg.eigh(X)
    R = (U * np.abs(lam)) @ U.T
    return 0.5 * (R + R.T)


def unitary_to_orthosymplectic(Umat: np.ndarray) -> np.ndarray:
    """Real orthosymplectic matrix of the passive map ``a -> U a``."""
    X, Y = Umat.real, Umat.imag
    n = X.shape[0]
    O = np.empty((2 * n, 2 * n))
    O[0::2, 0::2] = X
    O[0::2, 1::2] = -Y
    O[1::2, 0::2] = Y
    O[1::2, 1::2] = X
    return O


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def random_orthosymplectic(n: int, rng=None) -> np.ndarray:
    """Haar-random orthogonal-symplectic matrix (image of a Haar unitary)."""
    rng = _as_rng(rng)
    if n == 1:
        th = rng.uniform(0.0, 2 * np.pi)
        Umat = np.array([[np.exp(1j * th)]])
    else:
        Umat = unitary_group.rvs(n, random_state=rng)
    return unitary_to_orthosymplectic(Umat)


def random_symplectic(n: int, squeeze_max: float = 1.0, rng=None) -> np.ndarray:
    """Random ``O1 Z O2`` with log-uniform ``z_j`` in ``[1, squeeze_max]``."""
    if squeeze_max < 1:
        raise ValueError("squeeze_max must be >= 1")
    rng = _as_rng(rng)
    O1 = random_orthosymplectic(n, rng)
    O2 = random_orthosymplectic(n, rng)
    z = np.exp(rng.uniform(0.0, np.log(squeeze_max), size=n))
    zz = np.column_stack([z, 1.0 / z]).ravel()
    return (O1 * zz) @ O2


def random_covariance(
    n: int, squeeze_max: float = 1.0, temp_max: float = 1.0, rng=None
) -> np.ndarray:
    """Random valid covariance ``S D Sᵀ`` with ν_j uniform in ``[1, temp_max]``."""
    if temp_max < 1:
        raise ValueError("temp_max must be >= 1")
    rng = _as_rng(rng)
    S = random_symplectic(n, squeeze_max, rng)
    nu = rng.uniform(1.0, temp_max, size=n)
    V = (S * np.repeat(nu, 2)) @ S.T
    return 0.5 * (V + V.T)
