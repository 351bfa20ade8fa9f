"""Single-mode Fock-space ground truth for trace distances."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .state import GaussianState, energy
from .symplectic import euler

__all__ = [
    "FockOperator",
    "ladder_ops",
    "quadrature_ops",
    "thermal_fock",
    "gaussian_to_fock",
    "fock_moments",
    "cutoff_for",
    "trace_distance_fock",
    "trace_norm",
]

TRACE_LOSS_TOL = 1e-6
MEAN_TOL = 1e-6
COV_TOL = 1e-5
MAX_DIM = 1600


@dataclass(frozen=True, eq=False)
class FockOperator:
    matrix: np.ndarray

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def trace_loss(self) -> float:
        return float(1.0 - np.trace(self.matrix).real)


def ladder_ops(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Truncated annihilation and creation operators on ``d`` Fock levels."""
    if d < 2:
        raise ValueError("cutoff must be >= 2")
    a = np.diag(np.sqrt(np.arange(1, d, dtype=float)), k=1).astype(complex)
    return a, a.conj().T


def quadrature_ops(d: int) -> tuple[np.ndarray, np.ndarray]:
    """``x = (a + a†)/√2`` and ``p = (a - a†)/(i√2)``."""
    a, ad = ladder_ops(d)
    return (a + ad) / math.sqrt(2), (a - ad) / (1j * math.sqrt(2))


def thermal_fock(nu: float, d: int) -> FockOperator:
    """Thermal state with symplectic eigenvalue ``ν``: weights ``(1-τ)τ^k``, ``τ = (ν-1)/(ν+1)``."""
    if nu < 1:
        raise ValueError(f"symplectic eigenvalue must be >= 1, got {nu}")
    if d < 2:
        raise ValueError("cutoff must be >= 2")
    tau = (nu - 1) / (nu + 1)
    w = (1 - tau) * tau ** np.arange(d)
    return FockOperator(np.diag(w).astype(complex))


def _expm_skew(K: np.ndarray) -> np.ndarray:
    """``exp(K)`` for anti-Hermitian ``K`` via the eigendecomposition of ``iK``."""
    H = 1j * K
    H = 0.5 * (H + H.conj().T)
    lam, U = np.linalg.eigh(H)
    return (U * np.exp(-1j * lam)) @ U.conj().T


def _build(state: GaussianState, d: int) -> np.ndarray:
    # work in a larger space so edge effects of the truncated exponentials
    # stay outside the returned block
    big = 2 * d
    a, ad = ladder_ops(big)
    nu = float(state.nu[0])
    e = euler(state.factor.S)
    z = float(e.z[0])
    O1 = e.O1
    theta = math.atan2(O1[0, 1], O1[0, 0])
    rho = thermal_fock(nu, big).matrix
    r = -math.log(z)
    if r != 0.0:
        Sq = _expm_skew(0.5 * r * (a @ a - ad @ ad))
        rho = Sq @ rho @ Sq.conj().T
    if theta != 0.0:
        R = np.exp(-1j * theta * np.arange(big))
        rho = (R[:, None] * rho) * R.conj()[None, :]
    alpha = (state.m[0] + 1j * state.m[1]) / math.sqrt(2)
    if alpha != 0:
        Dm = _expm_skew(alpha * ad - np.conj(alpha) * a)
        rho = Dm @ rho @ Dm.conj().T
    rho = rho[:d, :d]
    return 0.5 * (rho + rho.conj().T)


def fock_moments(rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First moments and covariance (``V = 2 × symmetrised covariance``) of a Fock matrix."""
    x, p = quadrature_ops(rho.shape[0])
    R = [x, p]
    m = np.array([np.trace(rho @ q).real for q in R])
    V = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            anti = R[i] @ R[j] + R[j] @ R[i]
            V[i, j] = np.trace(rho @ anti).real - 2 * m[i] * m[j]
    return m, V


def cutoff_for(state: GaussianState) -> int:
    return max(30, math.ceil(8 * (2 * energy(state) + 1)))


def gaussian_to_fock(state: GaussianState, d: int | None = None) -> FockOperator:
    """Truncated density matrix of a single-mode Gaussian state.

    ρ = D(m) R(θ) Sq(r) ρ_th(ν) Sq(r)† R(θ)† D(m)†, with ``(ν, θ, r)`` from the
    Williamson and Euler decompositions. When ``d`` is not given it starts at
    ``max(30, ⌈8(2E+1)⌉)`` and doubles until the trace loss is below 1e-6 and
    the recomputed moments match ``(m, V)``. With an explicit ``d`` the moment
    check is still enforced.
    """
    if state.n != 1:
        raise ValueError("the Fock oracle is single-mode only")
    fixed = d is not None
    dim = int(d) if fixed else cutoff_for(state)
    while True:
        rho = _build(state, dim)
        loss = 1.0 - np.trace(rho).real
        m, V = fock_moments(rho)
        ok = (
            loss < TRACE_LOSS_TOL
            and np.abs(m - state.m).max() <= MEAN_TOL
            and np.abs(V - state.V).max() <= COV_TOL
        )
        if ok:
            return FockOperator(rho)
        if fixed or 2 * dim > MAX_DIM:
            raise ValueError(
                f"cutoff {dim} insufficient: trace loss {loss:.2e}, "
                f"mean error {np.abs(m - state.m).max():.2e}, "
                f"covariance error {np.abs(V - state.V).max():.2e}"
            )
        dim *= 2


def _mat(x) -> np.ndarray:
    return x.matrix if isinstance(x, FockOperator) else np.asarray(x)


def trace_norm(A) -> float:
    A = _mat(A)
    A = 0.5 * (A + A.conj().T)
    return float(np.abs(np.linalg.eigvalsh(A)).sum())


def trace_distance_fock(rho1, rho2) -> float:
    """``½ ||ρ₁ - ρ₂||₁`` for Hermitian matrices of equal size."""
    A, B = _mat(rho1), _mat(rho2)
    if A.shape != B.shape:
        raise ValueError(f"dimension mismatch: {A.shape} vs {B.shape}")
    return 0.5 * trace_norm(A - B)
