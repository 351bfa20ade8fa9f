"""Trace-distance bounds, empirical Tr(V⁻¹) bounds and the sample planner."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .state import GaussianState, apply_symplectic, cov_inverse, mahalanobis, new_state
from .symplectic import matrix_abs, sym_inv

__all__ = [
    "PROTOCOLS",
    "HET_CONST",
    "ADAPTIVE_CONST",
    "TRANSPOSE_CONST",
    "NH_CONST",
    "SamplePlan",
    "chi",
    "zeta",
    "perturbation_bound",
    "symmetric_perturbation_bound",
    "framed_perturbation_bound",
    "derivative_bound",
    "empirical_trace_inv_bound",
    "heterodyne_certificate",
    "transpose_certificate",
    "adaptive_rounds",
    "plan_samples",
]

PROTOCOLS = ("heterodyne", "adaptive", "transpose")
HET_CONST = 4.3
ADAPTIVE_CONST = 21.5
TRANSPOSE_CONST = 8.55
NH_CONST = 80.0
MAX_ROUNDS = 10
K_ROUND = (1 + math.sqrt(3)) / 8


def chi(n: int, delta: float) -> float:
    """``√(2n) + √(2 log(2/δ))``."""
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if n < 1:
        raise ValueError("n must be >= 1")
    return math.sqrt(2 * n) + math.sqrt(2 * math.log(2 / delta))


def zeta(c: float, N: int) -> float:
    """``2χ/√N + 2χ²/N``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    return 2 * c / math.sqrt(N) + 2 * c * c / N


def _as_state(x) -> GaussianState:
    if isinstance(x, GaussianState):
        return x
    V, m = x
    return new_state(V, m)


def perturbation_bound(a, b) -> float:
    """Upper bound on the trace distance between ρ(V, m) and ρ(W, t).

    ``½ ||V^{-1/2}(m - t)|| + (1+√3)/8 · Tr[(V⁻¹ + W⁻¹) |V - W|]``, with the
    first argument's covariance in the displacement term.
    """
    a, b = _as_state(a), _as_state(b)
    if a.n != b.n:
        raise ValueError(f"mode counts differ: {a.n} vs {b.n}")
    first = 0.5 * mahalanobis(a, a.m - b.m)
    X = matrix_abs(a.V - b.V)
    second = K_ROUND * float(np.sum((cov_inverse(a) + cov_inverse(b)) * X))
    return first + second


def symmetric_perturbation_bound(a, b) -> float:
    """Minimum of the bound over both argument orders."""
    return min(perturbation_bound(a, b), perturbation_bound(b, a))


def framed_perturbation_bound(a, b, S=None) -> float:
    """Symmetric bound evaluated after mapping both states by the same symplectic ``S``.

    Trace distance is unchanged by a common Gaussian unitary, so any frame gives
    a valid bound; unsqueezed frames give tighter and better conditioned ones.
    """
    a, b = _as_state(a), _as_state(b)
    if S is not None:
        a, b = apply_symplectic(a, S), apply_symplectic(b, S)
    return symmetric_perturbation_bound(a, b)


def derivative_bound(V, X, t) -> float:
    """``(1+√3)/2 · Tr(V⁻¹|X|) + 2 ||V^{-1/2} t||`` for the derivative of ρ(V, m)."""
    st = V if isinstance(V, GaussianState) else new_state(V)
    X = np.asarray(X, dtype=float)
    t = np.asarray(t, dtype=float).reshape(-1)
    if X.shape != st.V.shape or t.size != st.V.shape[0]:
        raise ValueError("dimension mismatch between V, X and t")
    term = float(np.sum(cov_inverse(st) * matrix_abs(X)))
    return (1 + math.sqrt(3)) / 2 * term + 2 * mahalanobis(st, t)


def empirical_trace_inv_bound(V_hat, zeta_val: float, energy_bound: float | None = None) -> float:
    """Data-driven upper bound on ``Tr(V⁻¹)`` from an estimate with ``V ⪯ V̂``.

    Takes the minimum over the bounds that apply:
    ``4E`` for a known energy bound ``E``; ``Tr(V̂)``, since
    ``V⁻¹ ⪯ Ω V Ωᵀ ⪯ Ω V̂ Ωᵀ``; and ``(1+η) Tr((V̂ - η𝟙)⁻¹)`` with
    ``η = 2ζ/(1-ζ)`` when the shifted matrix is positive definite.
    """
    V_hat = np.asarray(V_hat, dtype=float)
    if V_hat.ndim != 2 or V_hat.shape[0] != V_hat.shape[1]:
        raise ValueError("V_hat must be square")
    if np.abs(V_hat - V_hat.T).max() > 1e-10 * max(1.0, np.abs(V_hat).max()):
        raise ValueError("V_hat is not symmetric")
    if not 0 <= zeta_val < 1:
        raise ValueError(f"zeta must lie in [0, 1), got {zeta_val}")
    V_hat = 0.5 * (V_hat + V_hat.T)
    cands = []
    if energy_bound is not None:
        if energy_bound <= 0:
            raise ValueError("energy_bound must be positive")
        cands.append(4.0 * energy_bound)
    lam = np.linalg.eigvalsh(V_hat)
    if lam[0] > 0:
        cands.append(float(np.trace(V_hat)))
    eta = 2 * zeta_val / (1 - zeta_val)
    shifted = V_hat - eta * np.eye(V_hat.shape[0])
    if lam[0] - eta > 0:
        try:
            cands.append((1 + eta) * float(np.trace(sym_inv(shifted))))
        except np.linalg.LinAlgError:
            pass
    if not cands:
        raise ValueError(
            "no Tr(V⁻¹) bound applies: V_hat is not positive definite; supply an energy bound"
        )
    return min(cands)


def heterodyne_certificate(n: int, delta: float, N: int, trace_inv: float) -> float:
    return HET_CONST * (2 * n + trace_inv) * chi(n, delta) / math.sqrt(N)


def transpose_certificate(n: int, delta: float, N: int) -> float:
    return TRANSPOSE_CONST * n * chi(n, delta) / math.sqrt(N)


def adaptive_rounds(inv_opnorm_bound: float) -> int:
    """``⌈log₂ log₂ B⌉``, zero when ``B <= 2``."""
    if inv_opnorm_bound <= 0:
        raise ValueError("inv_opnorm_bound must be positive")
    if inv_opnorm_bound <= 2:
        return 0
    return max(0, math.ceil(math.log2(math.log2(inv_opnorm_bound))))


@dataclass(frozen=True)
class SamplePlan:
    protocol: str
    n: int
    epsilon: float
    delta: float
    N_h: int
    k: int
    N_t: int
    N_total: int

    def to_dict(self) -> dict:
        return asdict(self)


def plan_samples(
    protocol: str,
    n: int,
    epsilon: float,
    delta: float,
    trace_inv_bound: float | None = None,
    inv_opnorm_bound: float | None = None,
    k: int | None = None,
) -> SamplePlan:
    """Number of copies for a target trace distance ``ε`` at confidence ``1-δ``.

    ``heterodyne`` needs ``trace_inv_bound``; ``adaptive`` needs
    ``inv_opnorm_bound`` or an explicit round count ``k``; ``transpose`` needs
    neither.
    """
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}")
    if not 0 < epsilon:
        raise ValueError("epsilon must be positive")
    c = chi(n, delta)
    if protocol == "heterodyne":
        if trace_inv_bound is None:
            raise ValueError("heterodyne planning needs trace_inv_bound")
        N = math.ceil((HET_CONST * (2 * n + trace_inv_bound) * c / epsilon) ** 2)
        return SamplePlan(protocol, n, epsilon, delta, 0, 0, N, N)
    if protocol == "transpose":
        N = math.ceil((TRANSPOSE_CONST * n * c / epsilon) ** 2)
        return SamplePlan(protocol, n, epsilon, delta, 0, 0, N, N)
    if k is None:
        if inv_opnorm_bound is None:
            raise ValueError("adaptive planning needs inv_opnorm_bound or k")
        k = adaptive_rounds(inv_opnorm_bound)
    if k < 0:
        raise ValueError("k must be nonnegative")
    c = chi(n, delta / (k + 1))
    N_h = math.ceil(NH_CONST * c * c)
    N_t = math.ceil((ADAPTIVE_CONST * n * c / epsilon) ** 2)
    return SamplePlan(protocol, n, epsilon, delta, N_h, k, N_t, k * N_h + N_t)
