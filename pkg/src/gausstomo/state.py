"""Gaussian state value type and the operations acting on it."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .symplectic import (
    COND_FLOOR,
    ConditioningError,
    WilliamsonDecomposition,
    is_symplectic,
    omega,
    symplectic_inverse,
    williamson,
)

__all__ = [
    "NU_TOL",
    "GaussianState",
    "StateDiagnostics",
    "new_state",
    "from_williamson",
    "vacuum",
    "thermal",
    "squeezed",
    "squeezed_thermal",
    "coherent",
    "energy",
    "apply_symplectic",
    "transpose_state",
    "transpose_matrix",
    "tensor",
    "diagnostics",
    "cov_inverse",
    "inv_opnorm",
    "mahalanobis",
    "xp_permutation",
]

NU_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class GaussianState:
    """Gaussian state ρ(V, m), validated at construction.

    ``factor`` optionally carries an exact Williamson factorisation of ``V``.
    When present, validity is judged on its symplectic eigenvalues and
    inverses are formed from it, which keeps highly squeezed states accurate.
    """

    V: np.ndarray
    m: np.ndarray
    factor: WilliamsonDecomposition | None = field(default=None, repr=False)

    def __post_init__(self):
        V = np.array(self.V, dtype=float)
        m = np.array(self.m, dtype=float).reshape(-1)
        if V.ndim != 2 or V.shape[0] != V.shape[1] or V.shape[0] % 2:
            raise ValueError(f"V must be a square matrix of even size, got {V.shape}")
        if m.shape[0] != V.shape[0]:
            raise ValueError(f"m has length {m.shape[0]}, expected {V.shape[0]}")
        if not (np.all(np.isfinite(V)) and np.all(np.isfinite(m))):
            raise ValueError("state has non-finite entries")
        scale = max(1.0, np.abs(V).max())
        if np.abs(V - V.T).max() > 1e-10 * scale:
            raise ValueError("V is not symmetric")
        V = 0.5 * (V + V.T)
        fac = self.factor
        if fac is None:
            fac = williamson(V)
        nu_min = fac.nu.min()
        if nu_min < 1 - NU_TOL:
            raise ValueError(
                f"uncertainty relation violated: smallest symplectic eigenvalue {nu_min:.10g} < 1"
            )
        V.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "factor", fac)

    @property
    def n(self) -> int:
        return self.V.shape[0] // 2

    @property
    def nu(self) -> np.ndarray:
        return self.factor.nu

    def to_dict(self) -> dict:
        return {"n": self.n, "m": self.m.tolist(), "V": self.V.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianState":
        st = new_state(d["V"], d["m"])
        if "n" in d and int(d["n"]) != st.n:
            raise ValueError(f"declared n={d['n']} does not match V of size {st.V.shape[0]}")
        return st

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def __eq__(self, other):
        if not isinstance(other, GaussianState):
            return NotImplemented
        return np.array_equal(self.V, other.V) and np.array_equal(self.m, other.m)

    __hash__ = None


@dataclass(frozen=True)
class StateDiagnostics:
    energy: float
    inv_V_opnorm: float
    trace_inv_V: float
    min_eig: float


def new_state(V, m=None) -> GaussianState:
    V = np.asarray(V, dtype=float)
    if m is None:
        m = np.zeros(V.shape[0])
    return GaussianState(V, m)


def from_williamson(S, nu, m=None) -> GaussianState:
    """State with covariance ``S diag(ν) Sᵀ``, keeping the factor exactly."""
    S = np.asarray(S, dtype=float)
    nu = np.asarray(nu, dtype=float).reshape(-1)
    if not is_symplectic(S):
        raise ValueError("S is not symplectic")
    order = np.argsort(-nu, kind="stable")
    cols = np.column_stack([2 * order, 2 * order + 1]).ravel()
    fac = WilliamsonDecomposition(S=S[:, cols], nu=nu[order])
    if m is None:
        m = np.zeros(S.shape[0])
    return GaussianState(fac.reconstruct(), m, factor=fac)


def vacuum(n: int = 1) -> GaussianState:
    return from_williamson(np.eye(2 * n), np.ones(n))


def thermal(nu: float, n: int = 1) -> GaussianState:
    return from_williamson(np.eye(2 * n), np.full(n, float(nu)))


def squeezed(z: float, n: int = 1) -> GaussianState:
    """Squeezed vacuum with ``V = ⊕ diag(z², 1/z²)``."""
    return squeezed_thermal(z, 1.0, n)


def squeezed_thermal(z: float, nu: float, n: int = 1) -> GaussianState:
    if z <= 0:
        raise ValueError("z must be positive")
    S = np.diag(np.tile([z, 1.0 / z], n))
    return from_williamson(S, np.full(n, float(nu)))


def coherent(m) -> GaussianState:
    m = np.asarray(m, dtype=float)
    return from_williamson(np.eye(m.size), np.ones(m.size // 2), m)


def energy(state: GaussianState) -> float:
    """Mean energy ``Tr V / 4 + ||m||² / 2``."""
    return float(np.trace(state.V) / 4 + state.m @ state.m / 2)


def apply_symplectic(state: GaussianState, S, d=None) -> GaussianState:
    """``V -> S V Sᵀ`` and ``m -> S m + d``.

    The product is formed on the Williamson factor, ``(S S_V) D (S S_V)ᵀ``, so
    heavy squeezing followed by unsqueezing does not amplify rounding.
    """
    S = np.asarray(S, dtype=float)
    if S.shape != state.V.shape:
        raise ValueError(f"S has shape {S.shape}, expected {state.V.shape}")
    if not is_symplectic(S):
        raise ValueError("S is not symplectic")
    m = S @ state.m
    if d is not None:
        m = m + np.asarray(d, dtype=float)
    fac = WilliamsonDecomposition(S=S @ state.factor.S, nu=state.factor.nu)
    return GaussianState(fac.reconstruct(), m, factor=fac)


def transpose_matrix(n: int) -> np.ndarray:
    """``𝟙ₙ ⊗ diag(1, -1)``."""
    return np.diag(np.tile([1.0, -1.0], n))


def transpose_state(state: GaussianState) -> GaussianState:
    """State of ρᵀ: momentum signs flipped."""
    s = np.tile([1.0, -1.0], state.n)
    V = state.V * np.outer(s, s)
    # conjugating S by the reflection keeps it symplectic
    Sf = state.factor.S * np.outer(s, s)
    fac = WilliamsonDecomposition(S=Sf, nu=state.factor.nu)
    return GaussianState(V, state.m * s, factor=fac)


def tensor(a: GaussianState, b: GaussianState) -> GaussianState:
    na, nb = a.V.shape[0], b.V.shape[0]
    V = np.zeros((na + nb, na + nb))
    V[:na, :na] = a.V
    V[na:, na:] = b.V
    S = np.zeros_like(V)
    S[:na, :na] = a.factor.S
    S[na:, na:] = b.factor.S
    nu = np.concatenate([a.factor.nu, b.factor.nu])
    order = np.argsort(-nu, kind="stable")
    cols = np.column_stack([2 * order, 2 * order + 1]).ravel()
    fac = WilliamsonDecomposition(S=S[:, cols], nu=nu[order])
    return GaussianState(V, np.concatenate([a.m, b.m]), factor=fac)


def cov_inverse(state: GaussianState) -> np.ndarray:
    """``V⁻¹ = Ω S D⁻¹ Sᵀ Ωᵀ`` from the Williamson factor."""
    W = omega(state.n)
    F = W @ state.factor.S
    Vi = (F / np.repeat(state.factor.nu, 2)) @ F.T
    return 0.5 * (Vi + Vi.T)


def inv_opnorm(state: GaussianState) -> float:
    """``||V⁻¹||_∞`` (largest eigenvalue of ``V⁻¹``)."""
    return float(np.linalg.eigvalsh(cov_inverse(state))[-1])


def mahalanobis(state: GaussianState, x) -> float:
    """``||V^{-1/2} x||₂`` computed through the Williamson factor."""
    x = np.asarray(x, dtype=float)
    y = symplectic_inverse(state.factor.S) @ x
    return float(np.sqrt(np.sum(y * y / np.repeat(state.factor.nu, 2))))


def diagnostics(state: GaussianState) -> StateDiagnostics:
    lam = np.linalg.eigvalsh(state.V)
    top = lam[-1]
    if lam[0] < COND_FLOOR * top:
        raise ConditioningError(
            f"V too ill-conditioned for diagnostics: λ_min={lam[0]:.3e}, ||V||={top:.3e}"
        )
    return StateDiagnostics(
        energy=energy(state),
        inv_V_opnorm=float(1.0 / lam[0]),
        trace_inv_V=float(np.sum(1.0 / lam)),
        min_eig=float(lam[0]),
    )


def xp_permutation(n: int) -> np.ndarray:
    """Index array taking interleaved order to block order (x1..xn, p1..pn)."""
    return np.concatenate([np.arange(0, 2 * n, 2), np.arange(1, 2 * n, 2)])
