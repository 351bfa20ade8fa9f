"""Tomography protocols: heterodyne, adaptive unsqueezing and transpose access.

The protocols are scikit-learn style estimators. ``fit`` consumes measurement
outcomes (or, for the adaptive protocol, a handle that produces them) and sets
trailing-underscore attributes, including a :class:`TomographyResult`.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .bounds import (
    ADAPTIVE_CONST,
    MAX_ROUNDS,
    NH_CONST,
    adaptive_rounds,
    chi,
    empirical_trace_inv_bound,
    heterodyne_certificate,
    transpose_certificate,
    zeta,
)
from .measurement import (
    SampleBatch,
    make_rng,
    passive_unsqueeze_heterodyne,
    sample_heterodyne,
    sample_transpose_scheme,
)
from .state import GaussianState, apply_symplectic, cov_inverse, inv_opnorm
from .symplectic import WilliamsonDecomposition, symplectic_inverse, williamson

__all__ = [
    "K_POLICIES",
    "MomentEstimate",
    "ConfidenceParams",
    "RoundLog",
    "TomographyResult",
    "StateHandle",
    "RecurrenceReport",
    "empirical_moments",
    "confidence",
    "heterodyne_inversion",
    "transpose_inversion",
    "project_valid",
    "HeterodyneTomography",
    "TransposeTomography",
    "AdaptiveTomography",
    "heterodyne_tomography",
    "transpose_tomography",
    "adaptive_round",
    "adaptive_tomography",
    "recurrence_bound",
    "recurrence_check",
]

K_POLICIES = ("oracle", "energy_bound", "empirical")


@dataclass(frozen=True, eq=False)
class MomentEstimate:
    mu_hat: np.ndarray
    sigma_hat: np.ndarray
    N: int


@dataclass(frozen=True)
class ConfidenceParams:
    n: int
    delta: float
    N: int
    chi: float
    zeta: float

    def __post_init__(self):
        if zeta(self.chi, self.N) != self.zeta:
            raise ValueError("zeta does not match (chi, N)")


@dataclass(frozen=True, eq=False)
class RoundLog:
    """One adaptive round.

    ``a_hat`` is ``||V̂⁻¹||`` of the round's estimate. ``a_before`` and
    ``a_after`` are the true ``||V⁻¹||`` of the measured state before and after
    the unsqueezer, reported only by simulation handles. ``applied`` is false
    for a final check round that triggered the stop.
    """

    index: int
    S_hat: np.ndarray
    N: int
    a_hat: float
    a_before: float | None = None
    a_after: float | None = None
    applied: bool = True

    def to_dict(self) -> dict:
        return {"i": self.index, "a_before": self.a_before, "a_after": self.a_after, "N": self.N}


@dataclass(frozen=True, eq=False)
class TomographyResult:
    estimate: GaussianState
    protocol: str
    epsilon_certificate: float | None
    total_samples: int
    delta: float
    rounds: list = field(default_factory=list)
    seed: int | None = None
    frame: np.ndarray | None = None
    frame_estimate: GaussianState | None = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "n": self.estimate.n,
            "N_total": int(self.total_samples),
            "epsilon_certificate": self.epsilon_certificate,
            "delta": self.delta,
            "estimate": {"m": self.estimate.m.tolist(), "V": self.estimate.V.tolist()},
            "rounds": [r.to_dict() for r in self.rounds],
            "seed": self.seed,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _samples(X) -> tuple[np.ndarray, int | None]:
    if isinstance(X, SampleBatch):
        return X.data, X.seed
    return check_array(X, ensure_min_samples=2, dtype=float), None


def empirical_moments(batch) -> MomentEstimate:
    """Sample mean and covariance, normalised by ``N`` (no Bessel correction)."""
    X = batch.data if isinstance(batch, SampleBatch) else np.asarray(batch, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least two samples")
    N = X.shape[0]
    mu = X.mean(axis=0)
    Y = X - mu
    sig = Y.T @ Y / N
    return MomentEstimate(mu, 0.5 * (sig + sig.T), N)


def confidence(n: int, delta: float, N: int) -> ConfidenceParams:
    c = chi(n, delta)
    return ConfidenceParams(n=n, delta=delta, N=int(N), chi=c, zeta=zeta(c, int(N)))


def heterodyne_inversion(mu, sigma, zeta_val: float):
    """``(m̂, V̂) = (μ̂, 2Σ̂/(1-ζ) - 𝟙)``."""
    sigma = np.asarray(sigma, dtype=float)
    V = 2 * sigma / (1 - zeta_val) - np.eye(sigma.shape[0])
    return np.asarray(mu, dtype=float).copy(), 0.5 * (V + V.T)


def transpose_inversion(mu, sigma, zeta_val: float):
    """``(m̂, V̂) = (μ̂/2, Σ̂/(1-ζ))``."""
    sigma = np.asarray(sigma, dtype=float)
    V = sigma / (1 - zeta_val)
    return np.asarray(mu, dtype=float) / 2, 0.5 * (V + V.T)


def project_valid(V) -> tuple[WilliamsonDecomposition, bool]:
    """Nearest-in-spirit valid covariance: clamp symplectic eigenvalues at 1.

    A matrix that is not positive definite is first lifted to the eigenvalue
    floor ``1/λmax``, which every valid covariance with that top eigenvalue
    respects. Positive-definite inputs are left alone so strongly squeezed
    directions survive. Returns the factor and whether anything changed.
    """
    V = np.asarray(V, dtype=float)
    V = 0.5 * (V + V.T)
    changed = False
    try:
        w = williamson(V)
    except ValueError:
        lam, U = np.linalg.eigh(V)
        floor = 1.0 / max(1.0, lam[-1])
        V = (U * np.maximum(lam, floor)) @ U.T
        V = 0.5 * (V + V.T)
        changed = True
        w = williamson(V)
    if w.nu.min() < 1.0:
        changed = True
        w = WilliamsonDecomposition(S=w.S, nu=np.maximum(w.nu, 1.0))
    return w, changed


def _state_from_estimate(V, m) -> tuple[GaussianState, bool]:
    w, changed = project_valid(V)
    Vp = w.reconstruct() if changed else 0.5 * (V + V.T)
    return GaussianState(Vp, m, factor=w), changed


class HeterodyneTomography(BaseEstimator):
    """Heterodyne tomography with a trace-distance certificate.

    Parameters
    ----------
    delta : float
        Failure probability of the certificate.
    energy_bound : float, optional
        Known upper bound on the mean energy; tightens the ``Tr(V⁻¹)`` bound.

    Attributes
    ----------
    state_ : GaussianState
        Validity-projected estimate.
    raw_covariance_ : ndarray
        ``2Σ̂/(1-ζ) - 𝟙`` before projection.
    epsilon_ : float or None
        Certified trace distance; None when no ``Tr(V⁻¹)`` bound applies.
    """

    def __init__(self, delta=0.05, energy_bound=None):
        self.delta = delta
        self.energy_bound = energy_bound

    def fit(self, X, y=None):
        data, seed = _samples(X)
        if data.shape[1] % 2:
            raise ValueError("heterodyne samples need an even number of columns")
        n = data.shape[1] // 2
        mom = empirical_moments(data)
        conf = confidence(n, self.delta, mom.N)
        if conf.zeta >= 1:
            raise ValueError(f"too few samples: zeta = {conf.zeta:.3f} >= 1")
        m_hat, V_raw = heterodyne_inversion(mom.mu_hat, mom.sigma_hat, conf.zeta)
        try:
            T = empirical_trace_inv_bound(V_raw, conf.zeta, self.energy_bound)
            eps = heterodyne_certificate(n, self.delta, mom.N, T)
        except ValueError:
            warnings.warn("no Tr(V⁻¹) bound applies; certificate unavailable", RuntimeWarning)
            T, eps = None, None
        self.state_, self.projected_ = _state_from_estimate(V_raw, m_hat)
        self.raw_covariance_ = V_raw
        self.mean_ = m_hat
        self.covariance_ = self.state_.V
        self.confidence_ = conf
        self.trace_inv_bound_ = T
        self.epsilon_ = eps
        self.n_modes_ = n
        self.n_samples_ = mom.N
        self.result_ = TomographyResult(
            estimate=self.state_,
            protocol="heterodyne",
            epsilon_certificate=eps,
            total_samples=mom.N,
            delta=self.delta,
            seed=seed,
            metadata={"projected": self.projected_, "trace_inv_bound": T},
        )
        return self


class TransposeTomography(BaseEstimator):
    """Tomography from transpose-scheme samples ``𝒩(2m, V)``; certificate ``8.55 n χ/√N``."""

    def __init__(self, delta=0.05):
        self.delta = delta

    def fit(self, X, y=None):
        data, seed = _samples(X)
        if data.shape[1] % 2:
            raise ValueError("samples need an even number of columns")
        n = data.shape[1] // 2
        mom = empirical_moments(data)
        conf = confidence(n, self.delta, mom.N)
        if conf.zeta >= 1:
            raise ValueError(f"too few samples: zeta = {conf.zeta:.3f} >= 1")
        m_hat, V_raw = transpose_inversion(mom.mu_hat, mom.sigma_hat, conf.zeta)
        self.state_, self.projected_ = _state_from_estimate(V_raw, m_hat)
        self.raw_covariance_ = V_raw
        self.mean_ = m_hat
        self.covariance_ = self.state_.V
        self.confidence_ = conf
        self.epsilon_ = transpose_certificate(n, self.delta, mom.N)
        self.n_modes_ = n
        self.n_samples_ = mom.N
        self.result_ = TomographyResult(
            estimate=self.state_,
            protocol="transpose",
            epsilon_certificate=self.epsilon_,
            total_samples=mom.N,
            delta=self.delta,
            seed=seed,
            metadata={"projected": self.projected_},
        )
        return self


class StateHandle:
    """Sampling access to ``U_T ρ U_T†`` for a hidden state ρ and a known transform ``T``.

    Estimators only call :meth:`heterodyne` and :meth:`transformed`. The
    ``true_*`` methods exist for simulation diagnostics. With
    ``scheme="passive"`` the heterodyne data are produced by the passive
    emulation rather than by transforming the state.
    """

    def __init__(self, state: GaussianState, transform=None, scheme: str = "active"):
        if scheme not in ("active", "passive"):
            raise ValueError(f"unknown scheme {scheme!r}")
        self._state = state
        self._T = np.eye(2 * state.n) if transform is None else np.asarray(transform, float)
        self.scheme = scheme

    @property
    def n(self) -> int:
        return self._state.n

    @property
    def transform(self) -> np.ndarray:
        return self._T.copy()

    def heterodyne(self, N: int, rng=None) -> SampleBatch:
        if self.scheme == "passive":
            return passive_unsqueeze_heterodyne(self._state, self._T, N, rng)
        return sample_heterodyne(self.true_state(), N, rng)

    def transformed(self, S) -> "StateHandle":
        return StateHandle(self._state, np.asarray(S, float) @ self._T, self.scheme)

    def true_state(self) -> GaussianState:
        return apply_symplectic(self._state, self._T)

    def true_inv_opnorm(self) -> float:
        return inv_opnorm(self.true_state())


def _sub_seed(master: int, i: int) -> int:
    return int(np.random.SeedSequence([master, i]).generate_state(1, np.uint64)[0] >> np.uint64(1))


def _true_a(handle) -> float | None:
    f = getattr(handle, "true_inv_opnorm", None)
    return None if f is None else float(f())


def _inv_opnorm_estimate(state: GaussianState) -> float:
    return float(np.linalg.eigvalsh(cov_inverse(state))[-1])


def adaptive_round(handle, N_h: int, delta: float, rng=None, index: int = 0, gauge=None):
    """One unsqueezing round.

    Heterodyne tomography on ``N_h`` copies, Williamson decomposition
    ``V̂ = Ŝ D̂ Ŝᵀ``, and the unsqueezer ``Ŝ⁻¹``.

    Returns:
        ``(Ŝ⁻¹, RoundLog)``.
    """
    batch = handle.heterodyne(int(N_h), rng)
    est = HeterodyneTomography(delta=delta).fit(batch)
    S_hat = est.state_.factor.S
    if gauge is not None:
        O = np.asarray(gauge, dtype=float)
        S_hat = S_hat @ O
    U = symplectic_inverse(S_hat)
    log = RoundLog(
        index=index,
        S_hat=S_hat,
        N=int(N_h),
        a_hat=_inv_opnorm_estimate(est.state_),
        a_before=_true_a(handle),
        a_after=_true_a(handle.transformed(U)),
    )
    return U, log


class AdaptiveTomography(BaseEstimator):
    """Tomography with adaptive unsqueezing rounds followed by heterodyne tomography.

    Parameters
    ----------
    epsilon, delta : float
        Target trace distance and failure probability.
    k_policy : {"empirical", "oracle", "energy_bound"}
        How the number of unsqueezing rounds is chosen. ``oracle`` reads
        ``||V⁻¹||`` from a simulation handle; ``energy_bound`` uses
        ``inv_opnorm_bound``; ``empirical`` stops once ``||V̂⁻¹|| <= 2(1+slack)``
        and budgets δ for ``max_rounds`` rounds.
    inv_opnorm_bound : float, optional
        Upper bound on ``||V⁻¹||`` for the ``energy_bound`` policy.
    max_rounds : int
        Round cap for the empirical policy.
    slack : float
        Relative slack of the empirical stopping rule.
    random_state : int, optional
        Master seed; round seeds are derived from it.
    gauge : callable, optional
        ``gauge(i)`` returns an orthogonal-symplectic ``O`` and round ``i`` uses
        ``Ŝᵢ O`` in place of ``Ŝᵢ``. The output does not depend on it; the hook
        exists to test that.
    """

    def __init__(
        self,
        epsilon=0.1,
        delta=0.05,
        k_policy="empirical",
        inv_opnorm_bound=None,
        max_rounds=MAX_ROUNDS,
        slack=0.0,
        random_state=None,
        gauge=None,
    ):
        self.epsilon = epsilon
        self.delta = delta
        self.k_policy = k_policy
        self.inv_opnorm_bound = inv_opnorm_bound
        self.max_rounds = max_rounds
        self.slack = slack
        self.random_state = random_state
        self.gauge = gauge

    def _budget(self, handle) -> int:
        if self.k_policy == "oracle":
            a = _true_a(handle)
            if a is None:
                raise ValueError("oracle k_policy needs a simulation handle")
            return adaptive_rounds(a)
        if self.k_policy == "energy_bound":
            if self.inv_opnorm_bound is None:
                raise ValueError("energy_bound k_policy needs inv_opnorm_bound")
            return adaptive_rounds(self.inv_opnorm_bound)
        if self.k_policy == "empirical":
            return int(self.max_rounds)
        raise ValueError(f"unknown k_policy {self.k_policy!r}")

    def fit(self, X, y=None):
        handle = StateHandle(X) if isinstance(X, GaussianState) else X
        if not 0 < self.epsilon or not 0 < self.delta < 1:
            raise ValueError("epsilon must be positive and delta in (0, 1)")
        n = handle.n
        k = self._budget(handle)
        d_round = self.delta / (k + 1)
        c = chi(n, d_round)
        N_h = math.ceil(NH_CONST * c * c)
        N_t = math.ceil((ADAPTIVE_CONST * n * c / self.epsilon) ** 2)
        _, master = make_rng(self.random_state)
        S_acc = np.eye(2 * n)
        logs: list[RoundLog] = []
        unsqueezed = None
        threshold = 2.0 * (1.0 + self.slack)
        for i in range(k):
            O = None if self.gauge is None else self.gauge(i)
            U, log = adaptive_round(handle, N_h, d_round, _sub_seed(master, i), i, O)
            if self.k_policy == "empirical" and log.a_hat <= threshold:
                logs.append(
                    RoundLog(i, log.S_hat, N_h, log.a_hat, log.a_before, log.a_before, False)
                )
                unsqueezed = True
                break
            logs.append(log)
            handle = handle.transformed(U)
            S_acc = U @ S_acc
        if self.k_policy == "empirical" and unsqueezed is None:
            unsqueezed = False
            warnings.warn(
                f"no unsqueezed regime reached within {k} rounds; certificate stays empirical",
                RuntimeWarning,
            )
        final = HeterodyneTomography(delta=d_round).fit(
            handle.heterodyne(N_t, _sub_seed(master, k + 1))
        )
        frame_est = final.state_
        estimate = apply_symplectic(frame_est, symplectic_inverse(S_acc))
        total = len(logs) * N_h + N_t
        self.n_rounds_ = len(logs)
        self.rounds_ = logs
        self.frame_ = S_acc
        self.frame_estimate_ = frame_est
        self.state_ = estimate
        self.mean_ = estimate.m
        self.covariance_ = estimate.V
        self.epsilon_ = final.epsilon_
        self.N_h_ = N_h
        self.N_t_ = N_t
        self.k_budget_ = k
        self.result_ = TomographyResult(
            estimate=estimate,
            protocol="adaptive",
            epsilon_certificate=final.epsilon_,
            total_samples=total,
            delta=self.delta,
            rounds=logs,
            seed=master,
            frame=S_acc,
            frame_estimate=frame_est,
            metadata={
                "k_policy": self.k_policy,
                "k_budget": k,
                "N_h": N_h,
                "N_t": N_t,
                "unsqueezed": unsqueezed,
                "final_trace_inv_bound": final.trace_inv_bound_,
            },
        )
        return self


def _fitted_result(est) -> TomographyResult:
    check_is_fitted(est, "result_")
    return est.result_


def heterodyne_tomography(state_or_batch, N: int | None = None, delta: float = 0.05,
                          seed=None, energy_bound=None) -> TomographyResult:
    """Heterodyne tomography from a state (sampled here) or a pre-drawn batch."""
    if isinstance(state_or_batch, GaussianState):
        if N is None:
            raise ValueError("N is required when sampling from a state")
        state_or_batch = sample_heterodyne(state_or_batch, N, seed)
    est = HeterodyneTomography(delta=delta, energy_bound=energy_bound).fit(state_or_batch)
    return _fitted_result(est)


def transpose_tomography(state_or_batch, N: int | None = None, delta: float = 0.05,
                         seed=None) -> TomographyResult:
    if isinstance(state_or_batch, GaussianState):
        if N is None:
            raise ValueError("N is required when sampling from a state")
        state_or_batch = sample_transpose_scheme(state_or_batch, N, seed)
    return _fitted_result(TransposeTomography(delta=delta).fit(state_or_batch))


def adaptive_tomography(handle, epsilon: float = 0.1, delta: float = 0.05,
                        k_policy: str = "empirical", seed=None, **kw) -> TomographyResult:
    est = AdaptiveTomography(epsilon=epsilon, delta=delta, k_policy=k_policy,
                             random_state=seed, **kw)
    return _fitted_result(est.fit(handle))


def recurrence_bound(a: float) -> float:
    """``√(5/3 + 2a/3)``."""
    return math.sqrt(5 / 3 + 2 * a / 3)


@dataclass(frozen=True)
class RecurrenceReport:
    ok: bool
    violations: list
    ratios: list


def recurrence_check(round_logs, slack: float = 0.2) -> RecurrenceReport:
    """Flag rounds with ``a_{k+1} > √(5/3 + 2a_k/3)·(1+slack)``.

    Accepts a list of :class:`RoundLog` (using the true ``a_before/a_after`` of
    rounds that applied an unsqueezer) or a plain sequence ``a_0, a_1, ...``.
    """
    pairs = []
    seq = list(round_logs)
    if seq and isinstance(seq[0], RoundLog):
        for r in seq:
            if not r.applied:
                continue
            if r.a_before is None or r.a_after is None:
                raise ValueError("round logs lack true a_k values")
            pairs.append((r.index, r.a_before, r.a_after))
    else:
        pairs = [(i, float(seq[i]), float(seq[i + 1])) for i in range(len(seq) - 1)]
    bad, ratios = [], []
    for i, a, b in pairs:
        ratio = b / recurrence_bound(a)
        ratios.append(ratio)
        if ratio > 1 + slack:
            bad.append(i)
    return RecurrenceReport(ok=not bad, violations=bad, ratios=ratios)

