import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

from gausstomo.bounds import (
    chi,
    framed_perturbation_bound,
    plan_samples,
    symmetric_perturbation_bound,
    zeta,
)
from gausstomo.estimation import (
    AdaptiveTomography,
    ConfidenceParams,
    HeterodyneTomography,
    RoundLog,
    StateHandle,
    TransposeTomography,
    adaptive_round,
    adaptive_tomography,
    confidence,
    empirical_moments,
    heterodyne_inversion,
    heterodyne_tomography,
    project_valid,
    recurrence_bound,
    recurrence_check,
    transpose_inversion,
    transpose_tomography,
)
from gausstomo.measurement import SampleBatch, heterodyne_moments, sample_heterodyne
from gausstomo.state import new_state, squeezed, thermal, vacuum
from gausstomo.symplectic import (
    is_symplectic,
    random_covariance,
    random_orthosymplectic,
    symplectic_eigenvalues,
)


def test_empirical_moments_examples():
    mom = empirical_moments(np.array([[0.0, 0.0], [2.0, 0.0]]))
    assert np.array_equal(mom.mu_hat, [1.0, 0.0])
    assert np.array_equal(mom.sigma_hat, [[1.0, 0.0], [0.0, 0.0]])
    mom = empirical_moments(np.ones((5, 2)))
    assert np.array_equal(mom.sigma_hat, np.zeros((2, 2)))
    with pytest.raises(ValueError):
        empirical_moments(np.ones((1, 2)))


def test_relative_covariance_event_rate():
    N, trials, hits = 100_000, 200, 0
    conf = confidence(1, 0.05, N)
    for t in range(trials):
        S = empirical_moments(sample_heterodyne(vacuum(1), N, t)).sigma_hat
        lam = np.linalg.eigvalsh(S)
        hits += lam[0] >= 1 - conf.zeta and lam[-1] <= 1 + conf.zeta
    assert hits >= 0.95 * trials


def test_confidence():
    c = confidence(1, 0.05, 100)
    assert abs(c.chi - 4.1304) < 1e-4
    assert c.zeta == zeta(c.chi, 100)
    with pytest.raises(ValueError):
        confidence(1, 1.5, 100)
    with pytest.raises(ValueError):
        ConfidenceParams(1, 0.05, 100, c.chi, c.zeta * 1.01)


def test_inversions_are_consistent():
    rng = np.random.default_rng(0)
    st = new_state(random_covariance(2, 3.0, 2.0, rng), rng.normal(size=4))
    mu, sig = heterodyne_moments(st)
    m, V = heterodyne_inversion(mu, sig, 0.0)
    assert np.allclose(V, st.V, atol=1e-12) and np.array_equal(m, st.m)
    m, V = transpose_inversion(2 * st.m, st.V, 0.0)
    assert np.array_equal(V, st.V) and np.array_equal(m, st.m)


def test_project_valid():
    w, changed = project_valid(np.eye(2))
    assert not changed
    w, changed = project_valid(np.diag([0.5, 0.5]))
    assert changed and np.allclose(w.nu, 1.0)
    w, changed = project_valid(np.diag([4.0, -1.0]))
    assert changed and w.nu.min() >= 1
    # a squeezed but valid estimate keeps its tiny eigenvalue
    V = np.diag([1.02e6, 1.03e-6])
    w, changed = project_valid(V)
    assert not changed and np.allclose(w.reconstruct(), V, rtol=1e-9)


def test_heterodyne_vacuum():
    est = HeterodyneTomography(delta=0.05).fit(sample_heterodyne(vacuum(1), 100_000, 0))
    z = est.confidence_.zeta
    assert np.linalg.norm(est.raw_covariance_ - np.eye(2), 2) <= 3 * z / (1 - z)
    assert est.epsilon_ is not None and est.trace_inv_bound_ > 0
    assert est.n_modes_ == 1 and est.n_samples_ == 100_000
    r = est.result_
    assert r.protocol == "heterodyne" and r.total_samples == 100_000 and r.seed == 0


def test_heterodyne_accepts_arrays_and_rejects_small_N():
    X = sample_heterodyne(thermal(2.0), 50_000, 1).data
    est = HeterodyneTomography().fit(X)
    assert est.result_.seed is None
    with pytest.raises(ValueError, match="zeta"):
        HeterodyneTomography().fit(X[:20])
    with pytest.raises(ValueError):
        HeterodyneTomography().fit(X[:, :1])


def test_heterodyne_without_bound_warns():
    # data far below the heterodyne noise floor give a non-PD V̂
    X = 1e-3 * np.random.default_rng(0).normal(size=(2000, 2))
    with pytest.warns(RuntimeWarning):
        est = HeterodyneTomography().fit(X)
    assert est.epsilon_ is None
    assert symplectic_eigenvalues(est.state_.V).min() >= 1 - 1e-8


def test_heterodyne_one_sided_error():
    # on trials where the relative event holds, V̂ - V ⪰ 0
    rng = np.random.default_rng(2)
    st = new_state(random_covariance(2, 2.0, 2.0, rng))
    N, checked = 20_000, 0
    for t in range(60):
        b = sample_heterodyne(st, N, t)
        mom = empirical_moments(b)
        conf = confidence(2, 0.05, N)
        L = np.linalg.cholesky(b.cov)
        R = np.linalg.solve(L, np.linalg.solve(L, mom.sigma_hat).T)
        lam = np.linalg.eigvalsh(0.5 * (R + R.T))
        if lam[0] < 1 - conf.zeta or lam[-1] > 1 + conf.zeta:
            continue
        checked += 1
        _, V_hat = heterodyne_inversion(mom.mu_hat, mom.sigma_hat, conf.zeta)
        assert np.linalg.eigvalsh(V_hat - st.V).min() >= -1e-9
    assert checked >= 50


def test_heterodyne_calibration_two_modes():
    truth = thermal(3.0, 2)
    fails = 0
    for t in range(200):
        r = heterodyne_tomography(truth, 100_000, 0.05, seed=t)
        fails += symmetric_perturbation_bound(truth, r.estimate) > r.epsilon_certificate
    assert fails / 200 <= 0.05 + 3 * math.sqrt(0.05 * 0.95 / 200)


def test_transpose_tomography():
    r = transpose_tomography(squeezed(1e3), 100_000, 0.05, seed=1)
    h = heterodyne_tomography(squeezed(1e3), 100_000, 0.05, seed=1)
    r2 = transpose_tomography(squeezed(10.0), 100_000, 0.05, seed=1)
    assert r.epsilon_certificate == r2.epsilon_certificate
    assert h.epsilon_certificate > 1e4 * r.epsilon_certificate
    assert r.protocol == "transpose" and r.metadata["projected"] is False
    assert framed_perturbation_bound(squeezed(1e3), r.estimate) < r.epsilon_certificate


def test_transpose_coverage():
    truth = new_state(np.diag([4.0, 0.25]), [0.5, -1.0])
    ok = 0
    for t in range(200):
        r = transpose_tomography(truth, 20_000, 0.05, seed=t)
        ok += symmetric_perturbation_bound(truth, r.estimate) <= r.epsilon_certificate
    assert ok >= 0.92 * 200


def test_estimators_follow_sklearn_conventions():
    est = AdaptiveTomography(epsilon=0.3, k_policy="oracle")
    assert est.get_params()["epsilon"] == 0.3
    c = clone(est.set_params(delta=0.01))
    assert c.delta == 0.01 and c.k_policy == "oracle"
    with pytest.raises(NotFittedError):
        check_is_fitted(HeterodyneTomography())
    assert "delta" in repr(TransposeTomography(delta=0.1))


def test_state_handle():
    h = StateHandle(squeezed(10.0))
    S = np.diag([0.1, 10.0])
    h2 = h.transformed(S)
    assert np.allclose(h2.true_state().V, np.eye(2))
    assert np.isclose(h.true_inv_opnorm(), 100.0)
    assert np.array_equal(h.transform, np.eye(2))
    hp = StateHandle(squeezed(10.0), scheme="passive").transformed(S)
    assert hp.heterodyne(10, 0).scheme == "passive_unsqueeze"
    with pytest.raises(ValueError):
        StateHandle(vacuum(1), scheme="bogus")


def test_adaptive_round_near_vacuum():
    U, log = adaptive_round(StateHandle(vacuum(1)), 2000, 0.05, rng=0)
    assert is_symplectic(U)
    assert log.a_after <= recurrence_bound(1.0) * 1.2


def test_adaptive_round_heavy_squeezing():
    c = chi(1, 0.05)
    N_h = math.ceil(80 * c * c)
    U, log = adaptive_round(StateHandle(squeezed(1e4)), N_h, 0.05, rng=3)
    assert log.a_before == pytest.approx(1e8)
    assert log.a_after <= recurrence_bound(1e8)
    a, b = adaptive_round(StateHandle(squeezed(1e4)), N_h, 0.05, rng=3)
    assert np.array_equal(a, U) and b.a_after == log.a_after


def test_adaptive_unsqueezed_truth_needs_no_rounds():
    est = AdaptiveTomography(epsilon=0.5, k_policy="oracle", random_state=0).fit(thermal(2.0))
    assert est.n_rounds_ == 0 and est.k_budget_ == 0
    assert est.result_.total_samples == est.N_t_


def test_adaptive_oracle_policy():
    est = AdaptiveTomography(epsilon=0.3, k_policy="oracle", random_state=4).fit(squeezed(1e3))
    assert est.k_budget_ == 5 and est.n_rounds_ == 5
    r = est.result_
    assert r.total_samples == 5 * est.N_h_ + est.N_t_
    assert recurrence_check(r.rounds).ok
    assert r.rounds[-1].a_after <= 2
    assert framed_perturbation_bound(squeezed(1e3), r.estimate, r.frame) <= r.epsilon_certificate
    d = r.to_dict()
    assert set(d) == {"protocol", "n", "N_total", "epsilon_certificate", "delta", "estimate",
                      "rounds", "seed"}
    assert set(d["rounds"][0]) == {"i", "a_before", "a_after", "N"}


def test_adaptive_empirical_policy_and_replay():
    kw = dict(epsilon=0.3, k_policy="empirical", random_state=7)
    a = AdaptiveTomography(**kw).fit(squeezed(100.0))
    b = AdaptiveTomography(**kw).fit(squeezed(100.0))
    assert np.array_equal(a.state_.V, b.state_.V)
    assert a.result_.metadata["unsqueezed"] is True
    assert not a.rounds_[-1].applied
    assert a.k_budget_ == 10


def test_adaptive_energy_bound_policy():
    est = AdaptiveTomography(epsilon=0.3, k_policy="energy_bound", inv_opnorm_bound=1e4,
                             random_state=1).fit(squeezed(100.0))
    assert est.k_budget_ == 4
    with pytest.raises(ValueError):
        AdaptiveTomography(k_policy="energy_bound").fit(vacuum(1))
    with pytest.raises(ValueError):
        AdaptiveTomography(k_policy="nope").fit(vacuum(1))


def test_adaptive_exhausted_budget_warns():
    with pytest.warns(RuntimeWarning, match="unsqueezed"):
        est = AdaptiveTomography(epsilon=0.5, max_rounds=1, random_state=0).fit(squeezed(1e3))
    assert est.result_.metadata["unsqueezed"] is False


def test_adaptive_passive_scheme():
    h = StateHandle(squeezed(1e3), scheme="passive")
    r = adaptive_tomography(h, epsilon=0.3, k_policy="oracle", seed=2)
    assert len(r.rounds) == 5
    assert framed_perturbation_bound(squeezed(1e3), r.estimate, r.frame) <= r.epsilon_certificate


class RecordingHandle:
    def __init__(self, inner, log):
        self.inner, self.log = inner, log

    @property
    def n(self):
        return self.inner.n

    def heterodyne(self, N, rng=None):
        b = self.inner.heterodyne(N, rng)
        self.log.append((self.inner.transform, b))
        return b

    def transformed(self, S):
        return RecordingHandle(self.inner.transformed(S), self.log)


class ReplayHandle:
    """Serves recorded batches rotated into the current frame."""

    def __init__(self, T, log, calls):
        self.T, self.log, self.calls = T, log, calls

    @property
    def n(self):
        return self.T.shape[0] // 2

    def heterodyne(self, N, rng=None):
        T_ref, b = self.log[len(self.calls)]
        self.calls.append(N)
        R = self.T @ np.linalg.inv(T_ref)
        assert np.allclose(R @ R.T, np.eye(len(R)), atol=1e-6)
        return SampleBatch(data=b.data @ R.T, scheme="heterodyne", seed=b.seed)

    def transformed(self, S):
        return ReplayHandle(S @ self.T, self.log, self.calls)


def test_adaptive_gauge_invariance():
    truth = squeezed(100.0)
    kw = dict(epsilon=0.3, k_policy="energy_bound", inv_opnorm_bound=1e4, random_state=5)
    log = []
    ref = AdaptiveTomography(**kw).fit(RecordingHandle(StateHandle(truth), log))
    rng = np.random.default_rng(0)
    gauges = [random_orthosymplectic(1, rng) for _ in range(ref.k_budget_)]
    out = AdaptiveTomography(gauge=lambda i: gauges[i], **kw).fit(
        ReplayHandle(np.eye(2), log, []))
    assert not np.allclose(out.frame_, ref.frame_)
    d = framed_perturbation_bound(ref.state_, out.state_, ref.frame_)
    assert d < 1e-6


def test_recurrence():
    assert math.isclose(recurrence_bound(2.0), math.sqrt(3))
    assert recurrence_check([5.0]).ok
    assert recurrence_check([1e6, 800.0, 20.0, 3.0]).ok
    rep = recurrence_check([1e6, 2e3])
    assert not rep.ok and rep.violations == [0]
    logs = [RoundLog(0, np.eye(2), 10, 1.0, 100.0, 5.0),
            RoundLog(1, np.eye(2), 10, 1.0, 5.0, 5.0, applied=False)]
    assert recurrence_check(logs).ok
    with pytest.raises(ValueError):
        recurrence_check([RoundLog(0, np.eye(2), 10, 1.0)])


def test_energy_independence_of_adaptive_total():
    # N_t depends on (n, ε, δ, k) only; the state enters through k alone
    ks = []
    for B in (1e1, 1e3, 1e6):
        est = AdaptiveTomography(epsilon=0.3, k_policy="energy_bound", inv_opnorm_bound=B,
                                 random_state=0).fit(squeezed(math.sqrt(B)))
        k = est.k_budget_
        ks.append(k)
        assert 1 <= k <= 5
        assert est.N_t_ == plan_samples("adaptive", 1, 0.3, 0.05, k=k).N_t
        assert est.result_.rounds[-1].a_after <= 2.5
        other = AdaptiveTomography(epsilon=0.3, k_policy="energy_bound", inv_opnorm_bound=B,
                                   random_state=0).fit(thermal(5.0))
        assert other.N_t_ == est.N_t_ and other.N_h_ == est.N_h_
    assert ks == [2, 4, 5]
