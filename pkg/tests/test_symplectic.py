import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gausstomo.symplectic import (
    ConditioningError,
    euler,
    geometric_mean,
    is_symplectic,
    matrix_abs,
    omega,
    random_covariance,
    random_orthosymplectic,
    random_symplectic,
    symplectic_eigenvalues,
    symplectic_inverse,
    sym_sqrt,
    williamson,
)


def nu_oracle(V):
    # moduli of the eigenvalues of iΩV, one per pair
    n = V.shape[0] // 2
    ev = np.abs(np.linalg.eigvals(1j * omega(n) @ V))
    return np.sort(ev)[::-1][::2]


def random_pd(rng, k, cond=10.0):
    Q, _ = np.linalg.qr(rng.standard_normal((k, k)))
    return (Q * np.exp(rng.uniform(0, np.log(cond), k))) @ Q.T


def test_omega():
    assert np.array_equal(omega(1), [[0, 1], [-1, 0]])
    W = omega(3)
    assert W.shape == (6, 6)
    assert np.array_equal(W @ W, -np.eye(6))
    assert np.array_equal(W.T, -W)
    assert np.isclose(np.linalg.det(W), 1.0)
    assert np.count_nonzero(W) == 6
    with pytest.raises(ValueError):
        omega(0)


def test_is_symplectic_examples():
    assert is_symplectic(np.eye(4))
    assert is_symplectic(np.diag([3.0, 1 / 3]))
    assert not is_symplectic(np.diag([2.0, 2.0]))
    with pytest.raises(ValueError):
        is_symplectic(np.eye(3))


def test_williamson_thermal():
    w = williamson(np.diag([4.0, 4.0]))
    assert np.allclose(w.D, np.diag([4.0, 4.0]))
    assert np.allclose(w.S @ w.S.T, np.eye(2), atol=1e-12)
    assert is_symplectic(w.S)


def test_williamson_squeezed():
    z = 2.0
    V = np.diag([z**2, z**-2])
    w = williamson(V)
    assert np.allclose(w.nu, [1.0])
    assert np.allclose(nu_oracle(V), [1.0])
    assert np.allclose(w.reconstruct(), V, rtol=0, atol=1e-12)


def test_symplectic_eigenvalue_examples():
    assert np.allclose(symplectic_eigenvalues(np.eye(6)), [1, 1, 1])
    assert np.allclose(symplectic_eigenvalues(np.diag([100.0, 0.01])), [1.0])
    assert np.allclose(symplectic_eigenvalues(np.diag([5.0, 5, 3, 3])), [5, 3])


def test_williamson_rejects_bad_input():
    with pytest.raises(ValueError):
        williamson(np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        williamson(np.diag([1.0, -1.0]))
    with pytest.raises(ValueError):
        williamson(np.eye(3))


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 6), seed=st.integers(0, 2**32 - 1),
       sq=st.floats(1.0, 1e3), temp=st.floats(1.0, 10.0))
def test_williamson_invariants(n, seed, sq, temp):
    rng = np.random.default_rng(seed)
    V = random_covariance(n, sq, temp, rng)
    w = williamson(V)
    scale = np.abs(V).max()
    assert np.abs(w.reconstruct() - V).max() <= 1e-8 * scale
    assert is_symplectic(w.S)
    assert np.all(np.diff(w.nu) <= 0)
    # rounding V to doubles moves ν by about eps·cond(V), which exceeds 1e-8
    # for near-pure states squeezed beyond z ~ 300
    slack = 1e-8 + 50 * np.finfo(float).eps * np.linalg.cond(V)
    assert np.all(w.nu >= 1 - slack)
    d = np.diag(w.D)
    assert np.array_equal(d[0::2], d[1::2])


def test_williamson_matches_eigen_oracle():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = rng.integers(1, 5)
        V = random_covariance(n, 5.0, 4.0, rng)
        assert np.allclose(williamson(V).nu, nu_oracle(V), rtol=1e-9)


def test_symplectic_spectrum_invariant_under_congruence():
    rng = np.random.default_rng(2)
    for _ in range(30):
        n = rng.integers(1, 5)
        V = random_covariance(n, 3.0, 5.0, rng)
        S = random_symplectic(n, 3.0, rng)
        a, b = symplectic_eigenvalues(V), symplectic_eigenvalues(S @ V @ S.T)
        assert np.allclose(a, b, rtol=1e-8)


def test_half_of_eigenvalues_at_least_one():
    rng = np.random.default_rng(3)
    for _ in range(100):
        n = rng.integers(1, 7)
        V = random_covariance(n, 50.0, 3.0, rng)
        lam = np.linalg.eigvalsh(V)
        assert np.sum(lam >= 1 - 1e-9) >= n


def test_euler_identity():
    e = euler(np.eye(4))
    assert np.allclose(e.z, 1.0)
    assert np.allclose(e.reconstruct(), np.eye(4), atol=1e-12)
    assert np.allclose(e.O1 @ e.O2, np.eye(4), atol=1e-12)


def test_euler_single_squeezer():
    e = euler(np.diag([4.0, 0.25]))
    assert np.allclose(np.diag(e.Z), [4.0, 0.25])
    P = e.O1 @ e.O2
    assert np.allclose(P @ P.T, np.eye(2), atol=1e-12)
    assert np.allclose(e.reconstruct(), np.diag([4.0, 0.25]), atol=1e-12)


def test_euler_rejects_non_symplectic():
    with pytest.raises(ValueError):
        euler(np.diag([2.0, 2.0]))


def test_euler_round_trip_recovers_squeezing():
    rng = np.random.default_rng(4)
    for _ in range(40):
        n = int(rng.integers(1, 6))
        z = np.sort(np.exp(rng.uniform(0, np.log(100.0), n)))[::-1]
        Z = np.diag(np.column_stack([z, 1 / z]).ravel())
        S = random_orthosymplectic(n, rng) @ Z @ random_orthosymplectic(n, rng)
        e = euler(S)
        assert np.abs(e.reconstruct() - S).max() <= 1e-8 * np.abs(S).max()
        assert np.allclose(e.z, z, rtol=1e-8)
        for O in (e.O1, e.O2):
            assert np.abs(O @ O.T - np.eye(2 * n)).max() <= 1e-8 * (1 + np.linalg.norm(O, 2))
            assert is_symplectic(O)
        sv = np.sort(np.linalg.svd(e.Z, compute_uv=False))
        assert np.allclose(sv * sv[::-1], 1.0)


def test_symplectic_inverse():
    rng = np.random.default_rng(5)
    S = random_symplectic(3, 10.0, rng)
    assert np.allclose(symplectic_inverse(S) @ S, np.eye(6), atol=1e-9)


def test_random_generators():
    rng = np.random.default_rng(6)
    O = random_symplectic(3, 1.0, rng)
    assert np.allclose(O @ O.T, np.eye(6), atol=1e-12)
    a = random_symplectic(2, 10.0, np.random.default_rng(7))
    b = random_symplectic(2, 10.0, np.random.default_rng(7))
    assert np.array_equal(a, b)
    V = random_covariance(3, 1.0, 1.0, rng)
    assert np.allclose(symplectic_eigenvalues(V), 1.0)
    V1 = random_covariance(2, 5.0, 3.0, np.random.default_rng(8))
    V2 = random_covariance(2, 5.0, 3.0, np.random.default_rng(8))
    assert np.array_equal(V1, V2)
    assert symplectic_eigenvalues(V1).min() >= 1 - 1e-10


def test_geometric_mean_examples():
    assert np.allclose(geometric_mean(4 * np.eye(3), np.eye(3)), 2 * np.eye(3))
    rng = np.random.default_rng(9)
    A, B = random_pd(rng, 4), random_pd(rng, 4)
    assert np.allclose(geometric_mean(A, A), A)
    G = geometric_mean(A, B)
    assert np.allclose(geometric_mean(9 * A, B), 3 * G, rtol=0, atol=1e-10 * np.abs(G).max())
    # G is the unique PD solution of G A⁻¹ G = B
    assert np.allclose(G @ np.linalg.solve(A, G), B)
    assert np.allclose(G, G.T)


def test_geometric_mean_commuting_case():
    d1, d2 = np.array([1.0, 4.0, 9.0]), np.array([16.0, 1.0, 0.25])
    assert np.allclose(geometric_mean(np.diag(d1), np.diag(d2)), np.diag(np.sqrt(d1 * d2)))


def test_geometric_mean_congruence():
    rng = np.random.default_rng(10)
    for _ in range(20):
        A, B = random_pd(rng, 4), random_pd(rng, 4)
        X = rng.standard_normal((4, 4)) + 2 * np.eye(4)
        lhs = geometric_mean(X @ A @ X.T, X @ B @ X.T)
        rhs = X @ geometric_mean(A, B) @ X.T
        assert np.abs(lhs - rhs).max() <= 1e-9 * max(1.0, np.abs(rhs).max())


def test_geometric_mean_monotone():
    rng = np.random.default_rng(11)
    for _ in range(30):
        a, b = random_pd(rng, 3), random_pd(rng, 3)
        A = a + random_pd(rng, 3) * rng.uniform(0, 1)
        B = b + random_pd(rng, 3) * rng.uniform(0, 1)
        gap = geometric_mean(A, B) - geometric_mean(a, b)
        assert np.linalg.eigvalsh(gap).min() >= -1e-9


def test_geometric_mean_rejects():
    with pytest.raises(ValueError):
        geometric_mean(np.eye(2), np.eye(3))
    with pytest.raises(ValueError):
        geometric_mean(np.diag([1.0, -1.0]), np.eye(2))


def test_sym_sqrt_conditioning():
    with pytest.raises(ConditioningError):
        sym_sqrt(np.diag([1.0, 1e-14]))


def test_matrix_abs():
    assert np.allclose(matrix_abs(np.diag([3.0, -2.0])), np.diag([3.0, 2.0]))
    rng = np.random.default_rng(12)
    P = random_pd(rng, 3)
    assert np.allclose(matrix_abs(P), P)
    for _ in range(20):
        X = rng.standard_normal((4, 4))
        X = X + X.T
        M = matrix_abs(X)
        assert np.linalg.eigvalsh(M - X).min() >= -1e-10
        assert np.linalg.eigvalsh(M + X).min() >= -1e-10
    with pytest.raises(ValueError):
        matrix_abs(np.array([[0.0, 1.0], [0.0, 0.0]]))
