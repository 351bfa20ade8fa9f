"""Sampling from the outcome laws of homodyne, heterodyne and related schemes.

Every scheme reduces to a multivariate normal law; samplers draw from that law
directly and expose its analytic moments next to the data.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .state import GaussianState, apply_symplectic, transpose_state
from .symplectic import euler, is_symplectic, symplectic_inverse

__all__ = [
    "SCHEMES",
    "SampleBatch",
    "make_rng",
    "parse_selection",
    "sample_gaussian",
    "heterodyne_moments",
    "homodyne_moments",
    "generaldyne_moments",
    "transpose_scheme_moments",
    "passive_unsqueeze_moments",
    "euler_variant_moments",
    "sample_heterodyne",
    "sample_homodyne",
    "sample_generaldyne",
    "sample_transpose_scheme",
    "passive_unsqueeze_heterodyne",
    "euler_variant_unsqueeze",
    "write_batch_csv",
    "read_batch_csv",
]

SCHEMES = (
    "heterodyne",
    "homodyne",
    "generaldyne",
    "transpose_scheme",
    "passive_unsqueeze",
    "euler_variant",
)
PSD_SLACK = 1e-10
MAX_COND = 1e12


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """``N x k`` outcome matrix with its scheme tag, seed and analytic law."""

    data: np.ndarray
    scheme: str
    seed: int | None = None
    mean: np.ndarray | None = field(default=None, repr=False)
    cov: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2:
            raise ValueError("sample data must be a 2-D array")
        if not np.all(np.isfinite(data)):
            raise ValueError("sample data has non-finite entries")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def N(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


def make_rng(seed=None) -> tuple[np.random.Generator, int]:
    """Counter-based Philox generator plus the integer seed that reproduces it."""
    if isinstance(seed, np.random.Generator):
        s = int(seed.integers(0, 2**63))
        return np.random.Generator(np.random.Philox(s)), s
    if seed is None:
        seed = int(np.random.SeedSequence().generate_state(1, np.uint64)[0] >> np.uint64(1))
    seed = int(seed)
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    return np.random.Generator(np.random.Philox(seed)), seed


def parse_selection(sel, n: int) -> np.ndarray:
    """Per-mode quadrature choice ('x'/'p', 'position'/'momentum') -> indices."""
    if isinstance(sel, str):
        sel = [sel] * n if sel in ("x", "p", "position", "momentum") else list(sel)
    sel = list(sel)
    if len(sel) != n:
        raise ValueError(f"selection has length {len(sel)}, expected {n}")
    idx = []
    for j, s in enumerate(sel):
        if s in ("x", "position", 0):
            idx.append(2 * j)
        elif s in ("p", "momentum", 1):
            idx.append(2 * j + 1)
        else:
            raise ValueError(f"bad quadrature choice {s!r}")
    return np.array(idx)


def _psd_factor(cov: np.ndarray) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    cov = 0.5 * (cov + cov.T)
    lam, U = np.linalg.eigh(cov)
    if lam.size and lam[0] < -PSD_SLACK * max(1.0, lam[-1]):
        raise ValueError(f"covariance is not PSD (eigenvalue {lam[0]:.3e})")
    return U * np.sqrt(np.clip(lam, 0.0, None))


def sample_gaussian(mean, cov, N: int, rng) -> np.ndarray:
    """``N`` i.i.d. draws from ``𝒩(mean, cov)`` via a symmetric factorisation."""
    mean = np.asarray(mean, dtype=float).reshape(-1)
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (mean.size, mean.size):
        raise ValueError("mean and cov dimensions disagree")
    if int(N) != N or N < 1:
        raise ValueError("N must be a positive integer")
    F = _psd_factor(cov)
    xi = rng.standard_normal((int(N), mean.size))
    return mean + xi @ F.T


def heterodyne_moments(state: GaussianState):
    return state.m.copy(), 0.5 * (state.V + np.eye(state.V.shape[0]))


def homodyne_moments(state: GaussianState, sel):
    idx = parse_selection(sel, state.n)
    return state.m[idx].copy(), 0.5 * state.V[np.ix_(idx, idx)]


def generaldyne_moments(a: GaussianState, b: GaussianState):
    if a.n != b.n:
        raise ValueError(f"mode counts differ: {a.n} vs {b.n}")
    s = np.tile([1.0, -1.0], a.n)
    return a.m + s * b.m, 0.5 * (a.V + b.V * np.outer(s, s))


def transpose_scheme_moments(state: GaussianState):
    return 2.0 * state.m, state.V.copy()


def _check_unsqueezer(S: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    S = np.asarray(S, dtype=float)
    if S.shape != (2 * n, 2 * n):
        raise ValueError(f"S has shape {S.shape}, expected {(2 * n, 2 * n)}")
    if not is_symplectic(S):
        raise ValueError("S is not symplectic")
    Si = symplectic_inverse(S)
    cond = np.linalg.norm(S, np.inf) * np.linalg.norm(Si, np.inf)
    if cond > MAX_COND:
        raise ValueError(f"S is too ill-conditioned (||S|| ||S⁻¹|| = {cond:.3e})")
    return S, Si


def passive_unsqueeze_moments(state: GaussianState, S):
    """Law of ``S r`` with ``r ~ 𝒩(m, (V + S⁻¹S⁻ᵀ)/2)``, computed literally."""
    S, Si = _check_unsqueezer(S, state.n)
    C = 0.5 * (state.V + Si @ Si.T)
    return S @ state.m, S @ C @ S.T


def euler_variant_moments(state: GaussianState, S):
    """Law of ``O1 Z r`` with ``r ~ 𝒩(O2 m, (O2 V O2ᵀ + Z⁻¹Z⁻ᵀ)/2)``, computed literally."""
    _check_unsqueezer(S, state.n)
    e = euler(S)
    zz = np.column_stack([e.z, 1.0 / e.z]).ravel()
    M = e.O1 * zz
    C = 0.5 * (e.O2 @ state.V @ e.O2.T + np.diag(1.0 / zz**2))
    return M @ (e.O2 @ state.m), M @ C @ M.T


def _batch(data, scheme, seed, mean, cov) -> SampleBatch:
    return SampleBatch(data=data, scheme=scheme, seed=seed, mean=mean, cov=cov)


def sample_heterodyne(state: GaussianState, N: int, rng=None) -> SampleBatch:
    """Heterodyne outcomes ``r ~ 𝒩(m, (V + 𝟙)/2)``."""
    g, seed = make_rng(rng)
    mean, cov = heterodyne_moments(state)
    return _batch(sample_gaussian(mean, cov, N, g), "heterodyne", seed, mean, cov)


def sample_homodyne(state: GaussianState, sel, N: int, rng=None) -> SampleBatch:
    """Homodyne outcomes of the selected quadrature of each mode."""
    g, seed = make_rng(rng)
    mean, cov = homodyne_moments(state, sel)
    return _batch(sample_gaussian(mean, cov, N, g), "homodyne", seed, mean, cov)


def sample_generaldyne(a: GaussianState, aux: GaussianState, N: int, rng=None) -> SampleBatch:
    """Beam splitter with an auxiliary state, then ``x`` on one arm and ``p`` on the other.

    The outcome law is ``𝒩(m₁ + m̄₂, (V₁ + V̄₂)/2)``, bar denoting the momentum
    sign flip.
    """
    g, seed = make_rng(rng)
    mean, cov = generaldyne_moments(a, aux)
    return _batch(sample_gaussian(mean, cov, N, g), "generaldyne", seed, mean, cov)


def sample_transpose_scheme(state: GaussianState, N: int, rng=None) -> SampleBatch:
    """Generaldyne with ρᵀ as auxiliary state, giving ``𝒩(2m, V)``."""
    g, seed = make_rng(rng)
    mean, cov = generaldyne_moments(state, transpose_state(state))
    m2, V2 = transpose_scheme_moments(state)
    if not (np.array_equal(mean, m2) and np.array_equal(cov, V2)):
        raise AssertionError("generaldyne law with transposed auxiliary differs from 𝒩(2m, V)")
    return _batch(sample_gaussian(m2, V2, N, g), "transpose_scheme", seed, m2, V2)


def passive_unsqueeze_heterodyne(state: GaussianState, S, N: int, rng=None) -> SampleBatch:
    """Heterodyne on ``U_S ρ U_S†`` emulated with passive optics.

    Draws ``r ~ 𝒩(m, (V + S⁻¹S⁻ᵀ)/2)`` (generaldyne against a squeezed vacuum)
    and returns ``S r``. The reported law is that of heterodyne on the
    transformed state.
    """
    S, Si = _check_unsqueezer(S, state.n)
    g, seed = make_rng(rng)
    C = 0.5 * (state.V + Si @ Si.T)
    r = sample_gaussian(state.m, C, N, g)
    mean, cov = heterodyne_moments(apply_symplectic(state, S))
    return _batch(r @ S.T, "passive_unsqueeze", seed, mean, cov)


def euler_variant_unsqueeze(state: GaussianState, S, N: int, rng=None) -> SampleBatch:
    """Same law as :func:`passive_unsqueeze_heterodyne` via ``S = O1 Z O2``.

    The state is rotated by ``O2``, measured against an auxiliary squeezed
    vacuum of covariance ``Z⁻¹Z⁻ᵀ``, and the outcome is post-processed by
    ``O1 Z``.
    """
    S, _ = _check_unsqueezer(S, state.n)
    g, seed = make_rng(rng)
    e = euler(S)
    zz = np.column_stack([e.z, 1.0 / e.z]).ravel()
    C = 0.5 * (e.O2 @ state.V @ e.O2.T + np.diag(1.0 / zz**2))
    r = sample_gaussian(e.O2 @ state.m, C, N, g)
    mean, cov = heterodyne_moments(apply_symplectic(state, S))
    return _batch(r @ (e.O1 * zz).T, "euler_variant", seed, mean, cov)


def write_batch_csv(batch: SampleBatch, fh=None, n: int | None = None) -> str:
    """CSV with a ``# scheme=...,seed=...,n=...,N=...`` comment row then one outcome per line."""
    if n is None:
        n = batch.dim // 2 if batch.scheme != "homodyne" else batch.dim
    buf = io.StringIO()
    buf.write(f"# scheme={batch.scheme},seed={batch.seed},n={n},N={batch.N}\n")
    np.savetxt(buf, batch.data, delimiter=",", fmt="%.17g")
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def read_batch_csv(fh) -> SampleBatch:
    text = fh.read() if hasattr(fh, "read") else str(fh)
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError("missing header comment row")
    meta = dict(kv.split("=", 1) for kv in lines[0][1:].strip().split(","))
    missing = {"scheme", "seed", "n", "N"} - set(meta)
    if missing:
        raise ValueError(f"header lacks fields {sorted(missing)}")
    data = np.loadtxt(io.StringIO("\n".join(lines[1:])), delimiter=",", ndmin=2)
    if data.shape[0] != int(meta["N"]):
        raise ValueError(f"header says N={meta['N']} but found {data.shape[0]} rows")
    seed = None if meta["seed"] == "None" else int(meta["seed"])
    return SampleBatch(data=data, scheme=meta["scheme"], seed=seed)

