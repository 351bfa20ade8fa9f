"""Experiment configuration, Monte Carlo trials, sweeps and invariant suites."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import os
import re
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bounds, fock, measurement
from .estimation import AdaptiveTomography, StateHandle, heterodyne_tomography, transpose_tomography
from .state import (
    GaussianState,
    apply_symplectic,
    cov_inverse,
    energy,
    from_williamson,
    squeezed_thermal,
    thermal,
    vacuum,
)
from .symplectic import (
    euler,
    geometric_mean,
    is_symplectic,
    random_covariance,
    random_symplectic,
    williamson,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "TrialRecord",
    "parse_state",
    "load_config",
    "config_from_dict",
    "config_hash",
    "trial_seed",
    "planned_samples",
    "run_trial",
    "run_experiment",
    "run_sweep",
    "verify_suite",
    "default_workers",
    "write_csv",
]

FAMILIES = ("vacuum", "thermal", "squeezed", "squeezed_thermal", "random", "file")
K_POLICIES = ("oracle", "energy_bound", "empirical")
ORACLE_MAX_ENERGY = 25.0


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a state, a protocol, a sample budget and a trial count.

    Exactly one of ``N`` and ``epsilon`` is set. With ``epsilon`` the sample
    count comes from the planner (heterodyne uses the true ``Tr(V⁻¹)``).
    """

    state: str = "vacuum"
    protocol: str = "heterodyne"
    N: int | None = None
    epsilon: float | None = None
    delta: float = 0.05
    trials: int = 1
    seed: int = 0
    k_policy: str = "oracle"
    inv_opnorm_bound: float | None = None
    scheme: str = "active"
    oracle_distance: bool = False
    energy_bound: float | None = None
    max_samples: int = 50_000_000
    sweep_squeeze: tuple = ()
    sweep_N: tuple = ()
    sweep_protocols: tuple = ()

    def __post_init__(self):
        if (self.N is None) == (self.epsilon is None):
            raise ConfigError("exactly one of 'N' and 'epsilon' must be given")
        if self.N is not None and (int(self.N) != self.N or self.N < 2):
            raise ConfigError(f"N must be an integer >= 2, got {self.N}")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if not 0 < self.delta < 1:
            raise ConfigError("delta must lie in (0, 1)")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ConfigError("trials must be an integer >= 1")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        for p in (self.protocol, *self.sweep_protocols):
            if p not in bounds.PROTOCOLS:
                raise ConfigError(f"unknown protocol {p!r}")
        if self.k_policy not in K_POLICIES:
            raise ConfigError(f"unknown k_policy {self.k_policy!r}")
        if self.scheme not in ("active", "passive"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.N is not None and "adaptive" in (self.protocol, *self.sweep_protocols):
            raise ConfigError("the adaptive protocol needs 'epsilon', not 'N'")
        parse_state(self.state)

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k in ("sweep_squeeze", "sweep_N", "sweep_protocols"):
            d[k] = list(d[k])
        return d


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    seed: int
    protocol: str
    N_total: int
    k: int
    certificate: float | None
    bound_distance: float
    oracle_distance: float | None = None
    failure: bool | None = None
    config_hash: str = ""
    rounds: list = field(default_factory=list)

    def row(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("rounds")
        return d


_CALL = re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$")
_ARITY = {"vacuum": (0, 1), "thermal": (1, 2), "squeezed": (1, 2), "squeezed_thermal": (2, 3),
          "random": (3, 3), "file": (1, 1)}


def parse_state(spec: str, seed: int = 0) -> GaussianState:
    """Build a state from ``family(args)``.

    Families: ``vacuum[(n)]``, ``thermal(ν[, n])``, ``squeezed(z[, n])``,
    ``squeezed_thermal(z, ν[, n])``, ``random(n, squeeze_max, temp_max)`` (drawn
    with ``seed``) and ``file(path)`` for a JSON ``{n, m, V}`` document.
    """
    mt = _CALL.match(str(spec))
    if not mt:
        raise ConfigError(f"cannot parse state {spec!r}")
    fam, args = mt.group(1), mt.group(2)
    if fam not in FAMILIES:
        raise ConfigError(f"unknown state family {fam!r}; expected one of {FAMILIES}")
    if fam == "file":
        path = (args or "").strip().strip("'\"")
        try:
            with open(path) as fh:
                return GaussianState.from_dict(json.load(fh))
        except (OSError, KeyError, json.JSONDecodeError, ValueError) as exc:
            raise ConfigError(f"cannot load state file {path!r}: {exc}") from None
    vals = [] if not args or not args.strip() else [a.strip() for a in args.split(",")]
    lo, hi = _ARITY[fam]
    if not lo <= len(vals) <= hi:
        raise ConfigError(f"{fam} takes {lo}..{hi} arguments, got {len(vals)}")
    try:
        x = [float(v) for v in vals]
    except ValueError:
        raise ConfigError(f"non-numeric argument in {spec!r}") from None
    try:
        if fam == "vacuum":
            return vacuum(int(x[0]) if x else 1)
        if fam == "thermal":
            return thermal(x[0], int(x[1]) if len(x) > 1 else 1)
        if fam == "squeezed":
            return squeezed_thermal(x[0], 1.0, int(x[1]) if len(x) > 1 else 1)
        if fam == "squeezed_thermal":
            return squeezed_thermal(x[0], x[1], int(x[2]) if len(x) > 2 else 1)
        n, smax, tmax = int(x[0]), x[1], x[2]
        rng = np.random.default_rng(seed)
        S = random_symplectic(n, smax, rng)
        nu = rng.uniform(1.0, tmax, size=n)
        return from_williamson(S, nu)
    except ValueError as exc:
        raise ConfigError(f"invalid state {spec!r}: {exc}") from None


def _with_squeeze(spec: str, z: float) -> str:
    mt = _CALL.match(spec)
    fam, args = mt.group(1), (mt.group(2) or "")
    rest = [a.strip() for a in args.split(",") if a.strip()]
    if fam == "squeezed":
        return f"squeezed({z}{''.join(', ' + a for a in rest[1:])})"
    if fam == "squeezed_thermal":
        return f"squeezed_thermal({z}, {', '.join(rest[1:])})"
    if fam == "random":
        return f"random({rest[0]}, {z}, {rest[2]})"
    raise ConfigError(f"state family {fam!r} has no squeeze parameter to sweep")


_TOP_KEYS = {
    "state", "protocol", "N", "epsilon", "delta", "trials", "seed", "k_policy",
    "inv_opnorm_bound", "scheme", "oracle_distance", "energy_bound", "max_samples", "sweep",
}
_SWEEP_KEYS = {"squeeze", "N", "protocols"}


def config_from_dict(d: dict, source: str = "<config>") -> ExperimentConfig:
    unknown = set(d) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"{source}: unknown keys {sorted(unknown)}")
    kw = {k: v for k, v in d.items() if k != "sweep"}
    sw = d.get("sweep", {})
    if not isinstance(sw, dict):
        raise ConfigError(f"{source}: 'sweep' must be a table")
    unknown = set(sw) - _SWEEP_KEYS
    if unknown:
        raise ConfigError(f"{source}: unknown keys in [sweep]: {sorted(unknown)}")
    kw["sweep_squeeze"] = tuple(float(v) for v in sw.get("squeeze", ()))
    kw["sweep_N"] = tuple(int(v) for v in sw.get("N", ()))
    kw["sweep_protocols"] = tuple(sw.get("protocols", ()))
    if "state" in kw and not isinstance(kw["state"], str):
        raise ConfigError(f"{source}: 'state' must be a string such as \"squeezed(10)\"")
    try:
        return ExperimentConfig(**kw)
    except TypeError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Read a TOML experiment file; ``overrides`` (e.g. CLI flags) win over file values."""
    data: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    for k, v in (overrides or {}).items():
        if v is not None:
            data[k] = v
    if "N" in (overrides or {}) and overrides["N"] is not None:
        data.pop("epsilon", None)
    if "epsilon" in (overrides or {}) and overrides["epsilon"] is not None:
        data.pop("N", None)
    return config_from_dict(data, str(path) if path else "<flags>")


def config_hash(cfg: ExperimentConfig) -> str:
    blob = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def trial_seed(master: int, trial: int) -> int:
    ss = np.random.SeedSequence([int(master), int(trial)])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def planned_samples(cfg: ExperimentConfig, truth: GaussianState) -> int:
    """Sample count of one trial (planned from the truth when ``epsilon`` is set)."""
    if cfg.N is not None:
        return int(cfg.N)
    T = B = None
    if cfg.protocol == "heterodyne":
        T = float(np.trace(cov_inverse(truth)))
    if cfg.protocol == "adaptive":
        B = float(np.linalg.eigvalsh(cov_inverse(truth))[-1])
        if cfg.k_policy == "energy_bound":
            B = cfg.inv_opnorm_bound
    k = bounds.MAX_ROUNDS if cfg.protocol == "adaptive" and cfg.k_policy == "empirical" else None
    plan = bounds.plan_samples(cfg.protocol, truth.n, cfg.epsilon, cfg.delta,
                               trace_inv_bound=T, inv_opnorm_bound=B, k=k)
    return plan.N_total


def _planned_N(cfg: ExperimentConfig, truth: GaussianState) -> int:
    N = planned_samples(cfg, truth)
    if N > cfg.max_samples:
        raise ConfigError(f"planned sample count {N} exceeds max_samples={cfg.max_samples}")
    return N


def _oracle_distance(truth: GaussianState, est: GaussianState) -> float | None:
    if truth.n != 1 or max(energy(truth), energy(est)) > ORACLE_MAX_ENERGY:
        return None
    ra = fock.gaussian_to_fock(truth)
    rb = fock.gaussian_to_fock(est)
    d = max(ra.dim, rb.dim)
    if ra.dim != d:
        ra = fock.gaussian_to_fock(truth, d)
    if rb.dim != d:
        rb = fock.gaussian_to_fock(est, d)
    return fock.trace_distance_fock(ra, rb)


def run_trial(cfg: ExperimentConfig, trial: int) -> TrialRecord:
    """One seeded trial; the result depends only on ``(cfg, trial)``."""
    seed = trial_seed(cfg.seed, trial)
    truth = parse_state(cfg.state, cfg.seed)
    frame = None
    rounds: list = []
    k = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if cfg.protocol == "heterodyne":
            res = heterodyne_tomography(truth, _planned_N(cfg, truth), cfg.delta, seed,
                                        cfg.energy_bound)
        elif cfg.protocol == "transpose":
            res = transpose_tomography(truth, _planned_N(cfg, truth), cfg.delta, seed)
        else:
            _planned_N(cfg, truth)
            est = AdaptiveTomography(
                epsilon=cfg.epsilon, delta=cfg.delta, k_policy=cfg.k_policy,
                inv_opnorm_bound=cfg.inv_opnorm_bound, random_state=seed,
            ).fit(StateHandle(truth, scheme=cfg.scheme))
            res = est.result_
            frame = res.frame
            rounds = [r.to_dict() for r in res.rounds]
            k = len(res.rounds)
    bd = bounds.framed_perturbation_bound(truth, res.estimate, frame)
    od = _oracle_distance(truth, res.estimate) if cfg.oracle_distance else None
    cert = res.epsilon_certificate
    return TrialRecord(
        trial=trial, seed=seed, protocol=cfg.protocol, N_total=int(res.total_samples), k=k,
        certificate=cert, bound_distance=bd, oracle_distance=od,
        failure=None if cert is None else bool(bd > cert),
        config_hash=config_hash(cfg), rounds=rounds,
    )


def _run_trial_args(args):
    return run_trial(*args)


def default_workers() -> int:
    v = os.environ.get("GAUSSTOMO_WORKERS")
    if v is None:
        return 1
    try:
        w = int(v)
    except ValueError:
        raise ConfigError(f"GAUSSTOMO_WORKERS must be an integer, got {v!r}") from None
    if w < 1:
        raise ConfigError("GAUSSTOMO_WORKERS must be >= 1")
    return w


def _summary(cfg: ExperimentConfig, recs: list) -> dict:
    fails = [r.failure for r in recs if r.failure is not None]
    rate = float(np.mean(fails)) if fails else None
    limit = cfg.delta + 3 * math.sqrt(cfg.delta * (1 - cfg.delta) / len(recs))
    certs = [r.certificate for r in recs if r.certificate is not None]
    return {
        "config_hash": config_hash(cfg),
        "config": cfg.to_dict(),
        "trials": len(recs),
        "failure_rate": rate,
        "delta": cfg.delta,
        "failure_limit": limit,
        "calibrated": None if rate is None else rate <= limit,
        "mean_N_total": float(np.mean([r.N_total for r in recs])),
        "mean_certificate": float(np.mean(certs)) if certs else None,
        "mean_bound_distance": float(np.mean([r.bound_distance for r in recs])),
        "max_k": max(r.k for r in recs),
    }


def run_experiment(cfg: ExperimentConfig, workers: int | None = None):
    """Run ``cfg.trials`` trials, in parallel when ``workers > 1``.

    Returns ``(records, summary)``; the summary's failure rate is the fraction
    of trials whose bound distance exceeds the certificate.
    """
    workers = default_workers() if workers is None else int(workers)
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    jobs = [(cfg, t) for t in range(cfg.trials)]
    if workers == 1 or cfg.trials == 1:
        recs = [run_trial(c, t) for c, t in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            recs = list(ex.map(_run_trial_args, jobs))
    return recs, _summary(cfg, recs)


def run_sweep(cfg: ExperimentConfig, workers: int | None = None):
    """Cartesian sweep over squeeze values, N values and protocols.

    Returns ``{axis: rows}`` (one table per sweep axis) and a JSON summary.
    """
    protocols = cfg.sweep_protocols or (cfg.protocol,)
    axes = {}
    if cfg.sweep_squeeze:
        axes["squeeze"] = [("squeeze", z, {"state": _with_squeeze(cfg.state, z)})
                           for z in cfg.sweep_squeeze]
    if cfg.sweep_N:
        axes["N"] = [("N", N, {"N": N, "epsilon": None}) for N in cfg.sweep_N]
    if not axes:
        raise ConfigError("sweep needs [sweep] squeeze or N values")
    tables, summaries = {}, []
    for axis, points in axes.items():
        rows = []
        for _, val, change in points:
            for proto in protocols:
                sub = cfg.replace(protocol=proto, sweep_squeeze=(), sweep_N=(),
                                  sweep_protocols=(), **change)
                planned = planned_samples(sub, parse_state(sub.state, sub.seed))
                if planned > sub.max_samples:
                    # too large to simulate; keep the planned count in the table
                    summaries.append({"axis": axis, "param": val, "protocol": proto,
                                      "config_hash": config_hash(sub), "skipped": True,
                                      "planned_N_total": planned})
                    rows.append({"param": val, "trial": None, "seed": None, "protocol": proto,
                                 "N_total": planned, "k": None, "certificate": None,
                                 "bound_distance": None, "oracle_distance": None,
                                 "failure": None, "config_hash": config_hash(sub)})
                    continue
                recs, summ = run_experiment(sub, workers)
                summ.update({"axis": axis, "param": val, "protocol": proto, "skipped": False})
                summaries.append(summ)
                for r in recs:
                    rows.append({"param": val, **r.row()})
        tables[axis] = rows
    return tables, {"config_hash": config_hash(cfg), "points": summaries}


def _check(name, results, ok, count, **extra):
    results[name] = {"passed": bool(ok), "count": int(count), **extra}


def _verify_symplectic(rng, out):
    bad_w = bad_e = 0
    for _ in range(100):
        n = int(rng.integers(1, 5))
        V = random_covariance(n, 100.0, 5.0, rng)
        w = williamson(V)
        rec = np.abs(w.reconstruct() - V).max() / np.abs(V).max()
        if rec > 1e-8 or not is_symplectic(w.S) or w.nu.min() < 1 - 1e-8:
            bad_w += 1
        S = random_symplectic(n, 100.0, rng)
        e = euler(S)
        err = np.abs(e.reconstruct() - S).max() / np.abs(S).max()
        orth = max(np.abs(O @ O.T - np.eye(2 * n)).max() for O in (e.O1, e.O2))
        if err > 1e-8 or orth > 1e-8:
            bad_e += 1
    _check("williamson", out, bad_w == 0, 100, failures=bad_w)
    _check("euler", out, bad_e == 0, 100, failures=bad_e)
    bad_g = 0
    for _ in range(50):
        A = random_covariance(2, 3.0, 3.0, rng)
        B = random_covariance(2, 3.0, 3.0, rng)
        X = rng.normal(size=(4, 4)) + 3 * np.eye(4)
        lhs = geometric_mean(X @ A @ X.T, X @ B @ X.T)
        rhs = X @ geometric_mean(A, B) @ X.T
        if np.abs(lhs - rhs).max() > 1e-9 * max(1.0, np.abs(rhs).max()):
            bad_g += 1
    _check("geometric_mean_congruence", out, bad_g == 0, 50, failures=bad_g)


def _verify_bounds(rng, out, pairs=100):
    viol, ratios = 0, []
    for _ in range(pairs):
        a, b = _random_single_mode(rng), _random_single_mode(rng)
        d = _oracle_distance(a, b)
        pb = bounds.perturbation_bound(a, b)
        ratios.append(d / pb if pb > 0 else 0.0)
        if d > pb + 1e-6:
            viol += 1
    _check("perturbation_bound_dominance", out, viol == 0, pairs,
           pairs=pairs, violations=viol, max_ratio=float(max(ratios)))


def _verify_schemes(rng, out):
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 4))
        st = from_williamson(random_symplectic(n, 5.0, rng), rng.uniform(1, 3, n))
        S = random_symplectic(n, 5.0, rng)
        target = measurement.heterodyne_moments(apply_symplectic(st, S))[1]
        for f in (measurement.passive_unsqueeze_moments, measurement.euler_variant_moments):
            worst = max(worst, np.abs(f(st, S)[1] - target).max() / np.abs(target).max())
    _check("passive_identity", out, worst <= 1e-10, 200, max_rel_error=float(worst))
    st = from_williamson(random_symplectic(1, 3.0, rng), [1.5], [0.3, -0.2])
    S = random_symplectic(1, 3.0, rng)
    b1 = measurement.passive_unsqueeze_heterodyne(st, S, 100_000, rng)
    b2 = measurement.euler_variant_unsqueeze(st, S, 100_000, rng)
    c1, c2 = np.cov(b1.data.T, bias=True), np.cov(b2.data.T, bias=True)
    scale = np.abs(b1.cov).max()
    ok = np.abs(c1 - c2).max() <= 0.05 * scale
    _check("passive_vs_euler_monte_carlo", out, ok, 2,
           max_cov_gap=float(np.abs(c1 - c2).max() / scale))


def _random_single_mode(rng) -> GaussianState:
    S = random_symplectic(1, 2.0, rng)
    nu = rng.uniform(1.0, 3.0)
    ang = rng.uniform(0, 2 * np.pi)
    m = rng.uniform(0, 2.0) * np.array([np.cos(ang), np.sin(ang)])
    return from_williamson(S, [nu], m)


def verify_suite(scope: str = "all", seed: int = 0) -> dict:
    """Run invariant batteries; returns ``{"ok": bool, "checks": {...}}``."""
    scopes = ("symplectic", "bounds", "schemes")
    if scope not in scopes + ("all",):
        raise ConfigError(f"unknown scope {scope!r}")
    rng = np.random.default_rng(seed)
    checks: dict = {}
    chosen = scopes if scope == "all" else (scope,)
    if "symplectic" in chosen:
        _verify_symplectic(rng, checks)
    if "bounds" in chosen:
        _verify_bounds(rng, checks)
    if "schemes" in chosen:
        _verify_schemes(rng, checks)
    report = {"scope": scope, "seed": seed, "ok": all(c["passed"] for c in checks.values()),
              "checks": checks}
    if "perturbation_bound_dominance" in checks:
        c = checks["perturbation_bound_dominance"]
        report.update(pairs=c["pairs"], violations=c["violations"], max_ratio=c["max_ratio"])
    return report


def write_csv(rows: list, path: Path) -> None:
    if not rows:
        path.write_text("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)

