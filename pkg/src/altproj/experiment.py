"""Noise-sensitivity experiments for the Hankel / rank-k fit.

A trial draws a normalized sum of exponentials ``g``, adds noise whose
Hankel matrix is orthogonal to the rank-k Hankel manifold at ``H(g)``,
runs the alternating projections from ``H(g + noise)`` and records

    epsilon = ||g_inf - g||_w / ||noise||_w.

``H(g)`` stands in for the unknown nearest intersection point.
"""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import hankel as hk
from . import tangent
from .driver import CONVERGED, DriverConfig

log = logging.getLogger(__name__)

NOISE_KINDS = ("white", "exponential-sum")
MODULUS_RANGE = (0.8, 1.0)
MAX_RETRIES = 100
ORTHOGONALITY_TOL = 1e-10

SWEEP_COLUMNS = ["s", "trial", "epsilon", "iterations", "termination", "sigma_at_g", "seed_offset"]
SUMMARY_COLUMNS = ["s", "min", "median", "max", "sup", "failures"]


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    k: int
    n: int
    s_levels: tuple
    trials_per_level: int
    noise_kind: str = "white"
    seed: int = 0
    driver: DriverConfig = field(default_factory=DriverConfig)

    def __post_init__(self):
        object.__setattr__(self, "s_levels", tuple(float(s) for s in self.s_levels))
        errors = validate(self.k, self.n, self.s_levels, self.trials_per_level, self.noise_kind)
        if errors:
            raise ValueError("; ".join(errors))


def validate(k, n, s_levels, trials_per_level, noise_kind) -> list[str]:
    errs = []
    if not 1 <= k < n:
        errs.append(f"need 1 <= k < n, got k={k}, n={n}")
    if not s_levels:
        errs.append("s_levels is empty")
    if any(not s > 0 for s in s_levels):
        errs.append("s_levels must be positive")
    if len(set(s_levels)) != len(s_levels):
        errs.append("s_levels must be distinct")
    if trials_per_level < 1:
        errs.append("trials_per_level must be >= 1")
    if noise_kind not in NOISE_KINDS:
        errs.append(f"noise_kind must be one of {NOISE_KINDS}, got {noise_kind!r}")
    return errs


@dataclass(frozen=True)
class TrialRecord:
    s: float
    epsilon: float
    iterations: int
    termination: str
    sigma_at_g: float
    model: Optional[hk.ExpModel]  # None when sampling itself failed
    trial: int = 0
    seed_offset: int = 0
    error: str = ""


def random_exp_model(k: int, n: int, rng: np.random.Generator,
                     modulus_range=MODULUS_RANGE) -> hk.ExpModel:
    """Random k-term model with nodes in an annulus and ``||g||_w = 1``."""
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < n, got k={k}, n={n}")
    lo, hi = modulus_range
    for _ in range(MAX_RETRIES):
        alpha = rng.uniform(lo, hi, k) * np.exp(2j * np.pi * rng.random(k))
        c = (rng.standard_normal(k) + 1j * rng.standard_normal(k)) / np.sqrt(2)
        if hk.min_node_distance(alpha) <= 1e-10:
            continue
        g = hk.vandermonde(alpha, n) @ c
        s = np.linalg.svd(hk.hankel_embed(g), compute_uv=False)
        if s[k - 1] <= hk.RANK_RTOL * s[0]:
            continue
        model = hk.ExpModel(c / hk.weighted_norm(g), alpha, n)
        try:
            tangent.intersection_tangent_basis(model)
        except hk.DegenerateModelError:
            continue
        return model
    raise SamplingError(f"no admissible model after {MAX_RETRIES} draws")


def _complement_in_hankel(raw: np.ndarray, Qc: np.ndarray) -> np.ndarray:
    """Remove the intersection-tangent component of ``H(raw)``; returns a signal."""
    n = hk.signal_size(raw)
    v = tangent.to_real(hk.hankel_embed(raw))
    for _ in range(2):  # second pass mops up cancellation error
        v = v - Qc @ (Qc.T @ v)
    return hk.hankel_extract(tangent.from_real(v, (n, n), True))


def orthogonality_residual(noise: np.ndarray, Qc: np.ndarray) -> float:
    v = tangent.to_real(hk.hankel_embed(noise))
    return float(np.abs(Qc.T @ v).max(initial=0.0))


def orthogonal_noise(m: hk.ExpModel, kind: str, s: float, rng: np.random.Generator) -> np.ndarray:
    """Noise of weighted norm ``s`` whose Hankel matrix is normal to the rank-k Hankel manifold at ``H(g)``."""
    if not s > 0:
        raise ValueError(f"noise level must be positive, got {s}")
    if kind not in NOISE_KINDS:
        raise ValueError(f"unknown noise kind {kind!r}")
    Qc = tangent.intersection_tangent_basis(m).vectors
    for _ in range(MAX_RETRIES):
        if kind == "white":
            raw = rng.standard_normal(2 * m.n - 1) + 1j * rng.standard_normal(2 * m.n - 1)
        else:
            raw = random_exp_model(m.k, m.n, rng).signal()
        noise = _complement_in_hankel(raw, Qc)
        size = hk.weighted_norm(noise)
        if size < 1e-12 * hk.weighted_norm(raw):
            continue
        noise = noise * (s / size)
        resid = orthogonality_residual(noise, Qc)
        if resid > ORTHOGONALITY_TOL:
            raise ArithmeticError(f"noise is not orthogonal to the tangent space (residual {resid:.3g})")
        return noise
    raise SamplingError(f"degenerate noise after {MAX_RETRIES} draws")


def run_trial(m: hk.ExpModel, noise: np.ndarray, driver: DriverConfig = DriverConfig(),
              check_orthogonal: bool = False, s: float | None = None,
              trial: int = 0, seed_offset: int = 0) -> TrialRecord:
    """Fit ``g + noise`` and measure the relative error against ``g``.

    Projection or driver failures are captured in the record, not raised.
    """
    noise = hk.as_signal(noise, m.n)
    size = hk.weighted_norm(noise)
    if not size > 0:
        raise ValueError("noise must be nonzero")
    if check_orthogonal:
        resid = orthogonality_residual(noise, tangent.intersection_tangent_basis(m).vectors)
        if resid > ORTHOGONALITY_TOL * max(1.0, size):
            raise ValueError(f"noise has a tangential component (residual {resid:.3g})")
    s = size if s is None else s
    g = m.signal()
    try:
        sigma = tangent.hankel_sigma(m)
    except (ArithmeticError, ValueError) as exc:
        log.debug("sigma at H(g) failed: %s", exc)
        sigma = float("nan")
    try:
        g_inf, trace = hk.fit_exponentials(g + noise, m.k, driver)
    except (ArithmeticError, ValueError) as exc:
        return TrialRecord(s, float("nan"), 0, "error", sigma, m, trial, seed_offset, str(exc))
    eps = hk.weighted_norm(g_inf - g) / size
    return TrialRecord(s, eps, trace.num_steps, trace.termination, sigma, m, trial, seed_offset)


def trial_rng(seed: int, offset: int) -> np.random.Generator:
    """Independent stream for trial number ``offset`` of a sweep."""
    return np.random.default_rng([seed, offset])


def replay_trial(cfg: ExperimentConfig, level_index: int, trial: int) -> TrialRecord:
    offset = level_index * cfg.trials_per_level + trial
    s = cfg.s_levels[level_index]
    rng = trial_rng(cfg.seed, offset)
    try:
        model = random_exp_model(cfg.k, cfg.n, rng)
        noise = orthogonal_noise(model, cfg.noise_kind, s, rng)
    except (SamplingError, ArithmeticError, ValueError) as exc:
        log.warning("trial %d at s=%g: sampling failed: %s", trial, s, exc)
        return TrialRecord(s, float("nan"), 0, "error", float("nan"), None, trial, offset, str(exc))
    return run_trial(model, noise, cfg.driver, s=s, trial=trial, seed_offset=offset)


def _replay_args(args):
    return replay_trial(*args)


@dataclass(frozen=True)
class SweepResult:
    records: list
    summary: list  # dicts keyed by SUMMARY_COLUMNS

    def sweep_csv(self) -> str:
        return _to_csv(SWEEP_COLUMNS, [record_row(r) for r in self.records])

    def summary_csv(self) -> str:
        return _to_csv(SUMMARY_COLUMNS, [[row[c] for c in SUMMARY_COLUMNS] for row in self.summary])


def record_row(r: TrialRecord) -> list:
    return [repr(r.s), r.trial, repr(r.epsilon), r.iterations, r.termination, repr(r.sigma_at_g), r.seed_offset]


def _to_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def summarize(records: list, s_levels) -> list[dict]:
    rows = []
    for s in s_levels:
        level = [r for r in records if r.s == s]
        ok = np.array([r.epsilon for r in level if r.termination == CONVERGED])
        finite = np.array([r.epsilon for r in level if np.isfinite(r.epsilon)])
        stat = lambda f, a: repr(float(f(a))) if a.size else "nan"
        rows.append({
            "s": repr(s),
            "min": stat(np.min, ok),
            "median": stat(np.median, ok),
            "max": stat(np.max, ok),
            "sup": stat(np.max, finite),
            "failures": sum(r.termination != CONVERGED for r in level),
        })
    return rows


def run_sweep(cfg: ExperimentConfig, jobs: int = 1) -> SweepResult:
    tasks = [(cfg, li, t) for li in range(len(cfg.s_levels)) for t in range(cfg.trials_per_level)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_replay_args, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        records = [replay_trial(*t) for t in tasks]
    failures = sum(r.termination != CONVERGED for r in records)
    if failures:
        log.warning("%d of %d trials did not converge", failures, len(records))
    return SweepResult(records, summarize(records, cfg.s_levels))


def config_from_dict(doc: dict, seed: int | None = None) -> ExperimentConfig:
    """Build a config from parsed JSON, reporting every problem at once."""
    errors = []
    required = ("k", "n", "s_levels", "trials_per_level")
    errors += [f"missing field {key!r}" for key in required if key not in doc]
    known = set(required) | {"noise_kind", "seed", "driver"}
    errors += [f"unknown field {key!r}" for key in doc if key not in known]
    try:
        driver = DriverConfig(**(doc.get("driver") or {}))
    except (TypeError, ValueError) as exc:
        errors.append(f"driver: {exc}")
        driver = DriverConfig()
    seed = doc.get("seed") if seed is None else seed
    if seed is None:
        errors.append("a seed is required")
    if not any(e.startswith("missing") for e in errors):
        try:
            k, n, trials = int(doc["k"]), int(doc["n"]), int(doc["trials_per_level"])
            s_levels = tuple(float(v) for v in doc["s_levels"])
            noise_kind = doc.get("noise_kind", "white")
            errors += validate(k, n, s_levels, trials, noise_kind)
        except (TypeError, ValueError) as exc:
            errors.append(f"bad value: {exc}")
    if errors:
        raise ValueError("; ".join(errors))
    return ExperimentConfig(k, n, s_levels, trials, noise_kind, int(seed), driver)
