"""Alternating projections between two sets.

The driver produces the sequence ``B_1 = p1(B)``, ``B_2 = p2(B_1)``,
``B_3 = p1(B_2)``, ... and stops on the first of: a small step, a
period-2 cycle, a stall, or the iteration budget.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

CONVERGED = "converged"
MAX_ITER = "max_iter"
CYCLE = "cycle_detected"
STALLED = "stalled"
TERMINATIONS = (CONVERGED, MAX_ITER, CYCLE, STALLED)

CYCLE_RTOL = 1e-12

Projection = Callable[[np.ndarray], np.ndarray]


class NonFiniteIterateError(FloatingPointError):
    """An iterate overflowed or became NaN. ``trace`` holds the run so far."""

    def __init__(self, message: str, trace: "IterationTrace"):
        super().__init__(message)
        self.trace = trace


def norm(x: np.ndarray) -> float:
    """Euclidean norm of a point; Frobenius for matrices, real or complex."""
    return float(np.linalg.norm(np.ravel(x)))


@dataclass(frozen=True)
class ProjectablePair:
    project_first: Projection
    project_second: Projection
    ambient_dim: int
    name: str = ""

    def __post_init__(self):
        if self.ambient_dim < 1:
            raise ValueError("ambient_dim must be positive")


@dataclass(frozen=True)
class DriverConfig:
    """Stopping rules for :func:`alternate_project`.

    ``step_tol=None`` means ``1e-12 * (1 + ||start||)``. ``store_every``
    thins the stored iterates for long runs; step norms are always kept.
    """

    max_iter: int = 5000
    step_tol: Optional[float] = None
    stall_window: int = 50
    stall_ratio: float = 1.0 - 1e-9
    store_every: int = 1

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.step_tol is not None and not self.step_tol >= 0:
            raise ValueError("step_tol must be nonnegative")
        if self.stall_window < 2:
            raise ValueError("stall_window must be >= 2")
        if not 0 < self.stall_ratio <= 1:
            raise ValueError("stall_ratio must lie in (0, 1]")
        if self.store_every < 1:
            raise ValueError("store_every must be >= 1")

    def tolerance_for(self, start: np.ndarray) -> float:
        if self.step_tol is not None:
            return float(self.step_tol)
        return 1e-12 * (1.0 + norm(start))


@dataclass(frozen=True)
class RateEstimate:
    per_step_ratio: float
    window: int
    exact: bool = False  # a zero step inside the window: converged exactly


@dataclass(frozen=True)
class IterationTrace:
    """Record of one run.

    ``iterates[i]`` is ``B_{iterate_indices[i]}``; with the default storage
    the indices are ``0, 1, 2, ...`` and ``B_0`` is the start point.
    ``step_norms[k] = ||B_{k+1} - B_k||``.
    """

    iterates: tuple
    step_norms: tuple
    termination: str
    step_tol: float
    limit: Optional[np.ndarray] = None
    rate_estimate: Optional[float] = None
    iterate_indices: tuple = field(default=())

    def __post_init__(self):
        if not self.iterate_indices:
            object.__setattr__(self, "iterate_indices", tuple(range(len(self.iterates))))

    @property
    def num_steps(self) -> int:
        return len(self.step_norms)

    @property
    def final(self) -> np.ndarray:
        return self.iterates[-1]

    @property
    def converged(self) -> bool:
        return self.termination == CONVERGED


def _make_trace(iterates, indices, steps, termination, tol, limit=None) -> IterationTrace:
    rate = None
    if len(steps) >= 3:
        window = min(len(steps) - 1, 20)
        rate = min(estimate_rate_from_steps(steps, window).per_step_ratio, 1.0)
    return IterationTrace(
        iterates=tuple(iterates),
        step_norms=tuple(steps),
        termination=termination,
        step_tol=tol,
        limit=limit,
        rate_estimate=rate,
        iterate_indices=tuple(indices),
    )


def alternate_project(
    start: np.ndarray,
    pair: ProjectablePair,
    config: DriverConfig = DriverConfig(),
) -> IterationTrace:
    start = np.asarray(start)
    if not np.all(np.isfinite(start)):
        raise ValueError("start point is not finite")
    tol = config.tolerance_for(start)
    projections = (pair.project_first, pair.project_second)

    iterates = [start]
    indices = [0]
    steps: list[float] = []
    # last three iterates, for the cycle test, independent of storage thinning
    recent = [start]
    stall_run = 0
    current = start

    for k in range(config.max_iter):
        nxt = np.asarray(projections[k % 2](current))
        step = norm(nxt - current)
        steps.append(step)
        if not (np.all(np.isfinite(nxt)) and math.isfinite(step)):
            iterates.append(nxt)
            indices.append(k + 1)
            partial = _make_trace(iterates, indices, steps, MAX_ITER, tol)
            raise NonFiniteIterateError(f"non-finite iterate at step {k + 1}", partial)

        recent = (recent + [nxt])[-3:]
        current = nxt
        last = k + 1 == config.max_iter
        if (k + 1) % config.store_every == 0 or last:
            iterates.append(nxt)
            indices.append(k + 1)

        def finish(termination, limit=None):
            if indices[-1] != k + 1:
                iterates.append(nxt)
                indices.append(k + 1)
            return _make_trace(iterates, indices, steps, termination, tol, limit)

        # k = 0 only moves the start onto the first set; it says nothing
        # about the second one.
        if k >= 1 and step <= tol:
            return finish(CONVERGED, nxt)
        if k >= 2:
            b_prev2 = recent[0]
            repeat = norm(nxt - b_prev2)
            # a converging zig-zag also nearly repeats once steps reach
            # roundoff; a true cycle repeats to far below its own step
            if repeat <= CYCLE_RTOL * (1.0 + norm(b_prev2)) and repeat <= 1e-6 * step:
                return finish(CYCLE)
        if k >= 1 and steps[-2] > 0 and step / steps[-2] >= config.stall_ratio:
            stall_run += 1
            if stall_run >= config.stall_window:
                return finish(STALLED)
        else:
            stall_run = 0

    return _make_trace(iterates, indices, steps, MAX_ITER, tol)


def estimate_rate_from_steps(step_norms: Sequence[float], window: int) -> RateEstimate:
    steps = np.asarray(step_norms, dtype=float)
    if window < 1:
        raise ValueError("window must be >= 1")
    if len(steps) < window + 1:
        raise ValueError(f"need at least {window + 1} step norms, got {len(steps)}")
    tail = steps[-(window + 1):]
    if np.any(tail == 0):
        return RateEstimate(0.0, window, exact=True)
    log_ratios = np.diff(np.log(tail))
    return RateEstimate(float(np.exp(log_ratios.mean())), window)


def estimate_rate(trace: IterationTrace, window: int) -> RateEstimate:
    """Geometric mean of consecutive step-norm ratios over the last ``window`` steps."""
    return estimate_rate_from_steps(trace.step_norms, window)


# -- serialization ---------------------------------------------------------


def _encode_point(x: np.ndarray):
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return np.stack([x.real, x.imag], axis=-1).tolist()
    return x.tolist()


def _decode_point(data, is_complex: bool) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if is_complex:
        return arr[..., 0] + 1j * arr[..., 1]
    return arr


def trace_to_json(trace: IterationTrace) -> str:
    is_complex = bool(trace.iterates) and np.iscomplexobj(trace.iterates[0])
    doc = {
        "complex": is_complex,
        "iterates": [_encode_point(b) for b in trace.iterates],
        "iterate_indices": list(trace.iterate_indices),
        "step_norms": list(trace.step_norms),
        "termination": trace.termination,
        "step_tol": trace.step_tol,
        "limit": None if trace.limit is None else _encode_point(trace.limit),
        "rate_estimate": trace.rate_estimate,
    }
    return json.dumps(doc)


def trace_from_json(text: str) -> IterationTrace:
    doc = json.loads(text)
    cplx = doc["complex"]
    return IterationTrace(
        iterates=tuple(_decode_point(b, cplx) for b in doc["iterates"]),
        step_norms=tuple(doc["step_norms"]),
        termination=doc["termination"],
        step_tol=doc["step_tol"],
        limit=None if doc["limit"] is None else _decode_point(doc["limit"], cplx),
        rate_estimate=doc["rate_estimate"],
        iterate_indices=tuple(doc["iterate_indices"]),
    )


def write_step_norms_csv(trace: IterationTrace, fh) -> None:
    writer = csv.writer(fh)
    writer.writerow(["k", "step_norm"])
    for k, s in enumerate(trace.step_norms):
        writer.writerow([k, repr(s)])


def read_step_norms_csv(fh) -> list[float]:
    reader = csv.DictReader(fh)
    return [float(row["step_norm"]) for row in reader]
