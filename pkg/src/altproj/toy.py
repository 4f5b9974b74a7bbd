"""Small explicit manifolds in R^d: affine subspaces and parametric curves.

These give exact nearest-point maps for exercising the driver and the
angle analysis. The curve functions must accept a numpy array of
parameters and return an array of shape ``(dim, len(t))``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .driver import ProjectablePair

N_STARTS = 64
NEWTON_MAXITER = 100


class ProjectionError(ValueError):
    pass


class NonUniqueProjectionError(ProjectionError):
    """Two parameters attain the minimal distance: the nearest point is not unique."""


@dataclass(frozen=True)
class AffineSubspace:
    base_point: np.ndarray
    basis: np.ndarray  # rows are orthonormal directions

    def __post_init__(self):
        base = np.asarray(self.base_point, dtype=float)
        basis = np.atleast_2d(np.asarray(self.basis, dtype=float))
        if basis.size == 0:
            basis = np.zeros((0, base.size))
        gram = basis @ basis.T
        if not np.allclose(gram, np.eye(len(basis)), atol=1e-12, rtol=0):
            raise ValueError("basis vectors are not orthonormal")
        object.__setattr__(self, "base_point", base)
        object.__setattr__(self, "basis", basis)

    @classmethod
    def span(cls, *vectors, base_point=None) -> "AffineSubspace":
        """Affine subspace through ``base_point`` (default 0) spanned by ``vectors``."""
        v = np.atleast_2d(np.asarray(vectors, dtype=float))
        q, r = np.linalg.qr(v.T)
        keep = np.abs(np.diag(r)) > 1e-12 * max(1.0, np.abs(r).max())
        base = np.zeros(v.shape[1]) if base_point is None else base_point
        return cls(base, q[:, keep].T)

    @property
    def dim(self) -> int:
        return self.base_point.size

    def project(self, x: np.ndarray) -> np.ndarray:
        return project_affine(x, self)

    def tangent(self, point=None) -> np.ndarray:
        return self.basis.copy()

    def contains(self, x, atol=1e-12) -> bool:
        return np.linalg.norm(np.asarray(x) - self.project(x)) <= atol


def project_affine(x: np.ndarray, s: AffineSubspace) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    coeffs = s.basis @ (x - s.base_point)
    return s.base_point + coeffs @ s.basis


@dataclass(frozen=True)
class ParametricCurve:
    dim: int
    eval: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]
    deriv2: Callable[[np.ndarray], np.ndarray]
    search_interval: tuple = (-10.0, 10.0)
    name: str = ""

    def __call__(self, t: float) -> np.ndarray:
        return self.eval(np.atleast_1d(float(t)))[:, 0]

    def project(self, x: np.ndarray) -> np.ndarray:
        return project_curve(x, self)

    def nearest_parameter(self, x: np.ndarray) -> float:
        return _nearest_parameter(np.asarray(x, dtype=float), self)

    def tangent(self, point: np.ndarray) -> np.ndarray:
        """Unit tangent (as a 1-row basis) at the curve point nearest to ``point``."""
        t = self.nearest_parameter(point)
        d = self.deriv(np.atleast_1d(t))[:, 0]
        return (d / np.linalg.norm(d))[None, :]


def _nearest_parameter(x: np.ndarray, c: ParametricCurve) -> float:
    lo, hi = c.search_interval
    t = np.linspace(lo, hi, N_STARTS)
    x_col = x[:, None]

    # Newton on g(t) = <x - phi(t), phi'(t)>
    for _ in range(NEWTON_MAXITER):
        r = x_col - c.eval(t)
        d1 = c.deriv(t)
        g = np.sum(r * d1, axis=0)
        dg = -np.sum(d1 * d1, axis=0) + np.sum(r * c.deriv2(t), axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            dt = np.where(dg != 0, g / dg, 0.0)
        t_new = np.clip(t - dt, lo, hi)
        if np.all(np.abs(t_new - t) <= 1e-15 * (1 + np.abs(t))):
            t = t_new
            break
        t = t_new

    r = x_col - c.eval(t)
    g = np.abs(np.sum(r * c.deriv(t), axis=0))
    dist = np.linalg.norm(r, axis=0)
    scale = 1.0 + np.linalg.norm(x)
    stationary = (g <= 1e-10 * scale) & (t > lo) & (t < hi)
    if not np.any(stationary):
        raise ProjectionError(f"no stationary point of the distance in {c.search_interval}")
    t, dist = t[stationary], dist[stationary]
    best = np.argmin(dist)
    rivals = (np.abs(dist - dist[best]) <= 1e-9) & (np.abs(t - t[best]) > 1e-6)
    if np.any(rivals):
        raise NonUniqueProjectionError(
            f"nearest point not unique: t={t[best]:.6g} and t={t[rivals][0]:.6g}"
        )
    return float(t[best])


def project_curve(x: np.ndarray, c: ParametricCurve) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    t = _nearest_parameter(x, c)
    p = c(t)
    # points already on the curve map to themselves bit for bit
    if np.linalg.norm(x - p) <= 4 * np.finfo(float).eps * (1.0 + np.linalg.norm(x)):
        return x.copy()
    return p


# -- worked examples ---------------------------------------------------------


def _curve(dim, f, df, d2f, name):
    return ParametricCurve(dim=dim, eval=f, deriv=df, deriv2=d2f, name=name)


def example1_curve() -> ParametricCurve:
    """t -> (t, (t+1)(3-t)/4)."""
    return _curve(
        2,
        lambda t: np.stack([t, (t + 1) * (3 - t) / 4]),
        lambda t: np.stack([np.ones_like(t), (1 - t) / 2]),
        lambda t: np.stack([np.zeros_like(t), -0.5 * np.ones_like(t)]),
        "example1",
    )


def parabola() -> ParametricCurve:
    """t -> (t, t^2)."""
    return _curve(
        2,
        lambda t: np.stack([t, t * t]),
        lambda t: np.stack([np.ones_like(t), 2 * t]),
        lambda t: np.stack([np.zeros_like(t), 2 * np.ones_like(t)]),
        "parabola",
    )


def skew_parabola() -> ParametricCurve:
    """t -> (t, t, t^2) in R^3."""
    return _curve(
        3,
        lambda t: np.stack([t, t, t * t]),
        lambda t: np.stack([np.ones_like(t), np.ones_like(t), 2 * t]),
        lambda t: np.stack([np.zeros_like(t), np.zeros_like(t), 2 * np.ones_like(t)]),
        "skew_parabola",
    )


def x_axis(dim: int) -> AffineSubspace:
    e1 = np.zeros(dim)
    e1[0] = 1.0
    return AffineSubspace(np.zeros(dim), e1[None, :])


@dataclass(frozen=True)
class ToyExample:
    first: object
    second: object
    intersection: tuple  # known intersection points
    dim: int

    def pair(self) -> ProjectablePair:
        return ProjectablePair(self.first.project, self.second.project, self.dim)

    def nearest_intersection(self, x) -> np.ndarray:
        pts = np.asarray(self.intersection, dtype=float)
        return pts[np.argmin(np.linalg.norm(pts - np.asarray(x), axis=1))]


def example_parts(example_id: int) -> ToyExample:
    if example_id == 1:
        return ToyExample(example1_curve(), x_axis(2), ((-1.0, 0.0), (3.0, 0.0)), 2)
    if example_id == 3:
        return ToyExample(x_axis(2), parabola(), ((0.0, 0.0),), 2)
    if example_id == 4:
        return ToyExample(x_axis(3), skew_parabola(), ((0.0, 0.0, 0.0),), 3)
    raise ValueError(f"unknown example id {example_id!r}; expected 1, 3 or 4")


def make_example(example_id: int) -> ProjectablePair:
    """Projectable pair for worked example 1, 3 or 4; the first set is projected onto first."""
    pair = example_parts(example_id).pair()
    return ProjectablePair(pair.project_first, pair.project_second, pair.ambient_dim,
                           name=f"example{example_id}")


def lines_pair(theta: float) -> ProjectablePair:
    """Two lines through the origin of R^2 meeting at angle ``theta``."""
    first = x_axis(2)
    second = AffineSubspace.span((np.cos(theta), np.sin(theta)))
    return ProjectablePair(first.project, second.project, 2, name=f"lines({theta:.6g})")


def affine_pair(first: AffineSubspace, second: AffineSubspace) -> ProjectablePair:
    if first.dim != second.dim:
        raise ValueError("subspaces live in different ambient spaces")
    return ProjectablePair(first.project, second.project, first.dim)
