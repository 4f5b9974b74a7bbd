"""Tangent spaces and the angle between two manifolds at an intersection point.

Points of the ambient space are numpy arrays of a fixed shape, real or
complex. Complex arrays are treated as real vectors ``[Re x; Im x]`` so that
the inner product is ``Re trace(X Y*)``. Subspaces are stored as real
matrices with orthonormal columns in that coordinate system.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import hankel as hk

RANK_RTOL = 1e-8
# singular values this close to the rank threshold make the rank unreliable
AMBIGUOUS_BAND = (1e-10, 1e-6)
TANGENTIAL_TOL = 1e-6
SIGMA_AGREE_TOL = 1e-8


class InconclusiveClassificationError(ArithmeticError):
    pass


class ContainmentError(ValueError):
    pass


def to_real(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return np.concatenate([x.real.ravel(), x.imag.ravel()])
    return x.astype(float).ravel()


def from_real(v: np.ndarray, shape: tuple, is_complex: bool) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if is_complex:
        size = int(np.prod(shape))
        return (v[:size] + 1j * v[size:]).reshape(shape)
    return v.reshape(shape)


def _rank_from_singular_values(s: np.ndarray, rtol: float, strict: bool) -> int:
    if s.size == 0 or s[0] == 0:
        return 0
    rel = s / s[0]
    lo, hi = AMBIGUOUS_BAND
    if strict and np.any((rel > lo) & (rel < hi)):
        raise InconclusiveClassificationError(
            f"singular values straddle the rank threshold {rtol:g}: {rel[(rel > lo) & (rel < hi)]}"
        )
    return int(np.sum(rel > rtol))


def orthonormalize(columns: np.ndarray, rtol: float = RANK_RTOL, strict: bool = True) -> np.ndarray:
    """Orthonormal basis for the span of the columns, after normalizing each one."""
    columns = np.asarray(columns, dtype=float)
    if columns.shape[1] == 0:
        return columns
    norms = np.linalg.norm(columns, axis=0)
    columns = columns[:, norms > 0] / norms[norms > 0]
    if columns.shape[1] == 0:
        return np.zeros((columns.shape[0], 0))
    u, s, _ = np.linalg.svd(columns, full_matrices=False)
    return u[:, :_rank_from_singular_values(s, rtol, strict)]


@dataclass(frozen=True)
class SubspaceBasis:
    """Real-orthonormal basis of a subspace of the ambient space."""

    vectors: np.ndarray  # (ambient real dim, real_dim)
    shape: tuple
    is_complex: bool

    def __post_init__(self):
        q = np.asarray(self.vectors, dtype=float)
        if q.ndim != 2:
            raise ValueError("vectors must be a 2-D array of columns")
        object.__setattr__(self, "vectors", q)
        object.__setattr__(self, "shape", tuple(self.shape))

    @classmethod
    def from_points(cls, points, shape=None, is_complex=None, strict=True) -> "SubspaceBasis":
        """Orthonormal basis of the real span of the given points."""
        points = [np.asarray(p) for p in points]
        if shape is None:
            shape = points[0].shape
        if is_complex is None:
            is_complex = any(np.iscomplexobj(p) for p in points)
        size = int(np.prod(shape)) * (2 if is_complex else 1)
        if not points:
            return cls(np.zeros((size, 0)), shape, is_complex)
        cols = np.stack([to_real(p.astype(complex) if is_complex else p) for p in points], axis=1)
        return cls(orthonormalize(cols, strict=strict), shape, is_complex)

    @property
    def real_dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def ambient_dim(self) -> int:
        return self.vectors.shape[0]

    def gram_defect(self) -> float:
        q = self.vectors
        return float(np.abs(q.T @ q - np.eye(q.shape[1])).max(initial=0.0))

    def point(self, i: int) -> np.ndarray:
        return from_real(self.vectors[:, i], self.shape, self.is_complex)

    def projector(self, apply: Optional[Callable] = None) -> "Projector":
        return Projector(self, apply)


class Projector:
    """Orthogonal projector onto a subspace.

    ``apply`` is an optional closed-form evaluation; without it the
    projector multiplies by ``Q Q^T`` in real coordinates.
    """

    def __init__(self, basis: SubspaceBasis, apply: Optional[Callable] = None):
        self.basis = basis
        self._apply = apply

    @property
    def rank(self) -> int:
        return self.basis.real_dim

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self._apply is not None:
            return self._apply(x)
        q = self.basis.vectors
        return from_real(q @ (q.T @ to_real(x)), self.basis.shape, self.basis.is_complex)

    def trace(self) -> float:
        """Trace of the projector as a real-linear map, summed over the standard basis."""
        b = self.basis
        total = 0.0
        for i in range(b.ambient_dim):
            e = np.zeros(b.ambient_dim)
            e[i] = 1.0
            total += to_real(self(from_real(e, b.shape, b.is_complex)))[i]
        return total


# -- tangent spaces of the Hankel / rank-k instance -------------------------


def _rank_svd(A: np.ndarray, k: int):
    A = np.asarray(A, dtype=complex)
    U, s, Vh = np.linalg.svd(A)
    if s[0] == 0 or not (s[k - 1] > RANK_RTOL * s[0] and s[k] <= RANK_RTOL * s[0]):
        rank = hk.numerical_rank(A)
        raise hk.RankError(f"matrix has numerical rank {rank}, expected {k}")
    return U, Vh.conj().T


def rank_tangent_apply(U: np.ndarray, V: np.ndarray, X: np.ndarray) -> np.ndarray:
    """``UU*X + XVV* - UU*XVV*`` for a matrix or a stack of matrices."""
    PU = U @ U.conj().T
    PV = V @ V.conj().T
    UX = PU @ X
    return UX + X @ PV - UX @ PV


def rank_tangent_basis(A: np.ndarray, k: int) -> SubspaceBasis:
    """Orthonormal basis ``{u_a v_b*, i u_a v_b*}`` with ``a < k`` or ``b < k``."""
    U, V = _rank_svd(A, k)
    n = U.shape[0]
    a, b = np.nonzero(np.add.outer(np.arange(n) < k, np.arange(n) < k))
    mats = U[:, a].T[:, :, None] * V[:, b].conj().T[:, None, :]  # (m, n, n)
    m = mats.reshape(len(a), -1)
    re = np.concatenate([m.real, -m.imag], axis=0)  # i*E has real part -Im E
    im = np.concatenate([m.imag, m.real], axis=0)
    vectors = np.concatenate([re, im], axis=1).T
    return SubspaceBasis(vectors, (n, n), True)


def rank_tangent_projector(A: np.ndarray, k: int) -> Projector:
    """Projector onto the tangent space at ``A`` of the matrices of rank ``k``."""
    U, V = _rank_svd(A, k)
    Uk, Vk = U[:, :k], V[:, :k]
    return Projector(rank_tangent_basis(A, k), lambda X: rank_tangent_apply(Uk, Vk, X))


def hankel_basis(n: int) -> SubspaceBasis:
    """Orthonormal basis ``H(e_j)/sqrt(w_j)`` and ``i H(e_j)/sqrt(w_j)`` of the Hankel matrices."""
    w = hk.weights(n)
    idx = np.add.outer(np.arange(n), np.arange(n)).ravel()
    m = (idx[None, :] == np.arange(2 * n - 1)[:, None]) / np.sqrt(w)[:, None]
    zero = np.zeros_like(m)
    vectors = np.concatenate([np.concatenate([m, zero], axis=1),
                              np.concatenate([zero, m], axis=1)], axis=0).T
    return SubspaceBasis(vectors, (n, n), True)


def hankel_tangent_projector(n: int) -> Projector:
    return Projector(hankel_basis(n), hk.project_hankel)


def intersection_tangent_points(m: hk.ExpModel) -> list[np.ndarray]:
    pts = []
    for c, a in zip(m.c, m.alpha):
        H = hk.rank_one_hankel(a, m.n)
        dH = c * hk.rank_one_hankel_derivative(a, m.n)
        pts += [H, 1j * H, dH, 1j * dH]
    return pts


def intersection_tangent_basis(m: hk.ExpModel) -> SubspaceBasis:
    """Tangent space at ``H(g)`` of the rank-k Hankel matrices, g the model's signal."""
    pts = intersection_tangent_points(m)
    cols = np.stack([to_real(p) for p in pts], axis=1)
    norms = np.linalg.norm(cols, axis=0)
    if not np.all(norms > 0):
        raise hk.DegenerateModelError("a tangent direction vanishes (zero coefficient)")
    cols = cols / norms
    u, s, _ = np.linalg.svd(cols, full_matrices=False)
    if s[-1] <= RANK_RTOL * s[0]:
        raise hk.DegenerateModelError(
            f"tangent span is rank deficient (sigma_min/sigma_max={s[-1] / s[0]:.3g})"
        )
    return SubspaceBasis(u, (m.n, m.n), True)


# -- angles -----------------------------------------------------------------


@dataclass(frozen=True)
class AngleReport:
    sigma: float
    alpha: float
    sigma_classical: float
    transversal: bool
    non_tangential: bool
    dims: tuple  # (dim T1, dim T2, dim T_cap, dim(T1 + T2))
    clean_intersection: Optional[bool] = None

    def to_json(self) -> str:
        return json.dumps({
            "sigma": self.sigma,
            "alpha": self.alpha,
            "sigma_classical": self.sigma_classical,
            "transversal": self.transversal,
            "non_tangential": self.non_tangential,
            "dims": list(self.dims),
        })

    @classmethod
    def from_json(cls, text: str) -> "AngleReport":
        d = json.loads(text)
        return cls(d["sigma"], d["alpha"], d["sigma_classical"], d["transversal"],
                   d["non_tangential"], tuple(d["dims"]))


def _basis(p) -> SubspaceBasis:
    return p.basis if isinstance(p, Projector) else p


def _opnorm_restricted(W, factors_pos, factor_neg) -> float:
    """Spectral norm of ``P1 P2 - Pneg`` written in the orthonormal basis ``W``."""
    Q1, Q2 = factors_pos
    M = (W.T @ Q1) @ (Q1.T @ Q2) @ (Q2.T @ W)
    if factor_neg.shape[1]:
        M = M - (W.T @ factor_neg) @ (factor_neg.T @ W)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def _analyze(T1, T2, Tcap, strict: bool) -> AngleReport:
    Q1, Q2, Qc = _basis(T1).vectors, _basis(T2).vectors, _basis(Tcap).vectors
    if not Q1.shape[0] == Q2.shape[0] == Qc.shape[0]:
        raise ValueError("subspaces live in different ambient spaces")
    for name, Q in (("first", Q1), ("second", Q2)):
        leak = np.linalg.norm(Qc - Q @ (Q.T @ Qc), 2) if Qc.shape[1] else 0.0
        if leak > 1e-8:
            raise ContainmentError(
                f"intersection tangent space is not contained in the {name} tangent space "
                f"(residual {leak:.3g})"
            )

    W = orthonormalize(np.concatenate([Q1, Q2], axis=1), strict=strict)
    sigma = _opnorm_restricted(W, (Q1, Q2), Qc)

    # T1 ∩ T2 from the principal angles
    if Q1.shape[1] and Q2.shape[1]:
        # sines of the principal angles, accurate for small angles; the
        # right singular vectors with the smallest sines span T1 ∩ T2 in Q1
        # coordinates
        _, sines, Zt = np.linalg.svd(Q1 - Q2 @ (Q2.T @ Q1))
        sines = np.concatenate([sines, np.zeros(Q1.shape[1] - len(sines))])
        lo, hi = AMBIGUOUS_BAND
        if strict and np.any((sines > lo) & (sines < hi)):
            raise InconclusiveClassificationError(
                f"principal angles straddle the intersection threshold: {sines[(sines > lo) & (sines < hi)]}"
            )
        d_int = int(np.sum(sines <= RANK_RTOL))
        Qint = Q1 @ Zt[Q1.shape[1] - d_int:].T
    else:
        d_int = 0
        Qint = np.zeros((Q1.shape[0], 0))
    sigma_clas = _opnorm_restricted(W, (Q1, Q2), Qint)

    sigma = min(max(sigma, 0.0), 1.0)
    sigma_clas = min(max(sigma_clas, 0.0), 1.0)
    dims = (Q1.shape[1], Q2.shape[1], Qc.shape[1], W.shape[1])
    return AngleReport(
        sigma=sigma,
        alpha=float(np.arccos(sigma)),
        sigma_classical=sigma_clas,
        transversal=W.shape[1] == Q1.shape[0],
        non_tangential=sigma < 1 - TANGENTIAL_TOL,
        dims=dims,
        clean_intersection=d_int == Qc.shape[1],
    )


def sigma_angle(P1, P2, Pcap) -> AngleReport:
    """Angle data from ``||P1 P2 - Pcap||`` and the classical ``||P1 P2 - P_{T1∩T2}||``.

    Both norms are taken over an orthonormal basis of ``range(P1) + range(P2)``;
    the operator vanishes on the orthogonal complement.
    """
    return _analyze(P1, P2, Pcap, strict=False)


def classify_point(T1: SubspaceBasis, T2: SubspaceBasis, Tcap: SubspaceBasis,
                   ambient_dim: Optional[int] = None) -> AngleReport:
    """Transversality, clean intersection and non-tangentiality of an intersection point.

    Raises :class:`InconclusiveClassificationError` when a rank decision is
    numerically ambiguous, or when the point is non-tangential and the two
    angles disagree (which cannot happen in exact arithmetic).
    """
    for name, T in (("T1", T1), ("T2", T2), ("Tcap", Tcap)):
        if T.gram_defect() > 1e-10:
            raise ValueError(f"{name} is not orthonormal")
    report = _analyze(T1, T2, Tcap, strict=True)
    if ambient_dim is not None and ambient_dim != T1.ambient_dim:
        report = AngleReport(report.sigma, report.alpha, report.sigma_classical,
                             report.dims[3] == ambient_dim, report.non_tangential,
                             report.dims, report.clean_intersection)
    if report.non_tangential and abs(report.sigma - report.sigma_classical) > SIGMA_AGREE_TOL:
        raise InconclusiveClassificationError(
            f"non-tangential point with sigma={report.sigma:.12g} but "
            f"classical sigma={report.sigma_classical:.12g}"
        )
    return report


def hankel_tangent_spaces(m: hk.ExpModel) -> tuple[SubspaceBasis, SubspaceBasis, SubspaceBasis]:
    """(Hankel, rank-k, intersection) tangent bases at ``H(g)``."""
    A = hk.hankel_embed(hk.exp_signal(m))
    return hankel_basis(m.n), rank_tangent_basis(A, m.k), intersection_tangent_basis(m)


def classify_model(m: hk.ExpModel) -> AngleReport:
    T1, T2, Tcap = hankel_tangent_spaces(m)
    return classify_point(T1, T2, Tcap)


def hankel_sigma(m: hk.ExpModel) -> float:
    """The angle sigma at ``H(g)`` without forming the rank-k tangent basis.

    With T1' = T_H minus the intersection tangent, sigma = ||P_{T1'} P_{T2}||,
    which is the norm of P_{T2} applied to an orthonormal basis of T1'.
    """
    n, k = m.n, m.k
    Qh = hankel_basis(n).vectors
    Qc = intersection_tangent_basis(m).vectors
    resid = Qh - Qc @ (Qc.T @ Qh)
    u, s, _ = np.linalg.svd(resid, full_matrices=False)
    Q1p = u[:, : Qh.shape[1] - Qc.shape[1]]
    size = n * n
    mats = (Q1p[:size] + 1j * Q1p[size:]).T.reshape(-1, n, n)
    U, V = _rank_svd(hk.hankel_embed(hk.exp_signal(m)), k)
    img = rank_tangent_apply(U[:, :k], V[:, :k], mats).reshape(len(mats), -1)
    cols = np.concatenate([img.real, img.imag], axis=1)
    return float(min(np.linalg.norm(cols, 2), 1.0))


def rho_project(B: np.ndarray, base: np.ndarray, Pj: Projector) -> np.ndarray:
    """Projection onto the affine tangent plane ``base + range(Pj)``."""
    B = np.asarray(B)
    return base + Pj(B - base)
