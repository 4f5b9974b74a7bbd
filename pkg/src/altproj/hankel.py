"""Hankel matrices, rank-k truncation and sums of exponentials.

A signal of length ``2n - 1`` is identified with the ``n x n`` Hankel matrix
whose ``(i, l)`` entry is ``a[i + l]`` (0-based). Matrices are complex and
the ambient space carries the real inner product ``Re trace(X Y*)``.

The SVD is stored as ``A = U diag(sigma) V*``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .driver import DriverConfig, IterationTrace, ProjectablePair, alternate_project

TIE_RTOL = 1e-12
RANK_RTOL = 1e-8
PENCIL_COND_MAX = 1e12


class AmbiguousTruncationError(ArithmeticError):
    """sigma_k and sigma_{k+1} coincide, so the nearest rank-k matrix is not unique."""


class RankError(ValueError):
    """A matrix does not have the numerical rank an operation requires."""


class DegenerateModelError(ValueError):
    pass


def signal_size(a: np.ndarray) -> int:
    """Matrix size ``n`` for a signal of length ``2n - 1``."""
    m = len(a)
    if m < 1 or m % 2 == 0:
        raise ValueError(f"signal length must be odd (2n-1), got {m}")
    return (m + 1) // 2


def as_signal(a, n: int | None = None) -> np.ndarray:
    a = np.asarray(a, dtype=complex).ravel()
    size = signal_size(a)
    if n is not None and size != n:
        raise ValueError(f"signal of length {len(a)} does not match n={n}")
    if not np.all(np.isfinite(a)):
        raise ValueError("signal has non-finite entries")
    return a


def weights(n: int) -> np.ndarray:
    """Anti-diagonal lengths ``n - |j - n|``, j = 1..2n-1."""
    j = np.arange(1, 2 * n)
    return (n - np.abs(j - n)).astype(float)


def hankel_embed(a) -> np.ndarray:
    a = as_signal(a)
    n = signal_size(a)
    return scipy.linalg.hankel(a[:n], a[n - 1:])


def _antidiagonal_index(n: int) -> np.ndarray:
    i, l = np.indices((n, n))
    return (i + l).ravel()


def hankel_extract(B: np.ndarray) -> np.ndarray:
    """Anti-diagonal averages of ``B``; ``H`` of the result is the nearest Hankel matrix."""
    B = np.asarray(B)
    n = B.shape[0]
    if B.shape != (n, n):
        raise ValueError(f"expected a square matrix, got shape {B.shape}")
    idx = _antidiagonal_index(n)
    # average deviations from each anti-diagonal's first entry, so Hankel input comes back exactly
    ref = np.concatenate([B[0, :], B[1:, -1]]).astype(complex)
    dev = B.ravel() - ref[idx]
    re = np.bincount(idx, weights=dev.real, minlength=2 * n - 1)
    im = np.bincount(idx, weights=dev.imag, minlength=2 * n - 1)
    return ref + (re + 1j * im) / weights(n)


def project_hankel(B: np.ndarray) -> np.ndarray:
    return hankel_embed(hankel_extract(B))


def weighted_norm(a) -> float:
    a = as_signal(a)
    return float(np.sqrt(np.sum(weights(signal_size(a)) * np.abs(a) ** 2)))


@dataclass(frozen=True)
class SvdTriple:
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    def matrix(self) -> np.ndarray:
        return (self.U * self.sigma) @ self.V.conj().T


def truncated_svd(B: np.ndarray, k: int) -> SvdTriple:
    """Leading ``k`` singular triplets of ``B``, guarded against a tie at position k."""
    B = np.asarray(B)
    n = min(B.shape)
    if not 1 <= k < n:
        raise ValueError(f"rank k must satisfy 1 <= k < n, got k={k}, n={n}")
    U, s, Vh = np.linalg.svd(B)
    _check_gap(s, k)
    return SvdTriple(U[:, :k], s[:k], Vh[:k].conj().T)


def _check_gap(s: np.ndarray, k: int) -> None:
    scale = TIE_RTOL * s[0]
    # ties among negligible singular values change the result by at most `scale`
    if s[k - 1] > scale and s[k - 1] - s[k] <= scale:
        raise AmbiguousTruncationError(
            f"sigma_{k}={s[k - 1]:.16g} and sigma_{k + 1}={s[k]:.16g} are not separated"
        )


def rank_project(B: np.ndarray, k: int) -> np.ndarray:
    """Nearest matrix of rank at most ``k`` in Frobenius norm (Eckart-Young)."""
    B = np.asarray(B)
    if not np.any(B):
        return np.zeros_like(B, dtype=complex)
    return truncated_svd(B, k).matrix()


def numerical_rank(B: np.ndarray, rtol: float = RANK_RTOL) -> int:
    s = np.linalg.svd(np.asarray(B), compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


# -- sums of exponentials ---------------------------------------------------


@dataclass(frozen=True)
class ExpModel:
    """``g_l = sum_j c_j alpha_j**l`` for l = 0..2n-2."""

    c: np.ndarray
    alpha: np.ndarray
    n: int

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c, dtype=complex))
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=complex))
        if c.shape != alpha.shape or c.ndim != 1:
            raise ValueError("c and alpha must be vectors of equal length")
        if not len(c) < self.n:
            raise ValueError(f"need k < n, got k={len(c)}, n={self.n}")
        if min_node_distance(alpha) <= 1e-10:
            raise DegenerateModelError("nodes are not pairwise distinct")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "alpha", alpha)

    @property
    def k(self) -> int:
        return len(self.c)

    def signal(self) -> np.ndarray:
        return exp_signal(self)

    def to_json(self) -> str:
        pairs = lambda z: [[float(v.real), float(v.imag)] for v in z]
        return json.dumps({"k": self.k, "n": self.n, "c": pairs(self.c), "alpha": pairs(self.alpha)})

    @classmethod
    def from_json(cls, text: str) -> "ExpModel":
        doc = json.loads(text)
        unpair = lambda z: np.array([complex(re, im) for re, im in z], dtype=complex)
        model = cls(unpair(doc["c"]), unpair(doc["alpha"]), int(doc["n"]))
        if model.k != int(doc["k"]):
            raise ValueError(f"k={doc['k']} does not match {model.k} coefficients")
        return model


def min_node_distance(alpha) -> float:
    alpha = np.asarray(alpha)
    if len(alpha) < 2:
        return np.inf
    d = np.abs(alpha[:, None] - alpha[None, :])
    return float(d[~np.eye(len(alpha), dtype=bool)].min())


def vandermonde(alpha, n: int) -> np.ndarray:
    """Columns ``(alpha_j**l)_{l=0..2n-2}``."""
    return np.vander(np.asarray(alpha, dtype=complex), 2 * n - 1, increasing=True).T


def exp_signal(m: ExpModel) -> np.ndarray:
    return vandermonde(m.alpha, m.n) @ m.c


def rank_one_hankel(alpha: complex, n: int) -> np.ndarray:
    return hankel_embed(vandermonde([alpha], n)[:, 0])


def rank_one_hankel_derivative(alpha: complex, n: int) -> np.ndarray:
    """Entrywise d/dalpha of :func:`rank_one_hankel`."""
    l = np.arange(2 * n - 1)
    seq = np.zeros(2 * n - 1, dtype=complex)
    seq[1:] = l[1:] * complex(alpha) ** (l[1:] - 1)
    return hankel_embed(seq)


def hankel_rank_pair(k: int, n: int) -> ProjectablePair:
    """Rank-k truncation first, Hankel averaging second."""
    return ProjectablePair(lambda B: rank_project(B, k), project_hankel, ambient_dim=2 * n * n,
                           name=f"rank{k}-hankel")


def fit_exponentials(f, k: int, config: DriverConfig = DriverConfig()) -> tuple[np.ndarray, IterationTrace]:
    """Approximate ``f`` by a sum of ``k`` exponentials via alternating projections.

    Starts at ``H(f)`` and alternates rank-k truncation with Hankel
    averaging. Returns the sequence of the final Hankel iterate and the trace.
    """
    f = as_signal(f)
    n = signal_size(f)
    if not 1 <= k < n:
        raise ValueError(f"rank k must satisfy 1 <= k < n, got k={k}, n={n}")
    start = hankel_embed(f)
    trace = alternate_project(start, hankel_rank_pair(k, n), config)
    # odd step counts end on the rank projection
    return hankel_extract(trace.final), trace


def recover_nodes(g, k: int, rtol: float = RANK_RTOL) -> ExpModel:
    """Nodes and coefficients of a signal whose Hankel matrix has rank ``k``.

    Nodes come from the shift invariance of the dominant left singular
    vectors; coefficients from weighted least squares on the Vandermonde
    system.
    """
    g = as_signal(g)
    n = signal_size(g)
    if not 1 <= k < n:
        raise ValueError(f"rank k must satisfy 1 <= k < n, got k={k}, n={n}")
    U, s, _ = np.linalg.svd(hankel_embed(g))
    if s[0] == 0 or not (s[k - 1] > rtol * s[0] and s[k] <= rtol * s[0]):
        rank = 0 if s[0] == 0 else int(np.sum(s > rtol * s[0]))
        raise RankError(f"Hankel matrix has numerical rank {rank}, expected {k}")
    Uk = U[:, :k]
    upper, lower = Uk[:-1], Uk[1:]
    cond = np.linalg.cond(upper)
    if not cond <= PENCIL_COND_MAX:
        raise RankError(f"shift pencil is ill conditioned (cond={cond:.3g})")
    shift, *_ = np.linalg.lstsq(upper, lower, rcond=None)
    alpha = np.linalg.eigvals(shift)

    sw = np.sqrt(weights(n))
    c, *_ = np.linalg.lstsq(sw[:, None] * vandermonde(alpha, n), sw * g, rcond=None)
    return ExpModel(c, alpha, n)


# -- file formats -----------------------------------------------------------


def write_signal_csv(a, fh) -> None:
    writer = csv.writer(fh)
    writer.writerow(["index", "re", "im"])
    for j, v in enumerate(as_signal(a), start=1):
        writer.writerow([j, repr(float(v.real)), repr(float(v.imag))])


def read_signal_csv(fh) -> np.ndarray:
    rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if rows and rows[0][0].strip().lower() == "index":
        rows = rows[1:]
    values = []
    for lineno, row in enumerate(rows, start=1):
        if len(row) != 3:
            raise ValueError(f"row {lineno}: expected 3 columns (index, re, im), got {len(row)}")
        try:
            idx, re, im = int(row[0]), float(row[1]), float(row[2])
        except ValueError as exc:
            raise ValueError(f"row {lineno}: {exc}") from None
        if idx != lineno:
            raise ValueError(f"row {lineno}: index {idx} out of sequence")
        values.append(complex(re, im))
    if not values:
        raise ValueError("signal file is empty")
    return as_signal(values)
