import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from altproj.driver import CONVERGED, DriverConfig
from altproj.experiment import orthogonal_noise
from altproj import hankel as hk
from altproj.hankel import (
    AmbiguousTruncationError,
    DegenerateModelError,
    ExpModel,
    RankError,
    exp_signal,
    fit_exponentials,
    hankel_embed,
    hankel_extract,
    numerical_rank,
    project_hankel,
    rank_project,
    recover_nodes,
    truncated_svd,
    weighted_norm,
    weights,
)


def random_matrix(rng, n, m=None):
    m = n if m is None else m
    return rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))


def lstsq_extract(B):
    """Least-squares oracle: minimize ||H(a) - B||_F through the design matrix of H."""
    n = B.shape[0]
    design = np.array([hankel_embed(np.eye(2 * n - 1)[j]).ravel() for j in range(2 * n - 1)]).T
    a, *_ = np.linalg.lstsq(design, B.ravel(), rcond=None)
    return a


class TestEmbedExtract:
    def test_embed_examples(self):
        assert np.array_equal(hankel_embed([1, 2, 3]), [[1, 2], [2, 3]])
        assert np.array_equal(hankel_embed([1, 2, 4, 8, 16]), [[1, 2, 4], [2, 4, 8], [4, 8, 16]])
        assert not np.any(hankel_embed(np.zeros(7)))

    def test_even_length_rejected(self):
        with pytest.raises(ValueError):
            hankel_embed([1, 2])

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            hankel_embed([1, np.nan, 3])

    def test_extract_example(self):
        assert np.allclose(hankel_extract(np.array([[1, 3], [2, 4]])), [1, 2.5, 4], atol=1e-15)

    def test_extract_matches_least_squares(self, rng):
        B = random_matrix(rng, 5)
        assert np.allclose(hankel_extract(B), lstsq_extract(B), atol=1e-12)

    def test_antidiagonal_skew_part_is_invisible(self, rng):
        n = 4
        B = random_matrix(rng, n)
        S = np.zeros((n, n), dtype=complex)
        for j in range(1, 2 * n - 2):
            cells = [(i, j - i) for i in range(n) if 0 <= j - i < n]
            vals = rng.standard_normal(len(cells))
            vals -= vals.mean()
            for (i, l), v in zip(cells, vals):
                S[i, l] = v
        assert np.allclose(hankel_extract(S), 0, atol=1e-15)
        assert np.allclose(hankel_extract(B + S), hankel_extract(B), atol=1e-14)
        assert np.allclose(hankel_extract(B + S), lstsq_extract(B + S), atol=1e-12)

    def test_extract_of_embed_is_exact(self, rng):
        a = rng.standard_normal(9) + 1j * rng.standard_normal(9)
        assert np.array_equal(hankel_extract(hankel_embed(a)), a)

    def test_extract_rejects_nonsquare(self):
        with pytest.raises(ValueError):
            hankel_extract(np.ones((2, 3)))


class TestWeights:
    @pytest.mark.parametrize("n", [1, 2, 5, 12])
    def test_weight_invariants(self, n):
        w = weights(n)
        assert w[0] == w[-1] == 1
        assert w[n - 1] == n
        assert np.array_equal(w, w[::-1])
        assert w.sum() == n * n

    def test_weighted_norm_examples(self):
        assert weighted_norm([1, 1, 1]) == pytest.approx(2.0, abs=1e-15)
        n = 6
        e = np.eye(2 * n - 1)
        assert weighted_norm(e[0]) == 1.0
        assert weighted_norm(e[n - 1]) == pytest.approx(np.linalg.norm(hankel_embed(e[n - 1])), rel=1e-15)
        assert weighted_norm(e[n - 1]) == pytest.approx(np.sqrt(n), rel=1e-15)


@settings(max_examples=100, deadline=None)
@given(re=arrays(float, 11, elements=st.floats(-1e3, 1e3)), im=arrays(float, 11, elements=st.floats(-1e3, 1e3)))
def test_weighted_norm_is_frobenius_norm(re, im):
    a = re + 1j * im
    expected = np.linalg.norm(hankel_embed(a))
    assert weighted_norm(a) == pytest.approx(expected, rel=1e-12, abs=1e-300)
    assert np.array_equal(hankel_extract(hankel_embed(a)), a)


class TestRankProject:
    def test_diagonal(self):
        assert np.allclose(rank_project(np.diag([3.0, 1.0]), 1), np.diag([3.0, 0.0]), atol=1e-15)

    def test_rank_k_fixed(self, rng):
        A = random_matrix(rng, 6, 2) @ random_matrix(rng, 2, 6)
        assert np.linalg.norm(rank_project(A, 2) - A) <= 1e-12 * np.linalg.norm(A)

    def test_two_by_two_closed_form(self):
        eps = 1e-3
        B = np.array([[1, 1], [1, 1 + eps]])
        # symmetric positive semidefinite: singular values are the eigenvalues
        sigma2 = ((2 + eps) - np.sqrt(4 + eps ** 2)) / 2
        assert np.linalg.norm(B - rank_project(B, 1)) == pytest.approx(sigma2, rel=1e-9)

    def test_residual_is_tail_energy(self, rng):
        B = random_matrix(rng, 7)
        s = np.linalg.svd(B, compute_uv=False)
        assert np.linalg.norm(B - rank_project(B, 3)) ** 2 == pytest.approx(np.sum(s[3:] ** 2), rel=1e-12)

    def test_eckart_young_beats_random(self, rng):
        B = random_matrix(rng, 4)
        best = np.linalg.norm(B - rank_project(B, 2))
        for _ in range(1000):
            X = random_matrix(rng, 4, 2) @ random_matrix(rng, 2, 4)
            assert best <= np.linalg.norm(B - X)

    def test_tie_is_ambiguous(self):
        with pytest.raises(AmbiguousTruncationError):
            rank_project(np.diag([2.0, 1.0, 1.0]), 2)

    def test_negligible_tie_is_fine(self):
        # sigma_2 = sigma_3 = 0: every rank-2 truncation is the same matrix
        assert np.allclose(rank_project(np.diag([2.0, 0.0, 0.0]), 2), np.diag([2.0, 0, 0]))

    def test_zero_matrix(self):
        assert not np.any(rank_project(np.zeros((3, 3)), 1))

    @pytest.mark.parametrize("k", [0, 4])
    def test_bad_rank(self, k):
        with pytest.raises(ValueError):
            rank_project(np.eye(4), k)

    def test_svd_triple_contract(self, rng):
        B = random_matrix(rng, 6)
        t = truncated_svd(B, 3)
        assert np.allclose(t.U.conj().T @ t.U, np.eye(3), atol=1e-10)
        assert np.allclose(t.V.conj().T @ t.V, np.eye(3), atol=1e-10)
        assert np.all(t.sigma > 0) and np.all(np.diff(t.sigma) <= 0)
        U, s, Vh = np.linalg.svd(B)
        assert np.allclose(t.matrix(), (U[:, :3] * s[:3]) @ Vh[:3], atol=1e-12)

    def test_projections_idempotent_and_nonexpansive(self, rng):
        n, k = 5, 2
        B = random_matrix(rng, n)
        for proj, sample in [
            (project_hankel, lambda: hankel_embed(rng.standard_normal(2 * n - 1) + 1j * rng.standard_normal(2 * n - 1))),
            (lambda X: rank_project(X, k), lambda: random_matrix(rng, n, k) @ random_matrix(rng, k, n)),
        ]:
            p = proj(B)
            assert np.allclose(proj(p), p, atol=1e-12)
            d = np.linalg.norm(B - p)
            for _ in range(100):
                assert d <= np.linalg.norm(B - sample()) + 1e-12


class TestExpModel:
    def test_ones(self):
        m = ExpModel([1.0], [1.0], 4)
        assert np.array_equal(exp_signal(m), np.ones(7))
        assert numerical_rank(hankel_embed(exp_signal(m))) == 1

    def test_zero_coefficients(self):
        assert not np.any(exp_signal(ExpModel([0, 0], [0.5, 0.7], 4)))

    def test_generic_rank_is_k(self, make_model):
        for k, n in [(1, 5), (3, 10), (5, 20)]:
            s = np.linalg.svd(hankel_embed(make_model(k, n).signal()), compute_uv=False)
            assert s[k - 1] / s[0] > 1e-8
            assert s[k] / s[0] < 1e-10

    def test_matches_power_sum(self):
        m = ExpModel([2, 1j], [0.5, -0.9], 3)
        expected = [2 * 0.5 ** l + 1j * (-0.9) ** l for l in range(5)]
        assert np.allclose(m.signal(), expected, atol=1e-15)

    def test_invariants(self):
        with pytest.raises(DegenerateModelError):
            ExpModel([1, 1], [0.5, 0.5], 5)
        with pytest.raises(ValueError):
            ExpModel([1, 1, 1], [0.1, 0.2, 0.3], 3)
        with pytest.raises(ValueError):
            ExpModel([1, 1], [0.1], 3)

    def test_json_roundtrip(self):
        m = ExpModel([1 + 2j, -0.5], [0.9j, 0.3], 6)
        doc = json.loads(m.to_json())
        assert set(doc) == {"k", "n", "c", "alpha"}
        assert doc["c"][0] == [1.0, 2.0]
        back = ExpModel.from_json(m.to_json())
        assert np.array_equal(back.c, m.c) and np.array_equal(back.alpha, m.alpha) and back.n == 6

    def test_json_k_mismatch(self):
        doc = json.loads(ExpModel([1.0], [0.5], 3).to_json())
        doc["k"] = 2
        with pytest.raises(ValueError):
            ExpModel.from_json(json.dumps(doc))

    def test_derivative_matrix_matches_finite_difference(self):
        a, n, h = 0.7 + 0.2j, 5, 1e-7
        fd = (hk.rank_one_hankel(a + h, n) - hk.rank_one_hankel(a - h, n)) / (2 * h)
        assert np.allclose(hk.rank_one_hankel_derivative(a, n), fd, atol=1e-7)


class TestFit:
    def test_exact_signal_is_fixed(self, make_model):
        m = make_model(4, 15)
        g, trace = fit_exponentials(m.signal(), 4)
        assert trace.termination == CONVERGED
        assert trace.num_steps <= 4
        assert np.max(np.abs(g - m.signal())) <= 1e-10

    def test_zero_signal(self):
        g, trace = fit_exponentials(np.zeros(9), 2)
        assert trace.termination == CONVERGED
        assert not np.any(g)

    def test_orthogonal_noise_small_error(self, rng, make_model):
        m = make_model(5, 20)
        s = 1e-4
        noise = orthogonal_noise(m, "white", s, rng)
        g_inf, trace = fit_exponentials(m.signal() + noise, 5)
        assert trace.termination == CONVERGED
        assert weighted_norm(g_inf - m.signal()) <= s

    def test_limit_is_on_both_sets(self, rng):
        f = rng.standard_normal(19) + 1j * rng.standard_normal(19)
        g, trace = fit_exponentials(f, 3, DriverConfig(max_iter=20000))
        assert trace.termination == CONVERGED
        s = np.linalg.svd(hankel_embed(g), compute_uv=False)
        assert s[3] <= 1e-6 * s[0]

    def test_bad_rank(self):
        with pytest.raises(ValueError):
            fit_exponentials(np.ones(5), 3)


class TestRecoverNodes:
    def test_single_node(self):
        m = recover_nodes(exp_signal(ExpModel([1.0], [0.9], 10)), 1)
        assert abs(m.alpha[0] - 0.9) <= 1e-10
        assert abs(m.c[0] - 1.0) <= 1e-10

    def test_two_nodes(self):
        m = recover_nodes(exp_signal(ExpModel([1, 1], [0.8, 0.5j], 16)), 2)
        got = sorted(m.alpha, key=lambda z: (z.real, z.imag))
        assert np.allclose(got, [0.5j, 0.8], atol=1e-8)

    def test_round_trip_random(self, make_model):
        truth = make_model(6, 25)
        g = truth.signal()
        m = recover_nodes(g, 6)
        assert weighted_norm(m.signal() - g) <= 1e-6 * weighted_norm(g)

    def test_unstructured_signal_rejected(self, rng):
        with pytest.raises(RankError):
            recover_nodes(rng.standard_normal(11), 2)

    def test_zero_signal_rejected(self):
        with pytest.raises(RankError):
            recover_nodes(np.zeros(11), 2)


class TestSignalCsv:
    def test_roundtrip(self, rng):
        a = rng.standard_normal(7) + 1j * rng.standard_normal(7)
        buf = io.StringIO()
        hk.write_signal_csv(a, buf)
        buf.seek(0)
        assert buf.readline().strip() == "index,re,im"
        buf.seek(0)
        assert np.array_equal(hk.read_signal_csv(buf), a)

    @pytest.mark.parametrize("text,match", [
        ("index,re,im\n1,1,0\n2,x,0\n3,1,0\n", "row 2"),
        ("1,1,0\n3,1,0\n2,1,0\n", "row 2"),
        ("1,1\n", "row 1"),
        ("index,re,im\n", "empty"),
        ("1,1,0\n2,1,0\n", "odd"),
    ])
    def test_malformed(self, text, match):
        with pytest.raises(ValueError, match=match):
            hk.read_signal_csv(io.StringIO(text))
